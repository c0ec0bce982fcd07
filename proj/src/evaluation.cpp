#include "tisr/evaluation.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "tisr/errors.hpp"

namespace tisr {

namespace fs = std::filesystem;

EvalReport evaluate(const fs::path& sr_dir, const fs::path& gt_dir, const MetricOptions& options) {
    std::map<std::string, fs::path> sr_files;
    std::map<std::string, fs::path> gt_files;
    for (const auto& p : list_images(sr_dir)) sr_files[p.stem().string()] = p;
    for (const auto& p : list_images(gt_dir)) gt_files[p.stem().string()] = p;

    EvalReport report;
    report.options = options;
    for (const auto& [name, gt_path] : gt_files) {
        if (!sr_files.count(name)) report.issues.push_back({name, "missing_sr"});
    }
    for (const auto& [name, sr_path] : sr_files) {
        auto gt = gt_files.find(name);
        if (gt == gt_files.end()) {
            report.issues.push_back({name, "missing_gt"});
            continue;
        }
        Image sr;
        Image truth;
        try {
            sr = load_image(sr_path);
            truth = load_image(gt->second);
        } catch (const Error&) {
            report.issues.push_back({name, "unreadable"});
            continue;
        }
        if (sr.height != truth.height || sr.width != truth.width) {
            report.issues.push_back({name, "shape_mismatch"});
            continue;
        }
        const ImageMetrics m = evaluate_pair(sr, truth, options);
        report.rows.push_back({name, m.psnr, m.ssim});
    }

    if (!report.rows.empty()) {
        for (const auto& r : report.rows) {
            report.mean_psnr += r.psnr;
            report.mean_ssim += r.ssim;
        }
        report.mean_psnr /= static_cast<double>(report.rows.size());
        report.mean_ssim /= static_cast<double>(report.rows.size());
    }
    return report;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& r : rows) images.push_back({{"name", r.name}, {"psnr", r.psnr}, {"ssim", r.ssim}});
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& i : issues) skipped.push_back({{"name", i.name}, {"reason", i.reason}});
    return {{"images", images},
            {"skipped", skipped},
            {"count", rows.size()},
            {"mean_psnr", mean_psnr},
            {"mean_ssim", mean_ssim},
            {"options", {{"shave", options.shave}, {"quantize", options.quantize}}}};
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-32s %10s %8s\n", "image", "PSNR", "SSIM");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-32s %10.2f %8.4f\n", r.name.c_str(), r.psnr, r.ssim);
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-32s %10.2f %8.4f\n", "mean", mean_psnr, mean_ssim);
    out << line;
    return out.str();
}

}  // namespace tisr
