#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tisr/losses.hpp"

namespace tisr {

struct EvalRow {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

// Images that could not be scored; kept out of the means.
struct EvalIssue {
    std::string name;
    std::string reason;  // "missing_sr", "missing_gt", "shape_mismatch", "unreadable"
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<EvalIssue> issues;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    MetricOptions options;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

// Scores every basename present in both directories.
EvalReport evaluate(const std::filesystem::path& sr_dir, const std::filesystem::path& gt_dir,
                    const MetricOptions& options = {});

}  // namespace tisr
