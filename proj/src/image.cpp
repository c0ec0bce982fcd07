#include "tisr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "tisr/errors.hpp"

namespace tisr {

namespace fs = std::filesystem;

Image::Image(int h, int w, float fill) : height(h), width(w) {
    if (h < 1 || w < 1) {
        throw ArgumentError("image dimensions must be positive, got " + std::to_string(h) + "x" +
                            std::to_string(w));
    }
    pixels.assign(static_cast<std::size_t>(h) * w, fill);
}

Image Image::crop(int top, int left, int h, int w) const {
    if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > height || left + w > width) {
        throw ArgumentError("crop rectangle outside image");
    }
    Image out(h, w);
    out.source_id = source_id;
    for (int r = 0; r < h; ++r) {
        const float* src = &pixels[static_cast<std::size_t>(top + r) * width + left];
        std::copy(src, src + w, &out.pixels[static_cast<std::size_t>(r) * w]);
    }
    return out;
}

void clip_unit(Image& img) {
    for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

Image load_image(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw IoError("cannot read image: " + path.string());
    }
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    if (raw.empty() || raw.rows == 0 || raw.cols == 0) {
        throw FormatError("not a decodable raster or zero-sized: " + path.string());
    }

    double max_value = 0.0;
    switch (raw.depth()) {
        case CV_8U: max_value = 255.0; break;
        case CV_16U: max_value = 65535.0; break;
        default: throw FormatError("unsupported bit depth in " + path.string());
    }

    cv::Mat values;
    raw.convertTo(values, CV_64F, 1.0 / max_value);

    Image img(values.rows, values.cols);
    img.source_id = path.stem().string();
    const int channels = values.channels();
    for (int r = 0; r < values.rows; ++r) {
        const double* row = values.ptr<double>(r);
        for (int c = 0; c < values.cols; ++c) {
            double v = 0.0;
            if (channels == 1) {
                v = row[c];
            } else if (channels >= 3) {
                // OpenCV stores color as BGR(A).
                const double* px = row + static_cast<std::ptrdiff_t>(c) * channels;
                v = 0.299 * px[2] + 0.587 * px[1] + 0.114 * px[0];
            } else {
                v = row[static_cast<std::ptrdiff_t>(c) * channels];
            }
            img.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

void save_image(const Image& img, const fs::path& path, int bitdepth) {
    if (bitdepth != 8 && bitdepth != 16) {
        throw ArgumentError("bitdepth must be 8 or 16");
    }
    if (img.empty()) {
        throw ArgumentError("cannot save an empty image");
    }
    const double max_value = bitdepth == 8 ? 255.0 : 65535.0;
    cv::Mat out(img.height, img.width, bitdepth == 8 ? CV_8UC1 : CV_16UC1);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const double v = std::clamp(static_cast<double>(img.at(r, c)), 0.0, 1.0);
            const auto q = static_cast<int>(std::lround(v * max_value));
            if (bitdepth == 8) {
                out.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(q);
            } else {
                out.at<std::uint16_t>(r, c) = static_cast<std::uint16_t>(q);
            }
        }
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), out);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write image " + path.string() + ": " + e.what());
    }
    if (!ok) {
        throw IoError("cannot write image: " + path.string());
    }
}

PairedSample random_crop_pair(const PairedSample& sample, int lr_patch, Rng& rng) {
    const Image& lr = sample.lr;
    if (lr_patch < 1 || lr_patch > std::min(lr.height, lr.width)) {
        throw ArgumentError("crop patch " + std::to_string(lr_patch) + " larger than lr image " +
                            std::to_string(lr.height) + "x" + std::to_string(lr.width));
    }
    const int s = sample.scale;
    std::uniform_int_distribution<int> row_dist(0, lr.height - lr_patch);
    std::uniform_int_distribution<int> col_dist(0, lr.width - lr_patch);
    const int top = row_dist(rng);
    const int left = col_dist(rng);
    if ((top + lr_patch) * s > sample.hr.height || (left + lr_patch) * s > sample.hr.width) {
        throw ArgumentError("hr image too small for the requested crop at scale " + std::to_string(s));
    }

    PairedSample out;
    out.scale = s;
    out.registered = sample.registered;
    out.lr = lr.crop(top, left, lr_patch, lr_patch);
    out.hr = sample.hr.crop(top * s, left * s, lr_patch * s, lr_patch * s);
    return out;
}

Dihedral draw_dihedral(Rng& rng) {
    std::uniform_int_distribution<int> dist(0, 7);
    return static_cast<Dihedral>(dist(rng));
}

Image apply_dihedral(const Image& img, Dihedral t) {
    const int h = img.height;
    const int w = img.width;
    const bool swaps = t == Dihedral::rot90 || t == Dihedral::rot270 || t == Dihedral::transpose ||
                       t == Dihedral::anti_transpose;
    Image out(swaps ? w : h, swaps ? h : w);
    out.source_id = img.source_id;
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            int sr = r;
            int sc = c;
            switch (t) {
                case Dihedral::identity: break;
                case Dihedral::rot90: sr = c; sc = w - 1 - r; break;
                case Dihedral::rot180: sr = h - 1 - r; sc = w - 1 - c; break;
                case Dihedral::rot270: sr = h - 1 - c; sc = r; break;
                case Dihedral::flip_horizontal: sc = w - 1 - c; break;
                case Dihedral::flip_vertical: sr = h - 1 - r; break;
                case Dihedral::transpose: sr = c; sc = r; break;
                case Dihedral::anti_transpose: sr = h - 1 - c; sc = w - 1 - r; break;
            }
            out.at(r, c) = img.at(sr, sc);
        }
    }
    return out;
}

PairedSample apply_dihedral(const PairedSample& sample, Dihedral t) {
    PairedSample out = sample;
    out.lr = apply_dihedral(sample.lr, t);
    out.hr = apply_dihedral(sample.hr, t);
    return out;
}

PairedSample augment_pair(const PairedSample& sample, Rng& rng) {
    return apply_dihedral(sample, draw_dihedral(rng));
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& e : entries) {
        doc.push_back({{"lr", e.lr}, {"hr", e.hr}, {"scale", e.scale}, {"registered", e.registered}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << doc.dump(2) << '\n';
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw FormatError("manifest must be a JSON array: " + path.string());

    std::vector<ManifestEntry> entries;
    for (const auto& row : doc) {
        try {
            ManifestEntry e;
            e.lr = row.at("lr").get<std::string>();
            e.hr = row.at("hr").get<std::string>();
            e.scale = row.at("scale").get<int>();
            e.registered = row.at("registered").get<bool>();
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad manifest row in " + path.string() + ": " + e.what());
        }
    }
    return entries;
}

std::vector<PairedSample> load_manifest_pairs(const fs::path& manifest_path) {
    const fs::path base = manifest_path.parent_path();
    std::vector<PairedSample> pairs;
    for (const auto& e : read_manifest(manifest_path)) {
        PairedSample p;
        p.lr = load_image(base / e.lr);
        p.hr = load_image(base / e.hr);
        p.scale = e.scale;
        p.registered = e.registered;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<fs::path> list_images(const fs::path& dir) {
    std::vector<fs::path> files;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".tif" || ext == ".tiff") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<PairedSample> load_dataset_dir(const fs::path& root, int scale, bool registered) {
    std::vector<PairedSample> pairs;
    for (const auto& lr_path : list_images(root / "lr")) {
        const fs::path hr_path = root / "hr" / lr_path.filename();
        if (!fs::exists(hr_path)) continue;
        PairedSample p;
        p.lr = load_image(lr_path);
        p.hr = load_image(hr_path);
        p.scale = scale;
        p.registered = registered;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace tisr
