#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace tisr {

// Every random decision in the toolkit draws from this engine so runs are
// reproducible from a single seed.
using Rng = std::mt19937_64;

// Single-channel raster, row-major, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;
    std::string source_id;

    Image() = default;
    Image(int h, int w, float fill = 0.0f);

    float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

    std::size_t size() const { return pixels.size(); }
    bool empty() const { return pixels.empty(); }

    // Copy of the rectangle [top, top+h) x [left, left+w).
    Image crop(int top, int left, int h, int w) const;

    bool operator==(const Image& other) const {
        return height == other.height && width == other.width && pixels == other.pixels;
    }
};

struct PairedSample {
    Image lr;
    Image hr;
    int scale = 4;
    bool registered = false;
};

// PNG/TIFF, 8 or 16 bit, gray or color (reduced to BT.601 luminance).
Image load_image(const std::filesystem::path& path);

// Writes a PNG quantized with round(v * (2^bitdepth - 1)); bitdepth is 8 or 16.
void save_image(const Image& img, const std::filesystem::path& path, int bitdepth = 8);

// Clamps every pixel into [0,1] in place.
void clip_unit(Image& img);

// Random co-located crop: lr_patch^2 from lr and (scale*lr_patch)^2 from hr.
PairedSample random_crop_pair(const PairedSample& sample, int lr_patch, Rng& rng);

// The eight symmetries of the square.
enum class Dihedral : int {
    identity = 0,
    rot90,
    rot180,
    rot270,
    flip_horizontal,
    flip_vertical,
    transpose,
    anti_transpose,
};

inline constexpr std::array<Dihedral, 8> kAllDihedral = {
    Dihedral::identity,        Dihedral::rot90,         Dihedral::rot180,    Dihedral::rot270,
    Dihedral::flip_horizontal, Dihedral::flip_vertical, Dihedral::transpose, Dihedral::anti_transpose,
};

Dihedral draw_dihedral(Rng& rng);
Image apply_dihedral(const Image& img, Dihedral t);
PairedSample apply_dihedral(const PairedSample& sample, Dihedral t);

// Applies one uniformly drawn dihedral transform to both lr and hr.
PairedSample augment_pair(const PairedSample& sample, Rng& rng);

// One row of a pair manifest; paths are relative to the manifest's directory.
struct ManifestEntry {
    std::string lr;
    std::string hr;
    int scale = 4;
    bool registered = false;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Loads every pair listed in a manifest.
std::vector<PairedSample> load_manifest_pairs(const std::filesystem::path& manifest_path);

// Pairs <root>/lr/<name>.png with <root>/hr/<name>.png by basename.
std::vector<PairedSample> load_dataset_dir(const std::filesystem::path& root, int scale,
                                           bool registered = false);

// Sorted list of raster files (png/tif/tiff) directly inside dir.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace tisr
