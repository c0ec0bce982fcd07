#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tisr/image.hpp"

namespace tisr {

// Pixel coordinates: x along columns, y along rows, pixel centers at integers.
struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Correspondence {
    Point2 src;  // moving image
    Point2 dst;  // reference image
};

// Projective transform normalized so that h(2,2) == 1.
class Homography {
public:
    Homography() : h_(Eigen::Matrix3d::Identity()) {}

    // Normalizes and validates; throws EstimationError when singular.
    static Homography from_matrix(const Eigen::Matrix3d& m);
    static Homography translation(double tx, double ty);

    const Eigen::Matrix3d& matrix() const { return h_; }
    double operator()(int r, int c) const { return h_(r, c); }

    Point2 apply(Point2 p) const;
    Homography inverse() const;
    Homography then(const Homography& next) const;  // next * this

private:
    explicit Homography(const Eigen::Matrix3d& m) : h_(m) {}
    Eigen::Matrix3d h_;
};

// Pluggable keypoint engine producing putative matches.
class KeypointMatcher {
public:
    virtual ~KeypointMatcher() = default;
    virtual std::vector<Correspondence> match(const Image& moving, const Image& reference) const = 0;
};

// Difference-of-Gaussians keypoints with orientation-histogram descriptors
// (SIFT), brute-force L2 nearest neighbours and a best/second-best ratio test.
class SiftMatcher : public KeypointMatcher {
public:
    explicit SiftMatcher(double ratio = 0.75) : ratio_(ratio) {}
    std::vector<Correspondence> match(const Image& moving, const Image& reference) const override;

private:
    double ratio_;
};

// Throws ArgumentError for inputs under 32x32 and RegistrationInfeasible when
// fewer than four matches survive.
std::vector<Correspondence> detect_and_match(const Image& moving, const Image& reference,
                                             const KeypointMatcher& matcher);
std::vector<Correspondence> detect_and_match(const Image& moving, const Image& reference);

// Hartley-normalized direct linear transform over all matches.
Homography estimate_homography_dlt(std::span<const Correspondence> matches);

// Mean of the forward and backward transfer distances.
double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Correspondence& m);

struct RansacResult {
    Homography homography;
    std::vector<std::size_t> inliers;  // ascending
};

struct RansacOptions {
    double threshold_px = 3.0;
    int max_iters = 2000;
    // A minimal sample always fits its own four points, so a consensus is only
    // accepted with support beyond the sample.
    std::size_t min_inliers = 8;
};

RansacResult ransac_homography(std::span<const Correspondence> matches, const RansacOptions& opts, Rng& rng);
RansacResult ransac_homography(std::span<const Correspondence> matches, double threshold_px, int max_iters,
                               Rng& rng);

// Output pixel p samples moving at h^-1 p with the bicubic kernel.
Image warp_to_reference(const Image& moving, const Homography& h, int out_h, int out_w);

struct RegistrationConfig {
    double threshold_px = 3.0;
    int max_iters = 2000;
    std::uint64_t seed = 0;
};

struct Registration {
    PairedSample pair;        // lr = warped axis, hr = cropped flir, scale 2
    Homography homography;    // axis pixel -> flir pixel
    std::size_t inlier_count = 0;
    std::size_t match_count = 0;
};

// Registers a medium-resolution frame (axis) against a high-resolution frame
// of the same scene (flir) and returns an exactly x2 paired sample.
Registration register_pair(const Image& axis, const Image& flir, const RegistrationConfig& cfg,
                           const KeypointMatcher& matcher);
Registration register_pair(const Image& axis, const Image& flir, const RegistrationConfig& cfg);

}  // namespace tisr
