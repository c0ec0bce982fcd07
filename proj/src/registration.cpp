#include "tisr/registration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <opencv2/core.hpp>
#include <opencv2/features2d.hpp>

#include "tisr/degradation.hpp"
#include "tisr/errors.hpp"

namespace tisr {

namespace {

// Similarity that moves the centroid to the origin and sets the mean distance
// from it to sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double spread = 0.0;
    for (const auto& p : pts) spread += (p - mean).norm();
    spread /= static_cast<double>(pts.size());
    if (!(spread > 1e-12)) throw EstimationError("coincident points");
    const double s = std::sqrt(2.0) / spread;
    Eigen::Matrix3d t;
    t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return t;
}

// Ratio of the smallest to the largest principal spread; ~0 for collinear sets.
double collinearity(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const double big = es.eigenvalues()(1);
    return big > 0.0 ? es.eigenvalues()(0) / big : 0.0;
}

cv::Mat to_gray8(const Image& img) {
    cv::Mat out(img.height, img.width, CV_8UC1);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            out.at<std::uint8_t>(r, c) =
                static_cast<std::uint8_t>(std::lround(std::clamp(img.at(r, c), 0.0f, 1.0f) * 255.0f));
        }
    }
    return out;
}

}  // namespace

Homography Homography::from_matrix(const Eigen::Matrix3d& m) {
    if (!m.allFinite()) throw EstimationError("non-finite homography");
    if (std::abs(m(2, 2)) < 1e-12) throw EstimationError("homography with vanishing h22");
    Eigen::Matrix3d n = m / m(2, 2);
    if (std::abs(n.determinant()) <= 1e-12) throw EstimationError("singular homography");
    return Homography(n);
}

Homography Homography::translation(double tx, double ty) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return Homography(m);
}

Point2 Homography::apply(Point2 p) const {
    const Eigen::Vector3d q = h_ * Eigen::Vector3d(p.x, p.y, 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
}

Homography Homography::inverse() const { return from_matrix(h_.inverse()); }

Homography Homography::then(const Homography& next) const { return from_matrix(next.h_ * h_); }

std::vector<Correspondence> SiftMatcher::match(const Image& moving, const Image& reference) const {
    auto sift = cv::SIFT::create();
    std::vector<cv::KeyPoint> kp_moving;
    std::vector<cv::KeyPoint> kp_reference;
    cv::Mat desc_moving;
    cv::Mat desc_reference;
    sift->detectAndCompute(to_gray8(moving), cv::noArray(), kp_moving, desc_moving);
    sift->detectAndCompute(to_gray8(reference), cv::noArray(), kp_reference, desc_reference);

    std::vector<Correspondence> out;
    if (kp_moving.empty() || kp_reference.size() < 2) return out;

    cv::BFMatcher matcher(cv::NORM_L2);
    std::vector<std::vector<cv::DMatch>> knn;
    matcher.knnMatch(desc_moving, desc_reference, knn, 2);
    for (const auto& pair : knn) {
        if (pair.size() < 2) continue;
        if (pair[0].distance < ratio_ * pair[1].distance) {
            const auto& a = kp_moving[pair[0].queryIdx].pt;
            const auto& b = kp_reference[pair[0].trainIdx].pt;
            out.push_back({{a.x, a.y}, {b.x, b.y}});
        }
    }
    return out;
}

std::vector<Correspondence> detect_and_match(const Image& moving, const Image& reference,
                                             const KeypointMatcher& matcher) {
    if (moving.height < 32 || moving.width < 32 || reference.height < 32 || reference.width < 32) {
        throw ArgumentError("registration inputs must be at least 32x32");
    }
    auto matches = matcher.match(moving, reference);
    if (matches.size() < 4) {
        throw RegistrationInfeasible("only " + std::to_string(matches.size()) + " putative matches");
    }
    return matches;
}

std::vector<Correspondence> detect_and_match(const Image& moving, const Image& reference) {
    return detect_and_match(moving, reference, SiftMatcher{});
}

Homography estimate_homography_dlt(std::span<const Correspondence> matches) {
    const std::size_t n = matches.size();
    if (n < 4) throw EstimationError("DLT needs at least 4 correspondences");

    std::vector<Eigen::Vector2d> src(n);
    std::vector<Eigen::Vector2d> dst(n);
    for (std::size_t i = 0; i < n; ++i) {
        src[i] = {matches[i].src.x, matches[i].src.y};
        dst[i] = {matches[i].dst.x, matches[i].dst.y};
    }
    if (collinearity(src) < 1e-12 || collinearity(dst) < 1e-12) {
        throw EstimationError("collinear correspondences");
    }
    const Eigen::Matrix3d t_src = normalizing_transform(src);
    const Eigen::Matrix3d t_dst = normalizing_transform(dst);

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 9);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d p = t_src * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
        const Eigen::Vector3d q = t_dst * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1.0);
        const double x = p.x(), y = p.y();
        const double u = q.x(), v = q.y();
        const auto r = static_cast<Eigen::Index>(2 * i);
        a.row(r) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
        a.row(r + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // Rank below 8 means the null space is not unique.
    if (sv.size() >= 8 && sv(7) <= 1e-10 * sv(0)) throw EstimationError("degenerate correspondence set");
    const Eigen::VectorXd null = svd.matrixV().col(8);

    Eigen::Matrix3d hn;
    hn << null(0), null(1), null(2), null(3), null(4), null(5), null(6), null(7), null(8);
    if (std::abs(hn.determinant()) < 1e-10 * std::pow(hn.norm(), 3)) {
        throw EstimationError("degenerate correspondence set");
    }
    return Homography::from_matrix(t_dst.inverse() * hn * t_src);
}

double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Correspondence& m) {
    const Point2 fwd = h.apply(m.src);
    const Point2 bwd = h_inv.apply(m.dst);
    const double e_fwd = std::hypot(fwd.x - m.dst.x, fwd.y - m.dst.y);
    const double e_bwd = std::hypot(bwd.x - m.src.x, bwd.y - m.src.y);
    const double e = 0.5 * (e_fwd + e_bwd);
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

RansacResult ransac_homography(std::span<const Correspondence> matches, const RansacOptions& opts, Rng& rng) {
    const std::size_t n = matches.size();
    if (n < 4) throw RegistrationInfeasible("RANSAC needs at least 4 matches");
    if (!(opts.threshold_px > 0.0)) throw ArgumentError("RANSAC threshold must be positive");
    if (opts.max_iters < 1) throw ArgumentError("RANSAC needs at least one iteration");

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    std::vector<std::size_t> best;
    double best_error = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> sample(4);
    std::vector<Correspondence> subset(4);
    std::vector<std::size_t> consensus;
    consensus.reserve(n);

    for (int it = 0; it < opts.max_iters; ++it) {
        std::sample(all.begin(), all.end(), sample.begin(), 4, rng);
        for (int k = 0; k < 4; ++k) subset[k] = matches[sample[k]];

        Homography h;
        Homography h_inv;
        try {
            h = estimate_homography_dlt(subset);
            h_inv = h.inverse();
        } catch (const EstimationError&) {
            continue;
        }

        consensus.clear();
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = symmetric_transfer_error(h, h_inv, matches[i]);
            if (e < opts.threshold_px) {
                consensus.push_back(i);
                total += e;
            }
        }
        if (consensus.size() > best.size() || (consensus.size() == best.size() && total < best_error)) {
            best = consensus;
            best_error = total;
        }
    }

    if (best.size() < std::max<std::size_t>(4, opts.min_inliers)) {
        throw RegistrationInfeasible("best consensus has only " + std::to_string(best.size()) + " inliers");
    }

    std::vector<Correspondence> inlier_matches;
    inlier_matches.reserve(best.size());
    for (std::size_t i : best) inlier_matches.push_back(matches[i]);
    Homography refit;
    try {
        refit = estimate_homography_dlt(inlier_matches);
    } catch (const EstimationError& e) {
        throw RegistrationInfeasible(std::string("inlier refit failed: ") + e.what());
    }
    return {refit, best};
}

RansacResult ransac_homography(std::span<const Correspondence> matches, double threshold_px, int max_iters,
                               Rng& rng) {
    RansacOptions opts;
    opts.threshold_px = threshold_px;
    opts.max_iters = max_iters;
    return ransac_homography(matches, opts, rng);
}

Image warp_to_reference(const Image& moving, const Homography& h, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ArgumentError("warp target must be at least 1x1");
    const Homography inv = h.inverse();
    Image out(out_h, out_w);
    out.source_id = moving.source_id;
    for (int r = 0; r < out_h; ++r) {
        for (int c = 0; c < out_w; ++c) {
            const Point2 p = inv.apply({static_cast<double>(c), static_cast<double>(r)});
            double v = 0.0;
            if (std::isfinite(p.x) && std::isfinite(p.y)) {
                const double x = std::clamp(p.x, -2.0, moving.width + 1.0);
                const double y = std::clamp(p.y, -2.0, moving.height + 1.0);
                v = sample_bicubic(moving, x, y);
            }
            out.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

Registration register_pair(const Image& axis, const Image& flir, const RegistrationConfig& cfg,
                           const KeypointMatcher& matcher) {
    if (axis.empty() || flir.empty()) throw ArgumentError("registration inputs must be non-empty");
    const auto matches = detect_and_match(axis, flir, matcher);

    Rng rng(cfg.seed);
    const RansacResult fit = ransac_homography(matches, cfg.threshold_px, cfg.max_iters, rng);

    // Half-resolution flir frame: its pixel (x, y) covers flir pixels
    // {2x, 2x+1} whose center is 2x + 0.5.
    Eigen::Matrix3d up;
    up << 2, 0, 0.5, 0, 2, 0.5, 0, 0, 1;
    const Homography half_to_flir = Homography::from_matrix(up);
    const Homography axis_to_half = fit.homography.then(half_to_flir.inverse());

    const int frame_h = flir.height / 2;
    const int frame_w = flir.width / 2;

    // Conservative axis-aligned box inside the warped axis footprint.
    const double ax_w = axis.width - 1.0;
    const double ax_h = axis.height - 1.0;
    const Point2 tl = axis_to_half.apply({0.0, 0.0});
    const Point2 tr = axis_to_half.apply({ax_w, 0.0});
    const Point2 bl = axis_to_half.apply({0.0, ax_h});
    const Point2 br = axis_to_half.apply({ax_w, ax_h});
    const double left = std::max({tl.x, bl.x, 0.0});
    const double right = std::min({tr.x, br.x, frame_w - 1.0});
    const double top = std::max({tl.y, tr.y, 0.0});
    const double bottom = std::min({bl.y, br.y, frame_h - 1.0});
    if (!std::isfinite(left + right + top + bottom)) {
        throw RegistrationInfeasible("warped footprint is unbounded");
    }
    const int x0 = static_cast<int>(std::ceil(left - 1e-6));
    const int y0 = static_cast<int>(std::ceil(top - 1e-6));
    const int x1 = static_cast<int>(std::floor(right + 1e-6));
    const int y1 = static_cast<int>(std::floor(bottom + 1e-6));
    const int crop_w = x1 - x0 + 1;
    const int crop_h = y1 - y0 + 1;
    if (crop_w < 8 || crop_h < 8) {
        throw RegistrationInfeasible("registered overlap is too small");
    }

    const Homography to_crop = axis_to_half.then(Homography::translation(-x0, -y0));

    Registration out;
    out.pair.lr = warp_to_reference(axis, to_crop, crop_h, crop_w);
    out.pair.hr = flir.crop(2 * y0, 2 * x0, 2 * crop_h, 2 * crop_w);
    out.pair.scale = 2;
    out.pair.registered = true;
    out.homography = fit.homography;
    out.inlier_count = fit.inliers.size();
    out.match_count = matches.size();
    return out;
}

Registration register_pair(const Image& axis, const Image& flir, const RegistrationConfig& cfg) {
    return register_pair(axis, flir, cfg, SiftMatcher{});
}

}  // namespace tisr
