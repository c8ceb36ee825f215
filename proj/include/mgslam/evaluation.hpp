#pragma once

#include "mgslam/geometry.hpp"
#include "mgslam/image.hpp"
#include "mgslam/losses.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mgslam {

/// Index pairs (estimated, reference) matched by nearest timestamp within max_dt.
/// Each reference pose is used at most once; estimated order is preserved.
std::vector<std::pair<std::size_t, std::size_t>> associate(std::span<const StampedPose> estimated,
                                                           std::span<const StampedPose> reference,
                                                           double max_dt = 0.02);

/// Translational RMSE after alignment. Throws NoAssociations.
double ate_rmse(std::span<const StampedPose> estimated, std::span<const StampedPose> reference,
                AlignMode mode = AlignMode::similarity, double max_dt = 0.02);

/// Same, for already associated pose lists.
double ate_rmse(std::span<const Pose> estimated, std::span<const Pose> reference,
                AlignMode mode = AlignMode::similarity);

/// 10 log10(1 / MSE) with peak 1; +infinity for identical images.
double psnr(const Image& rendered, const Image& reference);

double median(std::vector<double> values);

struct MetricsReport {
    std::optional<double> ate_rmse;
    std::vector<double> psnr;  // per keyframe
    std::vector<double> ssim;
    double mean_psnr() const;
    double mean_ssim() const;
    int keyframes = 0;
    int frames = 0;
    std::size_t primitives = 0;
    int loops = 0;
    double seconds = 0.0;
    std::optional<double> psnr_before_refinement;  // mean keyframe PSNR before final refinement

    std::string to_json() const;
};

}  // namespace mgslam
