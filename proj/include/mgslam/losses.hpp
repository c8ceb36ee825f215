#pragma once

#include "mgslam/gaussian_map.hpp"
#include "mgslam/image.hpp"

namespace mgslam {

struct LossValue {
    double value = 0.0;
    Image gradient;  // d value / d first argument
};

/// Mean absolute difference over all channels.
LossValue l1_loss(const Image& a, const Image& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// averaged over channels. Throws DimensionMismatch for size mismatch or
/// images smaller than the window.
double ssim(const Image& a, const Image& b);
LossValue ssim_with_gradient(const Image& a, const Image& b);

/// (1 - lambda) * L1 + lambda * (1 - SSIM)
LossValue color_loss(const Image& rendered, const Image& reference, double lambda_ssim = 0.2);

/// Sum over primitives and axes of max(0, s - tau)^2 with s the linear scale.
/// Gradients (with respect to log scale) are added to `d_log_scale` when given.
double scale_regularizer(std::span<const GaussianPrimitive> gaussians, double tau,
                         std::vector<Vec3>* d_log_scale = nullptr);

}  // namespace mgslam
