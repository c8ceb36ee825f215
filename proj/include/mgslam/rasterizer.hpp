#pragma once

#include "mgslam/gaussian_map.hpp"
#include "mgslam/image.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace mgslam {

struct RasterSettings {
    double cutoff_sigma = 3.0;        // footprint radius in standard deviations
    double min_alpha = 1.0 / 255.0;   // contributions below this are skipped
    double max_alpha = 0.99;
    double min_transmittance = 1e-4;  // early termination
    double dilation = 0.3;            // added to the 2D covariance diagonal, px^2
    double near_plane = 0.01;
    // x/z and y/z entering the projection Jacobian are clamped to this multiple
    // of the half field of view, so off-screen splats keep a bounded footprint.
    double jacobian_clamp = 1.3;
    int tile_size = 16;
    int threads = 1;
    Vec3 background = Vec3::Zero();

    /// Everything contributes everywhere; the image is then a smooth function of
    /// the parameters, which is what finite-difference checks need.
    static RasterSettings smooth() {
        RasterSettings s;
        s.cutoff_sigma = std::numeric_limits<double>::infinity();
        s.min_alpha = 0.0;
        s.min_transmittance = 0.0;
        return s;
    }
};

struct ProjectedGaussian {
    bool visible = false;
    double depth = 0.0;
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();    // dilated
    Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();  // inverse of cov
    Vec3 cam_point = Vec3::Zero();
    Mat3 cov3 = Mat3::Zero();
    Mat3 rotation = Mat3::Identity();
    Vec3 scale = Vec3::Zero();
    Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
    double opacity = 0.0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive pixel box
};

struct Contribution {
    std::uint32_t local = 0;  // index into the owning tile's gaussian list
    double alpha = 0.0;
    double transmittance = 0.0;  // before this contribution
    double falloff = 0.0;        // exp(power)
    bool clamped = false;        // alpha hit max_alpha
};

struct RasterTile {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    std::vector<std::uint32_t> gaussians;  // front to back
    std::vector<std::uint32_t> pixel_start;  // size pixels + 1
    std::vector<Contribution> contributions;
};

struct RenderOutput {
    Image color;
    ScalarImage alpha;
    std::vector<ProjectedGaussian> projected;
    std::vector<RasterTile> tiles;
    std::vector<double> final_transmittance;
};

struct GaussianGradients {
    std::vector<Vec3> position;
    std::vector<Eigen::Vector4d> rotation;
    std::vector<Vec3> log_scale;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color;

    void resize(std::size_t n);
};

/// Camera pose is camera-to-world.
RenderOutput render(std::span<const GaussianPrimitive> gaussians, const Pose& pose, const Intrinsics& k,
                    const RasterSettings& settings = {});

/// Gradients of a scalar loss with respect to all primitive parameters, given
/// dL/d(color image). Accumulates into `grads` (which must be sized).
void render_backward(std::span<const GaussianPrimitive> gaussians, const RenderOutput& forward, const Pose& pose,
                     const Intrinsics& k, const Image& d_color, const RasterSettings& settings,
                     GaussianGradients& grads);

/// Rotation matrix of an unnormalized quaternion (x, y, z, w).
Mat3 quaternion_matrix(const Eigen::Vector4d& q);

}  // namespace mgslam
