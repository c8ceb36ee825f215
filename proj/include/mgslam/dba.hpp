#pragma once

#include "mgslam/graph.hpp"

#include <string>

namespace mgslam {

/// Reprojected patch center plus Jacobians w.r.t. right-multiplicative pose
/// increments (v, w) of source and target, and w.r.t. the patch inverse depth.
struct Reprojection {
    Pixel pixel = Pixel::Zero();
    double depth = 0.0;  // camera-frame z in the target
    bool valid = false;  // false when the point lands behind the target camera
    Eigen::Matrix<double, 2, 6> d_source = Eigen::Matrix<double, 2, 6>::Zero();
    Eigen::Matrix<double, 2, 6> d_target = Eigen::Matrix<double, 2, 6>::Zero();
    Vec2 d_inv_depth = Vec2::Zero();
};

Reprojection reproject_with_jacobians(const Pixel& center, double inv_depth, const Pose& source, const Pose& target,
                                      const Intrinsics& k, bool with_jacobians = true);

/// p_kj for a patch into a target frame. Throws BehindCamera.
Pixel reproject(const Patch& patch, const Pose& source, const Pose& target, const Intrinsics& k);
Pixel reproject(const PatchGraph& graph, const Patch& patch, FrameId target);

struct DbaOptions {
    int iterations = 4;
    double min_inv_depth = 1e-4;
    double max_inv_depth = 1e3;
    double initial_damping = 1e-4;
    double damping_increase = 10.0;
    double damping_decrease = 0.1;
    int max_rejections = 12;
};

struct DbaReport {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int accepted_steps = 0;
    int rejected_steps = 0;
    bool singular = false;
    std::string diagnostic;
    std::vector<double> cost_history;  // cost after every accepted step, starting with the initial cost
};

/// Weighted objective sum_e r^T diag(w) r with r = p_kj - (predicted + residual).
double dba_cost(const PatchGraph& graph, std::span<const GraphEdge> edges);

/// Levenberg-damped Gauss-Newton over the given free poses and patch depths.
/// Patch inverse depths are eliminated by Schur complement. At least one pose
/// referenced by the edges must stay fixed. On a singular system the graph
/// is left unchanged and the report carries the diagnostic.
DbaReport solve_dba(PatchGraph& graph, std::span<const GraphEdge> edges, std::span<const FrameId> free_poses,
                    std::span<const PatchId> free_patches, const DbaOptions& options = {});

}  // namespace mgslam
