#pragma once

#include "mgslam/graph.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

namespace mgslam {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// One splat. Scale is stored as log, opacity as logit and the rotation as an
/// unnormalized quaternion (x, y, z, w) that is renormalized after every step.
struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Eigen::Vector4d rotation{0.0, 0.0, 0.0, 1.0};
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    Eigen::Quaterniond quaternion() const {
        return Eigen::Quaterniond(rotation[3], rotation[0], rotation[1], rotation[2]).normalized();
    }
};

class GaussianMap {
public:
    std::size_t size() const { return primitives_.size(); }
    bool empty() const { return primitives_.empty(); }

    void add(const GaussianPrimitive& g, FrameId creation_frame);
    const GaussianPrimitive& operator[](std::size_t i) const { return primitives_[i]; }
    GaussianPrimitive& operator[](std::size_t i) { return primitives_[i]; }
    std::span<const GaussianPrimitive> primitives() const { return primitives_; }
    std::span<GaussianPrimitive> primitives() { return primitives_; }
    std::span<const FrameId> creation_frames() const { return creation_frame_; }

    /// Keeps entries whose flag is true; returns the number removed.
    std::size_t retain(const std::vector<bool>& keep);

private:
    std::vector<GaussianPrimitive> primitives_;
    std::vector<FrameId> creation_frame_;
};

/// New primitives from optimized patches: mean by back-projection of the patch
/// center, scale chosen so the splat covers about one pixel in the source frame,
/// identity rotation, opacity 0.5 and the color at the patch center.
std::vector<GaussianPrimitive> init_from_patches(std::span<const Patch> patches, const Frame& frame,
                                                 const Intrinsics& k);

/// Binary map file: ASCII header then per primitive 14 little-endian f32
/// (position, quaternion xyzw, linear scale, opacity, rgb).
void export_map(const GaussianMap& map, const std::filesystem::path& path);
GaussianMap import_map(const std::filesystem::path& path);
std::string map_header(std::size_t count);

}  // namespace mgslam
