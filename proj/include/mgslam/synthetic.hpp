#pragma once

#include "mgslam/geometry.hpp"
#include "mgslam/image.hpp"
#include "mgslam/providers.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

namespace mgslam {

/// Square room of four vertical, infinitely tall textured walls; the camera
/// moves on a horizontal circle around the room center looking outward.
/// World y points down.
struct SceneSpec {
    int width = 128;
    int height = 128;
    double focal = 100.0;
    int frames = 60;
    double radius = 1.0;
    Vec3 center = Vec3::Zero();
    double room_half_size = 3.0;
    double angle_step = 2.0 * std::numbers::pi / 55.8;  // a little over one turn in 60 frames
    double pitch = 0.0;                                 // radians, constant camera tilt
    int texture_size = 64;
    double texel = 0.06;                                // world units per texel
    int texture_lattice = 8;                            // coarse noise cells per tile side
    double fps = 30.0;

    void validate() const;
    Intrinsics intrinsics() const;
};

class SyntheticScene : public SceneTruth {
public:
    static SyntheticScene generate(const SceneSpec& spec, std::uint64_t seed);

    const SceneSpec& spec() const { return spec_; }
    int frame_count() const { return int(poses_.size()); }
    double timestamp(int i) const { return timestamps_.at(std::size_t(i)); }
    std::shared_ptr<const Image> image(int i) const { return images_.at(std::size_t(i)); }
    const ScalarImage& depth(int i) const { return depths_.at(std::size_t(i)); }
    std::vector<StampedPose> trajectory() const;

    /// Ray-cast render at an arbitrary pose; optionally the camera-frame depth.
    Image render(const Pose& pose, ScalarImage* depth = nullptr) const;

    Pose true_pose(int source_index) const override { return poses_.at(std::size_t(source_index)); }
    std::optional<double> true_depth(int source_index, const Pixel& px) const override;
    bool visible(int source_index, const Vec3& world) const override;
    const Intrinsics& intrinsics() const override { return k_; }

    /// Writes rgb.txt, groundtruth.txt and rgb/*.png (TUM layout).
    void write_tum(const std::filesystem::path& dir) const;

private:
    struct Hit {
        double t = 0.0;
        Vec3 color = Vec3::Zero();
    };
    std::optional<Hit> cast(const Vec3& origin, const Vec3& direction) const;
    Vec3 texture(int wall, double s, double t) const;

    SceneSpec spec_;
    Intrinsics k_;
    std::array<std::vector<Vec3>, 4> textures_;
    std::vector<Pose> poses_;
    std::vector<double> timestamps_;
    std::vector<std::shared_ptr<const Image>> images_;
    std::vector<ScalarImage> depths_;
};

/// Camera pose on the scene circle at angle theta.
Pose circle_pose(const SceneSpec& spec, double theta);

}  // namespace mgslam
