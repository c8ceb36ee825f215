#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <span>
#include <vector>

namespace mgslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels. Pixel centers sit at integer coordinates.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    /// Throws InvalidSpec when focal lengths or principal point are out of range.
    void validate() const;
};

using Pixel = Vec2;

/// Camera-to-world rigid transform: x_world = R * x_cam + t.
/// The quaternion is stored scalar-last (Eigen's x, y, z, w coefficient order).
struct Pose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }
    static Pose from_rt(const Mat3& r, const Vec3& t);

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    Vec3 transform(const Vec3& p) const { return rotation * p + translation; }
    Pose inverse() const;
    Pose operator*(const Pose& rhs) const;
    void normalize() { rotation.normalize(); }
};

/// Right-multiplicative update on the tangent space: delta = (v, w),
/// R <- R * Exp(w), t <- t + R * v. First-order equal to T * Exp(delta).
Pose retract(const Pose& pose, const Vec6& delta);

Mat3 so3_exp(const Vec3& w);
Vec3 so3_log(const Mat3& r);
Mat3 skew(const Vec3& v);

/// Pinhole projection of a world point into the camera at `pose`.
/// Throws NonPositiveDepth when the camera-frame z is not positive.
Pixel project(const Vec3& point_world, const Pose& pose, const Intrinsics& k);

/// Inverse of project for a pixel with given inverse depth.
/// Throws NonPositiveInverseDepth when inv_depth <= 0.
Vec3 backproject(const Pixel& pixel, double inv_depth, const Pose& pose, const Intrinsics& k);

enum class AlignMode { rigid, similarity, none };

/// p_aligned = scale * R * p + t
struct SimilarityTransform {
    Pose rigid;
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return scale * (rigid.rotation * p) + rigid.translation; }
    Pose apply(const Pose& p) const;
};

struct AlignmentResult {
    SimilarityTransform transform;
    std::vector<Pose> aligned;
};

/// Closed-form least-squares alignment of estimated onto reference positions
/// (Umeyama). Throws DimensionMismatch or DegenerateConfiguration.
AlignmentResult align_trajectories(std::span<const Pose> estimated, std::span<const Pose> reference,
                                   AlignMode mode = AlignMode::similarity);

/// Position-only variant used by ATE.
SimilarityTransform align_points(std::span<const Vec3> estimated, std::span<const Vec3> reference,
                                 AlignMode mode);

struct StampedPose {
    double timestamp = 0.0;
    Pose pose;
};

/// TUM trajectory text: "timestamp tx ty tz qx qy qz qw", '#' comments ignored.
std::vector<StampedPose> read_trajectory(const std::filesystem::path& path);
void write_trajectory(const std::filesystem::path& path, std::span<const StampedPose> poses);

/// Slerp/lerp between two poses, alpha in [0,1].
Pose interpolate(const Pose& a, const Pose& b, double alpha);

}  // namespace mgslam
