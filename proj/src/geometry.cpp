#include "mgslam/geometry.hpp"

#include "mgslam/errors.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mgslam {

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidSpec, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidSpec, "image size must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw Error(ErrorCode::InvalidSpec, "principal point outside image");
}

Pose Pose::from_rt(const Mat3& r, const Vec3& t) {
    Pose p;
    p.rotation = Eigen::Quaterniond(r).normalized();
    p.translation = t;
    return p;
}

Pose Pose::inverse() const {
    Pose inv;
    inv.rotation = rotation.conjugate();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

Pose Pose::operator*(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

Mat3 so3_exp(const Vec3& w) {
    const double theta = w.norm();
    if (theta < 1e-12) return Mat3::Identity() + skew(w);
    return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Vec3 so3_log(const Mat3& r) {
    Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

Pose retract(const Pose& pose, const Vec6& delta) {
    Pose out;
    out.translation = pose.translation + pose.rotation * delta.head<3>();
    out.rotation = (pose.rotation * Eigen::Quaterniond(so3_exp(delta.tail<3>()))).normalized();
    return out;
}

Pixel project(const Vec3& point_world, const Pose& pose, const Intrinsics& k) {
    const Vec3 pc = pose.rotation.conjugate() * (point_world - pose.translation);
    if (!(pc.z() > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "point behind camera");
    return {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
}

Vec3 backproject(const Pixel& pixel, double inv_depth, const Pose& pose, const Intrinsics& k) {
    if (!(inv_depth > 0.0)) throw Error(ErrorCode::NonPositiveInverseDepth, "inverse depth must be positive");
    // Standard pinhole: the y row uses (v - cy) / (d * fy).
    const Vec3 pc((pixel.x() - k.cx) / (inv_depth * k.fx), (pixel.y() - k.cy) / (inv_depth * k.fy), 1.0 / inv_depth);
    return pose.transform(pc);
}

Pose SimilarityTransform::apply(const Pose& p) const {
    Pose out;
    out.rotation = (rigid.rotation * p.rotation).normalized();
    out.translation = apply(p.translation);
    return out;
}

SimilarityTransform align_points(std::span<const Vec3> estimated, std::span<const Vec3> reference, AlignMode mode) {
    if (estimated.size() != reference.size())
        throw Error(ErrorCode::DimensionMismatch, "trajectories differ in length");
    SimilarityTransform out;
    if (mode == AlignMode::none) return out;
    if (estimated.size() < 3) throw Error(ErrorCode::DegenerateConfiguration, "need at least 3 poses");

    const auto n = static_cast<double>(estimated.size());
    Vec3 mu_e = Vec3::Zero(), mu_r = Vec3::Zero();
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        mu_e += estimated[i];
        mu_r += reference[i];
    }
    mu_e /= n;
    mu_r /= n;

    Mat3 cov = Mat3::Zero();
    double var_e = 0.0;
    Mat3 scatter_e = Mat3::Zero();
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        const Vec3 de = estimated[i] - mu_e;
        const Vec3 dr = reference[i] - mu_r;
        cov += dr * de.transpose();
        scatter_e += de * de.transpose();
        var_e += de.squaredNorm();
    }
    cov /= n;
    var_e /= n;

    Eigen::JacobiSVD<Mat3> shape(scatter_e);
    const auto sv = shape.singularValues();
    if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0])
        throw Error(ErrorCode::DegenerateConfiguration, "estimated positions are rank-deficient");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 s = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
    const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();

    double scale = 1.0;
    if (mode == AlignMode::similarity) scale = (svd.singularValues().asDiagonal() * s).trace() / var_e;

    out.rigid = Pose::from_rt(r, mu_r - scale * r * mu_e);
    out.scale = scale;
    return out;
}

AlignmentResult align_trajectories(std::span<const Pose> estimated, std::span<const Pose> reference, AlignMode mode) {
    if (estimated.size() != reference.size())
        throw Error(ErrorCode::DimensionMismatch, "trajectories differ in length");
    std::vector<Vec3> pe, pr;
    pe.reserve(estimated.size());
    pr.reserve(reference.size());
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        pe.push_back(estimated[i].translation);
        pr.push_back(reference[i].translation);
    }
    AlignmentResult res;
    res.transform = align_points(pe, pr, mode);
    res.aligned.reserve(estimated.size());
    for (const auto& p : estimated) res.aligned.push_back(res.transform.apply(p));
    return res;
}

std::vector<StampedPose> read_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<StampedPose> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ss(line);
        double ts, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw Error(ErrorCode::MalformedIndex, path.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
        StampedPose sp;
        sp.timestamp = ts;
        sp.pose.translation = Vec3(tx, ty, tz);
        sp.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
        out.push_back(sp);
    }
    return out;
}

void write_trajectory(const std::filesystem::path& path, std::span<const StampedPose> poses) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "# timestamp tx ty tz qx qy qz qw\n";
    char buf[512];
    for (const auto& sp : poses) {
        const auto& q = sp.pose.rotation;
        const auto& t = sp.pose.translation;
        std::snprintf(buf, sizeof(buf), "%.6f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", sp.timestamp, t.x(),
                      t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
        out << buf;
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Pose interpolate(const Pose& a, const Pose& b, double alpha) {
    Pose out;
    out.rotation = a.rotation.slerp(alpha, b.rotation).normalized();
    out.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
    return out;
}

}  // namespace mgslam
