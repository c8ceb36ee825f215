#include "mgslam/synthetic.hpp"

#include "mgslam/dataset.hpp"
#include "mgslam/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace mgslam {

void SceneSpec::validate() const {
    if (width < 16 || height < 16) throw Error(ErrorCode::InvalidSpec, "image must be at least 16x16");
    if (!(focal > 0.0)) throw Error(ErrorCode::InvalidSpec, "focal length must be positive");
    if (frames < 1) throw Error(ErrorCode::InvalidSpec, "frame count must be positive");
    if (!(radius > 0.0)) throw Error(ErrorCode::InvalidSpec, "trajectory radius must be positive");
    if (!(room_half_size > radius + std::abs(center.x()) && room_half_size > radius + std::abs(center.z())))
        throw Error(ErrorCode::InvalidSpec, "trajectory must stay inside the room");
    if (texture_size < 4 || texture_lattice < 1 || texture_size % texture_lattice != 0)
        throw Error(ErrorCode::InvalidSpec, "texture size must be a multiple of the lattice");
    if (!(texel > 0.0) || !(fps > 0.0)) throw Error(ErrorCode::InvalidSpec, "texel and fps must be positive");
}

Intrinsics SceneSpec::intrinsics() const {
    Intrinsics k;
    k.fx = k.fy = focal;
    k.cx = 0.5 * width;
    k.cy = 0.5 * height;
    k.width = width;
    k.height = height;
    return k;
}

Pose circle_pose(const SceneSpec& spec, double theta) {
    const Vec3 forward(std::cos(theta), 0.0, std::sin(theta));
    const Vec3 down(0.0, 1.0, 0.0);
    const Vec3 right = down.cross(forward);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    r = r * Eigen::AngleAxisd(spec.pitch, Vec3::UnitX()).toRotationMatrix();
    return Pose::from_rt(r, spec.center + spec.radius * forward);
}

namespace {

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Periodic value noise tile: three octaves, rescaled to [0.1, 0.9] per channel.
std::vector<Vec3> make_texture(int size, int lattice, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> tex(std::size_t(size) * size, Vec3::Zero());
    double amplitude = 1.0;
    for (int cells : {lattice, 2 * lattice, 4 * lattice}) {
        std::vector<Vec3> grid(std::size_t(cells) * cells);
        for (auto& g : grid) g = Vec3(u(rng), u(rng), u(rng));
        const double step = double(size) / cells;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double gx = x / step, gy = y / step;
                const int x0 = int(gx), y0 = int(gy);
                const double fx = smooth(gx - x0), fy = smooth(gy - y0);
                auto at = [&](int i, int j) { return grid[std::size_t((j % cells) * cells + (i % cells))]; };
                const Vec3 v = (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x0 + 1, y0)) +
                               fy * ((1 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
                tex[std::size_t(y) * size + x] += amplitude * v;
            }
        amplitude *= 0.5;
    }
    for (int c = 0; c < 3; ++c) {
        double lo = 1e9, hi = -1e9;
        for (const auto& t : tex) {
            lo = std::min(lo, t[c]);
            hi = std::max(hi, t[c]);
        }
        for (auto& t : tex) t[c] = 0.1 + 0.8 * (t[c] - lo) / std::max(hi - lo, 1e-12);
    }
    return tex;
}

}  // namespace

SyntheticScene SyntheticScene::generate(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticScene s;
    s.spec_ = spec;
    s.k_ = spec.intrinsics();
    std::mt19937_64 rng(seed);
    for (auto& t : s.textures_) t = make_texture(spec.texture_size, spec.texture_lattice, rng);
    for (int i = 0; i < spec.frames; ++i) {
        s.poses_.push_back(circle_pose(spec, i * spec.angle_step));
        s.timestamps_.push_back(i / spec.fps);
        ScalarImage depth;
        s.images_.push_back(std::make_shared<Image>(s.render(s.poses_.back(), &depth)));
        s.depths_.push_back(std::move(depth));
    }
    return s;
}

Vec3 SyntheticScene::texture(int wall, double s, double t) const {
    const int n = spec_.texture_size;
    const double gx = s / spec_.texel, gy = t / spec_.texel;
    const double fx0 = std::floor(gx), fy0 = std::floor(gy);
    const double ax = gx - fx0, ay = gy - fy0;
    auto wrap = [n](double v) { return int(((long long)(v) % n + n) % n); };
    const int x0 = wrap(fx0), y0 = wrap(fy0), x1 = (x0 + 1) % n, y1 = (y0 + 1) % n;
    const auto& tex = textures_[std::size_t(wall)];
    auto at = [&](int x, int y) { return tex[std::size_t(y) * n + x]; };
    return (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x1, y0)) + ay * ((1 - ax) * at(x0, y1) + ax * at(x1, y1));
}

std::optional<SyntheticScene::Hit> SyntheticScene::cast(const Vec3& o, const Vec3& d) const {
    const double h = spec_.room_half_size;
    double best = std::numeric_limits<double>::infinity();
    int wall = -1;
    auto consider = [&](double t, int w) {
        if (t > 0.0 && t < best) {
            best = t;
            wall = w;
        }
    };
    if (d.x() > 0) consider((h - o.x()) / d.x(), 0);
    if (d.x() < 0) consider((-h - o.x()) / d.x(), 1);
    if (d.z() > 0) consider((h - o.z()) / d.z(), 2);
    if (d.z() < 0) consider((-h - o.z()) / d.z(), 3);
    if (wall < 0) return std::nullopt;
    const Vec3 p = o + best * d;
    Hit hit;
    hit.t = best;
    switch (wall) {
        case 0: hit.color = texture(0, p.z(), p.y()); break;
        case 1: hit.color = texture(1, -p.z(), p.y()); break;
        case 2: hit.color = texture(2, -p.x(), p.y()); break;
        default: hit.color = texture(3, p.x(), p.y()); break;
    }
    return hit;
}

Image SyntheticScene::render(const Pose& pose, ScalarImage* depth) const {
    Image img(k_.width, k_.height);
    if (depth) *depth = ScalarImage(k_.width, k_.height);
    const Mat3 r = pose.rotation_matrix();
    for (int y = 0; y < k_.height; ++y)
        for (int x = 0; x < k_.width; ++x) {
            const Vec3 dc((x - k_.cx) / k_.fx, (y - k_.cy) / k_.fy, 1.0);
            const auto hit = cast(pose.translation, r * dc);
            if (!hit) continue;
            img.set_rgb(x, y, hit->color);
            if (depth) depth->at(x, y) = hit->t;
        }
    return img;
}

std::optional<double> SyntheticScene::true_depth(int source_index, const Pixel& px) const {
    const Pose& pose = poses_.at(std::size_t(source_index));
    const Vec3 dc((px.x() - k_.cx) / k_.fx, (px.y() - k_.cy) / k_.fy, 1.0);
    const auto hit = cast(pose.translation, pose.rotation * dc);
    if (!hit) return std::nullopt;
    return hit->t;
}

bool SyntheticScene::visible(int source_index, const Vec3& world) const {
    const Pose& pose = poses_.at(std::size_t(source_index));
    const Vec3 c = pose.rotation.conjugate() * (world - pose.translation);
    if (!(c.z() > 1e-9)) return false;
    const double u = k_.fx * c.x() / c.z() + k_.cx, v = k_.fy * c.y() / c.z() + k_.cy;
    if (u < 0.0 || v < 0.0 || u > k_.width - 1 || v > k_.height - 1) return false;
    const auto d = true_depth(source_index, Pixel(u, v));
    return d && *d >= c.z() * (1.0 - 1e-6) - 1e-9;
}

std::vector<StampedPose> SyntheticScene::trajectory() const {
    std::vector<StampedPose> out;
    for (std::size_t i = 0; i < poses_.size(); ++i) out.push_back({timestamps_[i], poses_[i]});
    return out;
}

void SyntheticScene::write_tum(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "rgb");
    std::ofstream rgb(dir / "rgb.txt");
    if (!rgb) throw Error(ErrorCode::IoError, "cannot write " + (dir / "rgb.txt").string());
    rgb << "# synthetic room sequence\n# timestamp filename\n";
    char name[64];
    for (std::size_t i = 0; i < images_.size(); ++i) {
        std::snprintf(name, sizeof name, "rgb/%06zu.png", i);
        save_png(*images_[i], dir / name);
        char line[128];
        std::snprintf(line, sizeof line, "%.6f %s\n", timestamps_[i], name);
        rgb << line;
    }
    write_trajectory(dir / "groundtruth.txt", trajectory());
}

}  // namespace mgslam
