#include "mgslam/rasterizer.hpp"

#include "mgslam/errors.hpp"
#include "mgslam/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgslam {

void GaussianGradients::resize(std::size_t n) {
    position.assign(n, Vec3::Zero());
    rotation.assign(n, Eigen::Vector4d::Zero());
    log_scale.assign(n, Vec3::Zero());
    opacity_logit.assign(n, 0.0);
    color.assign(n, Vec3::Zero());
}

Mat3 quaternion_matrix(const Eigen::Vector4d& q_raw) {
    const Eigen::Vector4d q = q_raw.normalized();
    const double x = q[0], y = q[1], z = q[2], w = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

namespace {

struct ClampedCoord {
    double value = 0.0;
    bool clamped = false;
};

// Camera-frame x and y used by the Jacobian, limited to the widened frustum.
std::pair<ClampedCoord, ClampedCoord> clamped_xy(const Vec3& c, const Intrinsics& k, const RasterSettings& s) {
    auto one = [&](double v, double half_tan) {
        const double lim = s.jacobian_clamp * half_tan;
        const double t = v / c.z();
        if (!(s.jacobian_clamp > 0.0) || std::isinf(lim) || std::abs(t) <= lim) return ClampedCoord{v, false};
        return ClampedCoord{std::copysign(lim, t) * c.z(), true};
    };
    return {one(c.x(), 0.5 * k.width / k.fx), one(c.y(), 0.5 * k.height / k.fy)};
}

ProjectedGaussian project_gaussian(const GaussianPrimitive& g, const Mat3& world_to_cam, const Vec3& cam_center,
                                   const Intrinsics& k, const RasterSettings& s) {
    ProjectedGaussian p;
    p.cam_point = world_to_cam * (g.position - cam_center);
    p.depth = p.cam_point.z();
    if (!(p.depth > s.near_plane)) return p;

    const double x = p.cam_point.x(), y = p.cam_point.y(), z = p.cam_point.z();
    p.mean = Vec2(k.fx * x / z + k.cx, k.fy * y / z + k.cy);
    const auto [xc, yc] = clamped_xy(p.cam_point, k, s);
    p.jacobian << k.fx / z, 0.0, -k.fx * xc.value / (z * z),
                  0.0, k.fy / z, -k.fy * yc.value / (z * z);
    p.rotation = quaternion_matrix(g.rotation);
    p.scale = g.scale();
    const Mat3 l = p.rotation * p.scale.asDiagonal();
    p.cov3 = l * l.transpose();
    const Eigen::Matrix<double, 2, 3> m = p.jacobian * world_to_cam;
    p.cov = m * p.cov3 * m.transpose();
    p.cov(0, 0) += s.dilation;
    p.cov(1, 1) += s.dilation;
    const double det = p.cov.determinant();
    if (!(det > 0.0)) return p;
    p.conic = p.cov.inverse();
    p.opacity = g.opacity();

    if (std::isinf(s.cutoff_sigma)) {
        p.x0 = 0;
        p.y0 = 0;
        p.x1 = k.width;
        p.y1 = k.height;
    } else {
        const double mid = 0.5 * (p.cov(0, 0) + p.cov(1, 1));
        const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
        const double r = s.cutoff_sigma * std::sqrt(lambda);
        p.x0 = std::max(0, int(std::floor(p.mean.x() - r)));
        p.y0 = std::max(0, int(std::floor(p.mean.y() - r)));
        p.x1 = std::min(k.width, int(std::ceil(p.mean.x() + r)) + 1);
        p.y1 = std::min(k.height, int(std::ceil(p.mean.y() + r)) + 1);
    }
    p.visible = p.x0 < p.x1 && p.y0 < p.y1;
    return p;
}

}  // namespace

RenderOutput render(std::span<const GaussianPrimitive> gaussians, const Pose& pose, const Intrinsics& k,
                    const RasterSettings& s) {
    if (k.width <= 0 || k.height <= 0) throw Error(ErrorCode::InvalidSpec, "image size must be positive");
    if (s.tile_size < 1) throw Error(ErrorCode::InvalidConfig, "tile_size must be >= 1");
    RenderOutput out;
    out.color = Image(k.width, k.height);
    out.alpha = ScalarImage(k.width, k.height);
    out.final_transmittance.assign(std::size_t(k.width) * k.height, 1.0);

    const Mat3 world_to_cam = pose.rotation_matrix().transpose();
    out.projected.resize(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        out.projected[i] = project_gaussian(gaussians[i], world_to_cam, pose.translation, k, s);

    std::vector<std::uint32_t> order;
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        if (out.projected[i].visible) order.push_back(std::uint32_t(i));
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return out.projected[a].depth < out.projected[b].depth;
    });

    const int ts = s.tile_size;
    const int tiles_x = (k.width + ts - 1) / ts, tiles_y = (k.height + ts - 1) / ts;
    out.tiles.resize(std::size_t(tiles_x) * tiles_y);
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            RasterTile& t = out.tiles[std::size_t(ty) * tiles_x + tx];
            t.x0 = tx * ts;
            t.y0 = ty * ts;
            t.x1 = std::min(k.width, t.x0 + ts);
            t.y1 = std::min(k.height, t.y0 + ts);
        }
    }
    for (std::uint32_t i : order) {
        const auto& p = out.projected[i];
        for (int ty = p.y0 / ts; ty <= (p.y1 - 1) / ts; ++ty)
            for (int tx = p.x0 / ts; tx <= (p.x1 - 1) / ts; ++tx)
                out.tiles[std::size_t(ty) * tiles_x + tx].gaussians.push_back(i);
    }

    const double power_floor = std::isinf(s.cutoff_sigma) ? -std::numeric_limits<double>::infinity()
                                                          : -0.5 * s.cutoff_sigma * s.cutoff_sigma;
    parallel_for(out.tiles.size(), s.threads, [&](std::size_t ti) {
        RasterTile& t = out.tiles[ti];
        const int tw = t.x1 - t.x0;
        t.pixel_start.assign(std::size_t(tw) * (t.y1 - t.y0) + 1, 0);
        for (int y = t.y0; y < t.y1; ++y) {
            for (int x = t.x0; x < t.x1; ++x) {
                const std::size_t local_pixel = std::size_t(y - t.y0) * tw + (x - t.x0);
                t.pixel_start[local_pixel] = std::uint32_t(t.contributions.size());
                double tr = 1.0;
                Vec3 c = Vec3::Zero();
                for (std::uint32_t j = 0; j < t.gaussians.size(); ++j) {
                    const std::uint32_t gi = t.gaussians[j];
                    const auto& p = out.projected[gi];
                    if (x < p.x0 || x >= p.x1 || y < p.y0 || y >= p.y1) continue;
                    const double dx = x - p.mean.x(), dy = y - p.mean.y();
                    const double power = -0.5 * (p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy +
                                                 p.conic(1, 1) * dy * dy);
                    if (power < power_floor) continue;
                    const double falloff = std::exp(power);
                    double alpha = p.opacity * falloff;
                    bool clamped = false;
                    if (alpha > s.max_alpha) {
                        alpha = s.max_alpha;
                        clamped = true;
                    }
                    if (alpha < s.min_alpha) continue;
                    const double next = tr * (1.0 - alpha);
                    if (next < s.min_transmittance) break;
                    t.contributions.push_back({j, alpha, tr, falloff, clamped});
                    c += gaussians[gi].color * (alpha * tr);
                    tr = next;
                }
                c += tr * s.background;
                out.color.set_rgb(x, y, c);
                out.alpha.at(x, y) = 1.0 - tr;
                out.final_transmittance[std::size_t(y) * k.width + x] = tr;
            }
        }
        t.pixel_start.back() = std::uint32_t(t.contributions.size());
    });
    return out;
}

namespace {

struct ScreenGrad {
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
};

}  // namespace

void render_backward(std::span<const GaussianPrimitive> gaussians, const RenderOutput& fwd, const Pose& pose,
                     const Intrinsics& k, const Image& d_color, const RasterSettings& s, GaussianGradients& grads) {
    if (d_color.width != k.width || d_color.height != k.height)
        throw Error(ErrorCode::DimensionMismatch, "gradient image size differs from render");
    if (grads.position.size() != gaussians.size()) grads.resize(gaussians.size());

    std::vector<std::vector<ScreenGrad>> tile_grads(fwd.tiles.size());
    parallel_for(fwd.tiles.size(), s.threads, [&](std::size_t ti) {
        const RasterTile& t = fwd.tiles[ti];
        auto& local = tile_grads[ti];
        local.assign(t.gaussians.size(), ScreenGrad{});
        const int tw = t.x1 - t.x0;
        for (int y = t.y0; y < t.y1; ++y) {
            for (int x = t.x0; x < t.x1; ++x) {
                const std::size_t lp = std::size_t(y - t.y0) * tw + (x - t.x0);
                const Vec3 dc = d_color.rgb(x, y);
                Vec3 acc = fwd.final_transmittance[std::size_t(y) * k.width + x] * s.background;
                for (std::uint32_t ci = t.pixel_start[lp + 1]; ci-- > t.pixel_start[lp];) {
                    const Contribution& c = t.contributions[ci];
                    const std::uint32_t gi = t.gaussians[c.local];
                    const auto& p = fwd.projected[gi];
                    const Vec3& col = gaussians[gi].color;
                    ScreenGrad& g = local[c.local];

                    const double w = c.alpha * c.transmittance;
                    g.color += w * dc;
                    const double d_alpha = dc.dot(col * c.transmittance - acc / (1.0 - c.alpha));
                    acc += col * w;
                    if (c.clamped) continue;
                    g.opacity += d_alpha * c.falloff;
                    const double d_power = d_alpha * p.opacity * c.falloff;
                    const Vec2 d(x - p.mean.x(), y - p.mean.y());
                    g.mean += d_power * (p.conic * d);
                    g.conic += (-0.5 * d_power) * (d * d.transpose());
                }
            }
        }
    });

    std::vector<ScreenGrad> screen(gaussians.size());
    for (std::size_t ti = 0; ti < fwd.tiles.size(); ++ti) {
        const RasterTile& t = fwd.tiles[ti];
        for (std::size_t j = 0; j < t.gaussians.size(); ++j) {
            ScreenGrad& dst = screen[t.gaussians[j]];
            const ScreenGrad& src = tile_grads[ti][j];
            dst.mean += src.mean;
            dst.conic += src.conic;
            dst.opacity += src.opacity;
            dst.color += src.color;
        }
    }

    const Mat3 w2c = pose.rotation_matrix().transpose();
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto& p = fwd.projected[i];
        if (!p.visible) continue;
        const ScreenGrad& sg = screen[i];
        const GaussianPrimitive& gp = gaussians[i];
        grads.color[i] += sg.color;
        grads.opacity_logit[i] += sg.opacity * p.opacity * (1.0 - p.opacity);

        const Eigen::Matrix2d d_cov = -p.conic * sg.conic * p.conic;
        const Eigen::Matrix<double, 2, 3> m = p.jacobian * w2c;
        const Eigen::Matrix<double, 2, 3> d_m = 2.0 * d_cov * m * p.cov3;
        const Mat3 d_cov3 = m.transpose() * d_cov * m;
        const Eigen::Matrix<double, 2, 3> d_j = d_m * w2c.transpose();

        const double x = p.cam_point.x(), y = p.cam_point.y(), z = p.cam_point.z();
        const double z2 = z * z, z3 = z2 * z;
        const auto [xc, yc] = clamped_xy(p.cam_point, k, s);
        Vec3 d_cam;
        d_cam.x() = sg.mean.x() * k.fx / z + (xc.clamped ? 0.0 : d_j(0, 2) * (-k.fx / z2));
        d_cam.y() = sg.mean.y() * k.fy / z + (yc.clamped ? 0.0 : d_j(1, 2) * (-k.fy / z2));
        d_cam.z() = -sg.mean.x() * k.fx * x / z2 - sg.mean.y() * k.fy * y / z2 + d_j(0, 0) * (-k.fx / z2) +
                    d_j(0, 2) * ((xc.clamped ? 1.0 : 2.0) * k.fx * xc.value / z3) + d_j(1, 1) * (-k.fy / z2) +
                    d_j(1, 2) * ((yc.clamped ? 1.0 : 2.0) * k.fy * yc.value / z3);
        grads.position[i] += w2c.transpose() * d_cam;

        const Mat3 l = p.rotation * p.scale.asDiagonal();
        const Mat3 d_l = 2.0 * d_cov3 * l;
        Vec3 d_s;
        Mat3 d_r;
        for (int c = 0; c < 3; ++c) {
            d_s[c] = d_l.col(c).dot(p.rotation.col(c));
            d_r.col(c) = d_l.col(c) * p.scale[c];
        }
        grads.log_scale[i] += d_s.cwiseProduct(p.scale);

        const double qn = gp.rotation.norm();
        const Eigen::Vector4d q = gp.rotation / qn;
        const double qx = q[0], qy = q[1], qz = q[2], qw = q[3];
        Mat3 dr_dx, dr_dy, dr_dz, dr_dw;
        dr_dx << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
        dr_dy << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
        dr_dz << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
        dr_dw << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
        const Eigen::Vector4d d_qn(2.0 * d_r.cwiseProduct(dr_dx).sum(), 2.0 * d_r.cwiseProduct(dr_dy).sum(),
                                   2.0 * d_r.cwiseProduct(dr_dz).sum(), 2.0 * d_r.cwiseProduct(dr_dw).sum());
        grads.rotation[i] += (d_qn - q * q.dot(d_qn)) / qn;
    }
}

}  // namespace mgslam
