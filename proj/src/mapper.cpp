#include "mgslam/mapper.hpp"

#include "mgslam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgslam {

void MapperConfig::validate() const {
    if (window_length < 1) throw Error(ErrorCode::InvalidConfig, "window_length must be >= 1");
    if (iters_per_keyframe < 0) throw Error(ErrorCode::InvalidConfig, "map_iters_per_keyframe must be >= 0");
    if (refinement_iterations < 0) throw Error(ErrorCode::InvalidConfig, "refinement_iterations must be >= 0");
    if (!(prune_opacity >= 0.0 && prune_opacity < 1.0)) throw Error(ErrorCode::InvalidConfig, "prune_opacity out of range");
    if (tau_s && !(*tau_s > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau_s must be positive");
    if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda_ssim out of range");
}

GaussianMapper::GaussianMapper(Intrinsics k, MapperConfig config)
    : k_(k), config_(std::move(config)), tau_s_(config_.tau_s), rng_(config_.seed) {
    config_.validate();
}

void GaussianMapper::add_primitives(std::span<const GaussianPrimitive> prims, FrameId creation_frame) {
    if (prims.empty()) return;
    if (!tau_s_) {
        std::vector<double> depth;
        for (const auto& g : prims) depth.push_back(std::exp(g.log_scale.x()) * k_.fx);
        std::nth_element(depth.begin(), depth.begin() + depth.size() / 2, depth.end());
        tau_s_ = config_.tau_s_depth_factor * depth[depth.size() / 2];
    }
    for (const auto& g : prims) map_.add(g, creation_frame);
    moments_.resize(map_.size());
}

double GaussianMapper::scene_extent() const {
    if (camera_centers_.size() < 2) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& [id, c] : camera_centers_) mean += c;
    mean /= double(camera_centers_.size());
    double r = 0.0;
    for (const auto& [id, c] : camera_centers_) r = std::max(r, (c - mean).norm());
    return r > 0.0 ? 1.1 * r : 1.0;
}

void GaussianMapper::note_views(std::span<const MapView> views) {
    for (const auto& v : views) camera_centers_[v.id] = v.pose.translation;
}

double GaussianMapper::evaluate(std::span<const MapView> views, GaussianGradients* grads) const {
    const auto prims = map_.primitives();
    if (grads) grads->resize(prims.size());
    double total = 0.0;
    for (const auto& v : views) {
        if (!v.image) throw Error(ErrorCode::MissingImage, "keyframe has no image");
        const RenderOutput out = render(prims, v.pose, k_, config_.raster);
        const LossValue l = color_loss(out.color, *v.image, config_.lambda_ssim);
        total += l.value;
        if (grads) render_backward(prims, out, v.pose, k_, l.gradient, config_.raster, *grads);
    }
    if (config_.lambda_reg > 0.0 && tau_s_) {
        std::vector<Vec3> d_reg(prims.size(), Vec3::Zero());
        total += config_.lambda_reg * scale_regularizer(prims, *tau_s_, grads ? &d_reg : nullptr);
        if (grads)
            for (std::size_t i = 0; i < prims.size(); ++i) grads->log_scale[i] += config_.lambda_reg * d_reg[i];
    }
    return total;
}

double GaussianMapper::loss(std::span<const MapView> views) const { return evaluate(views, nullptr); }

void GaussianMapper::adam_step(const GaussianGradients& grads, double step_scale) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
    const double lr_pos = config_.lr.position_per_extent * scene_extent();
    for (std::size_t i = 0; i < map_.size(); ++i) {
        GaussianPrimitive& g = map_[i];
        Moments& m = moments_[i];
        ++m.step;
        const double c1 = 1.0 - std::pow(b1, double(m.step));
        const double c2 = 1.0 - std::pow(b2, double(m.step));
        double* params[14] = {&g.position[0], &g.position[1], &g.position[2], &g.rotation[0], &g.rotation[1],
                              &g.rotation[2], &g.rotation[3], &g.log_scale[0], &g.log_scale[1], &g.log_scale[2],
                              &g.opacity_logit, &g.color[0], &g.color[1], &g.color[2]};
        const double grad[14] = {grads.position[i][0], grads.position[i][1], grads.position[i][2],
                                 grads.rotation[i][0], grads.rotation[i][1], grads.rotation[i][2],
                                 grads.rotation[i][3], grads.log_scale[i][0], grads.log_scale[i][1],
                                 grads.log_scale[i][2], grads.opacity_logit[i], grads.color[i][0],
                                 grads.color[i][1], grads.color[i][2]};
        for (int j = 0; j < 14; ++j) {
            const double lr = j < 3    ? lr_pos
                              : j < 7  ? config_.lr.rotation
                              : j < 10 ? config_.lr.log_scale
                              : j < 11 ? config_.lr.opacity
                                       : config_.lr.color;
            m.m[j] = b1 * m.m[j] + (1.0 - b1) * grad[j];
            m.v[j] = b2 * m.v[j] + (1.0 - b2) * grad[j] * grad[j];
            *params[j] -= step_scale * lr * (m.m[j] / c1) / (std::sqrt(m.v[j] / c2) + eps);
        }
        g.rotation.normalize();
        for (int c = 0; c < 3; ++c) g.color[c] = std::clamp(g.color[c], 0.0, 1.0);
    }
}

double GaussianMapper::step(std::span<const MapView> views, double* loss_before) {
    GaussianGradients grads;
    const double l0 = evaluate(views, &grads);
    if (loss_before) *loss_before = l0;
    if (!config_.step_halving) {
        adam_step(grads, 1.0);
        return std::numeric_limits<double>::quiet_NaN();
    }
    const GaussianMap saved_map = map_;
    const std::vector<Moments> saved_moments = moments_;
    double scale = 1.0;
    for (int attempt = 0; attempt <= config_.max_halvings; ++attempt) {
        adam_step(grads, scale);
        const double l1 = evaluate(views, nullptr);
        if (l1 <= l0) return l1;
        map_ = saved_map;
        moments_ = saved_moments;
        scale *= 0.5;
    }
    return l0;
}

MapStepReport GaussianMapper::optimize_window(std::span<const MapView> window, int iterations) {
    MapStepReport report;
    if (iterations <= 0 || map_.empty() || window.empty()) return report;
    note_views(window);
    for (int it = 0; it < iterations; ++it) {
        double before = 0.0;
        step(window, &before);
        report.loss_history.push_back(before);
        ++report.iterations;
    }
    report.initial_loss = report.loss_history.front();
    report.pruned = prune();
    report.final_loss = loss(window);
    report.loss_history.push_back(report.final_loss);
    return report;
}

MapStepReport GaussianMapper::final_refinement(std::span<const MapView> keyframes, int iterations) {
    MapStepReport report;
    if (iterations <= 0 || map_.empty() || keyframes.empty()) return report;
    note_views(keyframes);
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::vector<MapView> batch;
    for (int it = 0; it < iterations; ++it) {
        batch.clear();
        while (int(batch.size()) < std::min<int>(config_.window_length, int(keyframes.size()))) {
            if (cursor == order.size()) {
                order.resize(keyframes.size());
                std::iota(order.begin(), order.end(), std::size_t(0));
                std::shuffle(order.begin(), order.end(), rng_);
                cursor = 0;
            }
            batch.push_back(keyframes[order[cursor++]]);
        }
        double before = 0.0;
        step(batch, &before);
        report.loss_history.push_back(before);
        ++report.iterations;
    }
    report.initial_loss = report.loss_history.front();
    report.pruned = prune();
    report.final_loss = loss(keyframes.size() <= std::size_t(config_.window_length) ? keyframes
                                                                                      : std::span<const MapView>(batch));
    report.loss_history.push_back(report.final_loss);
    return report;
}

std::size_t GaussianMapper::prune() {
    std::vector<bool> keep(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) keep[i] = map_[i].opacity() >= config_.prune_opacity;
    std::size_t out = 0;
    for (std::size_t i = 0; i < moments_.size(); ++i)
        if (keep[i]) moments_[out++] = moments_[i];
    moments_.resize(out);
    return map_.retain(keep);
}

}  // namespace mgslam
