#include "mgslam/providers.hpp"

#include "mgslam/dba.hpp"

#include <algorithm>
#include <cmath>

namespace mgslam {

bool update_prediction(const PatchGraph& graph, GraphEdge& edge) {
    const Patch& p = graph.patch(edge.patch);
    const auto r = reproject_with_jacobians(p.center, p.inv_depth, graph.frame(p.source_frame).pose,
                                            graph.frame(edge.target).pose, graph.intrinsics(), false);
    edge.predicted = r.valid ? r.pixel : p.center;
    return r.valid;
}

std::optional<Pixel> OracleProvider::true_pixel(const PatchGraph& graph, const GraphEdge& edge) const {
    const Patch& p = graph.patch(edge.patch);
    const int si = graph.frame(p.source_frame).source_index;
    const int ti = graph.frame(edge.target).source_index;
    const auto depth = truth_.true_depth(si, p.center);
    if (!depth || !(*depth > 0.0)) return std::nullopt;

    const Intrinsics& k = truth_.intrinsics();
    const Pose src_true = truth_.true_pose(si);
    const Pose tgt_true = truth_.true_pose(ti);
    const Vec3 world = backproject(p.center, 1.0 / *depth, src_true, k);
    if (!truth_.visible(ti, world)) return std::nullopt;

    Pose src = src_true, tgt = tgt_true;
    if (drift_ && !edge.loop) {
        src = drift_(si, src_true);
        tgt = drift_(ti, tgt_true);
    }
    const Vec3 pc = tgt.rotation.conjugate() * (backproject(p.center, 1.0 / *depth, src, k) - tgt.translation);
    if (!(pc.z() > 0.0)) return std::nullopt;
    return Pixel(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
}

void OracleProvider::evaluate(const PatchGraph& graph, std::span<GraphEdge> edges) const {
    for (auto& e : edges) {
        const bool valid = update_prediction(graph, e);
        const auto truth = true_pixel(graph, e);
        if (!valid || !truth) {
            e.residual.setZero();
            e.weight.setZero();
            continue;
        }
        e.residual = *truth - e.predicted;
        e.weight = Vec2::Ones();
    }
}

namespace {

bool window_inside(const ScalarImage& img, double x, double y, int r) {
    return x - r >= 0.0 && y - r >= 0.0 && x + r <= img.width - 1 && y + r <= img.height - 1;
}

// Fills `out` with the (2r+1)^2 window samples; returns the variance.
double sample_window(const ScalarImage& img, double x, double y, int r, std::vector<double>& out, double& mean) {
    out.clear();
    const bool integral = x == std::floor(x) && y == std::floor(y);
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const double v = integral ? img.at(int(x) + dx, int(y) + dy) : sample_bilinear(img, x + dx, y + dy);
            out.push_back(v);
            sum += v;
        }
    }
    mean = sum / double(out.size());
    double var = 0.0;
    for (double v : out) var += (v - mean) * (v - mean);
    return var / double(out.size());
}

// Translation-only Gauss-Newton on mean/variance-normalized windows.
Vec2 refine_translation(const ScalarImage& target, const std::vector<double>& tpl, double tpl_mean, double tpl_var,
                        Vec2 pos, int r) {
    const double tpl_sd = std::sqrt(tpl_var);
    const Vec2 start = pos;
    std::vector<double> win;
    for (int it = 0; it < 10; ++it) {
        double mean = 0.0;
        const double var = sample_window(target, pos.x(), pos.y(), r, win, mean);
        if (!(var > 0.0)) return start;
        const double sd = std::sqrt(var);
        Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
        Vec2 b = Vec2::Zero();
        std::size_t i = 0;
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx, ++i) {
                const double x = pos.x() + dx, y = pos.y() + dy;
                const Vec2 g(0.5 * (sample_bilinear(target, x + 1, y) - sample_bilinear(target, x - 1, y)),
                             0.5 * (sample_bilinear(target, x, y + 1) - sample_bilinear(target, x, y - 1)));
                const Vec2 j = g / sd;
                const double e = (win[i] - mean) / sd - (tpl[i] - tpl_mean) / tpl_sd;
                h += j * j.transpose();
                b += j * e;
            }
        }
        if (!(std::abs(h.determinant()) > 1e-12)) return start;
        Vec2 step = -h.ldlt().solve(b);
        if (step.norm() > 0.5) step *= 0.5 / step.norm();
        pos += step;
        if ((pos - start).cwiseAbs().maxCoeff() > 1.0) return start;
        if (step.norm() < 1e-4) break;
    }
    return pos;
}

}  // namespace

double ncc_weight(double score, const MatcherOptions& options) {
    if (!std::isfinite(score)) return 0.0;
    return std::clamp((score - options.min_ncc) / (1.0 - options.min_ncc), 0.0, 1.0);
}

NccMatch ncc_search(const ScalarImage& source, const Pixel& source_center, const ScalarImage& target,
                    const Pixel& guess, const MatcherOptions& options) {
    NccMatch best;
    const int r = options.template_radius;
    if (!window_inside(source, source_center.x(), source_center.y(), r)) return best;

    std::vector<double> tpl, win;
    double tpl_mean = 0.0;
    const double tpl_var = sample_window(source, source_center.x(), source_center.y(), r, tpl, tpl_mean);
    if (tpl_var < options.min_variance) return best;
    const double n = double(tpl.size());

    const int rs = options.search_radius;
    const int side = 2 * rs + 1;
    std::vector<double> scores(std::size_t(side) * side, -2.0);
    const Vec2 origin(std::round(guess.x()), std::round(guess.y()));
    int best_ix = 0, best_iy = 0;
    bool found = false;
    for (int oy = -rs; oy <= rs; ++oy) {
        for (int ox = -rs; ox <= rs; ++ox) {
            const double x = origin.x() + ox, y = origin.y() + oy;
            if (!window_inside(target, x, y, r)) continue;
            double win_mean = 0.0;
            const double win_var = sample_window(target, x, y, r, win, win_mean);
            if (win_var < options.min_variance) continue;
            double cov = 0.0;
            for (std::size_t i = 0; i < tpl.size(); ++i) cov += (tpl[i] - tpl_mean) * (win[i] - win_mean);
            const double score = cov / (n * std::sqrt(tpl_var * win_var));
            scores[std::size_t(oy + rs) * side + (ox + rs)] = score;
            if (!found || score > best.score) {
                found = true;
                best.score = score;
                best_ix = ox;
                best_iy = oy;
            }
        }
    }
    if (!found) return best;

    auto at = [&](int ox, int oy) -> double {
        if (ox < -rs || ox > rs || oy < -rs || oy > rs) return -2.0;
        return scores[std::size_t(oy + rs) * side + (ox + rs)];
    };
    // A peak on the edge of the searched region is not a located maximum.
    const double l = at(best_ix - 1, best_iy), rr = at(best_ix + 1, best_iy);
    const double u = at(best_ix, best_iy - 1), d = at(best_ix, best_iy + 1);
    best.position = origin + Vec2(best_ix, best_iy);
    if (l <= -2.0 || rr <= -2.0 || u <= -2.0 || d <= -2.0) return best;
    best.position = refine_translation(target, tpl, tpl_mean, tpl_var, best.position, r);
    if (!window_inside(target, best.position.x(), best.position.y(), r)) return best;
    best.ok = true;
    return best;
}

void MatcherProvider::evaluate(const PatchGraph& graph, std::span<GraphEdge> edges) const {
    for (auto& e : edges) {
        e.residual.setZero();
        e.weight.setZero();
        if (!update_prediction(graph, e)) continue;
        const Patch& p = graph.patch(e.patch);
        const Frame& src = graph.frame(p.source_frame);
        const Frame& tgt = graph.frame(e.target);
        if (!src.gray || !tgt.gray) continue;
        if (!window_inside(*tgt.gray, e.predicted.x(), e.predicted.y(), options_.template_radius)) continue;
        const NccMatch m = ncc_search(*src.gray, p.center, *tgt.gray, e.predicted, options_);
        if (!m.ok) continue;
        e.residual = m.position - e.predicted;
        const double w = ncc_weight(m.score, options_);
        e.weight = Vec2(w, w);
    }
}

}  // namespace mgslam
