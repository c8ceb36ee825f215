#include "mgslam/evaluation.hpp"

#include "mgslam/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace mgslam {

std::vector<std::pair<std::size_t, std::size_t>> associate(std::span<const StampedPose> estimated,
                                                           std::span<const StampedPose> reference, double max_dt) {
    std::vector<std::size_t> order(reference.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reference[a].timestamp < reference[b].timestamp; });
    std::vector<bool> used(reference.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        const double t = estimated[i].timestamp;
        auto it = std::lower_bound(order.begin(), order.end(), t,
                                   [&](std::size_t r, double v) { return reference[r].timestamp < v; });
        std::optional<std::size_t> best;
        double best_dt = max_dt;
        for (auto c : {it, it == order.begin() ? order.end() : std::prev(it)}) {
            if (c == order.end() || used[*c]) continue;
            const double dt = std::abs(reference[*c].timestamp - t);
            if (dt <= best_dt) {
                best_dt = dt;
                best = *c;
            }
        }
        if (best) {
            used[*best] = true;
            out.emplace_back(i, *best);
        }
    }
    return out;
}

double ate_rmse(std::span<const Pose> estimated, std::span<const Pose> reference, AlignMode mode) {
    if (estimated.empty()) throw Error(ErrorCode::NoAssociations, "no poses to compare");
    if (estimated.size() != reference.size()) throw Error(ErrorCode::DimensionMismatch, "pose lists differ in length");
    const AlignmentResult a = align_trajectories(estimated, reference, mode);
    double sum = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i)
        sum += (a.aligned[i].translation - reference[i].translation).squaredNorm();
    return std::sqrt(sum / double(reference.size()));
}

double ate_rmse(std::span<const StampedPose> estimated, std::span<const StampedPose> reference, AlignMode mode,
                double max_dt) {
    const auto pairs = associate(estimated, reference, max_dt);
    if (pairs.empty()) throw Error(ErrorCode::NoAssociations, "no timestamps associate within the window");
    std::vector<Pose> est, ref;
    for (const auto& [i, j] : pairs) {
        est.push_back(estimated[i].pose);
        ref.push_back(reference[j].pose);
    }
    return ate_rmse(est, ref, mode);
}

double psnr(const Image& rendered, const Image& reference) {
    if (!rendered.same_size(reference)) throw Error(ErrorCode::DimensionMismatch, "images differ in size");
    double mse = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - reference.data[i];
        mse += d * d;
    }
    mse /= double(rendered.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::InvalidConfig, "median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

nlohmann::json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return nullptr;
    return v > 0 ? "inf" : "-inf";
}

}  // namespace

double MetricsReport::mean_psnr() const { return mean_of(psnr); }
double MetricsReport::mean_ssim() const { return mean_of(ssim); }

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["ate_rmse"] = ate_rmse ? number(*ate_rmse) : nlohmann::json(nullptr);
    j["mean_psnr"] = number(mean_psnr());
    j["mean_ssim"] = number(mean_ssim());
    j["psnr"] = nlohmann::json::array();
    for (double v : psnr) j["psnr"].push_back(number(v));
    j["ssim"] = nlohmann::json::array();
    for (double v : ssim) j["ssim"].push_back(number(v));
    j["frames"] = frames;
    j["keyframes"] = keyframes;
    j["primitives"] = primitives;
    j["loops"] = loops;
    j["seconds"] = seconds;
    j["psnr_before_refinement"] = psnr_before_refinement ? number(*psnr_before_refinement) : nlohmann::json(nullptr);
    return j.dump(2) + "\n";
}

}  // namespace mgslam
