#include "mgslam/frontend.hpp"

#include "mgslam/errors.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace mgslam {

void FrontEndConfig::validate() const {
    if (patches_per_frame < 1) throw Error(ErrorCode::InvalidConfig, "patches_per_frame must be >= 1");
    if (optimization_window < 2) throw Error(ErrorCode::InvalidConfig, "optimization_window must be >= 2");
    if (removal_window < optimization_window)
        throw Error(ErrorCode::InvalidConfig, "removal_window must be >= optimization_window");
    if (patch_extent < 1 || patch_extent % 2 == 0) throw Error(ErrorCode::InvalidConfig, "patch_extent must be odd");
    if (!(keyframe_flow_px >= 0.0)) throw Error(ErrorCode::InvalidConfig, "keyframe_flow_px must be >= 0");
}

FrontEnd::FrontEnd(std::shared_ptr<PatchGraph> graph, FrontEndConfig config)
    : graph_(std::move(graph)), config_(config) {
    config_.validate();
}

FrontEnd::FrameRecord& FrontEnd::record(FrameId id) {
    auto it = std::lower_bound(records_.begin(), records_.end(), id,
                               [](const FrameRecord& r, FrameId v) { return r.id < v; });
    if (it == records_.end() || it->id != id) throw Error(ErrorCode::UnknownKeyframe, "no record for frame");
    return *it;
}

FrameId FrontEnd::anchor() const { return graph_->frames().begin()->first; }

std::optional<FrameId> FrontEnd::newest_frame() const {
    if (graph_->frames().empty()) return std::nullopt;
    return graph_->frames().rbegin()->first;
}

std::optional<FrameId> FrontEnd::last_keyframe() const {
    for (auto it = graph_->frames().rbegin(); it != graph_->frames().rend(); ++it)
        if (it->second.is_keyframe) return it->first;
    return std::nullopt;
}

std::vector<FrameId> FrontEnd::window() const {
    std::vector<FrameId> ids;
    for (auto it = graph_->frames().rbegin();
         it != graph_->frames().rend() && int(ids.size()) < config_.optimization_window; ++it)
        ids.push_back(it->first);
    std::reverse(ids.begin(), ids.end());
    return ids;
}

FrameId FrontEnd::add_frame(std::shared_ptr<const Image> image, double timestamp, int source_index,
                            std::optional<Pose> initial_pose_guess, std::span<const Pixel> centers) {
    const Intrinsics& k = graph_->intrinsics();
    if (!image || image->width != k.width || image->height != k.height)
        throw Error(ErrorCode::DimensionMismatch, "frame size does not match intrinsics");

    // Refresh motion history with the latest estimates of frames still alive.
    for (auto& [id, pose] : motion_history_)
        if (graph_->has_frame(id)) pose = graph_->frame(id).pose;
    const Pose pose = initial_pose_guess ? *initial_pose_guess : predict_pose();

    // Inverse-depth bootstrap from the previous frame's patches.
    double init_depth = 1.0;
    if (auto prev = newest_frame()) {
        std::vector<double> d;
        for (PatchId p : graph_->patches_of(*prev)) d.push_back(graph_->patch(p).inv_depth);
        if (!d.empty()) {
            std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
            init_depth = d[d.size() / 2];
        }
    }
    const std::vector<FrameId> previous = window();

    Frame f;
    f.timestamp = timestamp;
    f.image = image;
    f.gray = std::make_shared<ScalarImage>(to_gray(*image));
    f.pose = pose;
    f.source_index = source_index;
    const FrameId id = graph_->add_frame(std::move(f)).id;

    std::vector<Pixel> sampled;
    if (centers.empty()) {
        SamplerConfig sc;
        sc.patches_per_frame = config_.patches_per_frame;
        sc.border = config_.patch_extent;
        sampled = random_sample(k.width, k.height, sc, config_.seed * 0x9E3779B97F4A7C15ull + std::uint64_t(id));
        centers = sampled;
    }
    for (const Pixel& c : centers) graph_->add_patch(id, c, init_depth, config_.patch_extent);

    GraphEvent ev;
    ev.type = GraphEventType::frame_added;
    ev.frame = id;
    auto connect = [&](PatchId p, FrameId target) {
        GraphEdge e;
        e.patch = p;
        e.target = target;
        if (edges_.insert(e)) ev.new_edges.push_back(e);
    };
    for (PatchId p : graph_->patches_of(id))
        for (FrameId w : previous) connect(p, w);
    for (FrameId w : previous)
        for (PatchId p : graph_->patches_of(w)) connect(p, id);

    FrameRecord rec;
    rec.id = id;
    rec.timestamp = timestamp;
    records_.push_back(rec);

    motion_history_.emplace_back(id, pose);
    if (motion_history_.size() > 2) motion_history_.erase(motion_history_.begin());

    emit(ev);
    return id;
}

Pose FrontEnd::predict_pose() const {
    auto current = [&](std::size_t i) {
        const auto& [id, pose] = motion_history_[i];
        return graph_->has_frame(id) ? graph_->frame(id).pose : pose;
    };
    if (motion_history_.size() == 2) {
        const Pose p1 = current(0), p2 = current(1);
        Pose pose = p2 * (p1.inverse() * p2);
        pose.normalize();
        return pose;
    }
    if (motion_history_.size() == 1) return current(0);
    return Pose::identity();
}

DbaReport FrontEnd::optimize(const CorrespondenceProvider& provider, int iterations) {
    const std::vector<FrameId> win = window();
    if (win.size() < 2) return {};
    const std::set<FrameId> in_window(win.begin(), win.end());
    const FrameId fixed = anchor();

    std::vector<FrameId> free_poses;
    for (FrameId f : win)
        if (f != fixed && !graph_->frame(f).frozen) free_poses.push_back(f);
    std::vector<PatchId> free_patches;
    for (FrameId f : win)
        for (PatchId p : graph_->patches_of(f)) free_patches.push_back(p);

    std::vector<GraphEdge> active;
    std::vector<std::size_t> active_index;
    auto all = edges_.edges();
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& e = all[i];
        if (in_window.contains(e.target) || in_window.contains(graph_->patch(e.patch).source_frame)) {
            active.push_back(e);
            active_index.push_back(i);
        }
    }
    provider.evaluate(*graph_, active);
    for (std::size_t i = 0; i < active.size(); ++i) all[active_index[i]] = active[i];

    DbaOptions opts = config_.dba;
    opts.iterations = iterations;
    const DbaReport report = solve_dba(*graph_, active, free_poses, free_patches, opts);
    for (FrameId f : win) graph_->frame(f).solver_iterations += iterations;
    return report;
}

double FrontEnd::flow_from_previous_keyframe(FrameId frame) const {
    std::optional<FrameId> prev;
    for (auto it = graph_->frames().rbegin(); it != graph_->frames().rend(); ++it) {
        if (it->first < frame && it->second.is_keyframe) {
            prev = it->first;
            break;
        }
    }
    if (!prev) return std::numeric_limits<double>::infinity();
    const Pose& src = graph_->frame(*prev).pose;
    const Pose& tgt = graph_->frame(frame).pose;
    double sum = 0.0;
    int n = 0;
    for (PatchId pid : graph_->patches_of(*prev)) {
        const Patch& p = graph_->patch(pid);
        const auto r = reproject_with_jacobians(p.center, p.inv_depth, src, tgt, graph_->intrinsics(), false);
        if (!r.valid) continue;
        sum += (r.pixel - p.center).norm();
        ++n;
    }
    if (n == 0) return std::numeric_limits<double>::infinity();
    return sum / n;
}

bool FrontEnd::decide_keyframe(FrameId frame) {
    Frame& f = graph_->frame(frame);
    bool keyframe = true;
    if (last_keyframe().has_value() && frame != anchor())
        keyframe = flow_from_previous_keyframe(frame) > config_.keyframe_threshold(graph_->intrinsics().width);
    f.is_keyframe = keyframe;
    f.keyframe_decided = true;
    FrameRecord& rec = record(frame);
    rec.keyframe = keyframe;
    if (keyframe) rec.pose_at_decision = f.pose;

    GraphEvent ev;
    ev.type = GraphEventType::keyframe_decided;
    ev.frame = frame;
    ev.is_keyframe = keyframe;
    emit(ev);
    return keyframe;
}

void FrontEnd::retire_frames() {
    // Non-keyframes leave both graphs.
    std::vector<FrameId> doomed;
    for (const auto& [id, f] : graph_->frames())
        if (f.keyframe_decided && !f.is_keyframe) doomed.push_back(id);
    for (FrameId id : doomed) {
        FrameRecord& rec = record(id);
        rec.removed = true;
        rec.pose_at_removal = graph_->frame(id).pose;
        for (auto it = graph_->frames().rbegin(); it != graph_->frames().rend(); ++it) {
            if (it->first < id && it->second.is_keyframe) {
                rec.prev_keyframe = it->first;
                rec.prev_keyframe_pose = it->second.pose;
                break;
            }
        }
        for (auto& [hid, pose] : motion_history_)
            if (hid == id) pose = rec.pose_at_removal;

        GraphEvent ev;
        ev.type = GraphEventType::frame_removed;
        ev.frame = id;
        ev.removed_patches.assign(graph_->patches_of(id).begin(), graph_->patches_of(id).end());
        edges_.remove_incident(id, ev.removed_patches);
        graph_->remove_frame(id);
        emit(ev);
    }

    const std::vector<FrameId> win = window();
    if (!win.empty()) {
        for (auto& [id, f] : graph_->frames())
            if (id < win.front()) f.frozen = true;
    }

    // Front-end only: drop edges whose older endpoint left the removal window.
    if (auto newest = newest_frame()) {
        const FrameId horizon = *newest;
        edges_.remove_if([&](const GraphEdge& e) {
            const FrameId src = graph_->patch(e.patch).source_frame;
            return horizon - std::min(src, e.target) > config_.removal_window;
        });
    }
}

std::vector<StampedPose> FrontEnd::trajectory() const {
    std::vector<StampedPose> out;
    out.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const FrameRecord& rec = records_[i];
        if (!rec.removed) {
            out.push_back({rec.timestamp, graph_->frame(rec.id).pose});
            continue;
        }
        // Interpolate the corrections applied since removal to the bracketing keyframes.
        Pose correction = Pose::identity();
        std::optional<double> t_prev;
        if (rec.prev_keyframe && graph_->has_frame(*rec.prev_keyframe)) {
            correction = graph_->frame(*rec.prev_keyframe).pose * rec.prev_keyframe_pose.inverse();
            t_prev = graph_->frame(*rec.prev_keyframe).timestamp;
        }
        for (std::size_t j = i + 1; j < records_.size(); ++j) {
            const FrameRecord& next = records_[j];
            if (next.removed || !next.keyframe || !graph_->has_frame(next.id)) continue;
            const Pose next_corr = graph_->frame(next.id).pose * next.pose_at_decision.inverse();
            if (t_prev) {
                const double span = next.timestamp - *t_prev;
                const double alpha = span > 0.0 ? std::clamp((rec.timestamp - *t_prev) / span, 0.0, 1.0) : 0.0;
                correction = interpolate(correction, next_corr, alpha);
            } else {
                correction = next_corr;
            }
            break;
        }
        Pose p = correction * rec.pose_at_removal;
        p.normalize();
        out.push_back({rec.timestamp, p});
    }
    return out;
}

}  // namespace mgslam
