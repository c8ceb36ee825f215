#include "mgslam/backend.hpp"

#include "mgslam/errors.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace mgslam {

void BackEndConfig::validate() const {
    if (global_iterations < 0) throw Error(ErrorCode::InvalidConfig, "global_iters must be >= 0");
    if (recent < 0) throw Error(ErrorCode::InvalidConfig, "recent must be >= 0");
}

BackEnd::BackEnd(std::shared_ptr<PatchGraph> graph, BackEndConfig config)
    : graph_(std::move(graph)), config_(config) {
    config_.validate();
}

void BackEnd::mirror(const GraphEvent& ev) {
    switch (ev.type) {
        case GraphEventType::frame_added:
            for (const GraphEdge& e : ev.new_edges) edges_.insert(e);
            break;
        case GraphEventType::keyframe_decided:
            if (ev.is_keyframe && std::find(keyframes_.begin(), keyframes_.end(), ev.frame) == keyframes_.end())
                keyframes_.push_back(ev.frame);
            break;
        case GraphEventType::frame_removed:
            edges_.remove_incident(ev.frame, ev.removed_patches);
            std::erase(keyframes_, ev.frame);
            break;
    }
}

int BackEnd::ordinal(FrameId keyframe) const {
    auto it = std::find(keyframes_.begin(), keyframes_.end(), keyframe);
    if (it == keyframes_.end()) throw Error(ErrorCode::UnknownKeyframe, "frame " + std::to_string(keyframe) + " is not a keyframe");
    return int(it - keyframes_.begin());
}

std::size_t BackEnd::add_loop_edges(FrameId query, std::span<const FrameId> loop_frames) {
    const int q = ordinal(query);
    for (FrameId j : loop_frames)
        if (!(ordinal(j) < q - config_.recent))
            throw Error(ErrorCode::RecencyViolation, "loop frame " + std::to_string(j) + " is within the recent window");
    std::size_t added = 0;
    auto connect = [&](FrameId source, FrameId target) {
        for (PatchId p : graph_->patches_of(source)) {
            GraphEdge e;
            e.patch = p;
            e.target = target;
            e.loop = true;
            if (edges_.insert(e)) ++added;
        }
    };
    for (FrameId j : loop_frames) {
        connect(query, j);
        connect(j, query);
    }
    return added;
}

std::size_t BackEnd::loop_edge_count() const {
    return std::size_t(std::count_if(edges_.edges().begin(), edges_.edges().end(), [](const GraphEdge& e) { return e.loop; }));
}

std::vector<Subgraph> BackEnd::partition(std::size_t budget) const {
    std::map<FrameId, std::vector<std::size_t>> groups;
    const auto all = edges_.edges();
    for (std::size_t i = 0; i < all.size(); ++i) groups[graph_->patch(all[i].patch).source_frame].push_back(i);
    std::vector<Subgraph> out;
    for (auto& [source, idx] : groups) {
        const std::size_t chunk = budget == 0 ? idx.size() : budget;
        for (std::size_t start = 0; start < idx.size(); start += chunk) {
            Subgraph s;
            s.source = source;
            s.edges.assign(idx.begin() + std::ptrdiff_t(start),
                           idx.begin() + std::ptrdiff_t(std::min(idx.size(), start + chunk)));
            out.push_back(std::move(s));
        }
    }
    return out;
}

DbaReport BackEnd::global_optimize(const CorrespondenceProvider& provider) {
    return global_optimize(provider, config_.global_iterations, config_.edge_budget);
}

DbaReport BackEnd::global_optimize(const CorrespondenceProvider& provider, int iterations, std::size_t budget) {
    if (keyframes_.size() < 2 || iterations <= 0) return {};
    const std::set<FrameId> kf(keyframes_.begin(), keyframes_.end());
    auto all = edges_.edges();

    std::vector<GraphEdge> working(all.begin(), all.end());
    for (const Subgraph& s : partition(budget)) {
        std::vector<GraphEdge> batch;
        batch.reserve(s.edges.size());
        for (std::size_t i : s.edges) batch.push_back(working[i]);
        provider.evaluate(*graph_, batch);
        for (std::size_t k = 0; k < s.edges.size(); ++k) working[s.edges[k]] = batch[k];
    }
    std::copy(working.begin(), working.end(), all.begin());

    std::vector<GraphEdge> active;
    for (const GraphEdge& e : working)
        if (kf.contains(e.target) && kf.contains(graph_->patch(e.patch).source_frame)) active.push_back(e);

    const FrameId anchor = *std::min_element(keyframes_.begin(), keyframes_.end());
    std::vector<FrameId> free_poses;
    std::vector<PatchId> free_patches;
    for (FrameId f : kf) {
        if (f != anchor) free_poses.push_back(f);
        for (PatchId p : graph_->patches_of(f)) free_patches.push_back(p);
    }
    DbaOptions opts = config_.dba;
    opts.iterations = iterations;
    return solve_dba(*graph_, active, free_poses, free_patches, opts);
}

}  // namespace mgslam
