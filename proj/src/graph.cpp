#include "mgslam/graph.hpp"

#include "mgslam/errors.hpp"

#include <algorithm>

namespace mgslam {

Frame& PatchGraph::add_frame(Frame f) {
    f.id = next_frame_id_++;
    auto [it, ok] = frames_.emplace(f.id, std::move(f));
    frame_patches_[it->first];
    return it->second;
}

Patch& PatchGraph::add_patch(FrameId source, const Pixel& center, double inv_depth, int extent) {
    if (!frames_.contains(source)) throw Error(ErrorCode::UnknownKeyframe, "patch source frame missing");
    Patch p;
    p.id = next_patch_id_++;
    p.source_frame = source;
    p.center = center;
    p.inv_depth = inv_depth;
    p.extent = extent;
    frame_patches_[source].push_back(p.id);
    return patches_.emplace(p.id, p).first->second;
}

std::vector<PatchId> PatchGraph::remove_frame(FrameId id) {
    std::vector<PatchId> removed;
    auto fp = frame_patches_.find(id);
    if (fp != frame_patches_.end()) {
        removed = fp->second;
        for (PatchId p : removed) patches_.erase(p);
        frame_patches_.erase(fp);
    }
    frames_.erase(id);
    return removed;
}

Frame& PatchGraph::frame(FrameId id) {
    auto it = frames_.find(id);
    if (it == frames_.end()) throw Error(ErrorCode::UnknownKeyframe, "frame " + std::to_string(id));
    return it->second;
}

const Frame& PatchGraph::frame(FrameId id) const {
    auto it = frames_.find(id);
    if (it == frames_.end()) throw Error(ErrorCode::UnknownKeyframe, "frame " + std::to_string(id));
    return it->second;
}

Patch& PatchGraph::patch(PatchId id) {
    auto it = patches_.find(id);
    if (it == patches_.end()) throw Error(ErrorCode::UnknownKeyframe, "patch " + std::to_string(id));
    return it->second;
}

const Patch& PatchGraph::patch(PatchId id) const {
    auto it = patches_.find(id);
    if (it == patches_.end()) throw Error(ErrorCode::UnknownKeyframe, "patch " + std::to_string(id));
    return it->second;
}

std::span<const PatchId> PatchGraph::patches_of(FrameId id) const {
    auto it = frame_patches_.find(id);
    if (it == frame_patches_.end()) return {};
    return it->second;
}

std::vector<FrameId> PatchGraph::frame_ids() const {
    std::vector<FrameId> ids;
    ids.reserve(frames_.size());
    for (const auto& [id, f] : frames_) ids.push_back(id);
    return ids;
}

bool EdgeSet::insert(const GraphEdge& e) {
    if (!keys_.insert({e.patch, e.target}).second) return false;
    edges_.push_back(e);
    return true;
}

std::size_t EdgeSet::remove_incident(FrameId frame, std::span<const PatchId> patches) {
    std::set<PatchId> gone(patches.begin(), patches.end());
    return remove_if([&](const GraphEdge& e) { return e.target == frame || gone.contains(e.patch); });
}

}  // namespace mgslam
