#pragma once

// Synthetic graphs built from the library's own scene generator. Unlike the
// oracles, these are setup helpers, not reference implementations.

#include "mgslam/backend.hpp"
#include "mgslam/frontend.hpp"
#include "mgslam/providers.hpp"
#include "mgslam/synthetic.hpp"

#include <memory>
#include <random>

namespace fixture {

/// Frames at ground-truth poses, patches at ground-truth inverse depth, and
/// edges from every patch to every other frame within `reach` frames.
struct SceneGraph {
    std::shared_ptr<mgslam::PatchGraph> graph;
    std::vector<mgslam::FrameId> frames;
    std::vector<mgslam::GraphEdge> edges;
};
SceneGraph scene_graph(const mgslam::SyntheticScene& scene, int frames, int patches_per_frame, int reach,
                       std::uint64_t seed);

/// Front-end and back-end driven by the oracle provider over the first
/// `frames` scene frames, exactly as the pipeline's tracking loop does.
struct Tracked {
    std::shared_ptr<mgslam::PatchGraph> graph;
    std::unique_ptr<mgslam::FrontEnd> frontend;
    std::unique_ptr<mgslam::BackEnd> backend;
};
Tracked track(const mgslam::SyntheticScene& scene, int frames, const mgslam::CorrespondenceProvider& provider,
              mgslam::FrontEndConfig fe = {}, mgslam::BackEndConfig be = {});

const mgslam::SyntheticScene& default_scene();

}  // namespace fixture
