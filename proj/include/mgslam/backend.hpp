#pragma once

#include "mgslam/dba.hpp"
#include "mgslam/frontend.hpp"
#include "mgslam/providers.hpp"

#include <limits>
#include <memory>

namespace mgslam {

struct BackEndConfig {
    std::size_t edge_budget = 4096;  // max edges per provider batch
    int global_iterations = 4;
    int recent = 20;                 // loop frames must be older than this many keyframes
    DbaOptions dba;

    void validate() const;
};

/// Edges sharing one patch-source frame, as indices into the back-end edge list.
struct Subgraph {
    FrameId source = 0;
    std::vector<std::size_t> edges;
};

/// Persistent patch-frame graph: mirrors the front-end's structural events but
/// never ages edges out, and is the only holder of loop edges.
class BackEnd {
public:
    BackEnd(std::shared_ptr<PatchGraph> graph, BackEndConfig config);

    void mirror(const GraphEvent& event);

    /// Bidirectional patch edges between the query keyframe and each loop frame.
    /// Returns the number of edges added. Throws RecencyViolation, UnknownKeyframe.
    std::size_t add_loop_edges(FrameId query, std::span<const FrameId> loop_frames);

    /// Groups by patch source frame (ascending), each split to at most
    /// `edge_budget` edges (0 means unlimited).
    std::vector<Subgraph> partition(std::size_t edge_budget) const;
    std::vector<Subgraph> partition() const { return partition(config_.edge_budget); }

    /// Batched provider evaluation, spliced in edge order, then one DBA over all
    /// keyframe poses (first anchored) and all keyframe patches.
    DbaReport global_optimize(const CorrespondenceProvider& provider);
    DbaReport global_optimize(const CorrespondenceProvider& provider, int iterations, std::size_t edge_budget);

    const EdgeSet& edges() const { return edges_; }
    const std::vector<FrameId>& keyframes() const { return keyframes_; }
    /// Position of a keyframe in acceptance order. Throws UnknownKeyframe.
    int ordinal(FrameId keyframe) const;
    std::size_t loop_edge_count() const;
    const BackEndConfig& config() const { return config_; }
    BackEndConfig& config() { return config_; }

private:
    std::shared_ptr<PatchGraph> graph_;
    BackEndConfig config_;
    EdgeSet edges_;
    std::vector<FrameId> keyframes_;
};

}  // namespace mgslam
