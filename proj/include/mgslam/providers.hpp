#pragma once

#include "mgslam/graph.hpp"

#include <functional>
#include <optional>

namespace mgslam {

/// Supplies (residual, weight) per edge in place of a learned update operator.
/// Implementations must be per-edge deterministic: an edge's output depends only
/// on the graph state and that edge, never on which other edges share the call.
class CorrespondenceProvider {
public:
    virtual ~CorrespondenceProvider() = default;
    virtual void evaluate(const PatchGraph& graph, std::span<GraphEdge> edges) const = 0;
};

/// Sets edge.predicted to the current reprojection p_kj. Returns false when the
/// patch lands behind the target camera (predicted is then the patch center).
bool update_prediction(const PatchGraph& graph, GraphEdge& edge);

/// Ground truth the oracle needs, indexed by the frame's input-stream position.
class SceneTruth {
public:
    virtual ~SceneTruth() = default;
    virtual Pose true_pose(int source_index) const = 0;
    /// Camera-frame z of the first surface hit through the pixel, if any.
    virtual std::optional<double> true_depth(int source_index, const Pixel& px) const = 0;
    /// Whether a world point is unoccluded and inside the image of the frame.
    virtual bool visible(int source_index, const Vec3& world) const = 0;
    virtual const Intrinsics& intrinsics() const = 0;
};

/// Exact correspondences from ground truth: residual = true pixel - predicted,
/// weight (1,1) when visible, (0,0) otherwise.
class OracleProvider : public CorrespondenceProvider {
public:
    /// Optional odometric corruption: maps (source_index, true pose) to the pose
    /// used for non-loop edges. Loop edges always use the true poses.
    using DriftModel = std::function<Pose(int source_index, const Pose& truth)>;

    explicit OracleProvider(const SceneTruth& truth, DriftModel drift = {})
        : truth_(truth), drift_(std::move(drift)) {}

    void evaluate(const PatchGraph& graph, std::span<GraphEdge> edges) const override;

    /// True target pixel of an edge, or nullopt when not visible.
    std::optional<Pixel> true_pixel(const PatchGraph& graph, const GraphEdge& edge) const;

private:
    const SceneTruth& truth_;
    DriftModel drift_;
};

struct MatcherOptions {
    int template_radius = 3;  // 7x7 template
    int search_radius = 8;
    double min_ncc = 0.6;     // weight reaches 0 at this score and 1 at a perfect match
    double min_variance = 1e-6;
};

struct NccMatch {
    Vec2 position = Vec2::Zero();
    double score = -1.0;
    bool ok = false;
};

/// Searches `target` within +-search_radius of the rounded `guess` for the template centered
/// at `source_center` in `source`; the integer peak is refined by
/// translation-only Gauss-Newton on normalized windows.
NccMatch ncc_search(const ScalarImage& source, const Pixel& source_center, const ScalarImage& target,
                    const Pixel& guess, const MatcherOptions& options);

/// Map an NCC peak score to a confidence in [0,1].
double ncc_weight(double score, const MatcherOptions& options);

/// Normalized-cross-correlation patch search around the predicted location.
class MatcherProvider : public CorrespondenceProvider {
public:
    explicit MatcherProvider(MatcherOptions options = {}) : options_(options) {}
    void evaluate(const PatchGraph& graph, std::span<GraphEdge> edges) const override;
    const MatcherOptions& options() const { return options_; }

private:
    MatcherOptions options_;
};

}  // namespace mgslam
