#pragma once

#include "mgslam/backend.hpp"
#include "mgslam/config.hpp"
#include "mgslam/dataset.hpp"
#include "mgslam/evaluation.hpp"
#include "mgslam/gaussian_map.hpp"
#include "mgslam/loop_closure.hpp"
#include "mgslam/synthetic.hpp"

#include <functional>
#include <memory>

namespace mgslam {

/// Ordered input frames plus whatever ground truth comes with them.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual int size() const = 0;
    virtual std::shared_ptr<const Image> image(int i) const = 0;
    virtual double timestamp(int i) const = 0;
    virtual const Intrinsics& intrinsics() const = 0;
    virtual std::vector<StampedPose> groundtruth() const = 0;
    /// Dense scene truth for the oracle provider; null for recorded datasets.
    virtual const SceneTruth* truth() const { return nullptr; }
};

class SyntheticSource : public FrameSource {
public:
    SyntheticSource(const SceneSpec& spec, std::uint64_t seed, int max_frames = 0);
    int size() const override { return count_; }
    std::shared_ptr<const Image> image(int i) const override { return scene_.image(i); }
    double timestamp(int i) const override { return scene_.timestamp(i); }
    const Intrinsics& intrinsics() const override { return scene_.intrinsics(); }
    std::vector<StampedPose> groundtruth() const override;
    const SceneTruth* truth() const override { return &scene_; }
    const SyntheticScene& scene() const { return scene_; }

private:
    SyntheticScene scene_;
    int count_ = 0;
};

class DatasetSource : public FrameSource {
public:
    explicit DatasetSource(const InputConfig& input);
    int size() const override { return count_; }
    std::shared_ptr<const Image> image(int i) const override { return dataset_.image(std::size_t(i)); }
    double timestamp(int i) const override { return dataset_.frames.at(std::size_t(i)).timestamp; }
    const Intrinsics& intrinsics() const override { return k_; }
    std::vector<StampedPose> groundtruth() const override { return dataset_.groundtruth; }

private:
    Dataset dataset_;
    Intrinsics k_;
    int count_ = 0;
};

std::unique_ptr<FrameSource> make_source(const PipelineConfig& config);

struct KeyframeInfo {
    int ordinal = 0;
    FrameId id = 0;
    int source_index = 0;
    double timestamp = 0.0;
    Pose pose;
};

struct LoopRecord {
    int query = 0;   // keyframe ordinals
    int match = 0;
    double similarity = 0.0;
    double flow = 0.0;
};

struct RunHooks {
    /// Called with the back-end right before each global optimization.
    std::function<void(const BackEnd&)> before_global_optimize;
    /// Called after each input frame has been processed.
    std::function<void(int frame_index, const FrontEnd&)> after_frame;
};

struct RunResult {
    std::vector<StampedPose> trajectory;
    GaussianMap map;
    std::vector<KeyframeInfo> keyframes;
    std::vector<LoopRecord> loops;
    EmbeddingFile embeddings;  // record index = input frame index
    MetricsReport metrics;
    std::optional<double> psnr_before_refinement;
    int global_optimizations = 0;
};

/// Full tracking, mapping and loop-closure pass over the source. Module errors
/// are rethrown with the input frame index prefixed.
RunResult run_pipeline(const PipelineConfig& config, const FrameSource& source, const RunHooks& hooks = {});

/// trajectory.txt, map.bin, metrics.json, keyframes.txt, loops.txt,
/// embeddings.emb1 and config.json.
void write_run(const RunResult& result, const PipelineConfig& config, const std::filesystem::path& dir);

struct TrialsSummary {
    std::vector<std::optional<double>> ate;
    std::optional<double> median_ate;
};

/// Runs config.trials passes with seeds seed, seed+1, ...; a single trial
/// writes into config.output, several into config.output/trial_<n> plus a
/// summary.json holding the median ATE.
TrialsSummary run_trials(const PipelineConfig& config);

/// Ranks the keyframes stored by a run against the first record of a prompt file.
struct RankedKeyframe {
    int source_index = 0;
    double timestamp = 0.0;
    double score = 0.0;
};
std::vector<RankedKeyframe> query_run(const std::filesystem::path& run_dir, const std::filesystem::path& prompt_file,
                                      std::size_t top_k);

}  // namespace mgslam
