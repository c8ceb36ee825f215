#include "mgslam/pipeline.hpp"

#include "mgslam/errors.hpp"
#include "mgslam/losses.hpp"
#include "mgslam/mapper.hpp"
#include "mgslam/sampler.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mgslam {

SyntheticSource::SyntheticSource(const SceneSpec& spec, std::uint64_t seed, int max_frames)
    : scene_(SyntheticScene::generate(spec, seed)) {
    count_ = scene_.frame_count();
    if (max_frames > 0) count_ = std::min(count_, max_frames);
}

std::vector<StampedPose> SyntheticSource::groundtruth() const {
    auto gt = scene_.trajectory();
    gt.resize(std::size_t(count_));
    return gt;
}

DatasetSource::DatasetSource(const InputConfig& input)
    : dataset_(load_dataset(input.path, parse_dataset_format(input.format), input.width, input.height, input.fps)) {
    k_.fx = input.fx;
    k_.fy = input.fy;
    k_.cx = input.cx;
    k_.cy = input.cy;
    k_.width = input.width;
    k_.height = input.height;
    k_.validate();
    count_ = int(dataset_.frames.size());
    if (input.max_frames > 0) count_ = std::min(count_, input.max_frames);
}

std::unique_ptr<FrameSource> make_source(const PipelineConfig& config) {
    if (config.input.format == "synthetic")
        return std::make_unique<SyntheticSource>(config.scene, config.scene_seed, config.input.max_frames);
    return std::make_unique<DatasetSource>(config.input);
}

namespace {

template <class T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(T item) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_; });
        items_.push_back(std::move(item));
        not_empty_.notify_one();
    }

    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<T> items_;
    bool closed_ = false;
    std::mutex mutex_;
    std::condition_variable not_full_, not_empty_;
};

struct MapJob {
    std::vector<GaussianPrimitive> primitives;
    FrameId frame = 0;
    std::vector<MapView> window;
};

// Strips the "Code: " prefix that Error adds to what().
std::string bare_message(const Error& e) {
    const std::string w = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
}

class MappingStage {
public:
    MappingStage(const Intrinsics& k, const MapperConfig& config, bool threaded)
        : mapper_(k, config), queue_(4) {
        if (threaded) worker_ = std::thread([this] { loop(); });
    }

    ~MappingStage() { finish(); }

    void submit(MapJob job) {
        if (!worker_.joinable()) {
            apply(job);
            return;
        }
        rethrow();
        queue_.push(std::move(job));
    }

    void finish() {
        if (worker_.joinable()) {
            queue_.close();
            worker_.join();
        }
    }

    void rethrow() {
        std::lock_guard lock(mutex_);
        if (error_) std::rethrow_exception(error_);
    }

    std::optional<Image> render(const Pose& pose) {
        std::lock_guard lock(mutex_);
        if (mapper_.map().empty()) return std::nullopt;
        return mapper_.render_view(pose).color;
    }

    GaussianMapper& mapper() { return mapper_; }

private:
    void apply(const MapJob& job) {
        std::lock_guard lock(mutex_);
        mapper_.add_primitives(job.primitives, job.frame);
        mapper_.optimize_window(job.window, mapper_.config().iters_per_keyframe);
    }

    void loop() {
        while (auto job = queue_.pop()) {
            try {
                apply(*job);
            } catch (...) {
                std::lock_guard lock(mutex_);
                if (!error_) error_ = std::current_exception();
            }
        }
    }

    GaussianMapper mapper_;
    BoundedQueue<MapJob> queue_;
    std::thread worker_;
    std::mutex mutex_;
    std::exception_ptr error_;
};

std::vector<Patch> patches_of(const PatchGraph& graph, FrameId id) {
    std::vector<Patch> out;
    for (PatchId p : graph.patches_of(id)) out.push_back(graph.patch(p));
    return out;
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& config_in, const FrameSource& source, const RunHooks& hooks) {
    PipelineConfig config = config_in;
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const Intrinsics k = source.intrinsics();

    auto graph = std::make_shared<PatchGraph>(k);
    FrontEndConfig fe_cfg = config.frontend;
    fe_cfg.seed = config.seed;
    FrontEnd frontend(graph, fe_cfg);
    BackEndConfig be_cfg = config.backend;
    be_cfg.recent = config.loop.recent;
    be_cfg.dba = fe_cfg.dba;
    BackEnd backend(graph, be_cfg);
    frontend.set_listener([&](const GraphEvent& ev) { backend.mirror(ev); });

    SamplerConfig sampler_cfg = config.sampler;
    sampler_cfg.patches_per_frame = fe_cfg.patches_per_frame;
    sampler_cfg.border = std::max(sampler_cfg.border, fe_cfg.patch_extent);

    MapperConfig map_cfg = config.mapper;
    map_cfg.seed = config.seed;
    MappingStage mapping(k, map_cfg, !config.serial && config.mapping);

    std::unique_ptr<CorrespondenceProvider> provider;
    if (config.provider == "oracle") {
        const SceneTruth* truth = source.truth();
        if (!truth) throw Error(ErrorCode::InvalidConfig, "the oracle provider needs synthetic input");
        OracleProvider::DriftModel drift;
        if (config.drift_yaw_per_frame != 0.0 || config.drift_translation_per_frame != 0.0) {
            const double a = config.drift_yaw_per_frame, b = config.drift_translation_per_frame;
            drift = [a, b](int i, const Pose& truth_pose) {
                const Pose d = Pose::from_rt(so3_exp(Vec3(0.0, a * i, 0.0)), Vec3(b * i, 0.0, 0.0));
                return d * truth_pose;
            };
        }
        provider = std::make_unique<OracleProvider>(*truth, drift);
    } else {
        provider = std::make_unique<MatcherProvider>(config.matcher);
    }

    std::map<std::uint32_t, std::vector<float>> file_embeddings;
    if (!config.embeddings.empty()) {
        for (auto& rec : read_embeddings(config.embeddings).records) file_embeddings[rec.index] = std::move(rec.values);
    }

    RunResult result;
    EmbeddingStore store;
    std::vector<std::shared_ptr<const ScalarImage>> keyframe_gray;  // by ordinal
    std::vector<FrameId> pending_init;
    std::vector<FrameId> mapped;

    auto view_of = [&](FrameId id) {
        const Frame& f = graph->frame(id);
        return MapView{id, f.pose, f.image};
    };
    auto initialize_pending = [&](bool force) {
        bool any = false;
        for (auto it = pending_init.begin(); it != pending_init.end();) {
            const Frame& f = graph->frame(*it);
            if (!force && f.solver_iterations < config.maturity_iterations) {
                ++it;
                continue;
            }
            MapJob job;
            job.frame = *it;
            job.primitives = init_from_patches(patches_of(*graph, *it), f, k);
            mapped.push_back(*it);
            const std::size_t n = std::min<std::size_t>(mapped.size(), std::size_t(map_cfg.window_length));
            for (std::size_t i = mapped.size() - n; i < mapped.size(); ++i) job.window.push_back(view_of(mapped[i]));
            mapping.submit(std::move(job));
            it = pending_init.erase(it);
            any = true;
        }
        return any;
    };

    const double flow_threshold = config.loop.flow_threshold(k.width);
    const int frames = source.size();
    for (int i = 0; i < frames; ++i) {
        try {
            auto image = source.image(i);
            std::vector<Pixel> centers;
            if (config.mapping && config.render_guided) {
                mapping.rethrow();
                if (auto rendered = mapping.render(frontend.predict_pose()))
                    centers = render_guided_sample(*image, *rendered, sampler_cfg);
            }
            const FrameId id = frontend.add_frame(image, source.timestamp(i), i, std::nullopt, centers);
            for (int u = 0; u < config.updates_per_frame; ++u) frontend.optimize(*provider, config.iterations_per_update);
            const bool keyframe = frontend.decide_keyframe(id);
            frontend.retire_frames();

            if (keyframe) {
                if (config.mapping) {
                    pending_init.push_back(id);
                    if (i + 1 >= config.mapping_warmup_frames) initialize_pending(false);
                }
                const int ordinal = backend.ordinal(id);
                std::vector<double> embedding;
                if (!file_embeddings.empty()) {
                    auto it = file_embeddings.find(std::uint32_t(i));
                    if (it == file_embeddings.end())
                        throw Error(ErrorCode::UnknownKeyframe, "no embedding record for this frame");
                    embedding.assign(it->second.begin(), it->second.end());
                } else {
                    embedding = thumbnail_embedding(*image);
                }
                store.ingest(ordinal, embedding);
                keyframe_gray.push_back(graph->frame(id).gray);
                EmbeddingFileRecord rec;
                rec.index = std::uint32_t(i);
                const auto unit = store.vector(ordinal);
                rec.values.assign(unit.begin(), unit.end());
                result.embeddings.dimension = std::uint32_t(store.dimension());
                result.embeddings.records.push_back(std::move(rec));

                FlowOptions flow_opts;
                flow_opts.matcher = config.matcher;
                const auto candidates = store.detect_loops(
                    ordinal, config.loop.tau_sim, flow_threshold, config.loop.recent,
                    [&](std::int64_t q, std::int64_t j) {
                        return flow_magnitude(*keyframe_gray[std::size_t(q)], *keyframe_gray[std::size_t(j)], flow_opts);
                    });
                if (!candidates.empty()) {
                    std::vector<FrameId> targets;
                    for (const auto& c : candidates) {
                        targets.push_back(backend.keyframes()[std::size_t(c.match)]);
                        result.loops.push_back({int(c.query), int(c.match), c.similarity, c.flow});
                    }
                    const std::size_t added = backend.add_loop_edges(id, targets);
                    if (added > 0 && config.global_opt) {
                        if (hooks.before_global_optimize) hooks.before_global_optimize(backend);
                        backend.global_optimize(*provider);
                        ++result.global_optimizations;
                    }
                }
            }
            if (hooks.after_frame) hooks.after_frame(i, frontend);
        } catch (const Error& e) {
            throw Error(e.code(), "frame " + std::to_string(i) + ": " + bare_message(e));
        }
    }

    if (config.mapping) {
        initialize_pending(true);
        mapping.finish();
        mapping.rethrow();
    }

    for (FrameId id : backend.keyframes()) {
        const Frame& f = graph->frame(id);
        result.keyframes.push_back({backend.ordinal(id), id, f.source_index, f.timestamp, f.pose});
    }
    result.trajectory = frontend.trajectory();

    MetricsReport& m = result.metrics;
    if (config.mapping && !mapped.empty()) {
        GaussianMapper& mapper = mapping.mapper();
        std::vector<MapView> views;
        for (FrameId id : mapped) views.push_back(view_of(id));
        auto mean_psnr = [&] {
            double sum = 0.0;
            for (const auto& v : views) sum += psnr(mapper.render_view(v.pose).color, *v.image);
            return sum / double(views.size());
        };
        result.psnr_before_refinement = mean_psnr();
        m.psnr_before_refinement = result.psnr_before_refinement;
        mapper.final_refinement(views, map_cfg.refinement_iterations);
        for (const auto& v : views) {
            const Image rendered = mapper.render_view(v.pose).color;
            m.psnr.push_back(psnr(rendered, *v.image));
            m.ssim.push_back(ssim(rendered, *v.image));
        }
        result.map = mapper.map();
    }

    const auto gt = source.groundtruth();
    if (!gt.empty()) m.ate_rmse = ate_rmse(result.trajectory, gt, AlignMode::similarity);
    m.frames = frames;
    m.keyframes = int(result.keyframes.size());
    m.primitives = result.map.size();
    m.loops = int(result.loops.size());
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void write_run(const RunResult& result, const PipelineConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_trajectory(dir / "trajectory.txt", result.trajectory);
    export_map(result.map, dir / "map.bin");
    write_embeddings(dir / "embeddings.emb1", result.embeddings);

    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw Error(ErrorCode::IoError, std::string("cannot write ") + (dir / name).string());
        return out;
    };
    {
        auto out = open("metrics.json");
        out << result.metrics.to_json();
    }
    {
        auto out = open("config.json");
        out << config_to_json(config);
    }
    char line[256];
    {
        auto out = open("keyframes.txt");
        out << "# ordinal frame_id source_index timestamp\n";
        for (const auto& kf : result.keyframes) {
            std::snprintf(line, sizeof line, "%d %lld %d %.9f\n", kf.ordinal, static_cast<long long>(kf.id),
                          kf.source_index, kf.timestamp);
            out << line;
        }
    }
    {
        auto out = open("loops.txt");
        out << "# query_ordinal match_ordinal similarity flow_px\n";
        for (const auto& l : result.loops) {
            std::snprintf(line, sizeof line, "%d %d %.9f %.6f\n", l.query, l.match, l.similarity, l.flow);
            out << line;
        }
    }
}

TrialsSummary run_trials(const PipelineConfig& config) {
    config.validate();
    const auto source = make_source(config);
    TrialsSummary summary;
    std::vector<double> finite;
    for (int t = 0; t < config.trials; ++t) {
        PipelineConfig trial = config;
        trial.seed = config.seed + std::uint64_t(t);
        const RunResult r = run_pipeline(trial, *source);
        const std::filesystem::path dir =
            config.trials == 1 ? std::filesystem::path(config.output)
                               : std::filesystem::path(config.output) / ("trial_" + std::to_string(t));
        write_run(r, trial, dir);
        summary.ate.push_back(r.metrics.ate_rmse);
        if (r.metrics.ate_rmse) finite.push_back(*r.metrics.ate_rmse);
    }
    if (!finite.empty()) summary.median_ate = median(finite);
    if (config.trials > 1) {
        nlohmann::json j;
        j["trials"] = config.trials;
        j["ate_rmse"] = nlohmann::json::array();
        for (const auto& a : summary.ate) j["ate_rmse"].push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
        j["median_ate_rmse"] = summary.median_ate ? nlohmann::json(*summary.median_ate) : nlohmann::json(nullptr);
        std::ofstream out(std::filesystem::path(config.output) / "summary.json");
        out << j.dump(2) << "\n";
    }
    return summary;
}

std::vector<RankedKeyframe> query_run(const std::filesystem::path& run_dir, const std::filesystem::path& prompt_file,
                                      std::size_t top_k) {
    const EmbeddingFile stored = read_embeddings(run_dir / "embeddings.emb1");
    const EmbeddingFile prompt = read_embeddings(prompt_file);
    if (prompt.records.empty()) throw Error(ErrorCode::ZeroVector, "prompt file holds no records");

    std::map<int, double> stamps;
    std::ifstream kf(run_dir / "keyframes.txt");
    std::string line;
    while (std::getline(kf, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        int ordinal = 0, src = 0;
        long long id = 0;
        double t = 0.0;
        if (ss >> ordinal >> id >> src >> t) stamps[src] = t;
    }

    EmbeddingStore store(stored.dimension);
    for (const auto& rec : stored.records) store.ingest(rec.index, std::span<const float>(rec.values));
    const std::vector<double> p(prompt.records.front().values.begin(), prompt.records.front().values.end());
    std::vector<RankedKeyframe> out;
    for (const auto& r : store.text_query(p, top_k)) {
        RankedKeyframe rk;
        rk.source_index = int(r.id);
        rk.score = r.score;
        auto it = stamps.find(rk.source_index);
        rk.timestamp = it == stamps.end() ? 0.0 : it->second;
        out.push_back(rk);
    }
    return out;
}

}  // namespace mgslam
