#pragma once

#include "mgslam/image.hpp"
#include "mgslam/providers.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

namespace mgslam {

struct LoopConfig {
    double tau_sim = 0.85;
    double tau_flow_px = 40.0;  // expressed for a 640 px wide image
    int recent = 20;            // keyframes excluded before the query

    void validate() const;
    double flow_threshold(int image_width) const { return tau_flow_px * image_width / 640.0; }
};

struct LoopCandidate {
    std::int64_t query = 0;
    std::int64_t match = 0;
    double similarity = 0.0;
    double flow = 0.0;
};

struct QueryResult {
    std::int64_t id = 0;
    double score = 0.0;
};

/// Mean displacement of matched patches between a and b (a in the query
/// frame), evaluated only for candidates that pass the similarity test.
using FlowEstimator = std::function<double(std::int64_t query, std::int64_t match)>;

/// Append-only store of unit-norm embeddings keyed by keyframe id.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dimension = 0) : dim_(dimension) {}

    /// Normalizes and appends. Throws DimensionMismatch, ZeroVector, DuplicateId.
    /// With dimension 0 the first vector fixes it.
    void ingest(std::int64_t id, std::span<const double> raw);
    void ingest(std::int64_t id, std::span<const float> raw);

    bool contains(std::int64_t id) const { return index_.contains(id); }
    std::span<const double> vector(std::int64_t id) const;
    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dim_; }
    std::span<const std::int64_t> ids() const { return ids_; }
    double similarity(std::int64_t a, std::int64_t b) const;

    /// Candidates j < query - recent with cosine >= tau_sim and flow <= tau_flow,
    /// sorted by similarity descending (ties: smaller id). Throws UnknownKeyframe.
    std::vector<LoopCandidate> detect_loops(std::int64_t query, double tau_sim, double tau_flow, int recent,
                                            const FlowEstimator& flow) const;

    /// Top-k by cosine with the prompt, descending, ties to the smaller id.
    /// Throws EmptyStore, DimensionMismatch, ZeroVector.
    std::vector<QueryResult> text_query(std::span<const double> prompt, std::size_t top_k) const;

private:
    std::size_t dim_;
    std::vector<std::int64_t> ids_;
    std::vector<double> data_;
    std::map<std::int64_t, std::size_t> index_;
};

struct FlowOptions {
    int grid = 8;             // grid x grid probe patches
    int search_radius = 16;
    MatcherOptions matcher;
    double min_matched_fraction = 0.25;
};

/// Sparse NCC flow from a to b; +infinity when fewer than the required fraction
/// of probes match.
double flow_magnitude(const ScalarImage& a, const ScalarImage& b, const FlowOptions& options = {});

/// Fallback image descriptor: 16x16 area-averaged grayscale, zero-mean,
/// unit-norm. Constant images map to a zero vector.
std::vector<double> thumbnail_embedding(const Image& image);

/// EMB1 binary file: "EMB1", u32 count, u32 dimension, then per record a u32
/// index and `dimension` little-endian f32 values.
struct EmbeddingFileRecord {
    std::uint32_t index = 0;
    std::vector<float> values;
};
struct EmbeddingFile {
    std::uint32_t dimension = 0;
    std::vector<EmbeddingFileRecord> records;
};
EmbeddingFile read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file);

}  // namespace mgslam
