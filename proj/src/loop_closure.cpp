#include "mgslam/loop_closure.hpp"

#include "mgslam/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mgslam {

void LoopConfig::validate() const {
    if (!(tau_sim >= -1.0 && tau_sim <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau_sim must lie in [-1, 1]");
    if (!(tau_flow_px >= 0.0)) throw Error(ErrorCode::InvalidConfig, "tau_flow must be >= 0");
    if (recent < 0) throw Error(ErrorCode::InvalidConfig, "recent window must be >= 0");
}

void EmbeddingStore::ingest(std::int64_t id, std::span<const double> raw) {
    if (dim_ == 0) dim_ = raw.size();
    if (raw.size() != dim_ || dim_ == 0) throw Error(ErrorCode::DimensionMismatch, "embedding dimension mismatch");
    if (index_.contains(id)) throw Error(ErrorCode::DuplicateId, "embedding already stored for keyframe " + std::to_string(id));
    double n2 = 0.0;
    for (double v : raw) n2 += v * v;
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw Error(ErrorCode::ZeroVector, "embedding has zero or non-finite norm");
    const double inv = 1.0 / std::sqrt(n2);
    index_[id] = ids_.size();
    ids_.push_back(id);
    for (double v : raw) data_.push_back(v * inv);
}

void EmbeddingStore::ingest(std::int64_t id, std::span<const float> raw) {
    std::vector<double> v(raw.begin(), raw.end());
    ingest(id, std::span<const double>(v));
}

std::span<const double> EmbeddingStore::vector(std::int64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::UnknownKeyframe, "no embedding for keyframe " + std::to_string(id));
    return {data_.data() + it->second * dim_, dim_};
}

double EmbeddingStore::similarity(std::int64_t a, std::int64_t b) const {
    const auto va = vector(a), vb = vector(b);
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += va[i] * vb[i];
    return s;
}

std::vector<LoopCandidate> EmbeddingStore::detect_loops(std::int64_t query, double tau_sim, double tau_flow,
                                                        int recent, const FlowEstimator& flow) const {
    const auto q = vector(query);
    std::vector<LoopCandidate> out;
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        const std::int64_t j = ids_[r];
        if (!(j < query - recent)) continue;
        const double* v = data_.data() + r * dim_;
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += q[i] * v[i];
        if (!(s >= tau_sim)) continue;
        const double f = flow ? flow(query, j) : 0.0;
        if (!(f <= tau_flow)) continue;
        out.push_back({query, j, s, f});
    }
    std::stable_sort(out.begin(), out.end(), [](const LoopCandidate& a, const LoopCandidate& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.match < b.match;
    });
    return out;
}

std::vector<QueryResult> EmbeddingStore::text_query(std::span<const double> prompt, std::size_t top_k) const {
    if (ids_.empty()) throw Error(ErrorCode::EmptyStore, "embedding store is empty");
    if (prompt.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "prompt dimension mismatch");
    double n2 = 0.0;
    for (double v : prompt) n2 += v * v;
    if (!(n2 > 0.0)) throw Error(ErrorCode::ZeroVector, "prompt has zero norm");
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<QueryResult> out;
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += prompt[i] * inv * data_[r * dim_ + i];
        out.push_back({ids_[r], s});
    }
    std::stable_sort(out.begin(), out.end(), [](const QueryResult& a, const QueryResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (out.size() > top_k) out.resize(top_k);
    return out;
}

double flow_magnitude(const ScalarImage& a, const ScalarImage& b, const FlowOptions& options) {
    if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::DimensionMismatch, "images differ in size");
    MatcherOptions m = options.matcher;
    m.search_radius = options.search_radius;
    const int margin = m.template_radius + 1;
    const int total = options.grid * options.grid;
    int matched = 0;
    double sum = 0.0;
    for (int gy = 0; gy < options.grid; ++gy)
        for (int gx = 0; gx < options.grid; ++gx) {
            const double x = margin + (gx + 0.5) * (a.width - 2.0 * margin) / options.grid;
            const double y = margin + (gy + 0.5) * (a.height - 2.0 * margin) / options.grid;
            const Pixel p(std::round(x), std::round(y));
            const NccMatch r = ncc_search(a, p, b, p, m);
            if (!r.ok || r.score < m.min_ncc) continue;
            ++matched;
            sum += (r.position - p).norm();
        }
    if (matched == 0 || matched < options.min_matched_fraction * total) return std::numeric_limits<double>::infinity();
    return sum / matched;
}

std::vector<double> thumbnail_embedding(const Image& image) {
    constexpr int n = 16;
    const ScalarImage g = to_gray(image);
    std::vector<double> v(n * n, 0.0);
    for (int ty = 0; ty < n; ++ty)
        for (int tx = 0; tx < n; ++tx) {
            const int x0 = tx * g.width / n, x1 = std::max(x0 + 1, (tx + 1) * g.width / n);
            const int y0 = ty * g.height / n, y1 = std::max(y0 + 1, (ty + 1) * g.height / n);
            double s = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) s += g.at(x, y);
            v[std::size_t(ty * n + tx)] = s / double((x1 - x0) * (y1 - y0));
        }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double n2 = 0.0;
    for (double& x : v) {
        x -= mean;
        n2 += x * x;
    }
    if (n2 > 1e-20)
        for (double& x : v) x /= std::sqrt(n2);
    else
        std::fill(v.begin(), v.end(), 0.0);
    return v;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorCode::IoError, "truncated embedding file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

EmbeddingFile read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EMB1", 4) != 0)
        throw Error(ErrorCode::IoError, "bad embedding file magic in " + path.string());
    EmbeddingFile f;
    const std::uint32_t count = get_u32(in);
    f.dimension = get_u32(in);
    f.records.resize(count);
    for (auto& r : f.records) {
        r.index = get_u32(in);
        r.values.resize(f.dimension);
        for (auto& v : r.values) v = std::bit_cast<float>(get_u32(in));
    }
    return f;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write("EMB1", 4);
    put_u32(out, std::uint32_t(file.records.size()));
    put_u32(out, file.dimension);
    for (const auto& r : file.records) {
        if (r.values.size() != file.dimension)
            throw Error(ErrorCode::DimensionMismatch, "embedding record has the wrong dimension");
        put_u32(out, r.index);
        for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mgslam
