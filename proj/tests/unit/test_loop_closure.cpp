#include <doctest.h>

#include "fixtures.hpp"
#include "mgslam/errors.hpp"
#include "mgslam/loop_closure.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace mgslam;

namespace {

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(d);
    for (auto& x : v) x = n(rng);
    return v;
}

double naive_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

template <class F>
void expect_code(ErrorCode code, F&& f) {
    try {
        f();
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == code);
    }
}

const FlowEstimator zero_flow = [](std::int64_t, std::int64_t) { return 0.0; };

Image shifted(const Image& src, int dx) {
    Image out(src.width, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) out.set_rgb(x, y, src.rgb(std::clamp(x - dx, 0, src.width - 1), y));
    return out;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("mgslam_test_" + name);
}

}  // namespace

TEST_CASE("ingest normalizes vectors") {
    EmbeddingStore s(4);
    const std::vector<double> v{3, 4, 0, 0};
    s.ingest(1, v);
    const auto stored = s.vector(1);
    CHECK(stored[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(stored[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(stored[2] == 0.0);
    CHECK(stored[3] == 0.0);
}

TEST_CASE("ingest errors") {
    EmbeddingStore s(3);
    const std::vector<double> v{1, 0, 0}, zero{0, 0, 0}, wrong{1, 0};
    s.ingest(5, v);
    expect_code(ErrorCode::DuplicateId, [&] { s.ingest(5, v); });
    expect_code(ErrorCode::ZeroVector, [&] { s.ingest(6, zero); });
    expect_code(ErrorCode::DimensionMismatch, [&] { s.ingest(7, wrong); });
    expect_code(ErrorCode::UnknownKeyframe, [&] { s.vector(8); });
    CHECK(s.size() == 1);
}

TEST_CASE("1000 inserts are retrievable, unit-norm and in insertion order") {
    std::mt19937_64 rng(1);
    EmbeddingStore s;
    std::vector<std::int64_t> order;
    for (int i = 0; i < 1000; ++i) {
        const std::int64_t id = (i * 7919) % 1000;
        const auto v = gaussian_vector(rng, 32);
        s.ingest(id, v);
        order.push_back(id);
    }
    CHECK(s.dimension() == 32);
    REQUIRE(s.size() == 1000);
    CHECK(std::equal(order.begin(), order.end(), s.ids().begin()));
    for (std::int64_t id : order) {
        double n2 = 0;
        for (double x : s.vector(id)) n2 += x * x;
        CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-6);
    }
}

TEST_CASE("similarity is symmetric and matches cosine") {
    std::mt19937_64 rng(2);
    EmbeddingStore s;
    std::vector<std::vector<double>> raw;
    for (int i = 0; i < 20; ++i) {
        raw.push_back(gaussian_vector(rng, 16));
        s.ingest(i, raw.back());
    }
    for (int a = 0; a < 20; ++a)
        for (int b = 0; b < 20; ++b) {
            CHECK(std::abs(s.similarity(a, b) - s.similarity(b, a)) <= 1e-7);
            CHECK(std::abs(s.similarity(a, b) - naive_cos(raw[a], raw[b])) <= 1e-12);
        }
}

TEST_CASE("detect_loops: identical embedding accepted, orthogonal rejected") {
    EmbeddingStore s(3);
    const std::vector<double> x{1, 0, 0}, y{0, 1, 0};
    s.ingest(0, x);
    s.ingest(1, y);
    s.ingest(10, x);
    const auto c = s.detect_loops(10, 0.85, 1.0, 2, zero_flow);
    REQUIRE(c.size() == 1);
    CHECK(c[0].match == 0);
    CHECK(c[0].query == 10);
    CHECK(c[0].similarity == doctest::Approx(1.0));

    EmbeddingStore t(3);
    t.ingest(0, y);
    t.ingest(10, x);
    for (double tau : {0.01, 0.5, 0.99}) CHECK(t.detect_loops(10, tau, 1e9, 0, zero_flow).empty());
    expect_code(ErrorCode::UnknownKeyframe, [&] { t.detect_loops(11, 0.5, 1.0, 0, zero_flow); });
}

TEST_CASE("detect_loops: flow veto and recency window") {
    EmbeddingStore s(2);
    const std::vector<double> v{1, 1};
    for (int i = 0; i <= 10; ++i) s.ingest(i, v);
    const auto inf_flow = [](std::int64_t, std::int64_t) { return std::numeric_limits<double>::infinity(); };
    CHECK(s.detect_loops(10, 0.5, 40.0, 3, inf_flow).empty());
    const auto c = s.detect_loops(10, 0.5, 40.0, 3, zero_flow);
    REQUIRE(c.size() == 7);  // ids 0..6 are strictly older than 10 - 3
    for (const auto& x : c) CHECK(x.match < 10 - 3);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i - 1].match < c[i].match);  // equal scores, smaller id first
}

TEST_CASE("detect_loops equals the brute-force filter") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EmbeddingStore s;
    const auto base = gaussian_vector(rng, 8);
    std::vector<std::vector<double>> raw;
    for (int i = 0; i < 200; ++i) {
        auto v = gaussian_vector(rng, 8);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = 0.3 * v[j] + base[j];
        raw.push_back(v);
        s.ingest(i, v);
    }
    const auto flow = [](std::int64_t q, std::int64_t m) { return double((q * 31 + m * 17) % 60); };
    for (int q : {50, 120, 199}) {
        const double tau = 0.9, tau_flow = 40.0;
        const int recent = 20;
        std::vector<std::pair<double, std::int64_t>> expected;
        for (int j = 0; j < q - recent; ++j) {
            const double c = naive_cos(raw[q], raw[j]);
            if (c >= tau && flow(q, j) <= tau_flow) expected.push_back({-c, j});
        }
        std::sort(expected.begin(), expected.end());
        const auto got = s.detect_loops(q, tau, tau_flow, recent, flow);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].match == expected[i].second);
            CHECK(std::abs(got[i].similarity + expected[i].first) <= 1e-12);
        }
    }
}

TEST_CASE("revisit suite: every revisit found, no false positives") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.01);
    const std::size_t dim = 512;
    const double tau = 0.85;
    const int recent = 20, places = 60, revisits = 15;
    EmbeddingStore s(dim);
    std::vector<std::vector<double>> place;
    for (int i = 0; i < places; ++i) {
        auto v = gaussian_vector(rng, dim);
        double n = 0;
        for (double x : v) n += x * x;
        for (double& x : v) x /= std::sqrt(n);
        place.push_back(v);
        s.ingest(i, v);
    }
    for (int i = 0; i < places; ++i)
        for (int j = 0; j < i; ++j) REQUIRE(naive_cos(place[i], place[j]) < tau - 0.05);
    std::vector<std::pair<int, int>> truth;
    for (int r = 0; r < revisits; ++r) {
        const int id = places + r, of = r * 2;
        auto v = place[std::size_t(of)];
        for (double& x : v) x += noise(rng);
        s.ingest(id, v);
        truth.push_back({id, of});
    }
    int tp = 0, fp = 0;
    for (const auto& [q, of] : truth) {
        for (const auto& c : s.detect_loops(q, tau, 40.0, recent, zero_flow)) (c.match == of ? tp : fp)++;
    }
    CHECK(tp == revisits);
    CHECK(fp == 0);
}

TEST_CASE("text_query ranks by cosine with ties to the smaller id") {
    std::mt19937_64 rng(5);
    EmbeddingStore s;
    std::vector<std::vector<double>> raw;
    for (int i = 0; i < 50; ++i) {
        raw.push_back(gaussian_vector(rng, 24));
        s.ingest(100 + i, raw.back());
    }
    const auto top = s.text_query(raw[17], 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0].id == 117);
    CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-12));

    const auto all = s.text_query(raw[3], 1000);
    REQUIRE(all.size() == 50);
    for (const auto& r : all) CHECK(std::abs(r.score - naive_cos(raw[std::size_t(r.id - 100)], raw[3])) <= 1e-7);
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);

    auto scaled = raw[3];
    for (double& x : scaled) x *= 42.0;
    const auto again = s.text_query(scaled, 1000);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(again[i].id == all[i].id);

    EmbeddingStore ties(2);
    const std::vector<double> v{1, 0};
    ties.ingest(9, v);
    ties.ingest(4, v);
    CHECK(ties.text_query(v, 2)[0].id == 4);
}

TEST_CASE("text_query errors") {
    EmbeddingStore s(2);
    const std::vector<double> v{1, 0}, zero{0, 0}, wrong{1, 0, 0};
    expect_code(ErrorCode::EmptyStore, [&] { s.text_query(v, 1); });
    s.ingest(0, v);
    expect_code(ErrorCode::DimensionMismatch, [&] { s.text_query(wrong, 1); });
    expect_code(ErrorCode::ZeroVector, [&] { s.text_query(zero, 1); });
}

TEST_CASE("flow_magnitude: identical, shifted and unmatchable pairs") {
    const auto& scene = fixture::default_scene();
    const ScalarImage a = to_gray(*scene.image(3));
    CHECK(flow_magnitude(a, a) < 1e-6);
    const ScalarImage b = to_gray(shifted(*scene.image(3), 5));
    CHECK(std::abs(flow_magnitude(a, b) - 5.0) <= 0.5);
    const ScalarImage flat(128, 128, 0.5);
    CHECK(std::isinf(flow_magnitude(flat, flat)));
}

TEST_CASE("thumbnail_embedding is unit-norm, zero for constant images") {
    const auto& scene = fixture::default_scene();
    const auto e = thumbnail_embedding(*scene.image(0));
    CHECK(e.size() == 256);
    double n2 = 0;
    for (double x : e) n2 += x * x;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));
    for (double x : thumbnail_embedding(Image(64, 48, 0.3))) CHECK(x == 0.0);
}

TEST_CASE("EMB1 files round-trip and have the documented layout") {
    EmbeddingFile f;
    f.dimension = 3;
    f.records.push_back({7, {1.0f, -2.5f, 0.25f}});
    f.records.push_back({2, {0.0f, 3.0f, 1e-3f}});
    const auto path = temp_path("roundtrip.emb1");
    write_embeddings(path, f);
    CHECK(std::filesystem::file_size(path) == 12u + 2u * (4u + 12u));

    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EMB1");
    auto u32 = [&](std::size_t o) {
        return std::uint32_t(bytes[o]) | std::uint32_t(bytes[o + 1]) << 8 | std::uint32_t(bytes[o + 2]) << 16 |
               std::uint32_t(bytes[o + 3]) << 24;
    };
    CHECK(u32(4) == 2);
    CHECK(u32(8) == 3);
    CHECK(u32(12) == 7);
    CHECK(u32(16) == 0x3F800000u);  // 1.0f

    const EmbeddingFile g = read_embeddings(path);
    CHECK(g.dimension == 3);
    REQUIRE(g.records.size() == 2);
    CHECK(g.records[0].index == 7);
    CHECK(g.records[0].values == f.records[0].values);
    CHECK(g.records[1].index == 2);
    CHECK(g.records[1].values == f.records[1].values);
    std::filesystem::remove(path);
}

TEST_CASE("EMB1 reader rejects bad input") {
    const auto bad = temp_path("bad.emb1");
    {
        std::ofstream out(bad, std::ios::binary);
        out << "NOPE0000";
    }
    expect_code(ErrorCode::IoError, [&] { read_embeddings(bad); });
    {
        std::ofstream out(bad, std::ios::binary);
        const char header[] = {'E', 'M', 'B', '1', 1, 0, 0, 0, 4, 0, 0, 0, 0, 0};
        out.write(header, sizeof header);
    }
    expect_code(ErrorCode::IoError, [&] { read_embeddings(bad); });
    expect_code(ErrorCode::IoError, [&] { read_embeddings(temp_path("missing.emb1")); });
    std::filesystem::remove(bad);

    EmbeddingFile f;
    f.dimension = 2;
    f.records.push_back({0, {1.0f}});
    expect_code(ErrorCode::DimensionMismatch, [&] { write_embeddings(temp_path("x.emb1"), f); });
}
