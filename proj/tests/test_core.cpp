#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "polygen/core.hpp"
#include "polygen/errors.hpp"
#include "polygen/rng.hpp"

using namespace polygen;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "polygen_core_test";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

EmbeddingMatrix random_normalized(Rng& rng, std::size_t rows, std::size_t dim) {
    EmbeddingMatrix m(rows, dim);
    for (auto& v : m.data) v = rng.next_gaussian();
    return normalize_rows(m);
}

}  // namespace

TEST_CASE("normalize_rows produces unit rows and flags zero rows") {
    Rng rng(3);
    EmbeddingMatrix m(6, 9);
    for (auto& v : m.data) v = 2.5 * rng.next_gaussian();
    auto n = normalize_rows(m);
    CHECK(n.normalized);
    for (std::size_t i = 0; i < n.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n.dim; ++j) s += n.row(i)[j] * n.row(i)[j];
        CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-12);
    }

    EmbeddingMatrix z(2, 4);
    z.data[4 + 1] = 1.0;  // row 1 fine, row 0 all zero
    CHECK_THROWS_WITH_AS(static_cast<void>(normalize_rows(z)), "zero-norm row 0", ValidationError);
}

TEST_CASE("cosine similarity equals the plain dot product oracle") {
    Rng rng(17);
    auto a = random_normalized(rng, 7, 12);
    auto b = random_normalized(rng, 5, 12);
    auto s = cosine_similarity_matrix(a, b);
    REQUIRE(s.rows == 7);
    REQUIRE(s.cols == 5);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
            double ref = 0.0;
            for (std::size_t d = 0; d < a.dim; ++d) ref += a.row(i)[d] * b.row(j)[d];
            CHECK(s.at(i, j) == doctest::Approx(ref).epsilon(1e-14));
            CHECK(s.at(i, j) >= -1.0 - 1e-9);
            CHECK(s.at(i, j) <= 1.0 + 1e-9);
        }
    }

    EmbeddingMatrix raw(2, 12);
    for (auto& v : raw.data) v = rng.next_gaussian();
    CHECK_THROWS_AS(static_cast<void>(cosine_similarity_matrix(raw, b)), ValidationError);
}

TEST_CASE("embedding file round trip is byte identical") {
    auto dir = temp_dir();
    Rng rng(23);
    auto m = random_normalized(rng, 11, 6);
    m.ids.clear();
    for (std::size_t i = 0; i < m.rows; ++i) m.ids.push_back("row-" + std::to_string(i));

    const auto p1 = dir / "a.emb";
    const auto p2 = dir / "b.emb";
    save_embeddings(m, p1);
    auto loaded = load_embeddings(p1);
    CHECK(loaded.rows == m.rows);
    CHECK(loaded.dim == m.dim);
    CHECK(loaded.ids == m.ids);
    CHECK(loaded.normalized);  // float32 rounding stays well inside 1e-6

    save_embeddings(loaded, p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(slurp(fs::path(p1.string() + ".ids")) == slurp(fs::path(p2.string() + ".ids")));
}

TEST_CASE("embedding loader rejects malformed files") {
    auto dir = temp_dir();
    const auto p = dir / "bad.emb";
    {
        std::ofstream out(p, std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_AS(static_cast<void>(load_embeddings(p)), ValidationError);

    {
        std::ofstream out(p, std::ios::binary);
        out << "EMB1";
        const unsigned char hdr[8] = {2, 0, 0, 0, 3, 0, 0, 0};  // claims 2x3
        out.write(reinterpret_cast<const char*>(hdr), 8);
        const float vals[3] = {1.f, 0.f, 0.f};  // one row short
        out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    CHECK_THROWS_AS(static_cast<void>(load_embeddings(p)), ValidationError);

    {
        std::ofstream out(p, std::ios::binary);
        out << "EMB1";
        const unsigned char hdr[8] = {1, 0, 0, 0, 2, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(hdr), 8);
        const float vals[2] = {1.f, std::numeric_limits<float>::infinity()};
        out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    CHECK_THROWS_AS(static_cast<void>(load_embeddings(p)), ValidationError);

    CHECK_THROWS_AS(static_cast<void>(load_embeddings(dir / "missing.emb")), IoError);
}

TEST_CASE("single zero vector only fails when normalization is requested") {
    auto dir = temp_dir();
    const auto p = dir / "zero.emb";
    EmbeddingMatrix m(1, 1);
    m.data[0] = 0.0;
    save_embeddings(m, p);

    auto plain = load_embeddings(p);
    CHECK(plain.rows == 1);
    CHECK(plain.dim == 1);
    CHECK_FALSE(plain.normalized);

    CHECK_THROWS_AS(static_cast<void>(load_embeddings(p, true)), ValidationError);
}

TEST_CASE("caption jsonl round trip and link validation") {
    auto dir = temp_dir();
    const auto p = dir / "caps.jsonl";

    std::vector<CaptionRecord> recs;
    recs.push_back({"c1", "a red fox in the snow", "fox", "none", std::nullopt});
    recs.push_back({"c1-hn", "a red fox in the desert", "fox", "background", "c1"});
    recs.push_back({"c2", "two brown dogs", "dog", "none", std::nullopt});
    save_captions(recs, p);

    auto loaded = load_captions(p);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].id == "c1");
    CHECK(loaded[1].hn_of.has_value());
    CHECK(*loaded[1].hn_of == "c1");
    CHECK(loaded[1].axis == "background");
    CHECK(loaded[2].axis == "none");

    validate_caption_axes(loaded, {"background", "color"});
    CHECK_THROWS_AS(validate_caption_axes(loaded, {"color"}), ValidationError);

    // dangling hn_of
    recs[1].hn_of = "missing";
    CHECK_THROWS_AS(validate_caption_links(recs), ValidationError);

    // hard negative of a hard negative
    recs[1].hn_of = "c1";
    recs.push_back({"c3", "x", "fox", "none", "c1-hn"});
    CHECK_THROWS_AS(validate_caption_links(recs), ValidationError);

    // duplicate id
    recs.pop_back();
    recs.push_back({"c1", "dup", "fox", "none", std::nullopt});
    CHECK_THROWS_AS(validate_caption_links(recs), ValidationError);
}
