#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "polygen/errors.hpp"
#include "polygen/sampler.hpp"

using namespace polygen;

namespace {

CaptionRecord cap(const std::string& id, const std::string& text) {
    CaptionRecord r;
    r.id = id;
    r.text = text;
    r.concept_name = "unset";
    return r;
}

std::string write_temp(const std::string& name, const std::string& body) {
    const std::string path = "/tmp/polygen_sampler_" + name;
    std::ofstream out(path);
    out << body;
    return path;
}

}  // namespace

TEST_CASE("control tuple draws cover singleton and determinism cases") {
    ConceptBank bank{{"x"}, {}};
    AxisSet axes{{"color"}};
    Rng rng(1);
    for (int i = 0; i < 5; ++i) {
        auto t = sample_control_tuple(bank, axes, rng);
        CHECK(t.concept_name == "x");
        CHECK(t.axis == "color");
    }

    ConceptBank big{{"a", "b", "c"}, {}};
    AxisSet four{{"w", "x", "y", "z"}};
    Rng r1(77), r2(77);
    for (int i = 0; i < 100; ++i) {
        auto t1 = sample_control_tuple(big, four, r1);
        auto t2 = sample_control_tuple(big, four, r2);
        CHECK(t1.concept_name == t2.concept_name);
        CHECK(t1.axis == t2.axis);
    }
}

TEST_CASE("axis frequencies are multinomial-uniform over many draws") {
    ConceptBank bank{{"a", "b"}, {}};
    AxisSet four{{"w", "x", "y", "z"}};
    const std::size_t n = 100000;
    std::map<std::string, std::size_t> freq;
    Rng rng(2024);
    for (std::size_t i = 0; i < n; ++i) ++freq[sample_control_tuple(bank, four, rng).axis];
    const double p = 0.25;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (const auto& axis : four.axes) {
        CHECK(std::abs(static_cast<double>(freq[axis]) - n * p) < 3 * sigma);
    }
}

TEST_CASE("weighted banks bias concept draws proportionally") {
    ConceptBank bank{{"rare", "common"}, {1.0, 3.0}};
    AxisSet axes{{"color"}};
    const std::size_t n = 100000;
    std::size_t rare = 0;
    Rng rng(5);
    for (std::size_t i = 0; i < n; ++i) {
        if (sample_control_tuple(bank, axes, rng).concept_name == "rare") ++rare;
    }
    const double p = 0.25;
    const double sigma = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(static_cast<double>(rare) - n * p) < 3 * sigma);
}

TEST_CASE("prompt rendering substitutes slots byte-exactly") {
    CHECK(render_prompt("A photo of {concept}", "dog", "color") == "A photo of dog");
    CHECK(render_prompt("Describe a {concept}, varying its {attribute}.", "fox", "lighting") ==
          "Describe a fox, varying its lighting.");
    CHECK(render_prompt("Rewrite '{caption}' changing only the {axis}.", "fox", "color",
                        std::string("a red fox")) ==
          "Rewrite 'a red fox' changing only the color.");
    CHECK(render_prompt("no slots at all", "c", "a") == "no slots at all");

    CHECK_THROWS_WITH_AS(render_prompt("oops {typo_slot}", "c", "a"),
                         "unknown template slot {typo_slot}", ValidationError);
    CHECK_THROWS_AS(render_prompt("", "c", "a"), ValidationError);
    CHECK_THROWS_AS(render_prompt("broken {concept", "c", "a"), ValidationError);
    CHECK_THROWS_AS(render_prompt("needs {caption}", "c", "a"), ValidationError);
}

TEST_CASE("concept matching is case-insensitive and whole-word") {
    CHECK(contains_concept("a red fox", "fox"));
    CHECK(contains_concept("A Red FOX!", "fox"));
    CHECK(contains_concept("the red fox runs", "red fox"));
    CHECK_FALSE(contains_concept("foxes run", "fox"));
    CHECK_FALSE(contains_concept("scatter plot", "cat"));
    CHECK(contains_concept("cat, dog", "cat"));
    CHECK(contains_concept("fox", "fox"));
    CHECK_FALSE(contains_concept("", "fox"));
}

TEST_CASE("histogram counts per-caption presence") {
    ConceptBank bank{{"fox", "red"}, {}};
    auto h = count_concepts({cap("1", "a red fox")}, bank);
    CHECK(h.at("fox") == 1);
    CHECK(h.at("red") == 1);

    auto h2 = count_concepts({cap("1", "foxes run")}, bank);
    CHECK(h2.at("fox") == 0);

    // Repeats inside one caption still count once.
    auto h3 = count_concepts({cap("1", "fox meets fox")}, bank);
    CHECK(h3.at("fox") == 1);
}

TEST_CASE("histogram matches a planted corpus") {
    ConceptBank bank{{"alpha", "bravo", "charlie", "delta"}, {}};
    const std::map<std::string, std::size_t> plant = {
        {"alpha", 120}, {"bravo", 37}, {"charlie", 0}, {"delta", 200}};
    std::vector<CaptionRecord> corpus;
    std::size_t id = 0;
    for (const auto& [name, n] : plant) {
        for (std::size_t i = 0; i < n; ++i) {
            corpus.push_back(cap(std::to_string(id++), "a plain scene with " + name + " inside"));
        }
    }
    for (std::size_t i = 0; i < 50; ++i) {
        corpus.push_back(cap(std::to_string(id++), "nothing from the bank here"));
    }
    auto h = count_concepts(corpus, bank);
    for (const auto& [name, n] : plant) CHECK(h.at(name) == n);
}

TEST_CASE("retention keeps everything at or below the threshold") {
    ConceptBank bank{{"tail"}, {}};
    std::vector<CaptionRecord> caps;
    for (std::size_t i = 0; i < 30; ++i) {
        caps.push_back(cap(std::to_string(i), "photo " + std::to_string(i) + " of tail"));
    }
    auto hist = count_concepts(caps, bank);
    REQUIRE(hist.at("tail") == 30);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto kept = balanced_sample(caps, hist, SamplerConfig{30, seed});
        CHECK(kept.size() == caps.size());
    }
}

TEST_CASE("head concepts flatten to the threshold in expectation") {
    ConceptBank bank{{"head"}, {}};
    std::vector<CaptionRecord> caps;
    const std::size_t n = 1000;
    for (std::size_t i = 0; i < n; ++i) {
        caps.push_back(cap(std::to_string(i), "scene " + std::to_string(i) + " with head"));
    }
    auto hist = count_concepts(caps, bank);
    REQUIRE(hist.at("head") == n);

    const double t = 30.0;
    const double p = t / n;
    const std::size_t seeds = 50;
    double total = 0.0;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        total += static_cast<double>(balanced_sample(caps, hist, SamplerConfig{30, s}).size());
    }
    const double mean = total / seeds;
    const double sigma_mean = std::sqrt(n * p * (1 - p) / seeds);
    CHECK(std::abs(mean - t) < 3 * sigma_mean);
}

TEST_CASE("half retention at count twice the threshold") {
    ConceptBank bank{{"mid"}, {}};
    std::vector<CaptionRecord> caps;
    const std::size_t n = 60;
    for (std::size_t i = 0; i < n; ++i) {
        caps.push_back(cap(std::to_string(i), "frame " + std::to_string(i) + " with mid"));
    }
    auto hist = count_concepts(caps, bank);
    const std::size_t seeds = 200;
    double total = 0.0;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        total += static_cast<double>(balanced_sample(caps, hist, SamplerConfig{30, s}).size());
    }
    const double mean = total / seeds;
    const double sigma_mean = std::sqrt(n * 0.5 * 0.5 / seeds);
    CHECK(std::abs(mean - 30.0) < 3 * sigma_mean);
}

TEST_CASE("any matched concept rescues a caption, concept-free ones drop") {
    ConceptBank bank{{"head", "tail"}, {}};
    std::vector<CaptionRecord> caps;
    for (std::size_t i = 0; i < 1000; ++i) {
        caps.push_back(cap("h" + std::to_string(i), "big scene " + std::to_string(i) + " head"));
    }
    caps.push_back(cap("both", "one scene with head and tail"));
    caps.push_back(cap("none", "nothing relevant"));
    auto hist = count_concepts(caps, bank);
    REQUIRE(hist.at("tail") == 1);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto kept = balanced_sample(caps, hist, SamplerConfig{30, seed});
        bool both_kept = false;
        for (const auto& c : kept) {
            CHECK(c.id != "none");
            if (c.id == "both") both_kept = true;
        }
        // tail has count 1 <= t, so its draw always succeeds.
        CHECK(both_kept);
    }
}

TEST_CASE("sampling is reproducible and validated") {
    ConceptBank bank{{"head"}, {}};
    std::vector<CaptionRecord> caps;
    for (std::size_t i = 0; i < 500; ++i) {
        caps.push_back(cap(std::to_string(i), "scene " + std::to_string(i) + " with head"));
    }
    auto hist = count_concepts(caps, bank);
    auto a = balanced_sample(caps, hist, SamplerConfig{30, 9});
    auto b = balanced_sample(caps, hist, SamplerConfig{30, 9});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);

    CHECK_THROWS_AS(balanced_sample({}, hist, SamplerConfig{30, 0}), ValidationError);
    CHECK_THROWS_AS(balanced_sample(caps, hist, SamplerConfig{0, 0}), ValidationError);
    ConceptHistogram stale = {{"head", 0}};
    CHECK_THROWS_AS(balanced_sample(caps, stale, SamplerConfig{30, 0}), ValidationError);
}

TEST_CASE("deduplication keeps first occurrences in order") {
    auto out = deduplicate({cap("1", "a"), cap("2", "b"), cap("3", "a")});
    REQUIRE(out.size() == 2);
    CHECK(out[0].id == "1");
    CHECK(out[1].id == "2");

    auto same = deduplicate({cap("1", "x"), cap("2", "y")});
    CHECK(same.size() == 2);

    // Planted duplication over a large corpus.
    std::vector<CaptionRecord> big;
    const std::size_t unique = 7000;
    for (std::size_t i = 0; i < unique; ++i) {
        big.push_back(cap(std::to_string(i), "text " + std::to_string(i)));
    }
    for (std::size_t i = 0; i < 3000; ++i) {
        big.push_back(cap("dup" + std::to_string(i), "text " + std::to_string(i % unique)));
    }
    CHECK(deduplicate(big).size() == unique);
}

TEST_CASE("default axis set lists eight axes with concept last") {
    auto axes = default_axes();
    REQUIRE(axes.axes.size() == 8);
    CHECK(axes.axes.front() == "background");
    CHECK(axes.axes.back() == "concept");
    std::set<std::string> uniq(axes.axes.begin(), axes.axes.end());
    CHECK(uniq.size() == 8);
}

TEST_CASE("concept bank files parse names and optional weights") {
    auto plain = write_temp("plain.txt", "dog\ncat\n\nfox\n");
    auto bank = load_concept_bank(plain);
    REQUIRE(bank.concepts.size() == 3);
    CHECK(bank.concepts[0] == "dog");
    CHECK(bank.concepts[2] == "fox");
    CHECK(bank.weights.empty());

    auto weighted = write_temp("weighted.txt", "dog\t2.5\ncat\t1\n");
    auto wb = load_concept_bank(weighted);
    REQUIRE(wb.weights.size() == 2);
    CHECK(wb.weights[0] == doctest::Approx(2.5));

    CHECK_THROWS_AS(load_concept_bank(write_temp("dup.txt", "dog\ndog\n")), ValidationError);
    CHECK_THROWS_AS(load_concept_bank(write_temp("badw.txt", "dog\tnope\n")), ValidationError);
    CHECK_THROWS_AS(load_concept_bank(write_temp("negw.txt", "dog\t-1\n")), ValidationError);
    CHECK_THROWS_AS(load_concept_bank(write_temp("empty.txt", "\n\n")), ValidationError);
    CHECK_THROWS_AS(load_concept_bank("/tmp/polygen_sampler_missing_file.txt"), IoError);
    std::remove(plain.c_str());
    std::remove(weighted.c_str());
}
