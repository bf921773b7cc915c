#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "polygen/errors.hpp"
#include "polygen/kernels.hpp"
#include "polygen/lab.hpp"
#include "polygen/metrics.hpp"
#include "polygen/rng.hpp"

using namespace polygen;

namespace {

SyntheticWorldConfig small_world() {
    SyntheticWorldConfig cfg;
    cfg.concepts = 8;
    cfg.dim = 16;
    cfg.generators = 2;
    cfg.n_plus = 2;
    cfg.n_pairs = 48;
    cfg.with_hn = false;
    cfg.seed = 7;
    return cfg;
}

// Image row index -> owning sample, in world storage order.
std::vector<std::size_t> image_owners(const World& w) {
    std::vector<std::size_t> owner(w.images.rows, 0);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        for (std::size_t r : w.samples[i].positives) owner[r] = i;
        for (std::size_t r : w.samples[i].negative_images) owner[r] = i;
    }
    return owner;
}

double ground_truth_diversity(const World& w) {
    ClusterModel model;
    model.k = w.cfg.concepts;
    model.assignment = w.sample_concept;
    return diversity(w.images, model, image_owners(w));
}

}  // namespace

TEST_CASE("world config validation") {
    SyntheticWorldConfig cfg;
    cfg.dim = 8;  // 4 generators + 8 axes + 1 concept direction will not fit
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    cfg = SyntheticWorldConfig{};
    cfg.generators = 0;
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    cfg = SyntheticWorldConfig{};
    cfg.n_plus = 0;
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    cfg = SyntheticWorldConfig{};
    cfg.concepts = 0;
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    cfg = SyntheticWorldConfig{};
    cfg.n_pairs = 0;
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    cfg = SyntheticWorldConfig{};
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    cfg = SyntheticWorldConfig{};
    cfg.sigma = std::nan("");
    CHECK_THROWS_AS(generate_world(cfg), ValidationError);

    CHECK_NOTHROW(generate_world(SyntheticWorldConfig{}));
}

TEST_CASE("noise-free world collapses onto the concept directions") {
    SyntheticWorldConfig cfg;
    cfg.concepts = 4;
    cfg.dim = 16;
    cfg.generators = 1;
    cfg.alpha = 0.0;
    cfg.sigma = 0.0;
    cfg.sigma_text = 0.0;
    cfg.n_plus = 1;
    cfg.n_pairs = 8;
    cfg.with_hn = false;
    World w = generate_world(cfg);

    REQUIRE(w.texts.rows == 8);
    REQUIRE(w.images.rows == 8);
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        const double* z = w.concept_dirs.row(i % cfg.concepts);
        const std::size_t img = w.samples[i].positives.front();
        for (std::size_t j = 0; j < cfg.dim; ++j) {
            CHECK(w.texts.row(i)[j] == doctest::Approx(z[j]).epsilon(1e-12));
            CHECK(w.images.row(img)[j] == doctest::Approx(z[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("basis geometry and sample layout") {
    SyntheticWorldConfig cfg;
    cfg.concepts = 10;
    cfg.dim = 20;
    cfg.generators = 3;
    cfg.n_plus = 2;
    cfg.n_pairs = 12;
    cfg.with_hn = true;
    cfg.seed = 11;
    World w = generate_world(cfg);

    REQUIRE(w.fingerprints.rows == 3);
    REQUIRE(w.axis_dirs.rows == w.axis_names.size());
    auto pairwise = [&](const Matrix& a, const Matrix& b, bool same) {
        for (std::size_t i = 0; i < a.rows; ++i) {
            for (std::size_t j = 0; j < b.rows; ++j) {
                const double d = kernels::dot(a.row(i), b.row(j), cfg.dim);
                const double want = (same && i == j) ? 1.0 : 0.0;
                CHECK(d == doctest::Approx(want).epsilon(1e-10));
            }
        }
    };
    pairwise(w.fingerprints, w.fingerprints, true);
    pairwise(w.axis_dirs, w.axis_dirs, true);
    pairwise(w.fingerprints, w.axis_dirs, false);
    pairwise(w.concept_dirs, w.fingerprints, false);
    pairwise(w.concept_dirs, w.axis_dirs, false);
    for (std::size_t c = 0; c < cfg.concepts; ++c) {
        const double n = kernels::dot(w.concept_dirs.row(c), w.concept_dirs.row(c), cfg.dim);
        CHECK(n == doctest::Approx(1.0).epsilon(1e-10));
    }

    REQUIRE(w.samples.size() == 12);
    CHECK(w.images.rows == 12 * 2 * 2);  // positives and negatives
    CHECK(w.texts.rows == 24);
    CHECK(w.generator_labels.size() == w.images.rows);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto& s = w.samples[i];
        CHECK(s.base.id == "pair-" + std::to_string(i));
        CHECK(s.base.concept_name == "concept-" + std::to_string(i % cfg.concepts));
        REQUIRE(s.negative.has_value());
        CHECK(s.negative->id == s.base.id + "-hn");
        CHECK(s.negative->hn_of == s.base.id);
        REQUIRE(w.hn_text_row[i].has_value());
        CHECK(*w.hn_text_row[i] == 12 + i);
        REQUIRE(s.positives.size() == 2);
        REQUIRE(s.negative_images.size() == 2);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(w.generator_labels[s.positives[k]] == (i + k) % cfg.generators);
            CHECK(w.generator_labels[s.negative_images[k]] == (i + k) % cfg.generators);
        }
        CHECK(w.sample_concept[i] == i % cfg.concepts);
    }
}

TEST_CASE("generator fingerprints are linearly probeable from raw images") {
    SyntheticWorldConfig cfg;
    cfg.concepts = 16;
    cfg.dim = 32;
    cfg.generators = 4;
    cfg.n_plus = 2;
    cfg.n_pairs = 150;
    cfg.sigma = 0.1;
    cfg.with_hn = false;
    cfg.seed = 3;
    World w = generate_world(cfg);

    const double fingerprinted = probe_generator(w.images, w.generator_labels, 1);
    CHECK(fingerprinted > 0.85);

    // Projections onto the true fingerprints separate the classes almost
    // perfectly, so the probe ceiling is near 1.
    EmbeddingMatrix proj(w.images.rows, cfg.generators);
    for (std::size_t i = 0; i < w.images.rows; ++i) {
        for (std::size_t g = 0; g < cfg.generators; ++g) {
            proj.row(i)[g] = kernels::dot(w.images.row(i), w.fingerprints.row(g), cfg.dim);
        }
    }
    CHECK(probe_generator(proj, w.generator_labels, 1) > 0.95);

    // With alpha = 0 the raw images still leak label information through the
    // concept direction: the staggered assignment gives every concept the
    // same two labels, capping accuracy at 1/2 instead of 1/4. Projections
    // onto the fingerprints carry nothing once the fingerprint term is gone.
    SyntheticWorldConfig flat = cfg;
    flat.alpha = 0.0;
    World wf = generate_world(flat);
    CHECK(probe_generator(wf.images, wf.generator_labels, 1) < 0.57);
    EmbeddingMatrix proj0(wf.images.rows, cfg.generators);
    for (std::size_t i = 0; i < wf.images.rows; ++i) {
        for (std::size_t g = 0; g < cfg.generators; ++g) {
            proj0.row(i)[g] = kernels::dot(wf.images.row(i), wf.fingerprints.row(g), cfg.dim);
        }
    }
    CHECK(probe_generator(proj0, wf.generator_labels, 1) < 0.4);

    std::vector<std::size_t> shuffled = w.generator_labels;
    Rng rng(99);
    rng.shuffle(shuffled);
    CHECK(probe_generator(w.images, shuffled, 1) < 0.45);
}

TEST_CASE("mixing generators raises image diversity under ground-truth clusters") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        SyntheticWorldConfig cfg;
        cfg.concepts = 12;
        cfg.dim = 24;
        cfg.generators = 4;
        cfg.alpha = 0.6;
        cfg.sigma = 0.15;
        cfg.n_plus = 4;
        cfg.n_pairs = 96;
        cfg.with_hn = false;
        cfg.seed = seed;
        World many = generate_world(cfg);
        World one = derive_world(many, seed + 100, cfg.n_pairs, 1);
        CHECK(ground_truth_diversity(many) > ground_truth_diversity(one));
    }
}

TEST_CASE("derive_world is deterministic and validates the override") {
    World base = generate_world(small_world());
    World a = derive_world(base, 42, 20);
    World b = derive_world(base, 42, 20);
    CHECK(a.images.data == b.images.data);
    CHECK(a.texts.data == b.texts.data);
    CHECK(a.generator_labels == b.generator_labels);

    World c = derive_world(base, 43, 20);
    CHECK(c.images.data != a.images.data);

    World solo = derive_world(base, 42, 20, 1);
    CHECK(solo.cfg.generators == 1);
    for (std::size_t l : solo.generator_labels) CHECK(l == 0);
    for (std::size_t j = 0; j < base.cfg.dim; ++j) {
        CHECK(solo.fingerprints.at(0, j) == base.fingerprints.at(0, j));
    }

    CHECK_THROWS_AS(derive_world(base, 42, 20, 0), ValidationError);
    CHECK_THROWS_AS(derive_world(base, 42, 20, 3), ValidationError);
}

TEST_CASE("encoder starts near identity with tau at 0.07") {
    ToyEncoder enc = make_encoder(16, 5);
    CHECK(enc.temperature() == doctest::Approx(0.07).epsilon(1e-12));

    Matrix x(4, 16);
    Rng rng(8);
    for (auto& v : x.data) v = rng.next_gaussian();
    for (std::size_t i = 0; i < 4; ++i) {
        double n = std::sqrt(kernels::dot(x.row(i), x.row(i), 16));
        for (std::size_t j = 0; j < 16; ++j) x.at(i, j) /= n;
    }
    EmbeddingMatrix y = enc.encode(x, true);
    REQUIRE(y.rows == 4);
    CHECK(y.normalized);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(kernels::dot(y.row(i), x.row(i), 16) > 0.99);
    }

    ToyEncoder again = make_encoder(16, 5);
    CHECK(again.w_img.data == enc.w_img.data);
    ToyEncoder other = make_encoder(16, 6);
    CHECK(other.w_img.data != enc.w_img.data);
}

TEST_CASE("training reduces the contrastive loss") {
    World w = generate_world(small_world());
    ToyTrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 16;
    cfg.lr = 0.02;
    cfg.seed = 1;
    TrainResult r = train_toy(w, cfg);

    REQUIRE(r.report.epoch_loss.size() == 10);
    for (double l : r.report.epoch_loss) CHECK(std::isfinite(l));
    CHECK(r.report.epoch_loss.back() < r.report.epoch_loss.front());
    CHECK(r.report.probe_valid);
    CHECK(r.report.recall1 >= 0.0);
    CHECK(r.report.recall1 <= 1.0);
    CHECK(r.report.recall5 >= r.report.recall1);
    for (double f : r.report.realized_hn_ratio) CHECK(f == 0.0);
}

TEST_CASE("zero learning rate leaves the encoder at its initialization") {
    World w = generate_world(small_world());
    ToyTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.lr = 0.0;
    TrainResult one = train_toy(w, cfg);
    cfg.epochs = 4;
    TrainResult four = train_toy(w, cfg);
    CHECK(one.encoder.w_img.data == four.encoder.w_img.data);
    CHECK(one.encoder.w_txt.data == four.encoder.w_txt.data);
    CHECK(one.encoder.log_tau == four.encoder.log_tau);

    cfg.lr = 0.02;
    TrainResult moved = train_toy(w, cfg);
    CHECK(moved.encoder.w_img.data != one.encoder.w_img.data);
}

TEST_CASE("hard-negative curriculum feeds batches on schedule") {
    SyntheticWorldConfig wc;
    wc.concepts = 8;
    wc.dim = 20;
    wc.generators = 2;
    wc.n_plus = 2;
    wc.n_pairs = 60;
    wc.with_hn = true;
    wc.seed = 13;
    World w = generate_world(wc);

    ToyTrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 20;
    cfg.lr = 0.01;
    cfg.use_hn = true;
    cfg.schedule = CurriculumSchedule{0.0, 0.5, 6};
    cfg.seed = 2;
    TrainResult r = train_toy(w, cfg);

    REQUIRE(r.report.realized_hn_ratio.size() == 6);
    CHECK(r.report.realized_hn_ratio.front() == 0.0);
    CHECK(r.report.realized_hn_ratio.back() > 0.3);
    for (double f : r.report.realized_hn_ratio) {
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
    }
    CHECK(r.report.hn_discrimination >= 0.0);
    CHECK(r.report.hn_discrimination <= 1.0);
    for (double l : r.report.epoch_loss) CHECK(std::isfinite(l));

    // Text-only variant: epoch 0 serves no negatives (plain pairs), later
    // epochs append hard-negative texts to the denominator.
    cfg.hn_images = false;
    TrainResult t = train_toy(w, cfg);
    REQUIRE(t.report.realized_hn_ratio.size() == 6);
    CHECK(t.report.realized_hn_ratio.front() == 0.0);
    CHECK(t.report.realized_hn_ratio.back() > 0.3);
    for (double l : t.report.epoch_loss) CHECK(std::isfinite(l));
    TrainResult t2 = train_toy(w, cfg);
    CHECK(t.encoder.w_img.data == t2.encoder.w_img.data);
    CHECK(t.encoder.w_txt.data != r.encoder.w_txt.data);
}

TEST_CASE("same seed reproduces a training run bit for bit") {
    World w = generate_world(small_world());
    ToyTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 9;
    TrainResult a = train_toy(w, cfg);
    TrainResult b = train_toy(w, cfg);
    CHECK(a.encoder.w_img.data == b.encoder.w_img.data);
    CHECK(a.encoder.w_txt.data == b.encoder.w_txt.data);
    CHECK(a.encoder.log_tau == b.encoder.log_tau);
    CHECK(a.report.epoch_loss == b.report.epoch_loss);
    CHECK(a.report.recall1 == b.report.recall1);
    CHECK(a.report.probe_accuracy == b.report.probe_accuracy);

    cfg.seed = 10;
    TrainResult c = train_toy(w, cfg);
    CHECK(c.encoder.w_img.data != a.encoder.w_img.data);
}

TEST_CASE("training config validation") {
    World w = generate_world(small_world());
    ToyTrainConfig cfg;

    cfg.epochs = 0;
    CHECK_THROWS_AS(train_toy(w, cfg), ValidationError);

    cfg = ToyTrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train_toy(w, cfg), ValidationError);

    cfg = ToyTrainConfig{};
    cfg.lr = std::nan("");
    CHECK_THROWS_AS(train_toy(w, cfg), ValidationError);

    cfg = ToyTrainConfig{};
    cfg.epochs = 3;
    cfg.warmup_epochs = 5;
    CHECK_THROWS_AS(train_toy(w, cfg), ValidationError);

    cfg = ToyTrainConfig{};
    cfg.use_hn = true;  // small_world has no negatives
    CHECK_THROWS_AS(train_toy(w, cfg), ValidationError);

    cfg = ToyTrainConfig{};
    cfg.use_hn = true;
    cfg.epochs = 50;
    cfg.schedule.epochs = 40;
    SyntheticWorldConfig withhn = small_world();
    withhn.with_hn = true;
    World wh = generate_world(withhn);
    CHECK_THROWS_AS(train_toy(wh, cfg), ValidationError);

    SyntheticWorldConfig single = small_world();
    single.n_plus = 1;
    World ws = generate_world(single);
    cfg = ToyTrainConfig{};
    cfg.i2i_weight = 0.5;
    CHECK_THROWS_AS(train_toy(ws, cfg), ValidationError);

    SyntheticWorldConfig tiny = small_world();
    tiny.n_pairs = 4;
    World wt = generate_world(tiny);
    cfg = ToyTrainConfig{};
    CHECK_THROWS_AS(train_toy(wt, cfg), ValidationError);
}

TEST_CASE("retrieval eval on identity and permuted embeddings") {
    const std::size_t n = 8;
    EmbeddingMatrix eye(n, n);
    for (std::size_t i = 0; i < n; ++i) eye.row(i)[i] = 1.0;
    eye.normalized = true;

    RetrievalResult perfect = eval_retrieval(eye, eye);
    CHECK(perfect.recall1 == 1.0);
    CHECK(perfect.recall5 == 1.0);

    EmbeddingMatrix rev(n, n);
    for (std::size_t i = 0; i < n; ++i) rev.row(i)[n - 1 - i] = 1.0;
    rev.normalized = true;
    RetrievalResult wrong = eval_retrieval(eye, rev);
    CHECK(wrong.recall1 == 0.0);
    CHECK(wrong.recall5 == 1.0);  // the true match always ranks second

    EmbeddingMatrix small(3, n);
    small.normalized = true;
    CHECK_THROWS_AS(eval_retrieval(eye, small), ValidationError);
    EmbeddingMatrix raw(n, n);
    for (std::size_t i = 0; i < n; ++i) raw.row(i)[i] = 1.0;
    CHECK_THROWS_AS(eval_retrieval(eye, raw), ValidationError);
}

TEST_CASE("hard negatives are separable before training") {
    SyntheticWorldConfig cfg;
    cfg.concepts = 16;
    cfg.dim = 32;
    cfg.generators = 2;
    cfg.n_plus = 2;
    cfg.n_pairs = 100;
    cfg.with_hn = true;
    cfg.seed = 21;
    World w = generate_world(cfg);

    // Near-identity encoder: base texts sit on the concept direction while
    // hn texts are tilted off it, so raw cosine separates well above chance.
    ToyEncoder enc = make_encoder(cfg.dim, 4);
    CHECK(hn_discrimination(enc, w) > 0.6);

    SyntheticWorldConfig plain = cfg;
    plain.with_hn = false;
    World wp = generate_world(plain);
    CHECK_THROWS_AS(hn_discrimination(enc, wp), ValidationError);
}

TEST_CASE("probe input validation") {
    World w = generate_world(small_world());
    std::vector<std::size_t> bad(w.images.rows - 1, 0);
    CHECK_THROWS_AS(probe_generator(w.images, bad, 0), ValidationError);

    std::vector<std::size_t> flat(w.images.rows, 3);
    CHECK_THROWS_AS(probe_generator(w.images, flat, 0), ValidationError);

    EmbeddingMatrix few(4, 8);
    few.normalized = true;
    std::vector<std::size_t> lbl{0, 1, 0, 1};
    CHECK_THROWS_AS(probe_generator(few, lbl, 0), ValidationError);
}
