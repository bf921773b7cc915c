#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polygen/core.hpp"
#include "polygen/scheduler.hpp"

namespace polygen {

// Knobs for the synthetic embedding world. Concepts live in the subspace
// orthogonal to all fingerprint and axis directions; images carry an additive
// generator fingerprint of strength alpha plus isotropic noise.
struct SyntheticWorldConfig {
    std::size_t concepts = 64;
    std::size_t dim = 32;
    std::size_t generators = 4;  // m
    double alpha = 0.5;          // fingerprint strength
    double sigma = 0.2;          // image-side noise
    double sigma_text = 0.05;    // text-side noise
    double hn_strength = 0.5;    // axis displacement of hard negatives
    std::size_t n_plus = 4;      // images per caption
    std::size_t n_pairs = 200;   // captions
    bool with_hn = true;
    std::uint64_t seed = 0;
};

// A fully materialized world. Text row i belongs to samples[i]; hard-negative
// text rows follow the base block (hn_text_row). Image rows are indexed
// through samples[i].positives / negative_images; generator_labels aligns
// with image rows.
struct World {
    SyntheticWorldConfig cfg;
    Matrix fingerprints;  // m x d, orthonormal
    Matrix axis_dirs;     // |axes| x d, orthonormal, orthogonal to fingerprints
    Matrix concept_dirs;  // concepts x d, unit rows in the orthogonal complement
    std::vector<std::string> axis_names;
    EmbeddingMatrix images;
    EmbeddingMatrix texts;
    std::vector<PairedSample> samples;
    std::vector<std::size_t> sample_concept;
    std::vector<std::size_t> generator_labels;
    std::vector<std::optional<std::size_t>> hn_text_row;
};

// Builds basis, concepts and samples from scratch. Fails when the fingerprint
// and axis directions plus one concept dimension cannot fit into dim.
World generate_world(const SyntheticWorldConfig& cfg);

// Fresh samples over an existing basis, for held-out evaluation. m_override
// restricts image rendering to the first m_override fingerprints, so a world
// and its single-generator twin share semantics exactly.
World derive_world(const World& base, std::uint64_t seed, std::size_t n_pairs,
                   std::optional<std::size_t> m_override = std::nullopt);

// Dual linear heads with row normalization and a learnable log-temperature.
struct ToyEncoder {
    Matrix w_img;  // d_out x d_in
    Matrix w_txt;
    double log_tau = 0.0;

    double temperature() const;
    EmbeddingMatrix encode(const Matrix& rows, bool image_side) const;
    EmbeddingMatrix encode_images(const EmbeddingMatrix& raw) const;
    EmbeddingMatrix encode_texts(const EmbeddingMatrix& raw) const;
};

// Near-identity init with seeded jitter; tau starts at 0.07.
ToyEncoder make_encoder(std::size_t dim, std::uint64_t seed);

struct ToyTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 128;  // captions, or total slots in HN mode
    double lr = 0.02;
    std::size_t warmup_epochs = 1;
    double i2i_weight = 0.0;  // > 0 adds the image-to-image regularizer
    bool use_hn = false;      // hard-negative loss driven by the scheduler
    bool hn_images = true;    // false trains on hard-negative texts only
    CurriculumSchedule schedule;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> epoch_loss;         // one entry per epoch
    std::vector<double> realized_hn_ratio;  // zeros when HN training is off
    bool probe_valid = false;               // false when the world has one generator
    double probe_accuracy = 0.0;
    double recall1 = 0.0;
    double recall5 = 0.0;
    double hn_discrimination = 0.0;  // 0 when the eval world has no negatives
};

struct TrainResult {
    ToyEncoder encoder;
    TrainReport report;
};

// Adam on the two heads and the temperature, cosine-decayed learning rate
// after linear warmup. Evaluation runs on a freshly derived world.
TrainResult train_toy(const World& world, const ToyTrainConfig& cfg);

// Multinomial logistic probe on a 70/30 split; returns held-out accuracy.
double probe_generator(const EmbeddingMatrix& features, const std::vector<std::size_t>& labels,
                       std::uint64_t seed = 0);

struct RetrievalResult {
    double recall1 = 0.0;
    double recall5 = 0.0;
};

// recall@1 and recall@5 averaged over both retrieval directions.
RetrievalResult eval_retrieval(const EmbeddingMatrix& img, const EmbeddingMatrix& txt);

// Fraction of hard-negative pairs where the first image of the base caption
// scores higher against its own text than against the negative text.
double hn_discrimination(const ToyEncoder& enc, const World& world);

}  // namespace polygen
