#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "polygen/core.hpp"
#include "polygen/rng.hpp"

namespace polygen {

// One contrastive batch. img holds the rendered images for the captions in
// txt; group maps each image row to its caption row (empty means identity,
// allowed only when row counts match). hn_txt row k is the hard negative of
// caption k; hn_img holds the images rendered from those hard negatives,
// aligned with hn_txt. All matrices must be row-normalized.
struct BatchTensors {
    EmbeddingMatrix img;
    EmbeddingMatrix txt;
    std::optional<EmbeddingMatrix> hn_txt;
    std::optional<EmbeddingMatrix> hn_img;
    std::vector<std::size_t> group;
    SimilarityConfig config;
};

// Loss value in nats plus, when requested, the analytic gradients with
// respect to every participating input matrix and d(value)/d(temperature).
struct LossValue {
    double value = 0.0;
    std::optional<Matrix> d_img;
    std::optional<Matrix> d_txt;
    std::optional<Matrix> d_hn_txt;
    std::optional<Matrix> d_hn_img;
    double d_tau = 0.0;
};

enum class LossKind {
    multi_positive,
    image_to_image,
    nce_directional,
    negclip,
    tripletclip,
    clip_concat,
    hn_mixed,
};

const char* loss_kind_name(LossKind kind);

// Symmetric InfoNCE over row-aligned pairs: the mean of the image-to-text and
// text-to-image cross-entropies with diagonal targets.
LossValue loss_clip(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                    const SimilarityConfig& cfg, bool with_grad = false);

// Text-to-image direction uses soft targets spreading 1/n+ over each
// caption's images; image-to-text is one-hot onto the owning caption. The two
// directions are averaged, so with n+ = 1 this equals loss_clip exactly.
LossValue loss_multi_positive(const BatchTensors& b, bool with_grad = false);

// Image-to-image regularizer: for each image, cross-entropy of the softmax
// over all other images in the batch against a uniform target on its
// same-caption siblings. Every image needs at least one sibling.
LossValue loss_i2i(const BatchTensors& b, bool with_grad = false);

// One-directional NCE: anchors row k matched with positives row k, denominator
// over positives plus the optional extra negatives. Gradient slots: d_img for
// anchors, d_txt for positives, d_hn_txt for extras.
LossValue loss_nce_directional(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                               const EmbeddingMatrix* extras, const SimilarityConfig& cfg,
                               bool with_grad = false);

// Sum of the image-to-text NCE with hard-negative texts appended to the
// denominator and the plain text-to-image NCE.
LossValue loss_negclip(const BatchTensors& b, bool with_grad = false);

// Two NegCLIP terms: the positives with hn texts as extras, and the
// hard-negative pairs with the positive texts as extras.
LossValue loss_tripletclip(const BatchTensors& b, bool with_grad = false);

// Symmetric InfoNCE over the concatenation [img; hn_img] x [txt; hn_txt].
LossValue loss_clip_concat(const BatchTensors& b, bool with_grad = false);

// Batch-balanced mix: (|T| * NegCLIP(I,T,T-) + |T-| * NegCLIP(I-,T-,T)) / |B|
// with |B| = |T| + |T-|. hn matrices may have zero rows, in which case this
// reduces to NegCLIP(I,T) without extras.
LossValue loss_hn_mixed(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                        const EmbeddingMatrix& hn_txt, const EmbeddingMatrix& hn_img,
                        const SimilarityConfig& cfg, bool with_grad = false);
LossValue loss_hn_mixed(const BatchTensors& b, bool with_grad = false);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // both analytic and numeric below the floor
};

// Central-difference check of every coordinate of every input matrix the loss
// reads. Coordinates where both derivatives sit under 1e-7 in magnitude are
// skipped rather than scored, since their relative error is noise.
GradCheckReport check_gradients(LossKind kind, const BatchTensors& b, double step = 1e-5);

// Seeded batch of unit-norm gaussian rows: n_captions captions, n_plus images
// each, plus aligned hard-negative rows when with_hn is set. group is identity
// when n_plus == 1.
BatchTensors random_batch(Rng& rng, std::size_t n_captions, std::size_t dim, std::size_t n_plus,
                          bool with_hn);

}  // namespace polygen
