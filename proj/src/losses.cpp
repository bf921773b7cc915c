#include "polygen/losses.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "polygen/errors.hpp"
#include "polygen/kernels.hpp"

namespace polygen {

namespace {

using Targets = std::vector<std::vector<std::pair<std::size_t, double>>>;

struct Seg {
    const EmbeddingMatrix* m;
    Matrix* grad;  // nullable
};

constexpr std::size_t kNoExclude = static_cast<std::size_t>(-1);

// Soft-target cross-entropy over logits s(anchor, candidate)/tau where the
// candidate set is the row-wise concatenation of the segments. Adds
// weight * mean-over-anchors CE to the return value and accumulates gradients
// in place. self_exclude_offset >= 0 removes candidate (k + offset) from
// anchor k's softmax.
double directional_ce(const EmbeddingMatrix& anchors, Matrix* d_anchors,
                      const std::vector<Seg>& segs, const Targets& targets, double tau,
                      double weight, std::ptrdiff_t self_exclude_offset, double* d_tau) {
    const std::size_t n = anchors.rows;
    const std::size_t dim = anchors.dim;
    std::size_t total = 0;
    for (const auto& s : segs) total += s.m->rows;

    std::vector<double> logits(total);
    const double scale = weight / (static_cast<double>(n) * tau);
    double value = 0.0;

    for (std::size_t k = 0; k < n; ++k) {
        const double* a = anchors.row(k);
        const std::size_t excluded =
            self_exclude_offset >= 0 ? k + static_cast<std::size_t>(self_exclude_offset)
                                     : kNoExclude;
        std::size_t idx = 0;
        double mx = -std::numeric_limits<double>::infinity();
        for (const auto& s : segs) {
            for (std::size_t j = 0; j < s.m->rows; ++j, ++idx) {
                logits[idx] = kernels::dot(a, s.m->row(j), dim) / tau;
                if (idx != excluded && logits[idx] > mx) mx = logits[idx];
            }
        }
        double sumexp = 0.0;
        for (std::size_t j = 0; j < total; ++j) {
            if (j == excluded) continue;
            sumexp += std::exp(logits[j] - mx);
        }
        const double lse = mx + std::log(sumexp);

        double target_logit = 0.0;
        for (const auto& [t, p] : targets[k]) target_logit += p * logits[t];
        value += lse - target_logit;

        if (d_anchors != nullptr) {
            double dtau_acc = 0.0;
            std::size_t off = 0;
            for (const auto& s : segs) {
                for (std::size_t j = 0; j < s.m->rows; ++j) {
                    const std::size_t g = off + j;
                    if (g == excluded) continue;
                    const double q = std::exp(logits[g] - lse);
                    const double c = q * scale;
                    kernels::axpy(c, s.m->row(j), d_anchors->row(k), dim);
                    if (s.grad != nullptr) kernels::axpy(c, a, s.grad->row(j), dim);
                    dtau_acc += q * logits[g];
                }
                off += s.m->rows;
            }
            for (const auto& [t, p] : targets[k]) {
                std::size_t seg_off = 0;
                for (const auto& s : segs) {
                    if (t < seg_off + s.m->rows) {
                        const std::size_t j = t - seg_off;
                        const double c = -p * scale;
                        kernels::axpy(c, s.m->row(j), d_anchors->row(k), dim);
                        if (s.grad != nullptr) kernels::axpy(c, a, s.grad->row(j), dim);
                        break;
                    }
                    seg_off += s.m->rows;
                }
                dtau_acc -= p * logits[t];
            }
            if (d_tau != nullptr) *d_tau -= scale * dtau_acc;
        }
    }
    return weight * value / static_cast<double>(n);
}

Targets diagonal_targets(std::size_t n) {
    Targets t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = {{k, 1.0}};
    return t;
}

void check_tau(const SimilarityConfig& cfg) {
    if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) {
        throw ValidationError("temperature must be positive and finite");
    }
}

void check_matrix(const EmbeddingMatrix& m, const char* name, std::size_t dim) {
    if (m.data.size() != m.rows * m.dim) {
        throw ValidationError(std::string(name) + ": shape mismatch");
    }
    if (m.rows > 0 && m.dim != dim) {
        throw ValidationError(std::string(name) + ": dimension mismatch");
    }
    if (m.rows > 0 && !m.normalized) {
        throw ValidationError(std::string(name) + ": rows must be normalized");
    }
}

// group with empty shorthand expanded; validates every caption keeps >= 1 image
std::vector<std::size_t> resolve_group(const BatchTensors& b, bool require_min_two) {
    if (b.txt.rows == 0) throw ValidationError("empty caption set");
    if (b.img.rows == 0) throw ValidationError("empty image set");
    std::vector<std::size_t> group = b.group;
    if (group.empty()) {
        if (b.img.rows != b.txt.rows) {
            throw ValidationError("empty group requires matching image and caption counts");
        }
        group.resize(b.img.rows);
        for (std::size_t i = 0; i < group.size(); ++i) group[i] = i;
    }
    if (group.size() != b.img.rows) {
        throw ValidationError("group size does not match image count");
    }
    std::vector<std::size_t> counts(b.txt.rows, 0);
    for (std::size_t g : group) {
        if (g >= b.txt.rows) throw ValidationError("group index out of range");
        ++counts[g];
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw ValidationError("caption " + std::to_string(c) + " has no images");
        }
        if (require_min_two && counts[c] < 2) {
            throw ValidationError("caption " + std::to_string(c) +
                                  " needs at least two images for the image-to-image loss");
        }
    }
    return group;
}

void require_aligned(const BatchTensors& b) {
    if (b.img.rows != b.txt.rows) {
        throw ValidationError("loss requires one image per caption");
    }
    if (!b.group.empty()) {
        for (std::size_t i = 0; i < b.group.size(); ++i) {
            if (b.group[i] != i) {
                throw ValidationError("loss requires row-aligned batch (identity group)");
            }
        }
    }
}

const EmbeddingMatrix& require_hn_txt(const BatchTensors& b) {
    if (!b.hn_txt || b.hn_txt->rows == 0) throw ValidationError("missing hard-negative texts");
    return *b.hn_txt;
}

const EmbeddingMatrix& require_hn_img(const BatchTensors& b) {
    if (!b.hn_img || b.hn_img->rows == 0) throw ValidationError("missing hard-negative images");
    return *b.hn_img;
}

Matrix* ensure(std::optional<Matrix>& slot, std::size_t rows, std::size_t cols, bool with_grad) {
    if (!with_grad) return nullptr;
    if (!slot) slot.emplace(rows, cols);
    return &*slot;
}

// NegCLIP body shared by negclip, tripletclip and hn_mixed: anchors' images
// against [texts, extras] plus texts against images, both terms at `weight`.
double negclip_into(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                    const EmbeddingMatrix* extras, double tau, double weight, Matrix* d_img,
                    Matrix* d_txt, Matrix* d_extras, double* d_tau) {
    const Targets diag = diagonal_targets(img.rows);
    std::vector<Seg> fwd{{&txt, d_txt}};
    if (extras != nullptr && extras->rows > 0) fwd.push_back({extras, d_extras});
    double v = directional_ce(img, d_img, fwd, diag, tau, weight, -1, d_tau);
    v += directional_ce(txt, d_txt, {{&img, d_img}}, diag, tau, weight, -1, d_tau);
    return v;
}

struct EvalRequest {
    bool with_grad = false;
    bool validate = true;
};

LossValue eval_clip(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                    const SimilarityConfig& cfg, EvalRequest req) {
    if (req.validate) {
        check_tau(cfg);
        if (img.rows == 0) throw ValidationError("empty batch");
        check_matrix(img, "img", img.dim);
        check_matrix(txt, "txt", img.dim);
        if (img.rows != txt.rows) throw ValidationError("loss requires one image per caption");
    }
    LossValue out;
    Matrix* d_img = ensure(out.d_img, img.rows, img.dim, req.with_grad);
    Matrix* d_txt = ensure(out.d_txt, txt.rows, txt.dim, req.with_grad);
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;
    const Targets diag = diagonal_targets(img.rows);
    out.value = directional_ce(img, d_img, {{&txt, d_txt}}, diag, cfg.temperature, 0.5, -1, d_tau);
    out.value +=
        directional_ce(txt, d_txt, {{&img, d_img}}, diag, cfg.temperature, 0.5, -1, d_tau);
    return out;
}

LossValue eval_multi_positive(const BatchTensors& b, EvalRequest req) {
    std::vector<std::size_t> group;
    if (req.validate) {
        check_tau(b.config);
        check_matrix(b.img, "img", b.img.dim);
        check_matrix(b.txt, "txt", b.img.dim);
        group = resolve_group(b, false);
    } else {
        group = b.group;
        if (group.empty()) {
            group.resize(b.img.rows);
            for (std::size_t i = 0; i < group.size(); ++i) group[i] = i;
        }
    }
    std::vector<std::vector<std::size_t>> members(b.txt.rows);
    for (std::size_t i = 0; i < group.size(); ++i) members[group[i]].push_back(i);

    LossValue out;
    Matrix* d_img = ensure(out.d_img, b.img.rows, b.img.dim, req.with_grad);
    Matrix* d_txt = ensure(out.d_txt, b.txt.rows, b.txt.dim, req.with_grad);
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;

    Targets t2i(b.txt.rows);
    for (std::size_t c = 0; c < b.txt.rows; ++c) {
        const double p = 1.0 / static_cast<double>(members[c].size());
        for (std::size_t i : members[c]) t2i[c].push_back({i, p});
    }
    out.value = directional_ce(b.txt, d_txt, {{&b.img, d_img}}, t2i, b.config.temperature, 0.5, -1,
                               d_tau);

    Targets i2t(b.img.rows);
    for (std::size_t i = 0; i < b.img.rows; ++i) i2t[i] = {{group[i], 1.0}};
    out.value += directional_ce(b.img, d_img, {{&b.txt, d_txt}}, i2t, b.config.temperature, 0.5,
                                -1, d_tau);
    return out;
}

LossValue eval_i2i(const BatchTensors& b, EvalRequest req) {
    std::vector<std::size_t> group;
    if (req.validate) {
        check_tau(b.config);
        check_matrix(b.img, "img", b.img.dim);
        if (b.img.rows < 2) throw ValidationError("image-to-image loss needs at least two images");
        group = resolve_group(b, true);
    } else {
        group = b.group;
    }
    std::vector<std::vector<std::size_t>> members(b.txt.rows);
    for (std::size_t i = 0; i < group.size(); ++i) members[group[i]].push_back(i);

    LossValue out;
    Matrix* d_img = ensure(out.d_img, b.img.rows, b.img.dim, req.with_grad);
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;

    Targets targets(b.img.rows);
    for (std::size_t i = 0; i < b.img.rows; ++i) {
        const auto& sib = members[group[i]];
        const double p = 1.0 / static_cast<double>(sib.size() - 1);
        for (std::size_t j : sib) {
            if (j != i) targets[i].push_back({j, p});
        }
    }
    out.value = directional_ce(b.img, d_img, {{&b.img, d_img}}, targets, b.config.temperature,
                               1.0, 0, d_tau);
    return out;
}

LossValue eval_nce_directional(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                               const EmbeddingMatrix* extras, const SimilarityConfig& cfg,
                               EvalRequest req) {
    if (req.validate) {
        check_tau(cfg);
        if (anchors.rows == 0) throw ValidationError("empty batch");
        check_matrix(anchors, "anchors", anchors.dim);
        check_matrix(positives, "positives", anchors.dim);
        if (extras != nullptr) check_matrix(*extras, "extras", anchors.dim);
        if (anchors.rows != positives.rows) {
            throw ValidationError("anchors and positives must be row-aligned");
        }
    }
    LossValue out;
    Matrix* d_a = ensure(out.d_img, anchors.rows, anchors.dim, req.with_grad);
    Matrix* d_p = ensure(out.d_txt, positives.rows, positives.dim, req.with_grad);
    Matrix* d_x = nullptr;
    if (extras != nullptr && extras->rows > 0) {
        d_x = ensure(out.d_hn_txt, extras->rows, extras->dim, req.with_grad);
    }
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;
    std::vector<Seg> segs{{&positives, d_p}};
    if (extras != nullptr && extras->rows > 0) segs.push_back({extras, d_x});
    out.value = directional_ce(anchors, d_a, segs, diagonal_targets(anchors.rows),
                               cfg.temperature, 1.0, -1, d_tau);
    return out;
}

LossValue eval_negclip(const BatchTensors& b, EvalRequest req) {
    const EmbeddingMatrix* hn = b.hn_txt ? &*b.hn_txt : nullptr;
    if (req.validate) {
        check_tau(b.config);
        check_matrix(b.img, "img", b.img.dim);
        check_matrix(b.txt, "txt", b.img.dim);
        require_aligned(b);
        require_hn_txt(b);
        check_matrix(*b.hn_txt, "hn_txt", b.img.dim);
    }
    LossValue out;
    Matrix* d_img = ensure(out.d_img, b.img.rows, b.img.dim, req.with_grad);
    Matrix* d_txt = ensure(out.d_txt, b.txt.rows, b.txt.dim, req.with_grad);
    Matrix* d_hn = nullptr;
    if (hn != nullptr && hn->rows > 0) {
        d_hn = ensure(out.d_hn_txt, hn->rows, hn->dim, req.with_grad);
    }
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;
    out.value =
        negclip_into(b.img, b.txt, hn, b.config.temperature, 1.0, d_img, d_txt, d_hn, d_tau);
    return out;
}

LossValue eval_tripletclip(const BatchTensors& b, EvalRequest req) {
    if (req.validate) {
        check_tau(b.config);
        check_matrix(b.img, "img", b.img.dim);
        check_matrix(b.txt, "txt", b.img.dim);
        require_aligned(b);
        require_hn_txt(b);
        require_hn_img(b);
        check_matrix(*b.hn_txt, "hn_txt", b.img.dim);
        check_matrix(*b.hn_img, "hn_img", b.img.dim);
        if (b.hn_txt->rows != b.hn_img->rows) {
            throw ValidationError("hard-negative texts and images must be row-aligned");
        }
    }
    LossValue out;
    Matrix* d_img = ensure(out.d_img, b.img.rows, b.img.dim, req.with_grad);
    Matrix* d_txt = ensure(out.d_txt, b.txt.rows, b.txt.dim, req.with_grad);
    Matrix* d_hn_txt = ensure(out.d_hn_txt, b.hn_txt->rows, b.hn_txt->dim, req.with_grad);
    Matrix* d_hn_img = ensure(out.d_hn_img, b.hn_img->rows, b.hn_img->dim, req.with_grad);
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;
    const double tau = b.config.temperature;
    out.value = negclip_into(b.img, b.txt, &*b.hn_txt, tau, 1.0, d_img, d_txt, d_hn_txt, d_tau);
    out.value += negclip_into(*b.hn_img, *b.hn_txt, &b.txt, tau, 1.0, d_hn_img, d_hn_txt, d_txt,
                              d_tau);
    return out;
}

LossValue eval_clip_concat(const BatchTensors& b, EvalRequest req) {
    if (req.validate) {
        check_tau(b.config);
        check_matrix(b.img, "img", b.img.dim);
        check_matrix(b.txt, "txt", b.img.dim);
        require_aligned(b);
        require_hn_txt(b);
        require_hn_img(b);
        check_matrix(*b.hn_txt, "hn_txt", b.img.dim);
        check_matrix(*b.hn_img, "hn_img", b.img.dim);
        if (b.hn_txt->rows != b.hn_img->rows) {
            throw ValidationError("hard-negative texts and images must be row-aligned");
        }
    }
    const std::size_t n = b.img.rows;
    const std::size_t m = b.hn_img->rows;
    const std::size_t dim = b.img.dim;

    EmbeddingMatrix cat_img(n + m, dim), cat_txt(n + m, dim);
    cat_img.normalized = cat_txt.normalized = true;
    std::copy(b.img.data.begin(), b.img.data.end(), cat_img.data.begin());
    std::copy(b.hn_img->data.begin(), b.hn_img->data.end(), cat_img.data.begin() + n * dim);
    std::copy(b.txt.data.begin(), b.txt.data.end(), cat_txt.data.begin());
    std::copy(b.hn_txt->data.begin(), b.hn_txt->data.end(), cat_txt.data.begin() + n * dim);

    LossValue inner = eval_clip(cat_img, cat_txt, b.config, {req.with_grad, false});
    LossValue out;
    out.value = inner.value;
    out.d_tau = inner.d_tau;
    if (req.with_grad) {
        out.d_img.emplace(n, dim);
        out.d_txt.emplace(n, dim);
        out.d_hn_img.emplace(m, dim);
        out.d_hn_txt.emplace(m, dim);
        std::copy(inner.d_img->data.begin(), inner.d_img->data.begin() + n * dim,
                  out.d_img->data.begin());
        std::copy(inner.d_img->data.begin() + n * dim, inner.d_img->data.end(),
                  out.d_hn_img->data.begin());
        std::copy(inner.d_txt->data.begin(), inner.d_txt->data.begin() + n * dim,
                  out.d_txt->data.begin());
        std::copy(inner.d_txt->data.begin() + n * dim, inner.d_txt->data.end(),
                  out.d_hn_txt->data.begin());
    }
    return out;
}

LossValue eval_hn_mixed(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                        const EmbeddingMatrix& hn_txt, const EmbeddingMatrix& hn_img,
                        const SimilarityConfig& cfg, EvalRequest req) {
    if (req.validate) {
        check_tau(cfg);
        if (img.rows == 0) throw ValidationError("empty batch");
        check_matrix(img, "img", img.dim);
        check_matrix(txt, "txt", img.dim);
        check_matrix(hn_txt, "hn_txt", img.dim);
        check_matrix(hn_img, "hn_img", img.dim);
        if (img.rows != txt.rows) throw ValidationError("loss requires one image per caption");
        if (hn_txt.rows != hn_img.rows) {
            throw ValidationError("hard-negative texts and images must be row-aligned");
        }
    }
    const double n = static_cast<double>(txt.rows);
    const double m = static_cast<double>(hn_txt.rows);
    const double total = n + m;

    LossValue out;
    Matrix* d_img = ensure(out.d_img, img.rows, img.dim, req.with_grad);
    Matrix* d_txt = ensure(out.d_txt, txt.rows, txt.dim, req.with_grad);
    Matrix* d_hn_txt = nullptr;
    Matrix* d_hn_img = nullptr;
    if (hn_txt.rows > 0) {
        d_hn_txt = ensure(out.d_hn_txt, hn_txt.rows, hn_txt.dim, req.with_grad);
        d_hn_img = ensure(out.d_hn_img, hn_img.rows, hn_img.dim, req.with_grad);
    }
    double* d_tau = req.with_grad ? &out.d_tau : nullptr;

    out.value = negclip_into(img, txt, hn_txt.rows > 0 ? &hn_txt : nullptr, cfg.temperature,
                             n / total, d_img, d_txt, d_hn_txt, d_tau);
    if (hn_txt.rows > 0) {
        out.value += negclip_into(hn_img, hn_txt, &txt, cfg.temperature, m / total, d_hn_img,
                                  d_hn_txt, d_txt, d_tau);
    }
    return out;
}

EmbeddingMatrix empty_like(const EmbeddingMatrix& m) {
    EmbeddingMatrix e(0, m.dim);
    e.normalized = true;
    return e;
}

LossValue eval_kind(LossKind kind, const BatchTensors& b, EvalRequest req) {
    switch (kind) {
        case LossKind::multi_positive:
            return eval_multi_positive(b, req);
        case LossKind::image_to_image:
            return eval_i2i(b, req);
        case LossKind::nce_directional:
            return eval_nce_directional(b.img, b.txt, b.hn_txt ? &*b.hn_txt : nullptr, b.config,
                                        req);
        case LossKind::negclip:
            return eval_negclip(b, req);
        case LossKind::tripletclip:
            return eval_tripletclip(b, req);
        case LossKind::clip_concat:
            return eval_clip_concat(b, req);
        case LossKind::hn_mixed: {
            const EmbeddingMatrix hn_t = b.hn_txt ? *b.hn_txt : empty_like(b.txt);
            const EmbeddingMatrix hn_i = b.hn_img ? *b.hn_img : empty_like(b.img);
            return eval_hn_mixed(b.img, b.txt, hn_t, hn_i, b.config, req);
        }
    }
    throw ValidationError("unknown loss kind");
}

}  // namespace

const char* loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::multi_positive: return "multi_positive";
        case LossKind::image_to_image: return "image_to_image";
        case LossKind::nce_directional: return "nce_directional";
        case LossKind::negclip: return "negclip";
        case LossKind::tripletclip: return "tripletclip";
        case LossKind::clip_concat: return "clip_concat";
        case LossKind::hn_mixed: return "hn_mixed";
    }
    return "?";
}

LossValue loss_clip(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                    const SimilarityConfig& cfg, bool with_grad) {
    return eval_clip(img, txt, cfg, {with_grad, true});
}

LossValue loss_multi_positive(const BatchTensors& b, bool with_grad) {
    return eval_multi_positive(b, {with_grad, true});
}

LossValue loss_i2i(const BatchTensors& b, bool with_grad) {
    return eval_i2i(b, {with_grad, true});
}

LossValue loss_nce_directional(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                               const EmbeddingMatrix* extras, const SimilarityConfig& cfg,
                               bool with_grad) {
    return eval_nce_directional(anchors, positives, extras, cfg, {with_grad, true});
}

LossValue loss_negclip(const BatchTensors& b, bool with_grad) {
    return eval_negclip(b, {with_grad, true});
}

LossValue loss_tripletclip(const BatchTensors& b, bool with_grad) {
    return eval_tripletclip(b, {with_grad, true});
}

LossValue loss_clip_concat(const BatchTensors& b, bool with_grad) {
    return eval_clip_concat(b, {with_grad, true});
}

LossValue loss_hn_mixed(const EmbeddingMatrix& img, const EmbeddingMatrix& txt,
                        const EmbeddingMatrix& hn_txt, const EmbeddingMatrix& hn_img,
                        const SimilarityConfig& cfg, bool with_grad) {
    return eval_hn_mixed(img, txt, hn_txt, hn_img, cfg, {with_grad, true});
}

LossValue loss_hn_mixed(const BatchTensors& b, bool with_grad) {
    return eval_kind(LossKind::hn_mixed, b, {with_grad, true});
}

GradCheckReport check_gradients(LossKind kind, const BatchTensors& b, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw ValidationError("step must be positive and finite");
    }
    // full analytic pass, with validation
    const LossValue analytic = eval_kind(kind, b, {true, true});

    BatchTensors work = b;
    struct Slot {
        EmbeddingMatrix* m;
        const Matrix* grad;
    };
    std::vector<Slot> slots;
    slots.push_back({&work.img, analytic.d_img ? &*analytic.d_img : nullptr});
    slots.push_back({&work.txt, analytic.d_txt ? &*analytic.d_txt : nullptr});
    if (work.hn_txt && analytic.d_hn_txt) slots.push_back({&*work.hn_txt, &*analytic.d_hn_txt});
    if (work.hn_img && analytic.d_hn_img) slots.push_back({&*work.hn_img, &*analytic.d_hn_img});

    GradCheckReport report;
    constexpr double kFloor = 1e-7;
    for (const auto& slot : slots) {
        if (slot.grad == nullptr) continue;
        for (std::size_t i = 0; i < slot.m->data.size(); ++i) {
            const double saved = slot.m->data[i];
            slot.m->data[i] = saved + step;
            const double up = eval_kind(kind, work, {false, false}).value;
            slot.m->data[i] = saved - step;
            const double dn = eval_kind(kind, work, {false, false}).value;
            slot.m->data[i] = saved;

            const double numeric = (up - dn) / (2.0 * step);
            const double exact = slot.grad->data[i];
            const double mag = std::max(std::abs(numeric), std::abs(exact));
            if (mag < kFloor) {
                ++report.skipped;
                continue;
            }
            const double rel = std::abs(exact - numeric) / mag;
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.checked;
        }
    }
    return report;
}

BatchTensors random_batch(Rng& rng, std::size_t n_captions, std::size_t dim, std::size_t n_plus,
                          bool with_hn) {
    if (n_captions == 0 || dim == 0 || n_plus == 0) {
        throw ValidationError("batch dimensions must be positive");
    }
    auto fill = [&](EmbeddingMatrix& m) {
        for (double& v : m.data) v = rng.next_gaussian();
        m = normalize_rows(m);
    };
    BatchTensors b;
    b.img = EmbeddingMatrix(n_captions * n_plus, dim);
    b.txt = EmbeddingMatrix(n_captions, dim);
    fill(b.img);
    fill(b.txt);
    b.group.resize(b.img.rows);
    for (std::size_t c = 0; c < n_captions; ++c) {
        for (std::size_t k = 0; k < n_plus; ++k) b.group[c * n_plus + k] = c;
    }
    if (with_hn) {
        EmbeddingMatrix hn_t(n_captions, dim), hn_i(n_captions, dim);
        fill(hn_t);
        fill(hn_i);
        b.hn_txt = std::move(hn_t);
        b.hn_img = std::move(hn_i);
    }
    return b;
}

}  // namespace polygen
