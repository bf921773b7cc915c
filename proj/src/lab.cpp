#include "polygen/lab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "polygen/errors.hpp"
#include "polygen/kernels.hpp"
#include "polygen/losses.hpp"
#include "polygen/metrics.hpp"
#include "polygen/rng.hpp"
#include "polygen/sampler.hpp"

namespace polygen {

namespace {

void check_world_config(const SyntheticWorldConfig& cfg, std::size_t n_axes) {
    if (cfg.generators < 1) throw ValidationError("need at least one generator");
    if (cfg.n_plus < 1) throw ValidationError("need at least one image per caption");
    if (cfg.dim < 4) throw ValidationError("embedding dimension must be at least 4");
    if (cfg.concepts < 1) throw ValidationError("need at least one concept");
    if (cfg.n_pairs < 1) throw ValidationError("need at least one caption pair");
    for (double v : {cfg.alpha, cfg.sigma, cfg.sigma_text, cfg.hn_strength}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ValidationError("world strengths must be finite and nonnegative");
        }
    }
    if (cfg.generators + n_axes + 1 > cfg.dim) {
        throw ValidationError(
            "dimension too small to hold fingerprints, axes and a concept subspace");
    }
}

void normalize_into(double* row, std::size_t d) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw ValidationError("degenerate zero vector in world synthesis");
    for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
}

// Orthonormal rows by Gram-Schmidt over seeded gaussian draws.
Matrix orthonormal_rows(std::size_t count, std::size_t d, Rng& rng) {
    Matrix out(count, d);
    std::vector<double> v(d);
    for (std::size_t r = 0; r < count; ++r) {
        while (true) {
            for (auto& x : v) x = rng.next_gaussian();
            for (std::size_t p = 0; p < r; ++p) {
                const double proj = kernels::dot(v.data(), out.row(p), d);
                kernels::axpy(-proj, out.row(p), v.data(), d);
            }
            double sq = 0.0;
            for (double x : v) sq += x * x;
            if (sq > 1e-12) {
                const double inv = 1.0 / std::sqrt(sq);
                for (std::size_t j = 0; j < d; ++j) out.at(r, j) = v[j] * inv;
                break;
            }
        }
    }
    return out;
}

// Fills samples, texts, images and labels from the world's basis. Shared by
// generate_world and derive_world so both use identical draw order.
void populate(World& w, Rng& rng) {
    const auto& cfg = w.cfg;
    const std::size_t d = cfg.dim;
    const std::size_t hn_per = cfg.with_hn ? cfg.n_plus : 0;
    const std::size_t img_rows = cfg.n_pairs * (cfg.n_plus + hn_per);
    const std::size_t txt_rows = cfg.n_pairs * (cfg.with_hn ? 2 : 1);

    w.images = EmbeddingMatrix(img_rows, d);
    w.texts = EmbeddingMatrix(txt_rows, d);
    w.samples.clear();
    w.samples.reserve(cfg.n_pairs);
    w.sample_concept.resize(cfg.n_pairs);
    w.generator_labels.assign(img_rows, 0);
    w.hn_text_row.assign(cfg.n_pairs, std::nullopt);

    std::size_t img_cursor = 0;
    std::size_t hn_txt_cursor = cfg.n_pairs;
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        const std::size_t ci = i % cfg.concepts;
        w.sample_concept[i] = ci;
        const double* z = w.concept_dirs.row(ci);

        PairedSample s;
        s.base.id = "pair-" + std::to_string(i);
        s.base.text = "a scene of concept-" + std::to_string(ci) + " (sample " +
                      std::to_string(i) + ")";
        s.base.concept_name = "concept-" + std::to_string(ci);

        double* trow = w.texts.row(i);
        for (std::size_t j = 0; j < d; ++j) trow[j] = z[j] + cfg.sigma_text * rng.next_gaussian();
        normalize_into(trow, d);

        for (std::size_t k = 0; k < cfg.n_plus; ++k) {
            const std::size_t g = (i + k) % cfg.generators;
            double* irow = w.images.row(img_cursor);
            for (std::size_t j = 0; j < d; ++j) {
                irow[j] = z[j] + cfg.alpha * w.fingerprints.at(g, j) +
                          cfg.sigma * rng.next_gaussian();
            }
            normalize_into(irow, d);
            w.generator_labels[img_cursor] = g;
            s.positives.push_back(img_cursor++);
        }

        if (cfg.with_hn) {
            const std::size_t ai = static_cast<std::size_t>(rng.next_below(w.axis_names.size()));
            std::vector<double> hn_sem(d);
            for (std::size_t j = 0; j < d; ++j) {
                hn_sem[j] = z[j] + cfg.hn_strength * w.axis_dirs.at(ai, j);
            }
            CaptionRecord hn;
            hn.id = s.base.id + "-hn";
            hn.text = "a scene of concept-" + std::to_string(ci) + " altered along " +
                      w.axis_names[ai] + " (sample " + std::to_string(i) + ")";
            hn.concept_name = s.base.concept_name;
            hn.axis = w.axis_names[ai];
            hn.hn_of = s.base.id;

            double* hrow = w.texts.row(hn_txt_cursor);
            for (std::size_t j = 0; j < d; ++j) {
                hrow[j] = hn_sem[j] + cfg.sigma_text * rng.next_gaussian();
            }
            normalize_into(hrow, d);
            w.hn_text_row[i] = hn_txt_cursor++;

            for (std::size_t k = 0; k < cfg.n_plus; ++k) {
                const std::size_t g = (i + k) % cfg.generators;
                double* irow = w.images.row(img_cursor);
                for (std::size_t j = 0; j < d; ++j) {
                    irow[j] = hn_sem[j] + cfg.alpha * w.fingerprints.at(g, j) +
                              cfg.sigma * rng.next_gaussian();
                }
                normalize_into(irow, d);
                w.generator_labels[img_cursor] = g;
                s.negative_images.push_back(img_cursor++);
            }
            s.negative = hn;
        }
        w.samples.push_back(std::move(s));
    }
    w.images.normalized = true;
    w.texts.normalized = true;
}

Matrix gather_images(const EmbeddingMatrix& src, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), src.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(src.row(rows[i]), src.row(rows[i]) + src.dim, out.row(i));
    }
    return out;
}

struct Forward {
    Matrix x;
    std::vector<double> norms;
    EmbeddingMatrix y;
};

Forward run_forward(const Matrix& w, Matrix x) {
    const std::size_t n = x.rows, d_in = x.cols, d_out = w.rows;
    Forward f;
    f.y = EmbeddingMatrix(n, d_out);
    f.norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double* y = f.y.row(i);
        for (std::size_t r = 0; r < d_out; ++r) y[r] = kernels::dot(w.row(r), x.row(i), d_in);
        double sq = 0.0;
        for (std::size_t r = 0; r < d_out; ++r) sq += y[r] * y[r];
        const double norm = std::sqrt(sq);
        if (norm < 1e-12) throw ValidationError("encoder collapsed a row to zero");
        f.norms[i] = norm;
        for (std::size_t r = 0; r < d_out; ++r) y[r] /= norm;
    }
    f.y.normalized = true;
    f.x = std::move(x);
    return f;
}

// Chain rule through row normalization then the linear map; adds into dw.
void backward_into(const Forward& f, const Matrix& dy, Matrix& dw) {
    const std::size_t n = f.x.rows, d_in = f.x.cols, d_out = dw.rows;
    std::vector<double> dz(d_out);
    for (std::size_t i = 0; i < n; ++i) {
        const double* g = dy.row(i);
        const double* y = f.y.row(i);
        const double gy = kernels::dot(g, y, d_out);
        for (std::size_t r = 0; r < d_out; ++r) dz[r] = (g[r] - gy * y[r]) / f.norms[i];
        for (std::size_t r = 0; r < d_out; ++r) {
            kernels::axpy(dz[r], f.x.row(i), dw.row(r), d_in);
        }
    }
}

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(double* params, const double* grad, std::size_t n, double lr) {
        ++t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

double lr_at(const ToyTrainConfig& cfg, std::size_t epoch) {
    if (cfg.warmup_epochs > 0 && epoch < cfg.warmup_epochs) {
        return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
    }
    const std::size_t span = cfg.epochs - cfg.warmup_epochs;
    if (span == 0) return cfg.lr;
    const double t = static_cast<double>(epoch - cfg.warmup_epochs) / static_cast<double>(span);
    return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

EmbeddingMatrix empty_like(std::size_t dim) {
    EmbeddingMatrix m(0, dim);
    m.normalized = true;
    return m;
}

constexpr double kLogTauMin = -4.605170185988091;  // ln(0.01)
constexpr double kLogTauMax = 1.6094379124341003;  // ln(5)

}  // namespace

World generate_world(const SyntheticWorldConfig& cfg) {
    const auto axes = default_axes().axes;
    check_world_config(cfg, axes.size());
    World w;
    w.cfg = cfg;
    w.axis_names = axes;
    Rng rng(cfg.seed);
    Matrix basis = orthonormal_rows(cfg.generators + axes.size(), cfg.dim, rng);
    w.fingerprints = Matrix(cfg.generators, cfg.dim);
    w.axis_dirs = Matrix(axes.size(), cfg.dim);
    std::copy(basis.data.begin(), basis.data.begin() + cfg.generators * cfg.dim,
              w.fingerprints.data.begin());
    std::copy(basis.data.begin() + cfg.generators * cfg.dim, basis.data.end(),
              w.axis_dirs.data.begin());

    // Concepts: unit vectors in the orthogonal complement of the basis.
    w.concept_dirs = Matrix(cfg.concepts, cfg.dim);
    std::vector<double> v(cfg.dim);
    for (std::size_t c = 0; c < cfg.concepts; ++c) {
        while (true) {
            for (auto& x : v) x = rng.next_gaussian();
            for (std::size_t p = 0; p < basis.rows; ++p) {
                const double proj = kernels::dot(v.data(), basis.row(p), cfg.dim);
                kernels::axpy(-proj, basis.row(p), v.data(), cfg.dim);
            }
            double sq = 0.0;
            for (double x : v) sq += x * x;
            if (sq > 1e-12) {
                const double inv = 1.0 / std::sqrt(sq);
                for (std::size_t j = 0; j < cfg.dim; ++j) w.concept_dirs.at(c, j) = v[j] * inv;
                break;
            }
        }
    }
    populate(w, rng);
    return w;
}

World derive_world(const World& base, std::uint64_t seed, std::size_t n_pairs,
                   std::optional<std::size_t> m_override) {
    const std::size_t m_eff = m_override.value_or(base.cfg.generators);
    if (m_eff < 1 || m_eff > base.cfg.generators) {
        throw ValidationError("generator override outside the base world's range");
    }
    World w;
    w.cfg = base.cfg;
    w.cfg.seed = seed;
    w.cfg.n_pairs = n_pairs;
    w.cfg.generators = m_eff;
    w.axis_names = base.axis_names;
    w.axis_dirs = base.axis_dirs;
    w.concept_dirs = base.concept_dirs;
    w.fingerprints = Matrix(m_eff, base.cfg.dim);
    std::copy(base.fingerprints.data.begin(),
              base.fingerprints.data.begin() + m_eff * base.cfg.dim,
              w.fingerprints.data.begin());
    check_world_config(w.cfg, w.axis_names.size());
    Rng rng(seed);
    populate(w, rng);
    return w;
}

double ToyEncoder::temperature() const { return std::exp(log_tau); }

EmbeddingMatrix ToyEncoder::encode(const Matrix& rows, bool image_side) const {
    Matrix copy = rows;
    return run_forward(image_side ? w_img : w_txt, std::move(copy)).y;
}

EmbeddingMatrix ToyEncoder::encode_images(const EmbeddingMatrix& raw) const {
    Matrix x(raw.rows, raw.dim);
    x.data = raw.data;
    return encode(x, true);
}

EmbeddingMatrix ToyEncoder::encode_texts(const EmbeddingMatrix& raw) const {
    Matrix x(raw.rows, raw.dim);
    x.data = raw.data;
    return encode(x, false);
}

ToyEncoder make_encoder(std::size_t dim, std::uint64_t seed) {
    if (dim < 1) throw ValidationError("encoder dimension must be positive");
    ToyEncoder enc;
    enc.w_img = Matrix(dim, dim);
    enc.w_txt = Matrix(dim, dim);
    Rng rng(seed);
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            enc.w_img.at(r, c) = (r == c ? 1.0 : 0.0) + 0.01 * rng.next_gaussian();
        }
    }
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            enc.w_txt.at(r, c) = (r == c ? 1.0 : 0.0) + 0.01 * rng.next_gaussian();
        }
    }
    enc.log_tau = std::log(0.07);
    return enc;
}

TrainResult train_toy(const World& world, const ToyTrainConfig& cfg) {
    if (cfg.epochs < 1) throw ValidationError("need at least one epoch");
    if (cfg.batch_size < 1) throw ValidationError("batch size must be positive");
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) {
        throw ValidationError("learning rate must be finite and nonnegative");
    }
    if (cfg.warmup_epochs > cfg.epochs) throw ValidationError("warmup exceeds epochs");
    if (cfg.i2i_weight < 0.0) throw ValidationError("regularizer weight must be nonnegative");
    if (cfg.i2i_weight > 0.0 && world.cfg.n_plus < 2) {
        throw ValidationError("image-to-image regularizer needs at least two images per caption");
    }
    if (world.cfg.n_pairs < 5) throw ValidationError("world too small for retrieval eval");
    bool any_hn = false;
    for (const auto& s : world.samples) any_hn |= s.negative.has_value();
    if (cfg.use_hn && !any_hn) {
        throw ValidationError("hard-negative training needs a world with negatives");
    }
    if (cfg.use_hn && cfg.epochs > cfg.schedule.epochs) {
        throw ValidationError("training epochs exceed the curriculum's span");
    }

    const std::size_t d = world.cfg.dim;
    TrainResult result;
    result.encoder = make_encoder(d, mix_seed(cfg.seed, 0xE0C0DE));
    ToyEncoder& enc = result.encoder;

    AdamState adam_img(d * d), adam_txt(d * d), adam_tau(1);
    std::unordered_map<std::string, std::size_t> id_to_sample, hn_owner;
    for (std::size_t i = 0; i < world.samples.size(); ++i) {
        id_to_sample[world.samples[i].base.id] = i;
        if (world.samples[i].negative) hn_owner[world.samples[i].negative->id] = i;
    }

    LeftoverQueue queue;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(cfg, epoch);

        // Each unit of work: positive sample indices + hard-negative owners.
        std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> work;
        if (cfg.use_hn) {
            auto plans =
                plan_epoch(world.samples, cfg.schedule, epoch, cfg.batch_size, cfg.seed, queue);
            result.report.realized_hn_ratio.push_back(realized_hn_fraction(plans));
            for (const auto& plan : plans) {
                std::vector<std::size_t> pos, hn;
                for (const auto& id : plan.positive_ids) pos.push_back(id_to_sample.at(id));
                for (const auto& id : plan.hn_ids) hn.push_back(hn_owner.at(id));
                work.emplace_back(std::move(pos), std::move(hn));
            }
        } else {
            result.report.realized_hn_ratio.push_back(0.0);
            std::vector<std::size_t> order(world.samples.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            Rng shuffler(mix_seed(cfg.seed, epoch));
            shuffler.shuffle(order);
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(start + cfg.batch_size, order.size());
                work.emplace_back(
                    std::vector<std::size_t>(order.begin() + start, order.begin() + end),
                    std::vector<std::size_t>{});
            }
        }

        double epoch_loss = 0.0;
        for (const auto& [pos, hn] : work) {
            // Captions expand to one row per image; texts are encoded once
            // per unique caption and copied across their image rows.
            std::vector<std::size_t> img_rows;
            std::vector<std::size_t> owner;  // image row -> index into pos
            for (std::size_t p = 0; p < pos.size(); ++p) {
                for (std::size_t r : world.samples[pos[p]].positives) {
                    img_rows.push_back(r);
                    owner.push_back(p);
                }
            }
            Matrix txt_in(pos.size(), d);
            for (std::size_t p = 0; p < pos.size(); ++p) {
                std::copy(world.texts.row(pos[p]), world.texts.row(pos[p]) + d, txt_in.row(p));
            }
            Forward f_img = run_forward(enc.w_img, gather_images(world.images, img_rows));
            Forward f_txt = run_forward(enc.w_txt, std::move(txt_in));

            const SimilarityConfig sim{enc.temperature()};
            double loss_value = 0.0;
            double d_tau = 0.0;
            Matrix d_img(f_img.y.rows, d);
            Matrix d_txt(f_txt.y.rows, d);
            Matrix dw_img(d, d), dw_txt(d, d);

            BatchTensors b;
            b.img = f_img.y;
            b.txt = f_txt.y;
            b.group = owner;
            b.config = sim;
            auto mp = loss_multi_positive(b, true);
            loss_value += mp.value;
            d_tau += mp.d_tau;
            d_img.data = mp.d_img->data;
            d_txt.data = mp.d_txt->data;

            if (cfg.i2i_weight > 0.0) {
                auto ii = loss_i2i(b, true);
                loss_value += cfg.i2i_weight * ii.value;
                d_tau += cfg.i2i_weight * ii.d_tau;
                for (std::size_t i = 0; i < d_img.data.size(); ++i) {
                    d_img.data[i] += cfg.i2i_weight * ii.d_img->data[i];
                }
            }

            // Hard-negative term over one representative image per caption,
            // rotated across epochs. Expanding captions to all their images
            // instead would put duplicate text rows into the one-hot softmax,
            // turning a caption's own sibling images into false negatives.
            if (cfg.use_hn) {
                std::vector<std::size_t> rep_in_batch(pos.size());
                std::size_t off = 0;
                for (std::size_t p = 0; p < pos.size(); ++p) {
                    const std::size_t n_imgs = world.samples[pos[p]].positives.size();
                    rep_in_batch[p] = off + (epoch + pos[p]) % n_imgs;
                    off += n_imgs;
                }
                EmbeddingMatrix rep_img(pos.size(), d);
                for (std::size_t p = 0; p < pos.size(); ++p) {
                    std::copy(f_img.y.row(rep_in_batch[p]), f_img.y.row(rep_in_batch[p]) + d,
                              rep_img.row(p));
                }
                rep_img.normalized = true;

                std::optional<Forward> f_hn_img, f_hn_txt;
                EmbeddingMatrix hn_txt_enc = empty_like(d);
                EmbeddingMatrix hn_img_enc = empty_like(d);
                if (!hn.empty()) {
                    Matrix hn_txt_in(hn.size(), d);
                    for (std::size_t h = 0; h < hn.size(); ++h) {
                        const std::size_t trow = *world.hn_text_row[hn[h]];
                        std::copy(world.texts.row(trow), world.texts.row(trow) + d,
                                  hn_txt_in.row(h));
                    }
                    f_hn_txt = run_forward(enc.w_txt, std::move(hn_txt_in));
                    hn_txt_enc = f_hn_txt->y;
                    if (cfg.hn_images) {
                        std::vector<std::size_t> hn_img_rows;
                        for (std::size_t h = 0; h < hn.size(); ++h) {
                            const auto& s = world.samples[hn[h]];
                            hn_img_rows.push_back(
                                s.negative_images[(epoch + hn[h]) % s.negative_images.size()]);
                        }
                        f_hn_img =
                            run_forward(enc.w_img, gather_images(world.images, hn_img_rows));
                        hn_img_enc = f_hn_img->y;
                    }
                }

                LossValue hl;
                if (cfg.hn_images) {
                    hl = loss_hn_mixed(rep_img, f_txt.y, hn_txt_enc, hn_img_enc, sim, true);
                } else if (!hn.empty()) {
                    BatchTensors nb;
                    nb.img = rep_img;
                    nb.txt = f_txt.y;
                    nb.hn_txt = hn_txt_enc;
                    nb.config = sim;
                    hl = loss_negclip(nb, true);
                } else {
                    hl = loss_clip(rep_img, f_txt.y, sim, true);
                }
                loss_value += hl.value;
                d_tau += hl.d_tau;
                for (std::size_t p = 0; p < pos.size(); ++p) {
                    kernels::axpy(1.0, hl.d_img->row(p), d_img.row(rep_in_batch[p]), d);
                }
                for (std::size_t i = 0; i < d_txt.data.size(); ++i) {
                    d_txt.data[i] += hl.d_txt->data[i];
                }
                if (f_hn_txt && hl.d_hn_txt) backward_into(*f_hn_txt, *hl.d_hn_txt, dw_txt);
                if (f_hn_img && hl.d_hn_img) backward_into(*f_hn_img, *hl.d_hn_img, dw_img);
            }

            backward_into(f_img, d_img, dw_img);
            backward_into(f_txt, d_txt, dw_txt);
            adam_img.step(enc.w_img.data.data(), dw_img.data.data(), d * d, lr);
            adam_txt.step(enc.w_txt.data.data(), dw_txt.data.data(), d * d, lr);
            const double d_log_tau = d_tau * sim.temperature;
            adam_tau.step(&enc.log_tau, &d_log_tau, 1, lr);
            enc.log_tau = std::clamp(enc.log_tau, kLogTauMin, kLogTauMax);

            epoch_loss += loss_value;
        }
        result.report.epoch_loss.push_back(work.empty() ? 0.0
                                                        : epoch_loss / static_cast<double>(work.size()));
    }

    // Post-training evaluation.
    std::set<std::size_t> distinct(world.generator_labels.begin(), world.generator_labels.end());
    if (distinct.size() >= 2) {
        result.report.probe_valid = true;
        result.report.probe_accuracy = probe_generator(
            enc.encode_images(world.images), world.generator_labels, mix_seed(cfg.seed, 0xBEEF));
    }

    World eval = derive_world(world, mix_seed(cfg.seed, 0xE7A1), world.cfg.n_pairs);
    std::vector<std::size_t> first_rows;
    for (const auto& s : eval.samples) first_rows.push_back(s.positives.front());
    Matrix img_first = gather_images(eval.images, first_rows);
    Matrix txt_first(eval.cfg.n_pairs, d);
    for (std::size_t i = 0; i < eval.cfg.n_pairs; ++i) {
        std::copy(eval.texts.row(i), eval.texts.row(i) + d, txt_first.row(i));
    }
    auto ret = eval_retrieval(enc.encode(img_first, true), enc.encode(txt_first, false));
    result.report.recall1 = ret.recall1;
    result.report.recall5 = ret.recall5;

    bool eval_hn = false;
    for (const auto& s : eval.samples) eval_hn |= s.negative.has_value();
    if (eval_hn) result.report.hn_discrimination = hn_discrimination(enc, eval);
    return result;
}

double probe_generator(const EmbeddingMatrix& features, const std::vector<std::size_t>& labels,
                       std::uint64_t seed) {
    const std::size_t n = features.rows, d = features.dim;
    if (labels.size() != n) throw ValidationError("label count does not match feature rows");
    if (n < 10) throw ValidationError("too few samples to split for probing");
    std::map<std::size_t, std::size_t> remap;
    for (std::size_t l : labels) remap.emplace(l, 0);
    if (remap.size() < 2) throw ValidationError("probe needs at least two classes");
    std::size_t next = 0;
    for (auto& [label, idx] : remap) idx = next++;
    const std::size_t k = remap.size();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_train = std::max<std::size_t>(1, n * 7 / 10);

    Matrix w(k, d);
    std::vector<double> b(k, 0.0);
    AdamState adam_w(k * d), adam_b(k);
    std::vector<double> logits(k), p(k);
    Matrix dw(k, d);
    std::vector<double> db(k);
    for (std::size_t iter = 0; iter < 300; ++iter) {
        std::fill(dw.data.begin(), dw.data.end(), 0.0);
        std::fill(db.begin(), db.end(), 0.0);
        for (std::size_t idx = 0; idx < n_train; ++idx) {
            const std::size_t i = order[idx];
            const double* x = features.row(i);
            double mx = -1e300;
            for (std::size_t c = 0; c < k; ++c) {
                logits[c] = kernels::dot(w.row(c), x, d) + b[c];
                mx = std::max(mx, logits[c]);
            }
            double z = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                p[c] = std::exp(logits[c] - mx);
                z += p[c];
            }
            const std::size_t y = remap.at(labels[i]);
            for (std::size_t c = 0; c < k; ++c) {
                const double coeff = p[c] / z - (c == y ? 1.0 : 0.0);
                kernels::axpy(coeff, x, dw.row(c), d);
                db[c] += coeff;
            }
        }
        const double inv = 1.0 / static_cast<double>(n_train);
        for (auto& g : dw.data) g *= inv;
        for (auto& g : db) g *= inv;
        adam_w.step(w.data.data(), dw.data.data(), k * d, 0.05);
        adam_b.step(b.data(), db.data(), k, 0.05);
    }

    std::size_t hits = 0, total = 0;
    for (std::size_t idx = n_train; idx < n; ++idx) {
        const std::size_t i = order[idx];
        const double* x = features.row(i);
        std::size_t best = 0;
        double best_v = -1e300;
        for (std::size_t c = 0; c < k; ++c) {
            const double v = kernels::dot(w.row(c), x, d) + b[c];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        hits += best == remap.at(labels[i]);
        ++total;
    }
    if (total == 0) throw ValidationError("probe split left no held-out samples");
    return static_cast<double>(hits) / static_cast<double>(total);
}

RetrievalResult eval_retrieval(const EmbeddingMatrix& img, const EmbeddingMatrix& txt) {
    if (img.rows != txt.rows) throw ValidationError("retrieval needs row-aligned pairs");
    if (img.rows < 5) throw ValidationError("retrieval eval needs at least five pairs");
    const Matrix sim = cosine_similarity_matrix(img, txt);
    Matrix simt(sim.cols, sim.rows);
    for (std::size_t i = 0; i < sim.rows; ++i) {
        for (std::size_t j = 0; j < sim.cols; ++j) simt.at(j, i) = sim.at(i, j);
    }
    RetrievalResult out;
    out.recall1 = 0.5 * (recall_at_k(sim, 1) + recall_at_k(simt, 1));
    out.recall5 = 0.5 * (recall_at_k(sim, 5) + recall_at_k(simt, 5));
    return out;
}

double hn_discrimination(const ToyEncoder& enc, const World& world) {
    std::vector<std::size_t> with_hn;
    for (std::size_t i = 0; i < world.samples.size(); ++i) {
        if (world.samples[i].negative) with_hn.push_back(i);
    }
    if (with_hn.empty()) throw ValidationError("world has no hard negatives to discriminate");
    const std::size_t d = world.cfg.dim;
    Matrix img_in(with_hn.size(), d);
    Matrix base_in(with_hn.size(), d);
    Matrix hn_in(with_hn.size(), d);
    for (std::size_t i = 0; i < with_hn.size(); ++i) {
        const auto& s = world.samples[with_hn[i]];
        std::copy(world.images.row(s.positives.front()),
                  world.images.row(s.positives.front()) + d, img_in.row(i));
        std::copy(world.texts.row(with_hn[i]), world.texts.row(with_hn[i]) + d, base_in.row(i));
        const std::size_t hrow = *world.hn_text_row[with_hn[i]];
        std::copy(world.texts.row(hrow), world.texts.row(hrow) + d, hn_in.row(i));
    }
    auto img_e = enc.encode(img_in, true);
    auto base_e = enc.encode(base_in, false);
    auto hn_e = enc.encode(hn_in, false);
    std::size_t wins = 0;
    for (std::size_t i = 0; i < with_hn.size(); ++i) {
        const double s_base = kernels::dot(img_e.row(i), base_e.row(i), d);
        const double s_hn = kernels::dot(img_e.row(i), hn_e.row(i), d);
        wins += s_base > s_hn;
    }
    return static_cast<double>(wins) / static_cast<double>(with_hn.size());
}

}  // namespace polygen
