#include "polygen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "polygen/errors.hpp"
#include "polygen/kernels.hpp"
#include "polygen/rng.hpp"

namespace polygen {

namespace {

void check_unit(const std::vector<double>& v, const char* name) {
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw ValidationError(std::string(name) + " has non-finite entry");
        sq += x * x;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
        throw ValidationError(std::string(name) + " is not unit-norm");
    }
}

double inertia_of(const EmbeddingMatrix& pts, const Matrix& centroids,
                  const std::vector<std::size_t>& assignment) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.rows; ++i) {
        total += kernels::squared_distance(pts.row(i), centroids.row(assignment[i]), pts.dim);
    }
    return total;
}

// Nearest centroid, lowest index on ties.
std::size_t nearest(const double* x, const Matrix& centroids, std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        const double d = kernels::squared_distance(x, centroids.row(c), dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

double clipscore(const std::vector<double>& img_row, const std::vector<double>& txt_row,
                 double w) {
    if (img_row.size() != txt_row.size()) throw ValidationError("clipscore dimension mismatch");
    if (img_row.empty()) throw ValidationError("clipscore on empty vectors");
    if (!(w > 0.0)) throw ValidationError("clipscore scale must be positive");
    check_unit(img_row, "image row");
    check_unit(txt_row, "text row");
    const double cos = kernels::dot(img_row.data(), txt_row.data(), img_row.size());
    return w * std::max(cos, 0.0);
}

double recognizability(const EmbeddingMatrix& imgs, const EmbeddingMatrix& txts, double w) {
    if (imgs.rows != txts.rows) throw ValidationError("image/text row counts differ");
    if (imgs.dim != txts.dim) throw ValidationError("image/text dimensions differ");
    if (imgs.rows == 0) throw ValidationError("no pairs to score");
    if (!(w > 0.0)) throw ValidationError("clipscore scale must be positive");
    if (!imgs.normalized || !txts.normalized) {
        throw ValidationError("recognizability needs unit-norm embeddings");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < imgs.rows; ++i) {
        const double cos = kernels::dot(imgs.row(i), txts.row(i), imgs.dim);
        total += w * std::max(cos, 0.0);
    }
    return total / static_cast<double>(imgs.rows);
}

ClusterModel kmeans_fit(const EmbeddingMatrix& txts, std::size_t k, std::uint64_t seed,
                        std::size_t iters) {
    const std::size_t n = txts.rows;
    const std::size_t d = txts.dim;
    if (k == 0) throw ValidationError("cluster count must be positive");
    if (k > n) throw ValidationError("cluster count exceeds point count");
    if (iters == 0) throw ValidationError("need at least one iteration");

    ClusterModel model;
    model.k = k;
    model.seed = seed;
    model.centroids = Matrix(k, d);
    Rng rng(seed);

    // k-means++ seeding: first pick uniform, then proportional to the
    // squared distance to the nearest chosen centroid.
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.next_below(n));
    std::copy(txts.row(first), txts.row(first) + d, model.centroids.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dd = kernels::squared_distance(txts.row(i), model.centroids.row(c - 1), d);
            dist2[i] = std::min(dist2[i], dd);
            total += dist2[i];
        }
        std::size_t pick;
        if (total > 0.0) {
            const double u = rng.next_double() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.next_below(n));
        }
        std::copy(txts.row(pick), txts.row(pick) + d, model.centroids.row(c));
    }

    model.assignment.assign(n, 0);
    std::vector<std::size_t> counts(k, 0);
    double prev_inertia = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < iters; ++it) {
        bool changed = it == 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = nearest(txts.row(i), model.centroids, d);
            if (a != model.assignment[i]) changed = true;
            model.assignment[i] = a;
        }
        const double inertia = inertia_of(txts, model.centroids, model.assignment);
        model.inertia_trace.push_back(inertia);
        model.iterations = it + 1;
        if (!changed) break;
        if (prev_inertia < std::numeric_limits<double>::infinity() && prev_inertia > 0.0 &&
            (prev_inertia - inertia) / prev_inertia < 1e-6) {
            break;
        }
        prev_inertia = inertia;

        std::fill(counts.begin(), counts.end(), 0);
        Matrix sums(k, d);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = model.assignment[i];
            ++counts[a];
            kernels::axpy(1.0, txts.row(i), sums.row(a), d);
        }
        std::vector<bool> claimed(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                const double inv = 1.0 / static_cast<double>(counts[c]);
                for (std::size_t j = 0; j < d; ++j) model.centroids.at(c, j) = sums.at(c, j) * inv;
            } else {
                // Re-seed on the point farthest from its own centroid.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (claimed[i]) continue;
                    const double dd = kernels::squared_distance(
                        txts.row(i), model.centroids.row(model.assignment[i]), d);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                claimed[far] = true;
                std::copy(txts.row(far), txts.row(far) + d, model.centroids.row(c));
            }
        }
    }
    return model;
}

std::vector<double> cluster_spreads(const EmbeddingMatrix& imgs, const ClusterModel& model,
                                    const std::vector<std::size_t>& img_to_caption) {
    if (img_to_caption.size() != imgs.rows) {
        throw ValidationError("image-to-caption map length mismatch");
    }
    for (std::size_t c : img_to_caption) {
        if (c >= model.assignment.size()) {
            throw ValidationError("image maps to caption " + std::to_string(c) +
                                  " outside the cluster model");
        }
    }
    const std::size_t d = imgs.dim;
    Matrix means(model.k, d);
    std::vector<std::size_t> counts(model.k, 0);
    for (std::size_t i = 0; i < imgs.rows; ++i) {
        const std::size_t c = model.assignment[img_to_caption[i]];
        ++counts[c];
        kernels::axpy(1.0, imgs.row(i), means.row(c), d);
    }
    for (std::size_t c = 0; c < model.k; ++c) {
        if (counts[c] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < d; ++j) means.at(c, j) *= inv;
    }
    std::vector<double> acc(model.k, 0.0);
    for (std::size_t i = 0; i < imgs.rows; ++i) {
        const std::size_t c = model.assignment[img_to_caption[i]];
        acc[c] += kernels::squared_distance(imgs.row(i), means.row(c), d);
    }
    std::vector<double> spreads(model.k, -1.0);
    for (std::size_t c = 0; c < model.k; ++c) {
        if (counts[c] > 0) spreads[c] = std::sqrt(acc[c] / static_cast<double>(counts[c]));
    }
    return spreads;
}

double diversity(const EmbeddingMatrix& imgs, const ClusterModel& model,
                 const std::vector<std::size_t>& img_to_caption) {
    if (imgs.rows == 0) throw ValidationError("no images");
    const auto spreads = cluster_spreads(imgs, model, img_to_caption);
    double total = 0.0;
    std::size_t nonempty = 0;
    for (double s : spreads) {
        if (s >= 0.0) {
            total += s;
            ++nonempty;
        }
    }
    return total / static_cast<double>(nonempty);
}

double diversity(const EmbeddingMatrix& imgs, const ClusterModel& model) {
    std::vector<std::size_t> ident(imgs.rows);
    for (std::size_t i = 0; i < ident.size(); ++i) ident[i] = i;
    return diversity(imgs, model, ident);
}

double delta_mtl(const MetricVector& model, const MetricVector& baseline) {
    const std::size_t t = model.values.size();
    if (t == 0) throw ValidationError("empty metric vector");
    if (model.names.size() != t || model.orientation.size() != t) {
        throw ValidationError("model metric vector fields have unequal lengths");
    }
    if (baseline.names.size() != baseline.values.size() ||
        baseline.orientation.size() != baseline.values.size()) {
        throw ValidationError("baseline metric vector fields have unequal lengths");
    }
    if (baseline.values.size() != t || model.names != baseline.names ||
        model.orientation != baseline.orientation) {
        throw ValidationError("metric vectors are not aligned");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        if (baseline.values[i] == 0.0) {
            throw ValidationError("baseline metric '" + model.names[i] + "' is zero");
        }
        const double sign = model.orientation[i] == 0 ? 1.0 : -1.0;
        total += sign * (model.values[i] - baseline.values[i]) / baseline.values[i];
    }
    return 100.0 * total / static_cast<double>(t);
}

std::vector<std::string> majority_vote(const std::vector<std::vector<std::string>>& predictions) {
    if (predictions.empty()) throw ValidationError("no voters");
    const std::size_t n = predictions[0].size();
    for (const auto& voter : predictions) {
        if (voter.size() != n) throw ValidationError("voter prediction lengths differ");
    }
    std::vector<std::string> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::unordered_map<std::string, std::size_t> tally;
        for (const auto& voter : predictions) ++tally[voter[i]];
        std::size_t best = 0;
        for (const auto& voter : predictions) {
            const std::size_t c = tally[voter[i]];
            if (c > best) {
                best = c;
                out[i] = voter[i];
            }
        }
    }
    return out;
}

ClassificationReport classification_report(const std::vector<std::string>& pred,
                                           const std::vector<std::string>& truth,
                                           const std::vector<std::string>& classes) {
    if (pred.size() != truth.size()) throw ValidationError("prediction/truth length mismatch");
    if (pred.empty()) throw ValidationError("nothing to score");
    if (classes.empty()) throw ValidationError("empty class list");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (!index.emplace(classes[i], i).second) {
            throw ValidationError("duplicate class '" + classes[i] + "'");
        }
    }
    const std::size_t k = classes.size();
    ClassificationReport rep;
    rep.classes = classes;
    rep.confusion.assign(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto t = index.find(truth[i]);
        auto p = index.find(pred[i]);
        if (t == index.end()) throw ValidationError("unknown truth label '" + truth[i] + "'");
        if (p == index.end()) throw ValidationError("unknown predicted label '" + pred[i] + "'");
        ++rep.confusion[t->second][p->second];
    }
    std::size_t trace = 0;
    for (std::size_t c = 0; c < k; ++c) trace += rep.confusion[c][c];
    rep.accuracy = static_cast<double>(trace) / static_cast<double>(pred.size());
    rep.precision.assign(k, 0.0);
    rep.recall.assign(k, 0.0);
    rep.f1.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t col = 0, row = 0;
        for (std::size_t r = 0; r < k; ++r) col += rep.confusion[r][c];
        for (std::size_t p = 0; p < k; ++p) row += rep.confusion[c][p];
        const double tp = static_cast<double>(rep.confusion[c][c]);
        rep.precision[c] = col == 0 ? 0.0 : tp / static_cast<double>(col);
        rep.recall[c] = row == 0 ? 0.0 : tp / static_cast<double>(row);
        const double denom = rep.precision[c] + rep.recall[c];
        rep.f1[c] = denom == 0.0 ? 0.0 : 2.0 * rep.precision[c] * rep.recall[c] / denom;
        rep.macro_precision += rep.precision[c];
        rep.macro_recall += rep.recall[c];
        rep.macro_f1 += rep.f1[c];
    }
    rep.macro_precision /= static_cast<double>(k);
    rep.macro_recall /= static_cast<double>(k);
    rep.macro_f1 /= static_cast<double>(k);
    return rep;
}

double recall_at_k(const Matrix& sim, std::size_t k) {
    if (sim.rows == 0 || sim.cols == 0) throw ValidationError("empty similarity matrix");
    if (k < 1 || k > sim.cols) throw ValidationError("k outside [1, columns]");
    if (sim.rows > sim.cols) {
        throw ValidationError("more rows than columns; diagonal pairing undefined");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sim.rows; ++i) {
        const double* row = sim.row(i);
        const double match = row[i];
        std::size_t greater = 0;
        for (std::size_t j = 0; j < sim.cols; ++j) {
            if (row[j] > match) ++greater;
        }
        if (greater + 1 <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(sim.rows);
}

}  // namespace polygen
