#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "polygen/core.hpp"

namespace polygen {

// Hard partition of caption embeddings. `assignment[i]` is the cluster of
// caption row i; every id is < k. `inertia_trace` records the post-assignment
// inertia of each Lloyd iteration and never increases.
struct ClusterModel {
    std::size_t k = 0;
    Matrix centroids;
    std::vector<std::size_t> assignment;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    std::vector<double> inertia_trace;
};

// Benchmark scores with per-entry orientation: 0 when higher is better,
// 1 when lower is better.
struct MetricVector {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<int> orientation;
};

struct ClassificationReport {
    std::vector<std::string> classes;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
    double accuracy = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

// w * max(cos, 0) for one unit-norm pair.
double clipscore(const std::vector<double>& img_row, const std::vector<double>& txt_row,
                 double w = 100.0);

// Mean clipscore over row-aligned pairs.
double recognizability(const EmbeddingMatrix& imgs, const EmbeddingMatrix& txts,
                       double w = 100.0);

// k-means++ seeding then Lloyd, at most `iters` rounds, stopping early when
// the relative inertia drop falls under 1e-6. Clusters emptied by an update
// are re-seeded on the globally farthest point. Deterministic per seed.
ClusterModel kmeans_fit(const EmbeddingMatrix& txts, std::size_t k, std::uint64_t seed,
                        std::size_t iters = 100);

// Average per-cluster standard deviation of image embeddings,
// (1/K') sum_k sqrt(mean ||f - mu_k||^2), taken over the K' clusters that
// receive at least one image. Images reach clusters through their caption:
// cluster(i) = model.assignment[img_to_caption[i]].
double diversity(const EmbeddingMatrix& imgs, const ClusterModel& model,
                 const std::vector<std::size_t>& img_to_caption);

// Identity mapping convenience: image row i pairs with caption row i.
double diversity(const EmbeddingMatrix& imgs, const ClusterModel& model);

// Per-cluster sqrt(mean squared distance to the cluster's image mean);
// empty clusters report -1. This is the per-cluster breakdown behind
// diversity(), exported for CSV output.
std::vector<double> cluster_spreads(const EmbeddingMatrix& imgs, const ClusterModel& model,
                                    const std::vector<std::size_t>& img_to_caption);

// 100 * mean of signed relative deltas against the baseline, sign flipped
// for lower-is-better entries.
double delta_mtl(const MetricVector& model, const MetricVector& baseline);

// Per-item modal label across voters; ties go to the label of the
// lowest-indexed voter among the tied labels.
std::vector<std::string> majority_vote(const std::vector<std::vector<std::string>>& predictions);

ClassificationReport classification_report(const std::vector<std::string>& pred,
                                           const std::vector<std::string>& truth,
                                           const std::vector<std::string>& classes);

// Fraction of rows whose diagonal match ranks in the top k columns.
// A row's rank is 1 + the number of strictly greater entries.
double recall_at_k(const Matrix& sim, std::size_t k);

}  // namespace polygen
