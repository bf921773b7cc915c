#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace polygen {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Row-major embedding block. Values live as doubles in memory; the on-disk
// format is float32 (see load_embeddings/save_embeddings). `normalized` is
// true iff every row had unit L2 norm within 1e-6 when the flag was computed.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> data;
    std::vector<std::string> ids;  // empty, or one id per row
    bool normalized = false;

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t r, std::size_t d) : rows(r), dim(d), data(r * d, 0.0) {}

    double* row(std::size_t i) { return data.data() + i * dim; }
    const double* row(std::size_t i) const { return data.data() + i * dim; }
};

struct SimilarityConfig {
    double temperature = 0.07;
};

struct CaptionRecord {
    std::string id;
    std::string text;
    std::string concept_name;  // serialized as "concept"
    std::string axis = "none";
    std::optional<std::string> hn_of;
};

// One training sample: a base caption, its rendered images (rows into an
// image EmbeddingMatrix), and optionally a hard-negative caption with its own
// rendered images.
struct PairedSample {
    CaptionRecord base;
    std::vector<std::size_t> positives;
    std::optional<CaptionRecord> negative;
    std::vector<std::size_t> negative_images;
};

bool rows_unit_norm(const EmbeddingMatrix& m, double tol);

// Returns a copy with every row scaled to unit L2 norm (post-norm error below
// 1e-12). Throws ValidationError on a zero-norm or non-finite row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

// a.rows x b.rows matrix of cosine similarities. Both inputs must carry the
// normalized flag, so this is a plain dot product per pair.
Matrix cosine_similarity_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

// Binary embedding file: magic "EMB1", u32le rows, u32le dim, rows*dim
// float32le row-major. Ids, when present, live in a "<path>.ids" sidecar with
// one id per line. Non-finite payload values are rejected with row/col in the
// message. With normalize=true the rows are normalized after load and a
// non-normalizable row is an error.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, bool normalize = false);
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

// Caption collections are JSONL, one record per line with fields id, text,
// concept, axis, hn_of (hn_of omitted when absent). Load enforces unique ids
// and that hn_of points at an existing record which is itself not a hard
// negative.
std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);
void save_captions(const std::vector<CaptionRecord>& records, const std::filesystem::path& path);

void validate_caption_links(const std::vector<CaptionRecord>& records);

// Checks axis values against an allowed list ("none" always passes).
void validate_caption_axes(const std::vector<CaptionRecord>& records,
                           const std::vector<std::string>& axes);

}  // namespace polygen
