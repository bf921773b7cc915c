#include "polygen/core.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "polygen/errors.hpp"
#include "polygen/kernels.hpp"

namespace polygen {

namespace {

void check_shape(const EmbeddingMatrix& m) {
    if (m.data.size() != m.rows * m.dim) {
        throw ValidationError("embedding matrix shape mismatch: " + std::to_string(m.data.size()) +
                              " values for " + std::to_string(m.rows) + "x" + std::to_string(m.dim));
    }
    if (!m.ids.empty() && m.ids.size() != m.rows) {
        throw ValidationError("embedding id count " + std::to_string(m.ids.size()) +
                              " does not match row count " + std::to_string(m.rows));
    }
}

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

bool rows_unit_norm(const EmbeddingMatrix& m, double tol) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double n2 = kernels::dot(m.row(i), m.row(i), m.dim);
        if (std::abs(std::sqrt(n2) - 1.0) > tol) return false;
    }
    return true;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
    check_shape(m);
    EmbeddingMatrix out = m;
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* r = out.row(i);
        const double n2 = kernels::dot(r, r, out.dim);
        if (!std::isfinite(n2)) {
            throw ValidationError("non-finite row " + std::to_string(i));
        }
        const double n = std::sqrt(n2);
        if (n < 1e-12) {
            throw ValidationError("zero-norm row " + std::to_string(i));
        }
        kernels::scale(r, 1.0 / n, out.dim);
    }
    out.normalized = true;
    return out;
}

Matrix cosine_similarity_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    check_shape(a);
    check_shape(b);
    if (a.dim != b.dim) {
        throw ValidationError("dimension mismatch: " + std::to_string(a.dim) + " vs " +
                              std::to_string(b.dim));
    }
    if (!a.normalized || !b.normalized) {
        throw ValidationError("cosine similarity requires normalized inputs");
    }
    Matrix s(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ra = a.row(i);
        double* out = s.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            out[j] = kernels::dot(ra, b.row(j), a.dim);
        }
    }
    return s;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, bool normalize) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "EMB1", 4) != 0) {
        throw ValidationError("bad magic in " + path.string());
    }
    EmbeddingMatrix m;
    m.rows = read_u32le(in);
    m.dim = read_u32le(in);
    if (!in) throw ValidationError("truncated header in " + path.string());

    std::vector<float> payload(m.rows * m.dim);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != payload.size() * sizeof(float)) {
        throw ValidationError("truncated payload in " + path.string());
    }
    static_assert(std::endian::native == std::endian::little, "EMB1 payload is little-endian");

    m.data.resize(payload.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        if (!std::isfinite(payload[i])) {
            throw ValidationError("non-finite value at row " + std::to_string(i / m.dim) +
                                  " col " + std::to_string(i % m.dim) + " in " + path.string());
        }
        m.data[i] = static_cast<double>(payload[i]);
    }

    const std::filesystem::path ids_path = path.string() + ".ids";
    if (std::filesystem::exists(ids_path)) {
        std::ifstream ids_in(ids_path);
        if (!ids_in) throw IoError("cannot open " + ids_path.string());
        std::string line;
        while (std::getline(ids_in, line)) m.ids.push_back(line);
        if (m.ids.size() != m.rows) {
            throw ValidationError("id sidecar has " + std::to_string(m.ids.size()) +
                                  " lines for " + std::to_string(m.rows) + " rows");
        }
    }

    if (normalize) {
        auto ids = std::move(m.ids);
        m = normalize_rows(m);
        m.ids = std::move(ids);
    } else {
        m.normalized = m.rows == 0 || rows_unit_norm(m, 1e-6);
        if (m.rows > 0 && m.dim == 0) m.normalized = false;
    }
    return m;
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    check_shape(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("EMB1", 4);
    write_u32le(out, static_cast<std::uint32_t>(m.rows));
    write_u32le(out, static_cast<std::uint32_t>(m.dim));
    std::vector<float> payload(m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) payload[i] = static_cast<float>(m.data[i]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("write failed for " + path.string());

    if (!m.ids.empty()) {
        const std::filesystem::path ids_path = path.string() + ".ids";
        std::ofstream ids_out(ids_path, std::ios::trunc);
        if (!ids_out) throw IoError("cannot write " + ids_path.string());
        for (const auto& id : m.ids) ids_out << id << '\n';
        if (!ids_out) throw IoError("write failed for " + ids_path.string());
    }
}

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<CaptionRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        CaptionRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.text = j.at("text").get<std::string>();
            r.concept_name = j.value("concept", std::string{});
            r.axis = j.value("axis", std::string{"none"});
            if (j.contains("hn_of") && !j["hn_of"].is_null()) {
                r.hn_of = j["hn_of"].get<std::string>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (r.id.empty()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": empty id");
        }
        records.push_back(std::move(r));
    }
    validate_caption_links(records);
    return records;
}

void save_captions(const std::vector<CaptionRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) {
        nlohmann::json j{{"id", r.id}, {"text", r.text}, {"concept", r.concept_name}, {"axis", r.axis}};
        if (r.hn_of) j["hn_of"] = *r.hn_of;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void validate_caption_links(const std::vector<CaptionRecord>& records) {
    std::unordered_map<std::string, const CaptionRecord*> by_id;
    for (const auto& r : records) {
        if (!by_id.emplace(r.id, &r).second) {
            throw ValidationError("duplicate caption id " + r.id);
        }
    }
    for (const auto& r : records) {
        if (!r.hn_of) continue;
        auto it = by_id.find(*r.hn_of);
        if (it == by_id.end()) {
            throw ValidationError("caption " + r.id + " references missing base " + *r.hn_of);
        }
        if (it->second->hn_of) {
            throw ValidationError("caption " + r.id + " chains onto hard negative " + *r.hn_of);
        }
    }
}

void validate_caption_axes(const std::vector<CaptionRecord>& records,
                           const std::vector<std::string>& axes) {
    std::unordered_set<std::string> allowed(axes.begin(), axes.end());
    for (const auto& r : records) {
        if (r.axis == "none") continue;
        if (!allowed.count(r.axis)) {
            throw ValidationError("caption " + r.id + " uses unknown axis " + r.axis);
        }
    }
}

}  // namespace polygen
