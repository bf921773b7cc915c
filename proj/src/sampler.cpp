#include "polygen/sampler.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "polygen/errors.hpp"

namespace polygen {

namespace {

std::string lower(const std::string& s) {
    std::string out(s.size(), '\0');
    std::transform(s.begin(), s.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

void check_bank(const ConceptBank& bank) {
    if (bank.concepts.empty()) throw ValidationError("concept bank is empty");
    if (!bank.weights.empty() && bank.weights.size() != bank.concepts.size()) {
        throw ValidationError("concept bank weights do not match entry count");
    }
}

}  // namespace

ConceptBank load_concept_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open concept bank " + path);
    ConceptBank bank;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    bool any_weight = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string name = line;
        double weight = 1.0;
        bool has_weight = false;
        if (auto tab = line.find('\t'); tab != std::string::npos) {
            name = line.substr(0, tab);
            const std::string rest = line.substr(tab + 1);
            try {
                std::size_t used = 0;
                weight = std::stod(rest, &used);
                if (used != rest.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": bad concept weight '" + rest + "'");
            }
            if (!(weight > 0.0)) {
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": concept weight must be positive");
            }
            has_weight = true;
        }
        if (name.empty()) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": empty concept");
        }
        if (!seen.insert(name).second) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": duplicate concept '" + name + "'");
        }
        if (has_weight) any_weight = true;
        bank.concepts.push_back(name);
        bank.weights.push_back(weight);
    }
    if (!any_weight) bank.weights.clear();
    check_bank(bank);
    return bank;
}

AxisSet default_axes() {
    return AxisSet{{"background", "color", "lighting", "material", "perspective", "position",
                    "style", "concept"}};
}

ControlTuple sample_control_tuple(const ConceptBank& bank, const AxisSet& axes, Rng& rng) {
    check_bank(bank);
    if (axes.axes.empty()) throw ValidationError("axis set is empty");
    std::size_t ci;
    if (bank.weights.empty()) {
        ci = static_cast<std::size_t>(rng.next_below(bank.concepts.size()));
    } else {
        double total = 0.0;
        for (double w : bank.weights) total += w;
        const double u = rng.next_double() * total;
        double acc = 0.0;
        ci = bank.concepts.size() - 1;
        for (std::size_t i = 0; i < bank.weights.size(); ++i) {
            acc += bank.weights[i];
            if (u < acc) {
                ci = i;
                break;
            }
        }
    }
    const std::size_t ai = static_cast<std::size_t>(rng.next_below(axes.axes.size()));
    return ControlTuple{bank.concepts[ci], axes.axes[ai]};
}

std::string render_prompt(const std::string& tmpl, const std::string& concept_name,
                          const std::string& axis,
                          const std::optional<std::string>& base_caption) {
    if (tmpl.empty()) throw ValidationError("empty prompt template");
    std::string out;
    out.reserve(tmpl.size() + 32);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const char c = tmpl[i];
        if (c != '{') {
            out.push_back(c);
            ++i;
            continue;
        }
        const std::size_t close = tmpl.find('}', i + 1);
        if (close == std::string::npos) {
            throw ValidationError("unterminated slot in template near position " +
                                  std::to_string(i));
        }
        const std::string slot = tmpl.substr(i + 1, close - i - 1);
        if (slot == "concept") {
            out += concept_name;
        } else if (slot == "attribute" || slot == "axis") {
            out += axis;
        } else if (slot == "caption") {
            if (!base_caption) {
                throw ValidationError("template uses {caption} but no base caption was given");
            }
            out += *base_caption;
        } else {
            throw ValidationError("unknown template slot {" + slot + "}");
        }
        i = close + 1;
    }
    return out;
}

bool contains_concept(const std::string& text, const std::string& concept_name) {
    if (concept_name.empty()) return false;
    const std::string hay = lower(text);
    const std::string needle = lower(concept_name);
    std::size_t pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !word_char(hay[pos - 1]);
        const std::size_t end = pos + needle.size();
        const bool right_ok = end == hay.size() || !word_char(hay[end]);
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

ConceptHistogram count_concepts(const std::vector<CaptionRecord>& captions,
                                const ConceptBank& bank) {
    check_bank(bank);
    ConceptHistogram hist;
    for (const auto& c : bank.concepts) hist[c] = 0;
    for (const auto& cap : captions) {
        for (const auto& c : bank.concepts) {
            if (contains_concept(cap.text, c)) ++hist[c];
        }
    }
    return hist;
}

std::vector<CaptionRecord> balanced_sample(const std::vector<CaptionRecord>& captions,
                                           const ConceptHistogram& hist,
                                           const SamplerConfig& cfg) {
    if (captions.empty()) throw ValidationError("no captions to sample");
    if (cfg.threshold == 0) throw ValidationError("sampling threshold must be positive");
    const double t = static_cast<double>(cfg.threshold);
    Rng rng(cfg.seed);
    std::vector<CaptionRecord> kept;
    for (const auto& cap : captions) {
        bool matched = false;
        bool retain = false;
        for (const auto& [concept_name, count] : hist) {
            if (!contains_concept(cap.text, concept_name)) continue;
            matched = true;
            if (count == 0) {
                throw ValidationError("histogram lists zero count for matched concept '" +
                                      concept_name + "'; recount over this caption set");
            }
            if (retain) continue;  // draw already won; skip remaining draws
            const double p = std::min(1.0, t / static_cast<double>(count));
            if (rng.next_double() < p) retain = true;
        }
        if (matched && retain) kept.push_back(cap);
    }
    return kept;
}

std::vector<CaptionRecord> deduplicate(const std::vector<CaptionRecord>& captions) {
    std::vector<CaptionRecord> out;
    std::unordered_set<std::string> seen;
    out.reserve(captions.size());
    for (const auto& cap : captions) {
        if (seen.insert(cap.text).second) out.push_back(cap);
    }
    return out;
}

}  // namespace polygen
