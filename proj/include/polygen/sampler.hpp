#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "polygen/core.hpp"
#include "polygen/rng.hpp"

namespace polygen {

// Subject vocabulary for caption generation. Weights are optional; when
// present they bias sample_control_tuple proportionally, otherwise draws
// are uniform. Entries are unique, non-empty strings.
struct ConceptBank {
    std::vector<std::string> concepts;
    std::vector<double> weights;  // empty means uniform
};

// One concept per line; an optional tab-separated positive weight follows.
// Blank lines are skipped. Duplicate or empty entries are rejected.
ConceptBank load_concept_bank(const std::string& path);

// Semantic modification axes. `concept` marks change-of-subject negatives
// and must stay in the set whenever hard negatives are produced.
struct AxisSet {
    std::vector<std::string> axes;
};

AxisSet default_axes();

struct ControlTuple {
    std::string concept_name;
    std::string axis;
};

// Draws (concept, axis) for one generation request. Concept is uniform or
// weight-proportional over the bank, axis uniform over the set.
ControlTuple sample_control_tuple(const ConceptBank& bank, const AxisSet& axes, Rng& rng);

// Fills {concept}, {attribute}, {axis} and {caption} slots. {attribute} and
// {axis} both take the sampled axis: the first names it in base-caption
// templates, the second in hard-negative templates. A {caption} slot needs
// base_caption. Unknown or unterminated slots are errors; nothing outside
// the slots is touched.
std::string render_prompt(const std::string& tmpl, const std::string& concept_name,
                          const std::string& axis,
                          const std::optional<std::string>& base_caption = std::nullopt);

// True when `concept_name` occurs in `text` with non-word characters (or
// the string boundary) on both sides. Case-insensitive; word characters
// are ASCII letters and digits.
bool contains_concept(const std::string& text, const std::string& concept_name);

// Per-concept caption presence. A caption contributes at most one count to
// each concept no matter how often the phrase repeats inside it. Every bank
// entry gets a key, zero counts included.
using ConceptHistogram = std::map<std::string, std::size_t>;

ConceptHistogram count_concepts(const std::vector<CaptionRecord>& captions,
                                const ConceptBank& bank);

struct SamplerConfig {
    std::size_t threshold = 30;
    std::uint64_t seed = 0;
};

// Frequency-flattening retention pass. Each concept keeps captions with
// probability min(1, t / count(c)); a caption survives if any of its matched
// concepts wins its draw, and captions matching nothing are dropped. The
// histogram must come from this same caption set.
std::vector<CaptionRecord> balanced_sample(const std::vector<CaptionRecord>& captions,
                                           const ConceptHistogram& hist,
                                           const SamplerConfig& cfg);

// Removes exact-text duplicates, keeping the first occurrence in order.
std::vector<CaptionRecord> deduplicate(const std::vector<CaptionRecord>& captions);

}  // namespace polygen
