#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace polygen {

// Deterministic random stream. The engine's output sequence is fixed by the
// standard, and every derived draw (bounded ints, doubles, gaussians, shuffle)
// is defined here rather than delegated to libstdc++ distributions, whose
// algorithms are implementation-defined. Same seed, same bytes, everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1), 53 bits
    double next_double() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // uniform in [0, n), unbiased via rejection; n must be nonzero
    std::uint64_t next_below(std::uint64_t n);

    // standard normal, Box-Muller with a cached spare
    double next_gaussian();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable seed derivation for substreams (per-epoch shuffles and the like).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace polygen
