#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace countlab {

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian");

// Error classes map 1:1 onto CLI exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}
inline void check_data(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}
inline void check_contract(bool ok, const std::string& msg) {
    if (!ok) throw ContractError(msg);
}
inline void check_numeric(bool ok, const std::string& msg) {
    if (!ok) throw NumericError(msg);
}

// Deterministic seedable generator. std::mt19937_64 output is pinned by the
// standard, so streams are portable; the helpers below avoid
// std::*_distribution, whose mappings are implementation-defined.
inline constexpr const char* kRngAlgorithm = "mt19937_64/rejection/v1";

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : mt_(seed) {}

    std::uint64_t next_u64() { return mt_(); }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) throw ConfigError("Rng::below: bound must be positive");
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = mt_();
        } while (x >= limit);
        return x % bound;
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Uniform in [0, 1) with 53 random bits.
    double real() { return static_cast<double>(mt_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller on the portable real() stream.
    double normal() {
        double u1 = real(), u2 = real();
        while (u1 == 0.0) u1 = real();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 mt_;
};

// Derives a stream seed from a master seed and an index (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file_hex(const std::string& path);

// Runs fn(i) for i in [0, n); with threads > 1, work is sharded but callers
// must write only to slot i so results are identical at any thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace countlab
