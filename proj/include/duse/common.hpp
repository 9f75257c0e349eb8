#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace duse {

/// Caller passed something that violates an operation's precondition.
class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A requested count cannot be met by the available population.
class sizing_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A persisted file failed validation while being read.
class corrupt_file : public std::runtime_error {
public:
    corrupt_file(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

using index_list = std::vector<std::size_t>;

// ---------------------------------------------------------------------------
// Seeds and random numbers
//
// All randomness flows from std::mt19937_64 (exactly specified by the
// standard). Distributions are implemented here instead of using the
// <random> distribution classes, whose output is implementation-defined.
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Splittable seed rule: fold each key into the base with splitmix64.
/// derive_seed(s, {a, b}) == splitmix64(splitmix64(splitmix64(s) ^ a) ^ b) ... applied left to right.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept;

class rng {
public:
    explicit rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform01();
    /// Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal via Box-Muller; caches the second deviate.
    double normal();

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// In-place Fisher-Yates shuffle driven by rng::below.
template <class T>
void shuffle(std::vector<T>& v, rng& gen) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(gen.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Digests and files
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t fnv1a_offset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t fnv1a_prime = 0x100000001b3ULL;

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t state = fnv1a_offset) noexcept;
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = fnv1a_offset) noexcept;
std::uint64_t file_digest(const std::filesystem::path& path);

std::string digest_hex(std::uint64_t digest);
std::uint64_t parse_digest_hex(std::string_view text);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

/// Write-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace duse
