#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tta {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/vector dimension mismatches.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed input files, bad config values and similar.
class InputError : public Error {
public:
    explicit InputError(const std::string& msg) : Error(msg) {}
};

// A deployment stream tried to read data beyond the current day.
class CausalityError : public Error {
public:
    explicit CausalityError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 is fully specified by the standard, but the distribution
// classes are not, so sampling goes through hand-rolled converters to keep
// byte-identical streams across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ULL : seed) {}

    std::uint64_t next_u64() {
        // xorshift* with splitmix-style output mixing
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1DULL;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection-free modulo is fine here: n is always tiny vs 2^64
        return next_u64() % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // standard normal via Box-Muller (no cached spare: keeps the stream
    // position independent of call history)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Stable seed derivation: component seeds are hashes of the master seed and a
// label so grid points / pipeline stages get independent, replayable streams.

std::uint64_t stable_hash(std::string_view text);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::int64_t index);

// FNV-1a over raw bytes, used for content keys (dataset cache, stream hashes).
std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

// ---------------------------------------------------------------------------
// Parallel helper. Chunks are fixed-size so reduction order never depends on
// the worker count; callers that merge per-chunk results in chunk order stay
// bit-deterministic.

int thread_count();  // TTA_THREADS env var, else hardware_concurrency

// Runs fn(begin, end) over [0, n) split into chunks of at most `chunk` items.
// fn must not touch shared mutable state outside its chunk.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Formatting / misc

// Round-trip exact decimal form of a double ("%.17g", with nan/inf spelled out).
std::string format_double(double v);

bool all_finite(const std::vector<double>& v);

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

}  // namespace tta
