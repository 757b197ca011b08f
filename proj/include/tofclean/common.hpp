#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tofclean {

/// Failure categories surfaced by the library. Each maps to a distinct,
/// testable condition; the CLI folds them into process exit codes.
enum class ErrorCode {
    BadMagic,        // file does not start with the expected magic bytes
    Truncated,       // payload shorter/longer than the header promises
    DimOverflow,     // declared dimensions exceed sane limits
    BadVersion,      // versioned format with unsupported version
    Corruption,      // structurally unreadable content
    DimMismatch,     // images/models with incompatible shapes
    Underdetermined, // per-pixel fit without enough independent data
    Ineligible,      // pixel excluded by the patch border/validity policy
    InvalidArgument, // parameter violating a documented precondition
    MissingData,     // required input absent (missing reference, empty set)
    NumericFailure,  // NaN/Inf encountered where finite math is required
    Io,              // OS-level read/write failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Seeded random stream with pinned output: the uniform/normal mappings are
/// spelled out here so the produced byte streams are a property of this
/// code base, not of a particular libstdc++ distribution implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53 significant bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive integer range.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(engine_() % static_cast<uint64_t>(hi - lo + 1));
    }

    /// Standard normal via Box-Muller (one value per call, two uniforms).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    std::mt19937_64 engine_;
};

/// Derive an independent seed for a named sub-stream of a base seed.
uint64_t derive_seed(uint64_t base, std::string_view tag);

}  // namespace tofclean
