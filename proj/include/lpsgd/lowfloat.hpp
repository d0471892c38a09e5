#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace lpsgd {

struct RoundFlags {
    bool exact = false;
    bool inexact = false;
    bool overflow = false;
    bool underflow = false;
};

// Result of projecting a working-precision real onto an emulated format.
// relative_error is (value - x) / x, i.e. the realized delta of one rounding.
struct RoundingOutcome {
    double value = 0.0;
    double relative_error = 0.0;
    RoundFlags flags;
};

// A binary floating-point format with round-to-nearest-even semantics.
// fraction_bits counts explicit fraction bits (the leading 1 is implicit),
// so the significand carries fraction_bits + 1 digits. Exponent limits follow
// IEEE-style biasing: e_max = 2^(exponent_bits-1) - 1, e_min = 1 - e_max.
// Formats must be strictly narrower than the working precision (binary64).
class FloatFormat {
public:
    FloatFormat(int exponent_bits, int fraction_bits, bool supports_subnormals = true);

    // Parses descriptors of the form "e<E>m<M>[fz]", e.g. "e8m7" (bfloat16),
    // "e8m23" (single precision), "e8m7fz" (flush-to-zero bfloat16).
    static FloatFormat parse(std::string_view descriptor);
    static FloatFormat bfloat16() { return FloatFormat(8, 7); }

    int exponent_bits() const { return exponent_bits_; }
    int fraction_bits() const { return fraction_bits_; }
    bool supports_subnormals() const { return supports_subnormals_; }

    int significand_digits() const { return fraction_bits_ + 1; }  // t
    int max_exponent() const { return max_exponent_; }             // e_max
    int min_exponent() const { return min_exponent_; }             // e_min
    int total_bits() const { return 1 + exponent_bits_ + fraction_bits_; }

    double max_finite() const { return max_finite_; }
    double min_normal() const { return min_normal_; }
    // Smallest positive representable value (subnormal when supported).
    double min_positive() const { return min_positive_; }
    // 2^(1-t): the relative-error radius of one rounding step.
    double unit_roundoff() const { return unit_roundoff_; }

    std::string to_string() const;

    bool operator==(const FloatFormat& other) const = default;

private:
    int exponent_bits_;
    int fraction_bits_;
    bool supports_subnormals_;
    int max_exponent_;
    int min_exponent_;
    double max_finite_;
    double min_normal_;
    double min_positive_;
    double unit_roundoff_;
};

enum class LpOp { add, sub, mul, div };

// Nearest representable value under round-to-nearest, ties-to-even.
// Overflow saturates to the largest finite value; tiny magnitudes go through
// gradual underflow or flush-to-zero depending on the format. Non-finite
// input is rejected.
RoundingOutcome round_to_format(double x, const FloatFormat& fmt);

// fl(a op b): the exact working-precision result followed by one rounding.
RoundingOutcome lp_op(double a, double b, LpOp op, const FloatFormat& fmt);

// Inner product with a reduced-precision accumulator: each product is rounded
// into mul_fmt, partial sums accumulate strictly left-to-right with every sum
// rounded into acc_fmt. Operands are projected into mul_fmt first (a no-op
// when they are already representable).
double lp_dot(std::span<const double> u, std::span<const double> v,
              const FloatFormat& mul_fmt, const FloatFormat& acc_fmt);

double unit_roundoff(const FloatFormat& fmt);

// Bit-exact encode/decode against the packed layout [sign|exponent|fraction]
// of width 1+E+M, for test vectors. encode requires a representable value;
// decode rejects all-ones exponents (no NaN/infinity semantics).
std::uint64_t encode_bits(double x, const FloatFormat& fmt);
double decode_bits(std::uint64_t bits, const FloatFormat& fmt);

}  // namespace lpsgd
