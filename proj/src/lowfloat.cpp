#include "lpsgd/lowfloat.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lpsgd {

namespace {

// Working precision is binary64: 11 exponent bits, 52 fraction bits.
constexpr int kWorkingExponentBits = 11;
constexpr int kWorkingFractionBits = 52;

// Round a non-negative real < 2^53 to the nearest integer, ties to even.
// All quantities involved are exactly representable, so this is bit-exact.
double round_integer_rne(double s) {
    const double lo = std::floor(s);
    const double frac = s - lo;
    if (frac > 0.5) return lo + 1.0;
    if (frac < 0.5) return lo;
    return (std::fmod(lo, 2.0) == 0.0) ? lo : lo + 1.0;
}

}  // namespace

FloatFormat::FloatFormat(int exponent_bits, int fraction_bits, bool supports_subnormals)
    : exponent_bits_(exponent_bits),
      fraction_bits_(fraction_bits),
      supports_subnormals_(supports_subnormals) {
    if (exponent_bits < 2) {
        throw std::invalid_argument("FloatFormat: exponent_bits must be >= 2");
    }
    if (fraction_bits < 0) {
        throw std::invalid_argument("FloatFormat: fraction_bits must be >= 0");
    }
    if (exponent_bits > kWorkingExponentBits || fraction_bits > kWorkingFractionBits ||
        (exponent_bits == kWorkingExponentBits && fraction_bits == kWorkingFractionBits)) {
        throw std::invalid_argument(
            "FloatFormat: format must be strictly narrower than the working precision "
            "(binary64, e11m52)");
    }
    max_exponent_ = (1 << (exponent_bits - 1)) - 1;
    min_exponent_ = 1 - max_exponent_;
    // (2 - 2^-M) * 2^e_max
    max_finite_ = std::ldexp(2.0 - std::ldexp(1.0, -fraction_bits), max_exponent_);
    min_normal_ = std::ldexp(1.0, min_exponent_);
    min_positive_ = supports_subnormals ? std::ldexp(1.0, min_exponent_ - fraction_bits)
                                        : min_normal_;
    unit_roundoff_ = std::ldexp(1.0, -fraction_bits);  // 2^(1-t) with t = M+1
}

FloatFormat FloatFormat::parse(std::string_view d) {
    const auto fail = [&] {
        throw std::invalid_argument("FloatFormat: bad descriptor '" + std::string(d) +
                                    "', expected e<E>m<M>[fz]");
    };
    if (d.size() < 4 || d[0] != 'e') fail();
    std::size_t i = 1;
    auto read_int = [&](int& out) {
        if (i >= d.size() || d[i] < '0' || d[i] > '9') fail();
        long v = 0;
        while (i < d.size() && d[i] >= '0' && d[i] <= '9') {
            v = v * 10 + (d[i] - '0');
            if (v > 1000) fail();
            ++i;
        }
        out = static_cast<int>(v);
    };
    int exp_bits = 0;
    int frac_bits = 0;
    read_int(exp_bits);
    if (i >= d.size() || d[i] != 'm') fail();
    ++i;
    read_int(frac_bits);
    bool subnormals = true;
    if (i < d.size()) {
        if (d.substr(i) == "fz") {
            subnormals = false;
        } else {
            fail();
        }
    }
    return FloatFormat(exp_bits, frac_bits, subnormals);
}

std::string FloatFormat::to_string() const {
    std::string s = "e" + std::to_string(exponent_bits_) + "m" + std::to_string(fraction_bits_);
    if (!supports_subnormals_) s += "fz";
    return s;
}

RoundingOutcome round_to_format(double x, const FloatFormat& fmt) {
    if (!std::isfinite(x)) {
        throw std::domain_error("round_to_format: non-finite input");
    }
    RoundingOutcome out;
    if (x == 0.0) {
        out.value = x;  // preserves the sign of zero
        out.relative_error = 0.0;
        out.flags.exact = true;
        return out;
    }

    const double a = std::fabs(x);
    const double sign = (x < 0.0) ? -1.0 : 1.0;
    const int m_bits = fmt.fraction_bits();

    int bexp = 0;  // a in [2^(bexp), 2^(bexp+1))
    std::frexp(a, &bexp);
    bexp -= 1;

    // Quantum exponent: spacing is 2^(e - M) for normals, fixed at the bottom
    // of the exponent range for subnormals.
    const int q_exp = (bexp < fmt.min_exponent()) ? fmt.min_exponent() - m_bits
                                                  : bexp - m_bits;
    const double scaled = std::ldexp(a, -q_exp);  // exact; < 2^(M+1)
    const double n = round_integer_rne(scaled);
    double value = std::ldexp(n, q_exp);

    if (value > fmt.max_finite()) {
        value = fmt.max_finite();
        out.flags.overflow = true;
    }
    if (value != 0.0 && value < fmt.min_normal() && !fmt.supports_subnormals()) {
        value = 0.0;  // flush-to-zero
    }

    out.value = sign * value;
    out.flags.exact = (out.value == x);
    out.flags.inexact = !out.flags.exact;
    out.relative_error = out.flags.exact ? 0.0 : (out.value - x) / x;
    // Underflow: result tiny and inexact (matches hardware flag semantics).
    if (out.flags.inexact && std::fabs(out.value) < fmt.min_normal() && !out.flags.overflow) {
        out.flags.underflow = true;
    }
    return out;
}

RoundingOutcome lp_op(double a, double b, LpOp op, const FloatFormat& fmt) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw std::domain_error("lp_op: non-finite operand");
    }
    double exact = 0.0;
    switch (op) {
        case LpOp::add: exact = a + b; break;
        case LpOp::sub: exact = a - b; break;
        case LpOp::mul: exact = a * b; break;
        case LpOp::div:
            if (b == 0.0) throw std::domain_error("lp_op: division by zero");
            exact = a / b;
            break;
    }
    if (!std::isfinite(exact)) {
        // Working precision itself overflowed; saturate like a format overflow.
        RoundingOutcome out;
        out.value = (exact > 0.0 ? 1.0 : -1.0) * fmt.max_finite();
        out.relative_error = 0.0;
        out.flags.inexact = true;
        out.flags.overflow = true;
        return out;
    }
    return round_to_format(exact, fmt);
}

double lp_dot(std::span<const double> u, std::span<const double> v,
              const FloatFormat& mul_fmt, const FloatFormat& acc_fmt) {
    if (u.size() != v.size()) {
        throw std::domain_error("lp_dot: dimension mismatch");
    }
    if (u.empty()) {
        throw std::domain_error("lp_dot: empty vectors");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double ui = round_to_format(u[i], mul_fmt).value;
        const double vi = round_to_format(v[i], mul_fmt).value;
        const double p = round_to_format(ui * vi, mul_fmt).value;
        acc = round_to_format(acc + p, acc_fmt).value;
    }
    return acc;
}

double unit_roundoff(const FloatFormat& fmt) { return fmt.unit_roundoff(); }

std::uint64_t encode_bits(double x, const FloatFormat& fmt) {
    const RoundingOutcome r = round_to_format(x, fmt);
    if (!r.flags.exact) {
        throw std::domain_error("encode_bits: value not representable in format");
    }
    const int m_bits = fmt.fraction_bits();
    const int bias = fmt.max_exponent();
    const std::uint64_t sign = std::signbit(x) ? 1u : 0u;
    std::uint64_t exp_field = 0;
    std::uint64_t frac_field = 0;

    const double a = std::fabs(x);
    if (a != 0.0) {
        int bexp = 0;
        std::frexp(a, &bexp);
        bexp -= 1;
        if (bexp < fmt.min_exponent()) {
            // subnormal: exponent field 0, fraction scaled by the fixed quantum
            exp_field = 0;
            frac_field = static_cast<std::uint64_t>(
                std::ldexp(a, m_bits - fmt.min_exponent()));
        } else {
            exp_field = static_cast<std::uint64_t>(bexp + bias);
            frac_field = static_cast<std::uint64_t>(std::ldexp(a, m_bits - bexp)) -
                         (1ull << m_bits);
        }
    }
    return (sign << (fmt.exponent_bits() + m_bits)) |
           (exp_field << m_bits) | frac_field;
}

double decode_bits(std::uint64_t bits, const FloatFormat& fmt) {
    const int m_bits = fmt.fraction_bits();
    const int e_bits = fmt.exponent_bits();
    if (fmt.total_bits() < 64 && (bits >> fmt.total_bits()) != 0) {
        throw std::domain_error("decode_bits: bits beyond format width");
    }
    const std::uint64_t frac_mask = (m_bits == 0) ? 0 : ((1ull << m_bits) - 1);
    const std::uint64_t frac = bits & frac_mask;
    const std::uint64_t exp_field = (bits >> m_bits) & ((1ull << e_bits) - 1);
    const std::uint64_t sign = (bits >> (m_bits + e_bits)) & 1u;
    const std::uint64_t exp_all_ones = (1ull << e_bits) - 1;
    if (exp_field == exp_all_ones) {
        throw std::domain_error("decode_bits: infinity/NaN patterns are not supported");
    }
    const int bias = fmt.max_exponent();
    double value = 0.0;
    if (exp_field == 0) {
        value = std::ldexp(static_cast<double>(frac), fmt.min_exponent() - m_bits);
    } else {
        const int e = static_cast<int>(exp_field) - bias;
        value = std::ldexp(static_cast<double>(frac) + std::ldexp(1.0, m_bits), e - m_bits);
    }
    return sign ? -value : value;
}

}  // namespace lpsgd
