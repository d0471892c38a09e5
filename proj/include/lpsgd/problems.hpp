#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpsgd/lowfloat.hpp"
#include "lpsgd/vecmath.hpp"

namespace lpsgd {

// Emulated-arithmetic configuration for a gradient pipeline: products in
// mul_fmt, running sums in acc_fmt.
struct LpPipeline {
    FloatFormat mul_fmt;
    FloatFormat acc_fmt;
};

// How a gradient should be produced: over which sample subset (empty = all)
// and through which arithmetic (nullptr = working precision).
struct GradientRequest {
    std::span<const std::size_t> batch = {};
    const LpPipeline* lp = nullptr;
};

// A quasi-convex objective. quasi_subgradient returns a direction g with
// <g, x' - w> <= 0 for every x' strictly below f(w); nullopt signals that w
// is already optimal and no descent direction exists.
class Problem {
public:
    virtual ~Problem() = default;

    virtual std::size_t dimension() const = 0;
    virtual double evaluate(std::span<const double> w) const = 0;
    virtual std::optional<Vec> quasi_subgradient(std::span<const double> w,
                                                 const GradientRequest& req = {}) const = 0;

    // Closed-form optimum when one exists.
    virtual std::optional<Vec> known_optimum() const { return std::nullopt; }
    // Number of data samples for sample-based objectives, 0 otherwise.
    virtual std::size_t num_samples() const { return 0; }
};

bool sublevel_member(const Problem& problem, double a, std::span<const double> x);

// f(x) = L ||x||^p with p in (0, 1]: quasi-convex, minimized at 0 with
// f* = 0, and satisfies the Hoelder condition of order p and constant L with
// equality everywhere.
class PowerNormFunction : public Problem {
public:
    PowerNormFunction(double L, double p, std::size_t dimension);

    std::size_t dimension() const override { return dimension_; }
    double evaluate(std::span<const double> w) const override;
    std::optional<Vec> quasi_subgradient(std::span<const double> w,
                                         const GradientRequest& req = {}) const override;
    std::optional<Vec> known_optimum() const override { return Vec(dimension_, 0.0); }

    double holder_constant() const { return L_; }
    double holder_order() const { return p_; }

private:
    double L_;
    double p_;
    std::size_t dimension_;
};

// Multinomial (softmax) logistic regression over N samples with F features
// and C classes; weights are row-major C x (F+1) with a trailing per-class
// bias. The loss is the mean cross-entropy plus an optional L2 term
// 0.5 * l2 * ||w||^2 that makes the optimum attained.
class LogisticRegressionProblem : public Problem {
public:
    LogisticRegressionProblem(Matrix features, std::vector<int> labels,
                              int num_classes, double l2 = 1e-3);

    std::size_t dimension() const override;
    double evaluate(std::span<const double> w) const override;
    std::optional<Vec> quasi_subgradient(std::span<const double> w,
                                         const GradientRequest& req = {}) const override;
    std::size_t num_samples() const override { return features_.rows(); }

    int num_classes() const { return num_classes_; }
    std::size_t num_features() const { return features_.cols(); }
    double l2() const { return l2_; }

    // Fraction of samples assigned their true class by argmax of the logits.
    double accuracy(std::span<const double> w) const;

private:
    Vec gradient_exact(std::span<const double> w, std::span<const std::size_t> batch) const;
    Vec gradient_lowprec(std::span<const double> w, std::span<const std::size_t> batch,
                         const LpPipeline& lp) const;

    Matrix features_;
    std::vector<int> labels_;
    int num_classes_;
    double l2_;
};

enum class HolderFitMode { least_squares, majorizing };

struct HolderFit {
    double p = 0.0;
    double L = 0.0;
    HolderFitMode mode = HolderFitMode::least_squares;
    double residual = 0.0;  // rms residual of ln(excess) against the fit
};

// Fits excess ~= L * distance^p from (distance, excess) samples. Least-squares
// regresses ln(excess) on ln(distance); majorizing keeps the same p and
// inflates L until every sample is covered. Zero-excess samples are dropped;
// at least two usable samples with distinct distances are required.
HolderFit fit_holder(std::span<const std::pair<double, double>> samples, HolderFitMode mode);

struct ReferenceOptimum {
    Vec w_star;
    double f_star = 0.0;
    double c0 = 0.0;  // distance from the given start to w_star
};

// Full-batch gradient descent at working precision. Returns the best iterate
// seen, so f_star is never above any recorded loss. Problems with a known
// optimum short-circuit. Fifty consecutive loss increases abort with
// diagnostics.
ReferenceOptimum find_reference_optimum(const Problem& problem, std::span<const double> start,
                                        std::uint64_t steps, double rate);

}  // namespace lpsgd
