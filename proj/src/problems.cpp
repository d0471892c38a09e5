#include "lpsgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lpsgd {

bool sublevel_member(const Problem& problem, double a, std::span<const double> x) {
    return problem.evaluate(x) < a;
}

PowerNormFunction::PowerNormFunction(double L, double p, std::size_t dimension)
    : L_(L), p_(p), dimension_(dimension) {
    if (!(L > 0.0)) throw std::invalid_argument("PowerNormFunction: L must be > 0");
    if (!(p > 0.0 && p <= 1.0)) {
        throw std::invalid_argument("PowerNormFunction: p must be in (0, 1]");
    }
    if (dimension == 0) throw std::invalid_argument("PowerNormFunction: dimension must be >= 1");
}

double PowerNormFunction::evaluate(std::span<const double> w) const {
    if (w.size() != dimension_) throw std::domain_error("evaluate: dimension mismatch");
    return L_ * std::pow(norm(w), p_);
}

std::optional<Vec> PowerNormFunction::quasi_subgradient(std::span<const double> w,
                                                        const GradientRequest& req) const {
    if (w.size() != dimension_) throw std::domain_error("quasi_subgradient: dimension mismatch");
    if (norm2(w) == 0.0) return std::nullopt;  // at the optimum
    // Any positive multiple of w points away from every strictly better point
    // (sublevel sets are balls around the origin); the caller normalizes.
    Vec g(w.begin(), w.end());
    if (req.lp != nullptr) {
        for (double& x : g) x = round_to_format(x, req.lp->mul_fmt).value;
    }
    return g;
}

LogisticRegressionProblem::LogisticRegressionProblem(Matrix features, std::vector<int> labels,
                                                     int num_classes, double l2)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      l2_(l2) {
    if (features_.rows() == 0 || features_.cols() == 0) {
        throw std::invalid_argument("LogisticRegressionProblem: empty feature matrix");
    }
    if (labels_.size() != features_.rows()) {
        throw std::invalid_argument("LogisticRegressionProblem: labels/features size mismatch");
    }
    if (num_classes_ < 2) {
        throw std::invalid_argument("LogisticRegressionProblem: need at least 2 classes");
    }
    for (int y : labels_) {
        if (y < 0 || y >= num_classes_) {
            throw std::invalid_argument("LogisticRegressionProblem: label out of range");
        }
    }
    if (l2_ < 0.0) throw std::invalid_argument("LogisticRegressionProblem: l2 must be >= 0");
}

std::size_t LogisticRegressionProblem::dimension() const {
    return static_cast<std::size_t>(num_classes_) * (features_.cols() + 1);
}

namespace {

// logits[c] = <w_c, (x, 1)>
void logits_for_sample(std::span<const double> w, std::span<const double> x,
                       int num_classes, Vec& out) {
    const std::size_t f = x.size();
    out.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        const double* wc = w.data() + static_cast<std::size_t>(c) * (f + 1);
        double z = wc[f];  // bias
        for (std::size_t j = 0; j < f; ++j) z += wc[j] * x[j];
        out[c] = z;
    }
}

void softmax_inplace(Vec& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

}  // namespace

double LogisticRegressionProblem::evaluate(std::span<const double> w) const {
    if (w.size() != dimension()) throw std::domain_error("evaluate: dimension mismatch");
    const std::size_t n = features_.rows();
    Vec z;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        logits_for_sample(w, features_.row(i), num_classes_, z);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        total += zmax + std::log(sum) - z[labels_[i]];
    }
    return total / static_cast<double>(n) + 0.5 * l2_ * norm2(w);
}

Vec LogisticRegressionProblem::gradient_exact(std::span<const double> w,
                                              std::span<const std::size_t> batch) const {
    const std::size_t f = features_.cols();
    const std::size_t stride = f + 1;
    Vec grad(dimension(), 0.0);
    Vec z;
    const std::size_t count = batch.empty() ? features_.rows() : batch.size();
    for (std::size_t bi = 0; bi < count; ++bi) {
        const std::size_t i = batch.empty() ? bi : batch[bi];
        const auto x = features_.row(i);
        logits_for_sample(w, x, num_classes_, z);
        softmax_inplace(z);
        for (int c = 0; c < num_classes_; ++c) {
            const double err = z[c] - (labels_[i] == c ? 1.0 : 0.0);
            double* gc = grad.data() + static_cast<std::size_t>(c) * stride;
            for (std::size_t j = 0; j < f; ++j) gc[j] += err * x[j];
            gc[f] += err;
        }
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad[i] * inv + l2_ * w[i];
    return grad;
}

Vec LogisticRegressionProblem::gradient_lowprec(std::span<const double> w,
                                                std::span<const std::size_t> batch,
                                                const LpPipeline& lp) const {
    const std::size_t f = features_.cols();
    const std::size_t stride = f + 1;
    const std::size_t count = batch.empty() ? features_.rows() : batch.size();
    const FloatFormat& mul = lp.mul_fmt;
    const FloatFormat& acc = lp.acc_fmt;

    // Weights and features as the multipliers see them.
    Vec wq(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) wq[i] = round_to_format(w[i], mul).value;

    // Per-sample residuals err = softmax(logits) - onehot; logits come out of
    // the emulated multiply/accumulate path, softmax itself runs at working
    // precision (it is not a multiplier/accumulator operation).
    Matrix err(count, num_classes_);
    Vec xq(f + 1);
    Vec z(num_classes_);
    for (std::size_t bi = 0; bi < count; ++bi) {
        const std::size_t i = batch.empty() ? bi : batch[bi];
        const auto x = features_.row(i);
        for (std::size_t j = 0; j < f; ++j) xq[j] = round_to_format(x[j], mul).value;
        xq[f] = 1.0;
        for (int c = 0; c < num_classes_; ++c) {
            const std::span<const double> wc{wq.data() + static_cast<std::size_t>(c) * stride,
                                             stride};
            z[c] = lp_dot(wc, xq, mul, acc);
        }
        softmax_inplace(z);
        for (int c = 0; c < num_classes_; ++c) {
            const double e = z[c] - (labels_[i] == c ? 1.0 : 0.0);
            err(bi, c) = round_to_format(e, mul).value;
        }
    }

    // grad_cj = (1/count) sum_i err_ic * x_ij, accumulated like hardware:
    // products in mul, running sum in acc, then one scale and the L2 term.
    Vec grad(dimension(), 0.0);
    const double inv_count = round_to_format(1.0 / static_cast<double>(count), mul).value;
    const double l2q = round_to_format(l2_, mul).value;
    Vec err_col(count);
    Vec x_col(count);
    for (int c = 0; c < num_classes_; ++c) {
        for (std::size_t bi = 0; bi < count; ++bi) err_col[bi] = err(bi, c);
        for (std::size_t j = 0; j <= f; ++j) {
            for (std::size_t bi = 0; bi < count; ++bi) {
                const std::size_t i = batch.empty() ? bi : batch[bi];
                x_col[bi] = (j < f) ? features_(i, j) : 1.0;
            }
            const double sum = lp_dot(err_col, x_col, mul, acc);
            const double mean = lp_op(sum, inv_count, LpOp::mul, acc).value;
            const double reg = lp_op(l2q, wq[static_cast<std::size_t>(c) * stride + j],
                                     LpOp::mul, mul).value;
            grad[static_cast<std::size_t>(c) * stride + j] =
                lp_op(mean, reg, LpOp::add, acc).value;
        }
    }
    return grad;
}

std::optional<Vec> LogisticRegressionProblem::quasi_subgradient(std::span<const double> w,
                                                                const GradientRequest& req) const {
    if (w.size() != dimension()) throw std::domain_error("quasi_subgradient: dimension mismatch");
    // Convexity makes the gradient a valid quasi-subgradient. The gradient of
    // the regularized loss vanishes only at the optimum.
    Vec g = (req.lp != nullptr) ? gradient_lowprec(w, req.batch, *req.lp)
                                : gradient_exact(w, req.batch);
    if (norm2(g) == 0.0) return std::nullopt;
    return g;
}

double LogisticRegressionProblem::accuracy(std::span<const double> w) const {
    const std::size_t n = features_.rows();
    Vec z;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        logits_for_sample(w, features_.row(i), num_classes_, z);
        const auto arg = std::max_element(z.begin(), z.end()) - z.begin();
        if (static_cast<int>(arg) == labels_[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

HolderFit fit_holder(std::span<const std::pair<double, double>> samples, HolderFitMode mode) {
    std::vector<std::pair<double, double>> usable;
    for (const auto& [dist, excess] : samples) {
        if (!(dist > 0.0)) {
            throw std::domain_error("fit_holder: distances must be > 0");
        }
        if (excess > 0.0) usable.emplace_back(dist, excess);
    }
    if (usable.size() < 2) {
        throw std::domain_error("fit_holder: need at least 2 samples with positive excess");
    }
    bool distinct = false;
    for (std::size_t i = 1; i < usable.size(); ++i) {
        if (usable[i].first != usable[0].first) distinct = true;
    }
    if (!distinct) {
        throw std::domain_error("fit_holder: need at least 2 distinct distances");
    }

    // ln(excess) = p * ln(dist) + ln(L)
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(usable.size());
    for (const auto& [dist, excess] : usable) {
        const double x = std::log(dist);
        const double y = std::log(excess);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double p = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double L = std::exp((sy - p * sx) / n);

    if (mode == HolderFitMode::majorizing) {
        double max_ratio = 0.0;
        for (const auto& [dist, excess] : usable) {
            max_ratio = std::max(max_ratio, excess / std::pow(dist, p));
        }
        L = std::max(L, max_ratio);
    }

    double ss = 0.0;
    for (const auto& [dist, excess] : usable) {
        const double r = std::log(excess) - (p * std::log(dist) + std::log(L));
        ss += r * r;
    }

    HolderFit fit;
    fit.p = p;
    fit.L = L;
    fit.mode = mode;
    fit.residual = std::sqrt(ss / n);
    return fit;
}

ReferenceOptimum find_reference_optimum(const Problem& problem, std::span<const double> start,
                                        std::uint64_t steps, double rate) {
    if (start.size() != problem.dimension()) {
        throw std::domain_error("find_reference_optimum: start dimension mismatch");
    }
    if (!(rate > 0.0)) {
        throw std::domain_error("find_reference_optimum: rate must be > 0");
    }
    ReferenceOptimum ref;
    if (auto opt = problem.known_optimum()) {
        ref.w_star = std::move(*opt);
        ref.f_star = problem.evaluate(ref.w_star);
        ref.c0 = distance(start, ref.w_star);
        return ref;
    }

    Vec w(start.begin(), start.end());
    double loss = problem.evaluate(w);
    Vec best_w = w;
    double best_loss = loss;
    int consecutive_increases = 0;
    for (std::uint64_t k = 0; k < steps; ++k) {
        auto g = problem.quasi_subgradient(w);
        if (!g) break;  // gradient vanished: optimum reached
        axpy(-rate, *g, w);
        const double next_loss = problem.evaluate(w);
        // Tolerance keeps ulp-level oscillation at the fixed point from
        // registering as divergence.
        if (next_loss > loss + 1e-12 * (1.0 + std::fabs(loss))) {
            if (++consecutive_increases >= 50) {
                throw std::runtime_error(
                    "find_reference_optimum: diverging (50 consecutive loss increases; "
                    "step " + std::to_string(k) + ", loss " + std::to_string(next_loss) +
                    ", best " + std::to_string(best_loss) + "); reduce the rate");
            }
        } else {
            consecutive_increases = 0;
        }
        loss = next_loss;
        if (loss < best_loss) {
            best_loss = loss;
            best_w = w;
        }
    }
    ref.w_star = std::move(best_w);
    ref.f_star = best_loss;
    ref.c0 = distance(start, ref.w_star);
    return ref;
}

}  // namespace lpsgd
