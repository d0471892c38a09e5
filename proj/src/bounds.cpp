#include "lpsgd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lpsgd {

void BoundInputs::validate() const {
    if (!(p > 0.0)) throw std::domain_error("BoundInputs: p must be > 0");
    if (!(L > 0.0)) throw std::domain_error("BoundInputs: L must be > 0");
    if (!(eta > 0.0)) throw std::domain_error("BoundInputs: eta must be > 0");
    if (!(c > 0.0)) throw std::domain_error("BoundInputs: c must be > 0");
    if (R < 0.0 || S < 0.0) throw std::domain_error("BoundInputs: R, S must be >= 0");
    if (sigma_r_sq < 0.0 || sigma_s_sq < 0.0) {
        throw std::domain_error("BoundInputs: variances must be >= 0");
    }
    if (K < 1) throw std::domain_error("BoundInputs: K must be >= 1");
    if (d < 1) throw std::domain_error("BoundInputs: d must be >= 1");
}

double gamma(double eta, double R, double S, double c) {
    if (!(eta > 0.0)) throw std::domain_error("gamma: eta must be > 0");
    if (!(c > 0.0)) throw std::domain_error("gamma: c must be > 0");
    if (R < 0.0 || S < 0.0) throw std::domain_error("gamma: R, S must be >= 0");
    const double rho = R + S / eta;
    const double first = 0.5 * eta * (1.0 + rho * rho);
    const double second = 0.5 * eta * (1.0 - rho * rho) + c * rho;
    return std::max(first, second);
}

double liminf_bound(double p, double L, double f_star, double gamma_value) {
    if (gamma_value < 0.0) throw std::domain_error("liminf_bound: Gamma must be >= 0");
    return f_star + L * std::pow(gamma_value, p);
}

double finite_k_bound(const BoundInputs& in) {
    in.validate();
    const double g = gamma(in.eta, in.R, in.S, in.c);
    const double extra = in.c / (2.0 * in.eta * static_cast<double>(in.K));
    return in.f_star + in.L * std::pow(g + extra, in.p);
}

double stochastic_bound(double p, double L, double f_star, double eta,
                        double d, double sigma_r_sq, double sigma_s_sq) {
    if (!(eta > 0.0)) throw std::domain_error("stochastic_bound: eta must be > 0");
    if (sigma_r_sq < 0.0 || sigma_s_sq < 0.0) {
        throw std::domain_error("stochastic_bound: variances must be >= 0");
    }
    const double radius = 0.5 * eta * (1.0 + d * sigma_r_sq) + d * sigma_s_sq / (2.0 * eta);
    return f_star + L * std::pow(radius, p);
}

DeterministicStepResult optimal_step_deterministic(double R, double S, double c) {
    if (R >= 1.0) {
        throw std::domain_error("optimal_step_deterministic: requires R < 1");
    }
    if (R < 0.0 || S < 0.0 || !(c > 0.0)) {
        throw std::domain_error("optimal_step_deterministic: need R >= 0, S >= 0, c > 0");
    }
    if (R == 0.0 && S == 0.0) {
        throw std::domain_error(
            "optimal_step_deterministic: degenerate with R = S = 0 (objective is eta/2)");
    }

    DeterministicStepResult res;
    auto add_candidate = [&](const std::string& name, double eta, bool valid) {
        StepCandidate cand;
        cand.name = name;
        cand.eta = eta;
        cand.valid = valid && std::isfinite(eta) && eta > 0.0;
        cand.g_value = cand.valid ? gamma(eta, R, S, c)
                                  : std::numeric_limits<double>::quiet_NaN();
        res.candidates.push_back(cand);
    };

    add_candidate("eta1", S / std::sqrt(1.0 + R * R), S > 0.0);
    // Both second-branch stationary-point formulas are carried: they disagree,
    // and the grid below arbitrates which one actually minimizes.
    add_candidate("eta2", c > 2.0 * S ? std::sqrt(S * (c - 2.0 * S) / (1.0 - R * R)) : 0.0,
                  S > 0.0 && c > 2.0 * S);
    add_candidate("eta2_alt",
                  2.0 * c > S ? std::sqrt(S * (2.0 * c - S) / (1.0 - R * R)) : 0.0,
                  S > 0.0 && 2.0 * c > S);
    add_candidate("eta3", R > 0.0 ? (c - S) / R : 0.0, R > 0.0 && c > S);

    const StepCandidate* best = nullptr;
    for (const StepCandidate& cand : res.candidates) {
        if (cand.valid && (best == nullptr || cand.g_value < best->g_value)) {
            best = &cand;
        }
    }

    // Fine grid over (0, c]; catches the boundary infimum (S = 0) and guards
    // the candidate formulas.
    const int grid_n = 200000;
    double grid_eta = c / grid_n;
    double grid_g = gamma(grid_eta, R, S, c);
    for (int i = 2; i <= grid_n; ++i) {
        const double eta = c * static_cast<double>(i) / grid_n;
        const double g = gamma(eta, R, S, c);
        if (g < grid_g) {
            grid_g = g;
            grid_eta = eta;
        }
    }

    if (best != nullptr && best->g_value <= grid_g + 1e-12 * (1.0 + std::fabs(grid_g))) {
        res.eta_star = best->eta;
        res.g_at_eta_star = best->g_value;
    } else {
        res.eta_star = grid_eta;
        res.g_at_eta_star = grid_g;
        res.grid_fallback = true;
    }
    return res;
}

StochasticStepResult optimal_step_stochastic(double d, double sigma_r_sq, double sigma_s_sq) {
    if (d < 1.0 || sigma_r_sq < 0.0 || sigma_s_sq < 0.0) {
        throw std::domain_error("optimal_step_stochastic: need d >= 1 and variances >= 0");
    }
    StochasticStepResult res;
    if (sigma_s_sq == 0.0) {
        res.eta_star = 0.0;
        res.degenerate_zero = true;
        return res;
    }
    res.eta_star = std::sqrt(d * sigma_s_sq / (d * sigma_r_sq + 1.0));
    return res;
}

void Lemma1Instance::validate() const {
    if (!(eta > 0.0)) throw std::domain_error("Lemma1Instance: eta must be > 0");
    if (R < 0.0 || R >= 1.0) throw std::domain_error("Lemma1Instance: requires 0 <= R < 1");
    if (!(B > 0.0)) throw std::domain_error("Lemma1Instance: B must be > 0");
    if (!(C > B)) throw std::domain_error("Lemma1Instance: requires C > B");
    if (g.empty()) throw std::domain_error("Lemma1Instance: g must be non-empty");
    const double n = norm(g);
    if (std::fabs(n - 1.0) > 1e-9) {
        throw std::domain_error("Lemma1Instance: g must be a unit vector");
    }
}

double lemma1_closed_form(const Lemma1Instance& inst) {
    inst.validate();
    const double radicand = inst.eta * inst.eta + inst.C * inst.C - 2.0 * inst.eta * inst.B;
    if (radicand < 0.0) {
        throw std::domain_error("lemma1_closed_form: negative radicand eta^2 + C^2 - 2 eta B = " +
                                std::to_string(radicand));
    }
    const double first = inst.eta * (1.0 + inst.R * inst.R) +
                         2.0 * inst.R * std::sqrt(radicand) - 2.0 * inst.B;
    const double second = inst.eta * (inst.R * inst.R - 1.0);
    return std::max(first, second);
}

namespace {

// F(x, r) with the r-maximization folded in: on ||r|| <= R the objective is
// convex in r and constant-eta*R^2 on the sphere, so the best r given x is
// R * (eta g - x)/||eta g - x|| (any r on the sphere when x = eta g).
double lemma1_best_over_r(const Lemma1Instance& inst, const Vec& x) {
    const std::size_t d = inst.dimension();
    Vec dir(d);
    for (std::size_t i = 0; i < d; ++i) dir[i] = inst.eta * inst.g[i] - x[i];
    const double dn = norm(dir);
    Vec gr(d);
    if (dn == 0.0) {
        return inst.eta * (inst.R * inst.R - 1.0);
    }
    for (std::size_t i = 0; i < d; ++i) gr[i] = inst.g[i] + inst.R * dir[i] / dn;
    double ip = 0.0;
    for (std::size_t i = 0; i < d; ++i) ip += x[i] * gr[i];
    return inst.eta * norm2(gr) - 2.0 * ip;
}

// Orthonormal basis whose first vector is g.
std::vector<Vec> basis_from(const Vec& g) {
    const std::size_t d = g.size();
    std::vector<Vec> basis;
    basis.push_back(g);
    for (std::size_t axis = 0; axis < d && basis.size() < d; ++axis) {
        Vec v(d, 0.0);
        v[axis] = 1.0;
        for (const Vec& b : basis) {
            const double proj = dot(v, b);
            for (std::size_t i = 0; i < d; ++i) v[i] -= proj * b[i];
        }
        const double n = norm(v);
        if (n > 1e-8) {
            for (double& x : v) x /= n;
            basis.push_back(std::move(v));
        }
    }
    return basis;
}

}  // namespace

double lemma1_brute_force(const Lemma1Instance& inst, int resolution) {
    inst.validate();
    const std::size_t d = inst.dimension();
    if (d != 2 && d != 3) {
        throw std::domain_error("lemma1_brute_force: oracle supports d in {2, 3}");
    }
    if (resolution < 100) {
        throw std::domain_error("lemma1_brute_force: need >= 100 samples per dimension");
    }
    const std::vector<Vec> basis = basis_from(inst.g);
    const double pi = 3.14159265358979323846;
    const double theta_cap = std::acos(std::clamp(inst.B / inst.C, -1.0, 1.0));

    auto compose = [&](double along_g, double c1, double c2) {
        Vec x(d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = along_g * basis[0][i] + c1 * basis[1][i];
            if (d == 3) x[i] += c2 * basis[2][i];
        }
        return x;
    };

    double best = -std::numeric_limits<double>::infinity();

    // Structured search: x on the boundary sphere, within the feasible cap.
    if (d == 2) {
        for (int i = 0; i <= resolution; ++i) {
            const double theta = -theta_cap + 2.0 * theta_cap * i / resolution;
            const Vec x = compose(inst.C * std::cos(theta), inst.C * std::sin(theta), 0.0);
            best = std::max(best, lemma1_best_over_r(inst, x));
        }
    } else {
        for (int i = 0; i <= resolution; ++i) {
            const double theta = theta_cap * i / resolution;
            for (int j = 0; j < resolution; ++j) {
                const double phi = 2.0 * pi * j / resolution;
                const double s = inst.C * std::sin(theta);
                const Vec x = compose(inst.C * std::cos(theta), s * std::cos(phi),
                                      s * std::sin(phi));
                best = std::max(best, lemma1_best_over_r(inst, x));
            }
        }
    }

    // Dense fallback over the full feasible region (radius included), in case
    // the boundary reduction misses the optimum.
    for (int ri = 1; ri <= resolution; ++ri) {
        const double radius = inst.C * ri / resolution;
        if (radius < inst.B) continue;  // whole shell infeasible: <g, x> <= ||x|| < B
        const double shell_cap = std::acos(std::clamp(inst.B / radius, -1.0, 1.0));
        if (d == 2) {
            for (int i = 0; i <= resolution; ++i) {
                const double theta = -shell_cap + 2.0 * shell_cap * i / resolution;
                const Vec x = compose(radius * std::cos(theta), radius * std::sin(theta), 0.0);
                best = std::max(best, lemma1_best_over_r(inst, x));
            }
        } else {
            const int sub = std::max(10, resolution / 10);
            for (int i = 0; i <= sub; ++i) {
                const double theta = shell_cap * i / sub;
                for (int j = 0; j < sub; ++j) {
                    const double phi = 2.0 * pi * j / sub;
                    const double s = radius * std::sin(theta);
                    const Vec x = compose(radius * std::cos(theta), s * std::cos(phi),
                                          s * std::sin(phi));
                    best = std::max(best, lemma1_best_over_r(inst, x));
                }
            }
        }
    }
    return best;
}

BoundReport compute_bound_report(const BoundInputs& inputs) {
    inputs.validate();
    BoundReport report;
    report.inputs = inputs;
    report.gamma_value = gamma(inputs.eta, inputs.R, inputs.S, inputs.c);
    report.deterministic_valid = inputs.R < 1.0;
    report.deterministic_vacuous = report.gamma_value >= inputs.c;
    report.bound_deterministic =
        liminf_bound(inputs.p, inputs.L, inputs.f_star, report.gamma_value);
    report.bound_finite_k = finite_k_bound(inputs);
    report.bound_stochastic =
        stochastic_bound(inputs.p, inputs.L, inputs.f_star, inputs.eta,
                         static_cast<double>(inputs.d), inputs.sigma_r_sq, inputs.sigma_s_sq);
    if (report.deterministic_valid && !(inputs.R == 0.0 && inputs.S == 0.0)) {
        report.eta_star_deterministic = optimal_step_deterministic(inputs.R, inputs.S, inputs.c);
        report.has_eta_star_deterministic = true;
    }
    report.eta_star_stochastic = optimal_step_stochastic(
        static_cast<double>(inputs.d), inputs.sigma_r_sq, inputs.sigma_s_sq);
    return report;
}

}  // namespace lpsgd
