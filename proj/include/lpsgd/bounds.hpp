#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lpsgd/vecmath.hpp"

namespace lpsgd {

// Inputs shared by the convergence bounds. c is the domain diameter for the
// liminf bound and the start distance c0 for the finite-horizon bound.
struct BoundInputs {
    double p = 1.0;            // Hoelder order
    double L = 1.0;            // Hoelder constant
    double f_star = 0.0;
    double eta = 0.0;
    double c = 0.0;
    double R = 0.0;            // gradient-error norm bound (needs R < 1)
    double S = 0.0;            // update-error norm bound
    std::size_t d = 1;         // dimension
    double sigma_r_sq = 0.0;   // per-coordinate gradient-noise variance
    double sigma_s_sq = 0.0;   // per-coordinate update-noise variance
    std::uint64_t K = 1;       // iteration budget (finite-horizon bound only)

    void validate() const;
};

// Radius term of the deterministic liminf bound:
//   max{ (eta/2)[1 + rho^2], (eta/2)[1 - rho^2] + c*rho }   with rho = R + S/eta.
// As a function of eta this is also the objective minimized by the
// deterministic optimal step size.
double gamma(double eta, double R, double S, double c);

// f_star + L * Gamma^p
double liminf_bound(double p, double L, double f_star, double gamma_value);

// f_star + L * [Gamma(c0) + c0 / (2 eta K)]^p, with inputs.c playing c0.
double finite_k_bound(const BoundInputs& inputs);

// f_star + L * [(eta/2)(1 + d sigma_r^2) + d sigma_s^2 / (2 eta)]^p
double stochastic_bound(double p, double L, double f_star, double eta,
                        double d, double sigma_r_sq, double sigma_s_sq);

struct StepCandidate {
    std::string name;
    double eta = 0.0;
    double g_value = 0.0;
    bool valid = false;
};

struct DeterministicStepResult {
    double eta_star = 0.0;
    double g_at_eta_star = 0.0;
    std::vector<StepCandidate> candidates;
    // True when a fine grid over (0, c] beat every closed-form candidate
    // (the objective's infimum sits at the eta -> 0 boundary when S = 0).
    bool grid_fallback = false;
};

// Minimizes gamma(eta, R, S, c) over eta > 0. Evaluates the closed-form
// candidates S/sqrt(1+R^2), sqrt(S(c-2S)/(1-R^2)), sqrt(S(2c-S)/(1-R^2)) and
// (c-S)/R, arbitrated against a fine grid. Requires 0 <= R < 1 and not
// R = S = 0 (every eta would be stationary in the degenerate case).
DeterministicStepResult optimal_step_deterministic(double R, double S, double c);

struct StochasticStepResult {
    double eta_star = 0.0;
    // sigma_s^2 = 0 makes the bound decrease toward eta -> 0; no positive
    // minimizer exists and eta_star is reported as the degenerate limit.
    bool degenerate_zero = false;
};

// sqrt(d sigma_s^2 / (d sigma_r^2 + 1)), the minimizer of the stochastic bound.
StochasticStepResult optimal_step_stochastic(double d, double sigma_r_sq, double sigma_s_sq);

// Instance of the constrained maximization of
//   F(x, r) = eta ||g + r||^2 - 2 <x, g + r>
// over <g, x> >= B, ||r|| <= R, ||x|| <= C with ||g|| = 1.
struct Lemma1Instance {
    double eta = 0.0;
    double R = 0.0;   // in [0, 1)
    double B = 0.0;
    double C = 0.0;   // > B
    Vec g;            // unit vector, dimension d

    std::size_t dimension() const { return g.size(); }
    void validate() const;
};

// Closed-form upper bound:
//   max{ eta(1+R^2) + 2R sqrt(eta^2 + C^2 - 2 eta B) - 2B, eta(R^2 - 1) }.
double lemma1_closed_form(const Lemma1Instance& inst);

// Numerical maximization oracle for d in {2, 3}: searches x on the boundary
// sphere cap (where the maximum is attained for d >= 2) and on a dense grid
// over the full feasible region; given x, the optimal r is closed-form.
// resolution is the sample count per search dimension (>= 100).
double lemma1_brute_force(const Lemma1Instance& inst, int resolution);

// Evaluation of every applicable bound for one set of inputs.
struct BoundReport {
    BoundInputs inputs;
    double gamma_value = 0.0;
    double bound_deterministic = 0.0;  // liminf form, c = diameter
    double bound_finite_k = 0.0;       // c read as c0
    double bound_stochastic = 0.0;
    bool deterministic_valid = false;  // R < 1
    bool deterministic_vacuous = false;  // Gamma >= c
    DeterministicStepResult eta_star_deterministic;  // only when R < 1 and not R=S=0
    bool has_eta_star_deterministic = false;
    StochasticStepResult eta_star_stochastic;
};

BoundReport compute_bound_report(const BoundInputs& inputs);

}  // namespace lpsgd
