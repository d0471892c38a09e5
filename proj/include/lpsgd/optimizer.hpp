#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpsgd/lowfloat.hpp"
#include "lpsgd/problems.hpp"
#include "lpsgd/vecmath.hpp"

namespace lpsgd {

enum class GradientNoiseKind { none, uniform, arithmetic };
enum class UpdateNoiseKind { none, uniform, arithmetic };

// Specification of the per-step perturbations: r_k on the normalized
// gradient, s_k on the weight update. Uniform noise draws each coordinate
// i.i.d. on [-B, B] (per-coordinate variance B^2/3); arithmetic noise is the
// realized error of the emulated-precision pipeline. An arithmetic update
// with no update_fmt keeps the update at working precision, so s_k = 0.
struct NoiseModel {
    GradientNoiseKind gradient = GradientNoiseKind::none;
    double gradient_bound = 0.0;  // B_r
    std::optional<FloatFormat> mul_fmt;
    std::optional<FloatFormat> acc_fmt;

    UpdateNoiseKind update = UpdateNoiseKind::none;
    double update_bound = 0.0;  // B_s
    std::optional<FloatFormat> update_fmt;

    std::uint64_t seed = 0;
    std::size_t batch_size = 0;  // 0 = full batch

    void validate() const;
};

// Feasible region: all of R^d, or a Euclidean ball.
struct Domain {
    enum class Kind { unconstrained, ball };
    Kind kind = Kind::unconstrained;
    Vec center;
    double radius = 0.0;

    static Domain unconstrained() { return {}; }
    static Domain ball(Vec center, double radius);

    // 2 * radius for balls, +infinity otherwise.
    double diameter() const;
    bool contains(std::span<const double> x, double tol = 1e-12) const;
};

// Euclidean projection onto the domain (identity when unconstrained).
Vec project(const Domain& domain, std::span<const double> x);

struct StepResult {
    Vec w_next;
    Vec r;  // realized gradient error
    Vec s;  // realized update error
    bool at_optimum = false;
};

// One step w -> P(w - eta * (ghat + r_k) + s_k), where ghat is the exact
// normalized full-batch quasi-subgradient at w and r_k collects everything
// that perturbs the used direction away from it (injected noise, emulated
// arithmetic, mini-batch sampling). step_index keys the noise streams.
StepResult sgd_step(std::span<const double> w, const Problem& problem, double eta,
                    const NoiseModel& noise, const Domain& domain,
                    std::uint64_t step_index = 0);

struct TrajectoryRow {
    std::uint64_t k = 0;
    double loss = 0.0;
    double min_loss = 0.0;
    double dist_to_opt = 0.0;  // NaN when no reference is known
    double norm_r = 0.0;
    double norm_s = 0.0;
};

enum class RunStatus { completed, reached_optimum, aborted_nonfinite };

struct Trajectory {
    double initial_loss = 0.0;
    double initial_dist = 0.0;  // NaN when no reference is known
    std::vector<TrajectoryRow> rows;
    RunStatus status = RunStatus::completed;
    std::string diagnostics;

    // Summary.
    double min_loss = 0.0;
    std::uint64_t argmin_k = 0;  // 0 = the start point
    double d_sigma_r_sq_hat = 0.0;  // mean ||r_k||^2
    double d_sigma_s_sq_hat = 0.0;  // mean ||s_k||^2
    double r_hat_max = 0.0;         // max ||r_k||
    double s_hat_max = 0.0;         // max ||s_k||
    double eta_used = 0.0;          // eta after rounding into update_fmt

    // Loss of the best state among the first K states w_0..w_{K-1}, i.e.
    // excluding the state reached by the K-th step.
    double min_loss_before(std::uint64_t K) const;
};

// K steps of sgd_step from start, deterministic in (seed, config). Stops
// early when the optimum is reached; aborts with a partial trajectory if the
// loss turns non-finite.
Trajectory run(const Problem& problem, std::span<const double> start, double eta,
               std::uint64_t steps, const NoiseModel& noise, const Domain& domain,
               const ReferenceOptimum* reference = nullptr);

struct NoiseMoments {
    double d_sigma_r_sq = 0.0;
    double d_sigma_s_sq = 0.0;
    double r_max = 0.0;
    double s_max = 0.0;
};

// Runs the configured noise pipeline for probe_steps alongside the exact
// pipeline at the same iterates and reports the realized moments: sample
// means of ||r_k||^2 and ||s_k||^2 and the sample maxima of the norms.
NoiseMoments estimate_noise_moments(const Problem& problem, const NoiseModel& noise,
                                    const Domain& domain, std::span<const double> start,
                                    double eta, std::uint64_t probe_steps);

// CSV emission: header k,loss,min_loss,dist_to_opt,norm_r,norm_s followed by
// any constant-valued extra columns; doubles are printed with shortest
// round-trip formatting. summary_json, when non-empty, is appended as a
// trailing "# summary: {...}" comment line.
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory,
                          std::span<const std::pair<std::string, double>> extra_columns = {},
                          const std::string& summary_json = {});

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace lpsgd
