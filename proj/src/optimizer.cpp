#include "lpsgd/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "lpsgd/rng.hpp"

namespace lpsgd {

void NoiseModel::validate() const {
    if (gradient == GradientNoiseKind::uniform && gradient_bound < 0.0) {
        throw std::domain_error("NoiseModel: gradient bound must be >= 0");
    }
    if (update == UpdateNoiseKind::uniform && update_bound < 0.0) {
        throw std::domain_error("NoiseModel: update bound must be >= 0");
    }
    if (gradient == GradientNoiseKind::arithmetic && (!mul_fmt || !acc_fmt)) {
        throw std::domain_error("NoiseModel: arithmetic gradient noise needs mul/acc formats");
    }
}

Domain Domain::ball(Vec center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("Domain::ball: radius must be > 0");
    Domain d;
    d.kind = Kind::ball;
    d.center = std::move(center);
    d.radius = radius;
    return d;
}

double Domain::diameter() const {
    return kind == Kind::ball ? 2.0 * radius : std::numeric_limits<double>::infinity();
}

bool Domain::contains(std::span<const double> x, double tol) const {
    if (kind == Kind::unconstrained) return true;
    return distance(x, center) <= radius * (1.0 + tol) + tol;
}

Vec project(const Domain& domain, std::span<const double> x) {
    if (domain.kind == Domain::Kind::unconstrained) {
        return Vec(x.begin(), x.end());
    }
    const double dist = distance(x, domain.center);
    if (dist <= domain.radius) {
        return Vec(x.begin(), x.end());
    }
    Vec out(x.size());
    const double scale = domain.radius / dist;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = domain.center[i] + scale * (x[i] - domain.center[i]);
    }
    return out;
}

namespace {

Vec normalized(const Vec& g) {
    const double n = norm(g);
    Vec out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / n;
    return out;
}

// Low-precision normalization: ||g||^2 through the emulated dot product,
// square root rounded once, then per-coordinate division in mul_fmt.
Vec normalized_lowprec(const Vec& g, const FloatFormat& mul, const FloatFormat& acc) {
    const double n2 = lp_dot(g, g, mul, acc);
    const double n = n2 > 0.0 ? round_to_format(std::sqrt(n2), mul).value : 0.0;
    if (n == 0.0) {
        // The emulated norm underflowed to zero; fall back to the exact norm
        // so the direction stays defined.
        return normalized(g);
    }
    Vec out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] = lp_op(round_to_format(g[i], mul).value, n, LpOp::div, mul).value;
    }
    return out;
}

std::vector<std::size_t> draw_batch(const NoiseModel& noise, std::size_t n,
                                    std::uint64_t step_index) {
    std::vector<std::size_t> batch;
    if (noise.batch_size == 0 || n == 0 || noise.batch_size >= n) return batch;
    StreamRng rng(noise.seed, streams::kBatchSampling, step_index);
    batch.resize(noise.batch_size);
    for (auto& idx : batch) idx = rng.next_index(n);
    return batch;
}

}  // namespace

StepResult sgd_step(std::span<const double> w, const Problem& problem, double eta,
                    const NoiseModel& noise, const Domain& domain,
                    std::uint64_t step_index) {
    if (!(eta > 0.0)) throw std::domain_error("sgd_step: eta must be > 0");
    noise.validate();
    const std::size_t d = w.size();

    // Exact full-batch baseline; every perturbation is measured against it.
    auto g_exact = problem.quasi_subgradient(w);
    if (!g_exact) {
        StepResult res;
        res.at_optimum = true;
        return res;
    }
    const Vec ghat_exact = normalized(*g_exact);

    const std::vector<std::size_t> batch = draw_batch(noise, problem.num_samples(), step_index);

    Vec ghat_used;
    switch (noise.gradient) {
        case GradientNoiseKind::none: {
            if (batch.empty()) {
                ghat_used = ghat_exact;
            } else {
                auto gb = problem.quasi_subgradient(w, {.batch = batch});
                ghat_used = gb ? normalized(*gb) : ghat_exact;
            }
            break;
        }
        case GradientNoiseKind::uniform: {
            Vec base = ghat_exact;
            if (!batch.empty()) {
                auto gb = problem.quasi_subgradient(w, {.batch = batch});
                if (gb) base = normalized(*gb);
            }
            StreamRng rng(noise.seed, streams::kGradientNoise, step_index);
            ghat_used = base;
            for (std::size_t i = 0; i < d; ++i) {
                ghat_used[i] += rng.next_symmetric(noise.gradient_bound);
            }
            break;
        }
        case GradientNoiseKind::arithmetic: {
            const LpPipeline lp{*noise.mul_fmt, *noise.acc_fmt};
            auto gb = problem.quasi_subgradient(w, {.batch = batch, .lp = &lp});
            ghat_used = gb ? normalized_lowprec(*gb, lp.mul_fmt, lp.acc_fmt) : ghat_exact;
            break;
        }
    }

    StepResult res;
    res.r = sub(ghat_used, ghat_exact);

    // t = w - eta * ghat_used at working precision; the update error s_k is
    // whatever the configured update path adds on top of it.
    Vec t(d);
    for (std::size_t i = 0; i < d; ++i) t[i] = w[i] - eta * ghat_used[i];

    switch (noise.update) {
        case UpdateNoiseKind::none: {
            res.s.assign(d, 0.0);
            res.w_next = project(domain, t);
            break;
        }
        case UpdateNoiseKind::uniform: {
            StreamRng rng(noise.seed, streams::kUpdateNoise, step_index);
            res.s.resize(d);
            Vec moved(d);
            for (std::size_t i = 0; i < d; ++i) {
                res.s[i] = rng.next_symmetric(noise.update_bound);
                moved[i] = t[i] + res.s[i];
            }
            res.w_next = project(domain, moved);
            break;
        }
        case UpdateNoiseKind::arithmetic: {
            if (!noise.update_fmt) {
                // Working-precision update: the pipeline adds nothing.
                res.s.assign(d, 0.0);
                res.w_next = project(domain, t);
                break;
            }
            const FloatFormat& fmt = *noise.update_fmt;
            const double eta_f = round_to_format(eta, fmt).value;
            Vec w_lp(d);
            res.s.resize(d);
            for (std::size_t i = 0; i < d; ++i) {
                const double gi = round_to_format(ghat_used[i], fmt).value;
                const double step = lp_op(eta_f, gi, LpOp::mul, fmt).value;
                w_lp[i] = lp_op(round_to_format(w[i], fmt).value, step, LpOp::sub, fmt).value;
                res.s[i] = w_lp[i] - t[i];
            }
            Vec projected = project(domain, w_lp);
            // Keep iterates representable in the update format after the
            // projection (which is a working-precision operation).
            for (double& x : projected) x = round_to_format(x, fmt).value;
            res.w_next = std::move(projected);
            break;
        }
    }
    return res;
}

double Trajectory::min_loss_before(std::uint64_t K) const {
    double m = initial_loss;
    for (const TrajectoryRow& row : rows) {
        if (row.k >= K) break;
        m = std::min(m, row.loss);
    }
    return m;
}

Trajectory run(const Problem& problem, std::span<const double> start, double eta,
               std::uint64_t steps, const NoiseModel& noise, const Domain& domain,
               const ReferenceOptimum* reference) {
    if (steps < 1) throw std::domain_error("run: need at least one step");
    if (start.size() != problem.dimension()) throw std::domain_error("run: start dimension mismatch");
    if (!domain.contains(start)) throw std::domain_error("run: start outside the domain");
    noise.validate();

    Trajectory traj;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Vec w(start.begin(), start.end());
    traj.eta_used = eta;
    if (noise.update == UpdateNoiseKind::arithmetic && noise.update_fmt) {
        // eta must live in the update format; iterates start there too.
        traj.eta_used = round_to_format(eta, *noise.update_fmt).value;
        for (double& x : w) x = round_to_format(x, *noise.update_fmt).value;
    }

    traj.initial_loss = problem.evaluate(w);
    traj.initial_dist = reference ? distance(w, reference->w_star) : nan;
    traj.min_loss = traj.initial_loss;
    traj.argmin_k = 0;

    double sum_r2 = 0.0;
    double sum_s2 = 0.0;
    traj.rows.reserve(steps);

    for (std::uint64_t k = 1; k <= steps; ++k) {
        StepResult step = sgd_step(w, problem, traj.eta_used, noise, domain, k);
        if (step.at_optimum) {
            traj.status = RunStatus::reached_optimum;
            break;
        }
        w = std::move(step.w_next);
        const double loss = problem.evaluate(w);
        if (!std::isfinite(loss)) {
            traj.status = RunStatus::aborted_nonfinite;
            traj.diagnostics = "non-finite loss at step " + std::to_string(k);
            break;
        }
        if (loss < traj.min_loss) {
            traj.min_loss = loss;
            traj.argmin_k = k;
        }
        const double nr = norm(step.r);
        const double ns = norm(step.s);
        sum_r2 += nr * nr;
        sum_s2 += ns * ns;
        traj.r_hat_max = std::max(traj.r_hat_max, nr);
        traj.s_hat_max = std::max(traj.s_hat_max, ns);

        TrajectoryRow row;
        row.k = k;
        row.loss = loss;
        row.min_loss = traj.min_loss;
        row.dist_to_opt = reference ? distance(w, reference->w_star) : nan;
        row.norm_r = nr;
        row.norm_s = ns;
        traj.rows.push_back(row);
    }

    if (!traj.rows.empty()) {
        const double n = static_cast<double>(traj.rows.size());
        traj.d_sigma_r_sq_hat = sum_r2 / n;
        traj.d_sigma_s_sq_hat = sum_s2 / n;
    }
    return traj;
}

NoiseMoments estimate_noise_moments(const Problem& problem, const NoiseModel& noise,
                                    const Domain& domain, std::span<const double> start,
                                    double eta, std::uint64_t probe_steps) {
    if (probe_steps < 30) {
        throw std::domain_error("estimate_noise_moments: need at least 30 probe steps");
    }
    const Trajectory traj = run(problem, start, eta, probe_steps, noise, domain);
    if (traj.status == RunStatus::reached_optimum && traj.rows.size() < 30) {
        throw std::domain_error("estimate_noise_moments: optimum reached before 30 probes");
    }
    NoiseMoments m;
    m.d_sigma_r_sq = traj.d_sigma_r_sq_hat;
    m.d_sigma_s_sq = traj.d_sigma_s_sq_hat;
    m.r_max = traj.r_hat_max;
    m.s_max = traj.s_hat_max;
    return m;
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory,
                          std::span<const std::pair<std::string, double>> extra_columns,
                          const std::string& summary_json) {
    os << "k,loss,min_loss,dist_to_opt,norm_r,norm_s";
    for (const auto& [name, value] : extra_columns) os << ',' << name;
    os << '\n';
    for (const TrajectoryRow& row : trajectory.rows) {
        os << row.k << ',' << format_double(row.loss) << ',' << format_double(row.min_loss)
           << ',' << format_double(row.dist_to_opt) << ',' << format_double(row.norm_r)
           << ',' << format_double(row.norm_s);
        for (const auto& [name, value] : extra_columns) os << ',' << format_double(value);
        os << '\n';
    }
    if (!summary_json.empty()) {
        os << "# summary: " << summary_json << '\n';
    }
}

}  // namespace lpsgd
