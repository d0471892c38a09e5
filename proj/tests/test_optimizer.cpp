#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "lpsgd/optimizer.hpp"
#include "lpsgd/rng.hpp"

using namespace lpsgd;

namespace {

Vec random_vec(StreamRng& rng, std::size_t d, double scale) {
    Vec v(d);
    for (double& x : v) x = scale * (2.0 * rng.next_unit() - 1.0);
    return v;
}

}  // namespace

TEST_CASE("projection onto a ball") {
    const Domain ball = Domain::ball(Vec{0.0, 0.0}, 1.0);
    const Vec inside = project(ball, Vec{0.5, 0.0});
    CHECK(inside[0] == 0.5);
    CHECK(inside[1] == 0.0);
    const Vec scaled = project(ball, Vec{3.0, 4.0});
    CHECK(scaled[0] == doctest::Approx(0.6));
    CHECK(scaled[1] == doctest::Approx(0.8));
    CHECK(ball.diameter() == 2.0);
    CHECK(Domain::unconstrained().diameter() == std::numeric_limits<double>::infinity());
}

TEST_CASE("projection is nonexpansive") {
    const Domain ball = Domain::ball(Vec{0.5, -0.25, 1.0}, 2.0);
    StreamRng rng(4, 1, 0);
    for (int i = 0; i < 10000; ++i) {
        const Vec x = random_vec(rng, 3, 6.0);
        const Vec y = random_vec(rng, 3, 6.0);
        CHECK(distance(project(ball, x), project(ball, y)) <= distance(x, y) + 1e-12);
    }
}

TEST_CASE("noiseless step moves one eta along the unit direction") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const StepResult step = sgd_step(Vec{3.0, 4.0}, f, 1.0, noise, Domain::unconstrained());
    REQUIRE_FALSE(step.at_optimum);
    CHECK(step.w_next[0] == doctest::Approx(2.4));
    CHECK(step.w_next[1] == doctest::Approx(3.2));
    CHECK(norm(step.r) == 0.0);
    CHECK(norm(step.s) == 0.0);
}

TEST_CASE("zero-bound uniform noise equals the noiseless step") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel none;
    NoiseModel zeroed;
    zeroed.gradient = GradientNoiseKind::uniform;
    zeroed.gradient_bound = 0.0;
    zeroed.update = UpdateNoiseKind::uniform;
    zeroed.update_bound = 0.0;
    zeroed.seed = 9;
    const StepResult a = sgd_step(Vec{3.0, 4.0}, f, 0.25, none, Domain::unconstrained(), 3);
    const StepResult b = sgd_step(Vec{3.0, 4.0}, f, 0.25, zeroed, Domain::unconstrained(), 3);
    CHECK(a.w_next == b.w_next);
    CHECK(norm(b.r) == 0.0);
    CHECK(norm(b.s) == 0.0);
}

TEST_CASE("arithmetic update at working precision realizes s = 0 exactly") {
    PowerNormFunction f(3.0, 0.2, 4);
    NoiseModel noise;
    noise.gradient = GradientNoiseKind::arithmetic;
    noise.mul_fmt = FloatFormat::bfloat16();
    noise.acc_fmt = FloatFormat(8, 15);
    noise.update = UpdateNoiseKind::arithmetic;
    noise.update_fmt = std::nullopt;  // working precision
    const StepResult step =
        sgd_step(Vec{1.0, -2.0, 0.5, 3.0}, f, 0.125, noise, Domain::unconstrained(), 1);
    for (double s : step.s) CHECK(s == 0.0);
    CHECK(norm(step.r) > 0.0);  // bfloat pipeline does perturb the direction
}

TEST_CASE("at-optimum signal propagates") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const StepResult step = sgd_step(Vec{0.0, 0.0}, f, 0.5, noise, Domain::unconstrained());
    CHECK(step.at_optimum);
}

TEST_CASE("run records exactly K rows and is deterministic") {
    PowerNormFunction f(3.0, 0.2, 8);
    NoiseModel noise;
    noise.gradient = GradientNoiseKind::uniform;
    noise.gradient_bound = 0.05;
    noise.update = UpdateNoiseKind::uniform;
    noise.update_bound = 0.05;
    noise.seed = 5;
    const Vec start(8, 1.0);

    const Trajectory one = run(f, start, 0.1, 1, noise, Domain::unconstrained());
    CHECK(one.rows.size() == 1);

    const Trajectory a = run(f, start, 0.1, 200, noise, Domain::unconstrained());
    const Trajectory b = run(f, start, 0.1, 200, noise, Domain::unconstrained());
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].loss == b.rows[i].loss);
        CHECK(a.rows[i].norm_r == b.rows[i].norm_r);
        CHECK(a.rows[i].norm_s == b.rows[i].norm_s);
    }
    std::ostringstream csv_a, csv_b;
    write_trajectory_csv(csv_a, a);
    write_trajectory_csv(csv_b, b);
    CHECK(csv_a.str() == csv_b.str());

    NoiseModel other = noise;
    other.seed = 6;
    const Trajectory c = run(f, start, 0.1, 200, other, Domain::unconstrained());
    CHECK(c.rows.back().loss != a.rows.back().loss);
}

TEST_CASE("running minimum is non-increasing and within the domain") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    noise.gradient = GradientNoiseKind::uniform;
    noise.gradient_bound = 0.2;
    noise.update = UpdateNoiseKind::uniform;
    noise.update_bound = 0.2;
    noise.seed = 11;
    const Domain ball = Domain::ball(Vec{0.0, 0.0}, 2.0);
    ReferenceOptimum ref;
    ref.w_star = {0.0, 0.0};
    ref.f_star = 0.0;
    ref.c0 = std::sqrt(2.0);
    const Trajectory traj = run(f, Vec{1.0, 1.0}, 0.05, 500, noise, ball, &ref);
    double prev = traj.initial_loss;
    for (const TrajectoryRow& row : traj.rows) {
        CHECK(row.min_loss <= prev + 1e-15);
        prev = row.min_loss;
        // dist_to_opt doubles as the domain check: the ball is centered at 0
        CHECK(row.dist_to_opt <= 2.0 + 1e-9);
    }
}

TEST_CASE("noiseless descent reaches the eta/2 radius") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const Domain ball = Domain::ball(Vec{0.0, 0.0}, 2.0);
    const Trajectory traj = run(f, Vec{1.0, 1.0}, 0.01, 10000, noise, ball);
    const double target = 3.0 * std::pow(0.005, 0.2) + 1e-3;
    CHECK(traj.min_loss <= target);
}

TEST_CASE("noiseless iterates satisfy the per-step descent inequality") {
    PowerNormFunction f(3.0, 0.2, 3);
    NoiseModel noise;
    const Domain ball = Domain::ball(Vec{0.0, 0.0, 0.0}, 3.0);
    StreamRng rng(6, 6, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Vec w = random_vec(rng, 3, 1.5);
        if (norm2(w) == 0.0) continue;
        const double eta = 0.01 + 0.3 * rng.next_unit();
        for (int k = 0; k < 50; ++k) {
            const auto g = f.quasi_subgradient(w);
            if (!g) break;
            const Vec ghat = scaled(*g, 1.0 / norm(*g));
            const StepResult step = sgd_step(w, f, eta, noise, ball, k);
            const double lhs = norm2(step.w_next);  // x* = 0
            const double rhs = norm2(w) - 2.0 * eta * (dot(ghat, w) - eta / 2.0);
            CHECK(lhs <= rhs + 1e-12);
            w = step.w_next;
        }
    }
}

TEST_CASE("arithmetic mode reconstructs the low-precision iterate") {
    PowerNormFunction f(3.0, 0.2, 6);
    NoiseModel noise;
    noise.gradient = GradientNoiseKind::arithmetic;
    noise.mul_fmt = FloatFormat::bfloat16();
    noise.acc_fmt = FloatFormat(8, 15);
    noise.update = UpdateNoiseKind::arithmetic;
    noise.update_fmt = FloatFormat::bfloat16();
    noise.seed = 3;
    const FloatFormat& ufmt = *noise.update_fmt;
    const double eta = round_to_format(0.125, ufmt).value;

    StreamRng rng(8, 2, 0);
    Vec w = random_vec(rng, 6, 2.0);
    for (double& x : w) x = round_to_format(x, ufmt).value;

    for (int k = 1; k <= 50; ++k) {
        const auto g = f.quasi_subgradient(w);
        REQUIRE(g.has_value());
        const Vec ghat = scaled(*g, 1.0 / norm(*g));
        const StepResult step = sgd_step(w, f, eta, noise, Domain::unconstrained(), k);

        // P(w - eta*(ghat + r) + s), rounded into the update format, must be
        // the natively computed iterate bit for bit.
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double recon = w[i] - eta * (ghat[i] + step.r[i]) + step.s[i];
            CHECK(round_to_format(recon, ufmt).value == step.w_next[i]);
        }
        w = step.w_next;
    }
}

TEST_CASE("noise moments: exact arithmetic is silent") {
    PowerNormFunction f(3.0, 0.2, 4);
    NoiseModel noise;  // none/none
    const NoiseMoments m = estimate_noise_moments(f, noise, Domain::unconstrained(),
                                                  Vec{2.0, 1.0, -1.0, 0.5}, 0.05, 100);
    CHECK(m.d_sigma_r_sq == 0.0);
    CHECK(m.d_sigma_s_sq == 0.0);
    CHECK(m.r_max == 0.0);
    CHECK(m.s_max == 0.0);
}

TEST_CASE("noise moments recover the uniform variance") {
    const std::size_t d = 40;
    PowerNormFunction f(3.0, 0.2, d);
    NoiseModel noise;
    noise.gradient = GradientNoiseKind::uniform;
    noise.gradient_bound = 0.1;
    noise.update = UpdateNoiseKind::uniform;
    noise.update_bound = 0.1;
    noise.seed = 12;
    Vec start(d, 0.0);
    start[0] = 5.0;
    const NoiseMoments m =
        estimate_noise_moments(f, noise, Domain::unconstrained(), start, 0.05, 1000);
    const double expected = static_cast<double>(d) * 0.01 / 3.0;  // d * B^2/3
    CHECK(m.d_sigma_r_sq == doctest::Approx(expected).epsilon(0.15));
    CHECK(m.d_sigma_s_sq == doctest::Approx(expected).epsilon(0.15));
    CHECK(m.s_max <= 0.1 * std::sqrt(static_cast<double>(d)));
    CHECK(m.r_max <= 0.1 * std::sqrt(static_cast<double>(d)));
}

TEST_CASE("noise moments reject immediate optimum") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    CHECK_THROWS_AS(estimate_noise_moments(f, noise, Domain::unconstrained(),
                                           Vec{0.0, 0.0}, 0.1, 100),
                    std::domain_error);
    CHECK_THROWS_AS(estimate_noise_moments(f, noise, Domain::unconstrained(),
                                           Vec{1.0, 1.0}, 0.1, 10),
                    std::domain_error);
}

TEST_CASE("non-finite loss aborts with a partial trajectory") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const Trajectory traj = run(f, Vec{1.0, 1.0}, 1e200, 10, noise, Domain::unconstrained());
    CHECK(traj.status == RunStatus::aborted_nonfinite);
    CHECK_FALSE(traj.diagnostics.empty());
    CHECK(traj.rows.size() < 10);
}

TEST_CASE("run stops when the optimum is hit") {
    // One exact step of size eta from distance eta lands precisely on 0.
    PowerNormFunction f(3.0, 0.2, 1);
    NoiseModel noise;
    const Trajectory traj = run(f, Vec{0.25}, 0.25, 10, noise, Domain::unconstrained());
    CHECK(traj.status == RunStatus::reached_optimum);
    CHECK(traj.min_loss == 0.0);
}

TEST_CASE("trajectory csv format") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const Trajectory traj = run(f, Vec{1.0, 0.0}, 0.125, 3, noise, Domain::unconstrained());
    std::ostringstream os;
    const std::pair<std::string, double> extras[] = {{"bound_stoch", 1.5}};
    write_trajectory_csv(os, traj, extras, "{\"seed\":1}");
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "k,loss,min_loss,dist_to_opt,norm_r,norm_s,bound_stoch");
    std::getline(in, line);
    CHECK(line.substr(0, 2) == "1,");
    int rows = 1;
    std::string last;
    while (std::getline(in, line)) {
        last = line;
        ++rows;
    }
    CHECK(last == "# summary: {\"seed\":1}");
    CHECK(rows == 1 + 3);  // three data rows plus the summary comment

    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("pre-noise directions are unit quasi-subgradients") {
    PowerNormFunction f(3.0, 0.2, 5);
    StreamRng rng(14, 4, 0);
    for (int i = 0; i < 500; ++i) {
        Vec w = random_vec(rng, 5, 4.0);
        if (norm2(w) == 0.0) continue;
        const auto g = f.quasi_subgradient(w);
        REQUIRE(g.has_value());
        const Vec ghat = scaled(*g, 1.0 / norm(*g));
        CHECK(std::fabs(norm(ghat) - 1.0) <= 16 * std::numeric_limits<double>::epsilon());
        // never points strictly toward a better sublevel point
        const Vec better = scaled(w, 0.5 * rng.next_unit());
        CHECK(dot(ghat, sub(better, w)) <= 1e-12);
    }
}

TEST_CASE("normalized directions make at least Hoelder progress toward the optimum") {
    // For f = L ||x||^p the distance condition holds with equality, so
    // <ghat, w - x*> must be at least ((f(w) - f*) / L)^(1/p).
    PowerNormFunction f(2.0, 0.5, 4);
    StreamRng rng(15, 5, 0);
    for (int i = 0; i < 500; ++i) {
        const Vec w = random_vec(rng, 4, 3.0);
        if (norm2(w) == 0.0) continue;
        const auto g = f.quasi_subgradient(w);
        REQUIRE(g.has_value());
        const Vec ghat = scaled(*g, 1.0 / norm(*g));
        const double lhs = dot(ghat, w);  // x* = 0
        const double rhs = std::pow(f.evaluate(w) / 2.0, 1.0 / 0.5);
        CHECK(lhs >= rhs - 1e-9 * (1.0 + std::fabs(rhs)));
    }
}

TEST_CASE("mini-batch sampling folds into the realized gradient error") {
    StreamRng rng(16, 6, 0);
    Matrix x(30, 2);
    std::vector<int> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
        x(i, 0) = rng.next_gaussian();
        x(i, 1) = rng.next_gaussian();
        y[i] = static_cast<int>(rng.next_index(3));
    }
    LogisticRegressionProblem lr(x, y, 3, 1e-3);
    const Vec start(lr.dimension(), 0.1);

    NoiseModel noise;
    noise.batch_size = 8;
    noise.seed = 2;
    const StepResult step = sgd_step(start, lr, 0.1, noise, Domain::unconstrained(), 1);
    CHECK(norm(step.r) > 0.0);  // sampling deviation from the full-batch direction
    CHECK(norm(step.s) == 0.0);

    // batched runs stay deterministic
    const Trajectory a = run(lr, start, 0.1, 50, noise, Domain::unconstrained());
    const Trajectory b = run(lr, start, 0.1, 50, noise, Domain::unconstrained());
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].loss == b.rows[i].loss);
    }
    CHECK(a.d_sigma_r_sq_hat > 0.0);

    // batching composes with the emulated-arithmetic pipeline
    NoiseModel lp_noise = noise;
    lp_noise.gradient = GradientNoiseKind::arithmetic;
    lp_noise.mul_fmt = FloatFormat::bfloat16();
    lp_noise.acc_fmt = FloatFormat(8, 15);
    const Trajectory c = run(lr, start, 0.1, 50, lp_noise, Domain::unconstrained());
    CHECK(c.status == RunStatus::completed);
    CHECK(c.d_sigma_r_sq_hat > 0.0);
}

TEST_CASE("run validates the start point against the domain") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const Domain ball = Domain::ball(Vec{0.0, 0.0}, 1.0);
    CHECK_THROWS_AS(run(f, Vec{3.0, 0.0}, 0.1, 10, noise, ball), std::domain_error);
    CHECK_THROWS_AS(run(f, Vec{0.5, 0.0}, 0.1, 0, noise, ball), std::domain_error);
}

TEST_CASE("min_loss_before excludes the final state") {
    PowerNormFunction f(3.0, 0.2, 2);
    NoiseModel noise;
    const Trajectory traj = run(f, Vec{1.0, 1.0}, 0.1, 5, noise, Domain::unconstrained());
    // with K = 1 only the start state counts
    CHECK(traj.min_loss_before(1) == traj.initial_loss);
    double expect = traj.initial_loss;
    for (const TrajectoryRow& row : traj.rows) {
        if (row.k >= 5) break;
        expect = std::min(expect, row.loss);
    }
    CHECK(traj.min_loss_before(5) == expect);
}
