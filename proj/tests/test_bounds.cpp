#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lpsgd/bounds.hpp"
#include "lpsgd/rng.hpp"

using namespace lpsgd;

namespace {

// Grid argmin of the step-size objective over (0, hi]; independent of the
// candidate formulas inside optimal_step_deterministic.
std::pair<double, double> grid_argmin_gamma(double R, double S, double c, double hi, int n) {
    double best_eta = hi / n;
    double best_g = gamma(best_eta, R, S, c);
    for (int i = 2; i <= n; ++i) {
        const double eta = hi * static_cast<double>(i) / n;
        const double g = gamma(eta, R, S, c);
        if (g < best_g) {
            best_g = g;
            best_eta = eta;
        }
    }
    return {best_eta, best_g};
}

double stoch_radius(double eta, double d, double sr2, double ss2) {
    return 0.5 * eta * (1.0 + d * sr2) + d * ss2 / (2.0 * eta);
}

}  // namespace

TEST_CASE("gamma branch arithmetic") {
    CHECK(gamma(0.7, 0.0, 0.0, 5.0) == doctest::Approx(0.35));  // both branches collapse
    CHECK(gamma(1.0, 0.5, 0.0, 2.0) == doctest::Approx(1.375));
    CHECK(gamma(0.1, 0.1, 0.01, 1.0) == doctest::Approx(0.248));
    CHECK_THROWS_AS(gamma(0.0, 0.1, 0.1, 1.0), std::domain_error);
}

TEST_CASE("gamma is non-decreasing in R, S and c") {
    StreamRng rng(5, 21, 0);
    for (int i = 0; i < 2000; ++i) {
        const double eta = 0.01 + 2.0 * rng.next_unit();
        const double R = rng.next_unit();
        const double S = rng.next_unit();
        const double c = 0.1 + 3.0 * rng.next_unit();
        const double base = gamma(eta, R, S, c);
        const double dr = 0.1 * rng.next_unit();
        CHECK(gamma(eta, R + dr, S, c) >= base - 1e-12);
        CHECK(gamma(eta, R, S + dr, c) >= base - 1e-12);
        CHECK(gamma(eta, R, S, c + dr) >= base - 1e-12);
    }
}

TEST_CASE("liminf bound") {
    CHECK(liminf_bound(0.2, 3.0, 0.5, 0.0) == 0.5);
    CHECK(liminf_bound(0.2, 3.0, 0.0, 0.248) == doctest::Approx(2.269925433112549));
    CHECK(liminf_bound(1.0, 1.0, 0.25, 0.5) == doctest::Approx(0.75));
}

TEST_CASE("finite-horizon bound") {
    BoundInputs in;
    in.p = 1.0;
    in.L = 1.0;
    in.f_star = 0.0;
    in.eta = 1.0;
    in.c = 2.0;
    in.R = 0.0;
    in.S = 0.0;
    in.K = 10;
    CHECK(finite_k_bound(in) == doctest::Approx(0.6));  // Gamma(2) = 0.5 plus 2/20

    // grows toward the liminf value as K increases
    in.K = 100000000;
    CHECK(finite_k_bound(in) ==
          doctest::Approx(liminf_bound(in.p, in.L, in.f_star, gamma(in.eta, 0.0, 0.0, in.c)))
              .epsilon(1e-6));

    // c0 = 0 is rejected by validation (c must be positive)
    in.c = 0.0;
    CHECK_THROWS_AS(finite_k_bound(in), std::domain_error);
}

TEST_CASE("stochastic bound") {
    CHECK(stochastic_bound(0.2, 3.0, 0.0, 0.5, 40.0, 0.0, 0.0) ==
          doctest::Approx(3.0 * std::pow(0.25, 0.2)));
    const double s2 = 0.01 / 3.0;
    CHECK(stochastic_bound(0.2, 3.0, 0.0, 0.3429971702850177, 40.0, s2, s2) ==
          doctest::Approx(2.4834241186711328));
}

TEST_CASE("stochastic bound is convex in eta with the closed-form minimizer") {
    StreamRng rng(17, 3, 0);
    for (int i = 0; i < 100; ++i) {
        const double d = 1.0 + static_cast<double>(rng.next_index(64));
        const double sr2 = 0.2 * rng.next_unit();
        const double ss2 = 1e-4 + 0.2 * rng.next_unit();
        const StochasticStepResult r = optimal_step_stochastic(d, sr2, ss2);
        REQUIRE_FALSE(r.degenerate_zero);

        // sampled second differences stay non-negative
        for (int j = 0; j < 20; ++j) {
            const double eta = 0.01 + 2.0 * rng.next_unit();
            const double h = 1e-3;
            const double mid = stoch_radius(eta, d, sr2, ss2);
            const double lo = stoch_radius(eta - h, d, sr2, ss2);
            const double hi = stoch_radius(eta + h, d, sr2, ss2);
            CHECK(lo + hi - 2.0 * mid >= -1e-9);
        }

        // grid argmin of the radius agrees with the closed form
        double best_eta = 0.0;
        double best = std::numeric_limits<double>::infinity();
        const double hi_eta = 4.0 * r.eta_star;
        const int n = 100000;
        for (int j = 1; j <= n; ++j) {
            const double eta = hi_eta * static_cast<double>(j) / n;
            const double v = stoch_radius(eta, d, sr2, ss2);
            if (v < best) {
                best = v;
                best_eta = eta;
            }
        }
        CHECK(std::fabs(best_eta - r.eta_star) <= hi_eta / n + 1e-4);
    }
}

TEST_CASE("optimal stochastic step") {
    CHECK(optimal_step_stochastic(1.0, 0.0, 0.09).eta_star == doctest::Approx(0.3));
    const double s2 = 0.01 / 3.0;
    CHECK(optimal_step_stochastic(40.0, s2, s2).eta_star ==
          doctest::Approx(0.3429971702850177));

    // large-d limit approaches sigma_s / sigma_r
    const double sr = 0.2, ss = 0.05;
    const double big = optimal_step_stochastic(1e9, sr * sr, ss * ss).eta_star;
    CHECK(big == doctest::Approx(ss / sr).epsilon(1e-4));

    CHECK(optimal_step_stochastic(10.0, 0.1, 0.0).degenerate_zero);
    CHECK_THROWS_AS(optimal_step_stochastic(10.0, -0.1, 0.1), std::domain_error);
}

TEST_CASE("optimal deterministic step: boundary infimum when S = 0") {
    const DeterministicStepResult res = optimal_step_deterministic(0.3, 0.0, 1.0);
    // G decreases toward eta -> 0 with limit R*c = 0.3; the grid takes over.
    CHECK(res.grid_fallback);
    CHECK(res.g_at_eta_star == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(res.eta_star <= 1.0 / 100000.0 + 1e-12);
}

TEST_CASE("optimal deterministic step: R = 0 case lands on the stationary point") {
    const DeterministicStepResult res = optimal_step_deterministic(0.0, 0.1, 1.0);
    CHECK_FALSE(res.grid_fallback);
    CHECK(res.eta_star == doctest::Approx(0.43588989435406733));
    CHECK(res.g_at_eta_star == doctest::Approx(0.43588989435406733));
    // the returned minimum is never worse than any valid candidate
    for (const StepCandidate& c : res.candidates) {
        if (c.valid) CHECK(res.g_at_eta_star <= c.g_value + 1e-12);
    }
}

TEST_CASE("optimal deterministic step matches an independent grid") {
    StreamRng rng(23, 9, 0);
    for (int i = 0; i < 100; ++i) {
        const double R = 0.9 * rng.next_unit();
        const double S = 0.5 * rng.next_unit();
        const double c = 0.5 + 3.0 * rng.next_unit();
        if (R == 0.0 && S == 0.0) continue;
        const DeterministicStepResult res = optimal_step_deterministic(R, S, c);

        double hi = c;
        for (const StepCandidate& cand : res.candidates) {
            if (cand.valid) hi = std::max(hi, cand.eta * 1.01);
        }
        const auto [grid_eta, grid_g] = grid_argmin_gamma(R, S, c, hi, 100000);
        CHECK(res.g_at_eta_star <= grid_g + 1e-9 * (1.0 + std::fabs(grid_g)));
        // same minimum value within the grid's resolution
        CHECK(grid_g - res.g_at_eta_star <= 1e-4 * (1.0 + std::fabs(grid_g)));
    }
}

TEST_CASE("optimal deterministic step rejects bad hypotheses") {
    CHECK_THROWS_AS(optimal_step_deterministic(1.0, 0.1, 1.0), std::domain_error);
    CHECK_THROWS_AS(optimal_step_deterministic(0.0, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(optimal_step_deterministic(0.1, 0.1, 0.0), std::domain_error);
}

TEST_CASE("lemma 1 closed form") {
    Lemma1Instance inst;
    inst.eta = 1.0;
    inst.R = 0.0;
    inst.B = 1.0;
    inst.C = 2.0;
    inst.g = {1.0, 0.0};
    CHECK(lemma1_closed_form(inst) == doctest::Approx(-1.0));

    inst.R = 0.5;
    inst.B = 0.5;
    CHECK(lemma1_closed_form(inst) == doctest::Approx(2.25));

    inst.R = 1.5;
    CHECK_THROWS_AS(lemma1_closed_form(inst), std::domain_error);
    inst.R = 0.5;
    inst.C = 0.25;  // violates C > B
    CHECK_THROWS_AS(lemma1_closed_form(inst), std::domain_error);
}

TEST_CASE("lemma 1 brute force agrees with the closed form in d = 2") {
    Lemma1Instance inst;
    inst.eta = 1.0;
    inst.R = 0.5;
    inst.B = 0.5;
    inst.C = 2.0;
    inst.g = {1.0, 0.0};
    const double brute = lemma1_brute_force(inst, 600);
    CHECK(brute == doctest::Approx(2.25).epsilon(1e-3));
    CHECK(lemma1_closed_form(inst) >= brute - 1e-9);

    CHECK_THROWS_AS(lemma1_brute_force(inst, 50), std::domain_error);
    inst.g = {1.0};
    CHECK_THROWS_AS(lemma1_brute_force(inst, 600), std::domain_error);
}

TEST_CASE("vanishing perturbation radius collapses the maximum to eta - 2B") {
    Lemma1Instance inst;
    inst.eta = 0.8;
    inst.R = 1e-9;
    inst.B = 0.4;
    inst.C = 1.7;
    inst.g = {0.6, 0.8};
    const double closed = lemma1_closed_form(inst);
    CHECK(closed == doctest::Approx(inst.eta - 2.0 * inst.B).epsilon(1e-6));
    const double brute = lemma1_brute_force(inst, 400);
    CHECK(std::fabs(closed - brute) <= 1e-3 * (1.0 + std::fabs(closed)));
}

TEST_CASE("lemma 1 in d = 1 only upper-bounds the brute force") {
    // With one dimension there is no room to slide x to the boundary sphere,
    // so attainment can fail; the inequality direction must still hold.
    StreamRng rng(31, 2, 0);
    for (int i = 0; i < 20; ++i) {
        Lemma1Instance inst;
        inst.eta = 0.2 + 1.5 * rng.next_unit();
        inst.R = 0.1 + 0.8 * rng.next_unit();
        inst.B = 0.2 + rng.next_unit();
        inst.C = inst.B * (1.2 + rng.next_unit());
        inst.g = {1.0};
        const double closed = lemma1_closed_form(inst);
        // d = 1 feasible x is the segment [B, C] (g = 1); optimal r on ±R.
        double best = -std::numeric_limits<double>::infinity();
        for (int xi = 0; xi <= 2000; ++xi) {
            const double x = inst.B + (inst.C - inst.B) * xi / 2000.0;
            for (const double r : {inst.R, -inst.R}) {
                const double gr = 1.0 + r;
                best = std::max(best, inst.eta * gr * gr - 2.0 * x * gr);
            }
        }
        CHECK(closed >= best - 1e-9);
    }
}

TEST_CASE("noiseless reductions") {
    CHECK(gamma(0.42, 0.0, 0.0, 10.0) == doctest::Approx(0.21));
    CHECK(stochastic_bound(0.7, 2.0, 1.0, 0.42, 5.0, 0.0, 0.0) ==
          doctest::Approx(1.0 + 2.0 * std::pow(0.21, 0.7)));
}

TEST_CASE("bound report carries validity flags") {
    BoundInputs in;
    in.p = 0.2;
    in.L = 3.0;
    in.eta = 0.1;
    in.c = 1.0;
    in.R = 1.2;  // hypothesis violated
    in.S = 0.0;
    in.d = 40;
    const BoundReport report = compute_bound_report(in);
    CHECK_FALSE(report.deterministic_valid);
    CHECK_FALSE(report.has_eta_star_deterministic);

    in.R = 0.2;
    const BoundReport ok = compute_bound_report(in);
    CHECK(ok.deterministic_valid);
    CHECK(ok.has_eta_star_deterministic);
}
