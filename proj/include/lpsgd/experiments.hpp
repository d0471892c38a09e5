#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lpsgd/bounds.hpp"
#include "lpsgd/data.hpp"
#include "lpsgd/optimizer.hpp"
#include "lpsgd/problems.hpp"

namespace lpsgd {

// Flat `key = value` configuration with [section] headers and '#' comments.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text, const std::string& origin);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                             std::uint64_t fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;  // "section.key"
};

enum class ExperimentKind { synthetic_powernorm, logreg };

struct EtaSpec {
    enum class Kind { values, auto_corollary1, auto_corollary2 };
    Kind kind = Kind::values;
    std::vector<double> values;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::synthetic_powernorm;

    // [problem]
    double L = 3.0;
    double p = 0.2;
    std::size_t dimension = 40;
    std::string train_images;
    std::string train_labels;
    bool fallback = true;
    int classes = 3;
    int per_class = 60;
    int features = 4;
    double separation = 4.0;
    std::uint64_t data_seed = 1;
    std::size_t subset = 0;  // 0 = use everything
    std::size_t pca_k = 2;
    double l2 = 1e-3;

    // [reference]
    std::uint64_t reference_steps = 4000;
    double reference_rate = 0.5;

    // [optimizer]
    EtaSpec eta;
    std::uint64_t steps = 1500;
    std::vector<std::uint64_t> seeds = {1};
    std::size_t batch = 0;
    double probe_eta = 0.1;       // used when eta is auto and probing needs one
    std::uint64_t probe_steps = 200;

    // [noise]
    GradientNoiseKind gradient_noise = GradientNoiseKind::none;
    double gradient_bound = 0.0;  // B_r
    UpdateNoiseKind update_noise = UpdateNoiseKind::none;
    double update_bound = 0.0;    // B_s

    // [formats]
    std::optional<FloatFormat> mul_fmt;
    std::optional<FloatFormat> acc_fmt;
    std::optional<FloatFormat> update_fmt;  // absent = working precision

    // [domain]
    Domain::Kind domain_kind = Domain::Kind::unconstrained;
    double c0 = 3.0;       // start distance from the optimum; bound parameter c
    double radius = 0.0;   // ball radius; 0 = default to c0

    // [holder]
    HolderFitMode holder_mode = HolderFitMode::least_squares;

    // [output]
    std::string out_dir = ".";
    bool emit_deterministic_bound = true;  // logreg configs default to false

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_config(const ConfigFile& file);
    void validate() const;

    NoiseModel noise_model(std::uint64_t seed) const;
};

struct SeedRunSummary {
    std::uint64_t seed = 0;
    double eta = 0.0;
    double min_loss = 0.0;  // running minimum at the final iteration
    double bound_stochastic = 0.0;
    bool within_stochastic = false;
    double bound_deterministic = 0.0;
    bool deterministic_valid = false;
    bool deterministic_vacuous = false;
    double rho = 0.0;  // R + S/eta used for the deterministic bound
    double bound_finite_k = 0.0;
    NoiseMoments realized;
    RunStatus status = RunStatus::completed;
    std::string csv_path;
};

struct ExperimentOutcome {
    std::vector<SeedRunSummary> runs;
    int exit_code = 0;  // 0 ok, 1 bound violation
    std::vector<std::string> files;

    // logreg pipeline context
    ReferenceOptimum reference;
    HolderFit holder;
    NoiseMoments probe_moments;
    double eta_resolved = 0.0;  // single eta actually used by logreg runs
};

// The synthetic power-norm recipe: for each eta and seed, run noisy
// normalized descent from a random start at distance c0, write trajectory
// CSVs with constant bound columns, and emit per-eta max-over-seeds sweep
// files when more than one eta is configured. exit_code 1 when any seed's
// final running minimum exceeds its stochastic bound.
ExperimentOutcome run_synthetic_experiment(const ExperimentConfig& config,
                                           const std::string& out_dir);

// The logistic-regression recipe: load (or synthesize) data, PCA-reduce,
// find the working-precision reference optimum, fit the Hoelder parameters
// from radial probes, estimate noise moments for the configured formats, run
// SGD per seed and write trajectory CSVs with the stochastic bound column.
ExperimentOutcome run_logreg_experiment(const ExperimentConfig& config,
                                        const std::string& out_dir);

// Builds the logreg problem exactly as run_logreg_experiment would (data,
// PCA, projection), without running anything.
struct LogregContext {
    Dataset dataset;     // projected features
    PcaModel pca;
    std::unique_ptr<LogisticRegressionProblem> problem;
};
LogregContext build_logreg_context(const ExperimentConfig& config);

// Noise-moment estimation for whatever the config describes.
NoiseMoments estimate_noise_for_config(const ExperimentConfig& config);

BoundInputs load_bound_inputs(const std::string& path);
std::string render_bound_report(const BoundReport& report);

struct Lemma1Verification {
    int count = 0;
    double max_gap = 0.0;       // closed form minus brute force, worst case
    double max_rel_gap = 0.0;   // against 1e-3 * (1 + |closed form|)
    double min_gap = 0.0;       // brute force should never exceed the bound
    bool ok = false;
    std::string detail;
};

// Samples `count` random valid instances in d = 2 and compares the closed
// form against the brute-force maximizer.
Lemma1Verification verify_lemma1(int count, std::uint64_t seed, int resolution = 1000);

HolderFit fit_holder_from_csv(const std::string& samples_path, HolderFitMode mode);

std::string holder_fit_json(const HolderFit& fit);
std::string moments_json(const NoiseMoments& moments);

}  // namespace lpsgd
