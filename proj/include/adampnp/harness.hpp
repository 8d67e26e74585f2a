#pragma once

#include "adampnp/forward_models.hpp"
#include "adampnp/sampler.hpp"
#include "adampnp/synthetic.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace adampnp {

// ---------------------------------------------------------------------------
// Experiment configuration (see README for the JSON schema).

struct StructureConfig {
    std::string kind = "hairpin";  // "hairpin", "helix" or "pdb"
    int n_residues = 64;
    std::string pdb_path;
};

struct CovarianceConfig {
    CovarianceKind kind = CovarianceKind::identity;
    double scale = 1.0;
};

struct ScheduleConfig {
    int n_steps = 200;
    double beta_min = 1e-4;
    double beta_max = 0.05;
};

// The reference prior is a Gaussian mixture over known conformations: a
// few noisy copies of the ground truth plus chain-threading decoys that
// share its density envelope.
struct PriorConfig {
    double component_std = 1.0;
    int perturbed_copies = 2;
    double perturbation_sigma = 0.8;
    std::uint64_t perturbation_seed = 7;
    // Default shifts avoid the near-symmetric rotations of a hairpin
    // (half-length swaps the two arms and aligns within a few angstroms),
    // keeping every decoy well above the fusion test's 5 A failure line.
    std::vector<int> threading_shifts{8, 12, 16, 20, 24, 40, 44, 48, 52, 56};
    bool include_reversed = true;
    // Plain reversal of a near-symmetric chain (an ideal helix exactly) can
    // be a rigid motion of the same trace, so the reversed decoy is offset
    // by an extra block rotation to stay geometrically distinct.
    int reversed_shift = 16;
    std::vector<int> window_offsets;  // extra slid-window decoys (synthetic kinds only)
};

struct PModalityConfig {
    int count = 48;
    double sigma = 0.05;
};

struct DModalityConfig {
    int count = 150;
    double sigma = 0.05;
    int min_separation = 2;
};

struct EModalityConfig {
    double sigma = 10.0;
    double spacing = 1.0;
    double atom_width = 0.8;
    double resolution_cutoff = 2.0;
    double margin = 12.0;
};

struct SparsityConfig {
    std::vector<int> distance_counts{60, 120, 250, 500, 1000, 1900};
    std::vector<int> partial_counts{11, 16, 22, 32, 45, 63};
    double sigma = 0.05;
};

struct NoiseReportConfig {
    std::string modality = "D";
    std::vector<double> levels{0.05, 0.10, 0.20};
};

struct ExperimentConfig {
    std::uint64_t seed = 1234;
    int threads = 0;  // 0 = hardware concurrency
    std::string output_dir = "out";
    bool trace = false;

    StructureConfig structure;
    CovarianceConfig covariance;
    ScheduleConfig schedule;
    PriorConfig prior;
    GuidanceConfig sampler;

    PModalityConfig p;
    DModalityConfig d;
    EModalityConfig e;

    std::vector<std::vector<Modality>> combos;  // default: all 7 of P/D/E
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int samples_per_run = 8;
    std::string select_by = "misfit";  // or "rmsd_oracle"
    std::vector<Modality> reconstruct_modalities{Modality::P, Modality::D, Modality::E};
    std::string measurements_path;  // reconstruct only: load instead of simulating

    SparsityConfig sparsity;
    NoiseReportConfig noise_report;

    ExperimentConfig();
    void validate() const;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
    std::string to_json_text() const;
};

// ---------------------------------------------------------------------------
// Problem assembly

// Everything derived from the config that is shared across runs: the
// centered ground truth, the covariance factor, the schedule and the
// mixture prior (whitened component means).
struct Problem {
    Backbone truth;
    std::shared_ptr<CovarianceFactor> cov;
    NoiseSchedule sched;
    GaussianMixturePrior prior;
};

Problem build_problem(const ExperimentConfig& cfg);

// Simulated measurements for one modality combination. Layout choices
// (which atoms, which pairs) derive from the experiment seed and stay
// fixed across run seeds; the additive noise derives from `noise_seed`.
// `count_override` / `sigma_override` replace the per-modality defaults
// where present (used by the sparsity and noise sweeps).
std::vector<Measurement> build_measurements(const ExperimentConfig& cfg, const Problem& prob,
                                            const std::vector<Modality>& combo,
                                            const std::map<Modality, int>& count_override,
                                            const std::map<Modality, double>& sigma_override,
                                            std::uint64_t noise_seed);

// ---------------------------------------------------------------------------
// Runs and sweeps

struct RunRecord {
    std::string condition;  // "P+D", "nd500_np32", "sigma0.1", ...
    std::string combo;      // modalities used, "+"-joined
    std::uint64_t seed = 0;
    int n_p = 0;            // observed atoms (P)
    int n_d = 0;            // distance pairs (D)
    double sigma_p = -1.0, sigma_d = -1.0, sigma_e = -1.0;  // generating noise
    double rmsd = -1.0;     // CA-RMSD to ground truth
    double misfit = -1.0;   // weighted data misfit of the selected sample
    std::map<std::string, double> sigma_hat;  // final noise estimates (std dev)
    int clipped_steps = 0;
    std::string structure_file;  // dumped PDB, relative to output_dir
    std::string trace_file;      // dumped trace CSV ("" when tracing is off)
    bool failed = false;
    std::string error;
};

// Rows plus the artifacts to dump alongside them; `structures`, `traces`
// and `trace_labels` are aligned with `rows` (failed rows leave their slot
// empty).
struct SweepResult {
    std::string name;  // "combos", "sparsity", "noise_report"
    std::vector<RunRecord> rows;
    std::vector<Backbone> structures;
    std::vector<std::vector<StepRecord>> traces;
    std::vector<std::vector<std::string>> trace_labels;
};

// One guided reconstruction (samples_per_run trajectories, best kept).
// Dumps nothing; callers decide what to write.
struct SingleRun {
    RunRecord record;
    Backbone structure;
    std::vector<StepRecord> trace;
    std::vector<std::string> trace_labels;
};

SingleRun run_single(const ExperimentConfig& cfg, const Problem& prob,
                     const std::vector<Measurement>& measurements,
                     const std::string& condition, const std::string& combo_label,
                     std::uint64_t seed);

// Modality-combination sweep over cfg.combos x cfg.seeds.
SweepResult run_combo_sweep(const ExperimentConfig& cfg);

// Sparsity sweep over zip(distance_counts, partial_counts) x seeds, always
// with the P+D combination at sparsity.sigma.
SweepResult run_sparsity_sweep(const ExperimentConfig& cfg);

// Noise-estimation study: single-modality runs across noise levels; rows
// carry the final estimates for comparison with the generating sigma.
SweepResult run_noise_report(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Emission

// Writes <name>_results.json / .csv (and the per-run PDBs / traces
// captured in the rows) under cfg.output_dir. Emitted bytes depend only on
// the rows, never on wall-clock, so identical runs produce identical files.
void emit_tables(const SweepResult& result, const std::string& output_dir);

// Aggregated mean/std of per-condition RMSD (and noise estimates for the
// noise report), rendered as an aligned text table for stdout.
std::string summary_table(const SweepResult& result);

// Writes reconstruction.pdb, result.json and (when tracing) trace.csv for
// one run under output_dir.
void emit_single(const SingleRun& run, const std::string& output_dir);

// Measurement (de)serialization; the schema is documented in the README.
std::string measurements_to_json_text(const std::vector<Measurement>& ms, int n_atoms);
std::vector<Measurement> measurements_from_json_text(const std::string& text, int n_atoms);
void save_measurements(const std::vector<Measurement>& ms, int n_atoms,
                       const std::string& path);
std::vector<Measurement> load_measurements(const std::string& path, int n_atoms);

} // namespace adampnp
