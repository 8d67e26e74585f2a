#include "adampnp/harness.hpp"

#include "adampnp/detail/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace adampnp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using detail::format_double;

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + section);
    }
}

std::vector<Modality> parse_combo(const json& arr) {
    if (!arr.is_array() || arr.empty())
        throw ConfigError("a modality combination must be a non-empty array");
    std::vector<Modality> combo;
    for (const auto& v : arr) combo.push_back(modality_from_name(v.get<std::string>()));
    return combo;
}

std::string combo_label(const std::vector<Modality>& combo) {
    std::string s;
    for (size_t i = 0; i < combo.size(); ++i) {
        if (i) s += "+";
        s += modality_name(combo[i]);
    }
    return s;
}

ordered_json combo_json(const std::vector<Modality>& combo) {
    ordered_json arr = ordered_json::array();
    for (Modality m : combo) arr.push_back(modality_name(m));
    return arr;
}

void parse_guidance(const json& j, GuidanceConfig& g) {
    check_keys(j, "sampler",
               {"eta", "rho", "adaptive", "fixed_sigmas", "sensitivities", "max_step_rms",
                "ascent_sign", "noise_scale", "adaptive_params"});
    g.eta = j.value("eta", g.eta);
    g.rho = j.value("rho", g.rho);
    g.adaptive = j.value("adaptive", g.adaptive);
    if (j.contains("fixed_sigmas")) g.fixed_sigmas = j["fixed_sigmas"].get<std::vector<double>>();
    if (j.contains("sensitivities"))
        g.sensitivities = j["sensitivities"].get<std::vector<double>>();
    g.max_step_rms = j.value("max_step_rms", g.max_step_rms);
    g.ascent_sign = j.value("ascent_sign", g.ascent_sign);
    g.noise_scale = j.value("noise_scale", g.noise_scale);
    if (j.contains("adaptive_params")) {
        const json& a = j["adaptive_params"];
        check_keys(a, "sampler.adaptive_params", {"kappa", "gamma", "epsilon", "ema_decay"});
        g.adaptive_params.kappa = a.value("kappa", g.adaptive_params.kappa);
        g.adaptive_params.gamma = a.value("gamma", g.adaptive_params.gamma);
        g.adaptive_params.epsilon = a.value("epsilon", g.adaptive_params.epsilon);
        g.adaptive_params.ema_decay = a.value("ema_decay", g.adaptive_params.ema_decay);
    }
}

ordered_json guidance_json(const GuidanceConfig& g) {
    ordered_json j;
    j["eta"] = g.eta;
    j["rho"] = g.rho;
    j["adaptive"] = g.adaptive;
    if (!g.fixed_sigmas.empty()) j["fixed_sigmas"] = g.fixed_sigmas;
    if (!g.sensitivities.empty()) j["sensitivities"] = g.sensitivities;
    j["max_step_rms"] = g.max_step_rms;
    j["ascent_sign"] = g.ascent_sign;
    j["noise_scale"] = g.noise_scale;
    j["adaptive_params"] = {{"kappa", g.adaptive_params.kappa},
                            {"gamma", g.adaptive_params.gamma},
                            {"epsilon", g.adaptive_params.epsilon},
                            {"ema_decay", g.adaptive_params.ema_decay}};
    return j;
}

} // namespace

ExperimentConfig::ExperimentConfig() {
    using M = Modality;
    combos = {{M::P},       {M::D},       {M::E},      {M::P, M::D},
              {M::P, M::E}, {M::D, M::E}, {M::P, M::D, M::E}};
}

void ExperimentConfig::validate() const {
    if (structure.kind != "hairpin" && structure.kind != "helix" && structure.kind != "pdb")
        throw ConfigError("structure.kind must be hairpin, helix or pdb");
    if (structure.kind == "pdb" && structure.pdb_path.empty())
        throw ConfigError("structure.kind is pdb but no pdb_path given");
    if (structure.kind != "pdb" && structure.n_residues < 2)
        throw ConfigError("structure.n_residues must be at least 2");
    if (!(covariance.scale > 0.0)) throw ConfigError("covariance.scale must be positive");
    if (schedule.n_steps < 1) throw ConfigError("schedule.n_steps must be at least 1");
    if (!(prior.component_std > 0.0)) throw ConfigError("prior.component_std must be positive");
    if (prior.perturbed_copies < 0) throw ConfigError("prior.perturbed_copies must be >= 0");
    if (prior.perturbation_sigma < 0.0)
        throw ConfigError("prior.perturbation_sigma must be >= 0");
    sampler.validate();
    if (p.count < 0) throw ConfigError("modalities.P.count must be >= 0");
    if (!(p.sigma > 0.0)) throw ConfigError("modalities.P.sigma must be positive");
    if (d.count < 0) throw ConfigError("modalities.D.count must be >= 0");
    if (!(d.sigma > 0.0)) throw ConfigError("modalities.D.sigma must be positive");
    if (d.min_separation < 1) throw ConfigError("modalities.D.min_separation must be >= 1");
    if (!(e.sigma > 0.0)) throw ConfigError("modalities.E.sigma must be positive");
    if (combos.empty()) throw ConfigError("experiment.combos must be non-empty");
    for (const auto& c : combos)
        if (c.empty()) throw ConfigError("empty modality combination");
    if (seeds.empty()) throw ConfigError("experiment.seeds must be non-empty");
    if (samples_per_run < 1) throw ConfigError("experiment.samples_per_run must be >= 1");
    if (select_by != "misfit" && select_by != "rmsd_oracle")
        throw ConfigError("experiment.select_by must be misfit or rmsd_oracle");
    if (reconstruct_modalities.empty())
        throw ConfigError("experiment.reconstruct_modalities must be non-empty");
    if (sparsity.distance_counts.size() != sparsity.partial_counts.size())
        throw ConfigError("sparsity.distance_counts and partial_counts differ in length");
    if (sparsity.distance_counts.empty())
        throw ConfigError("sparsity grid must have at least one cell");
    if (!(sparsity.sigma > 0.0)) throw ConfigError("sparsity.sigma must be positive");
    modality_from_name(noise_report.modality);
    if (noise_report.levels.empty()) throw ConfigError("noise_report.levels must be non-empty");
    for (double s : noise_report.levels)
        if (!(s > 0.0)) throw ConfigError("noise_report.levels must be positive");
    if (threads < 0) throw ConfigError("threads must be >= 0");
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    check_keys(j, "config",
               {"seed", "threads", "output_dir", "trace", "structure", "covariance",
                "schedule", "prior", "sampler", "modalities", "experiment"});
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.trace = j.value("trace", cfg.trace);

    if (j.contains("structure")) {
        const json& s = j["structure"];
        check_keys(s, "structure", {"kind", "n_residues", "pdb_path"});
        cfg.structure.kind = s.value("kind", cfg.structure.kind);
        cfg.structure.n_residues = s.value("n_residues", cfg.structure.n_residues);
        cfg.structure.pdb_path = s.value("pdb_path", cfg.structure.pdb_path);
    }
    if (j.contains("covariance")) {
        const json& c = j["covariance"];
        check_keys(c, "covariance", {"kind", "scale"});
        std::string kind = c.value("kind", std::string("identity"));
        if (kind == "identity") cfg.covariance.kind = CovarianceKind::identity;
        else if (kind == "chain") cfg.covariance.kind = CovarianceKind::chain;
        else throw ConfigError("covariance.kind must be identity or chain");
        cfg.covariance.scale = c.value("scale", cfg.covariance.scale);
    }
    if (j.contains("schedule")) {
        const json& s = j["schedule"];
        check_keys(s, "schedule", {"n_steps", "beta_min", "beta_max"});
        cfg.schedule.n_steps = s.value("n_steps", cfg.schedule.n_steps);
        cfg.schedule.beta_min = s.value("beta_min", cfg.schedule.beta_min);
        cfg.schedule.beta_max = s.value("beta_max", cfg.schedule.beta_max);
    }
    if (j.contains("prior")) {
        const json& p = j["prior"];
        check_keys(p, "prior",
                   {"component_std", "perturbed_copies", "perturbation_sigma",
                    "perturbation_seed", "threading_shifts", "include_reversed",
                    "reversed_shift", "window_offsets"});
        cfg.prior.component_std = p.value("component_std", cfg.prior.component_std);
        cfg.prior.perturbed_copies = p.value("perturbed_copies", cfg.prior.perturbed_copies);
        cfg.prior.perturbation_sigma =
            p.value("perturbation_sigma", cfg.prior.perturbation_sigma);
        cfg.prior.perturbation_seed =
            p.value("perturbation_seed", cfg.prior.perturbation_seed);
        if (p.contains("threading_shifts"))
            cfg.prior.threading_shifts = p["threading_shifts"].get<std::vector<int>>();
        cfg.prior.include_reversed = p.value("include_reversed", cfg.prior.include_reversed);
        cfg.prior.reversed_shift = p.value("reversed_shift", cfg.prior.reversed_shift);
        if (p.contains("window_offsets"))
            cfg.prior.window_offsets = p["window_offsets"].get<std::vector<int>>();
    }
    if (j.contains("sampler")) parse_guidance(j["sampler"], cfg.sampler);
    if (j.contains("modalities")) {
        const json& m = j["modalities"];
        check_keys(m, "modalities", {"P", "D", "E"});
        if (m.contains("P")) {
            const json& p = m["P"];
            check_keys(p, "modalities.P", {"count", "sigma"});
            cfg.p.count = p.value("count", cfg.p.count);
            cfg.p.sigma = p.value("sigma", cfg.p.sigma);
        }
        if (m.contains("D")) {
            const json& d = m["D"];
            check_keys(d, "modalities.D", {"count", "sigma", "min_separation"});
            cfg.d.count = d.value("count", cfg.d.count);
            cfg.d.sigma = d.value("sigma", cfg.d.sigma);
            cfg.d.min_separation = d.value("min_separation", cfg.d.min_separation);
        }
        if (m.contains("E")) {
            const json& e = m["E"];
            check_keys(e, "modalities.E",
                       {"sigma", "spacing", "atom_width", "resolution_cutoff", "margin"});
            cfg.e.sigma = e.value("sigma", cfg.e.sigma);
            cfg.e.spacing = e.value("spacing", cfg.e.spacing);
            cfg.e.atom_width = e.value("atom_width", cfg.e.atom_width);
            cfg.e.resolution_cutoff = e.value("resolution_cutoff", cfg.e.resolution_cutoff);
            cfg.e.margin = e.value("margin", cfg.e.margin);
        }
    }
    if (j.contains("experiment")) {
        const json& x = j["experiment"];
        check_keys(x, "experiment",
                   {"combos", "seeds", "samples_per_run", "select_by",
                    "reconstruct_modalities", "measurements_path", "sparsity",
                    "noise_report"});
        if (x.contains("combos")) {
            cfg.combos.clear();
            for (const auto& c : x["combos"]) cfg.combos.push_back(parse_combo(c));
        }
        if (x.contains("seeds")) cfg.seeds = x["seeds"].get<std::vector<std::uint64_t>>();
        cfg.samples_per_run = x.value("samples_per_run", cfg.samples_per_run);
        cfg.select_by = x.value("select_by", cfg.select_by);
        if (x.contains("reconstruct_modalities"))
            cfg.reconstruct_modalities = parse_combo(x["reconstruct_modalities"]);
        cfg.measurements_path = x.value("measurements_path", cfg.measurements_path);
        if (x.contains("sparsity")) {
            const json& s = x["sparsity"];
            check_keys(s, "experiment.sparsity",
                       {"distance_counts", "partial_counts", "sigma"});
            if (s.contains("distance_counts"))
                cfg.sparsity.distance_counts = s["distance_counts"].get<std::vector<int>>();
            if (s.contains("partial_counts"))
                cfg.sparsity.partial_counts = s["partial_counts"].get<std::vector<int>>();
            cfg.sparsity.sigma = s.value("sigma", cfg.sparsity.sigma);
        }
        if (x.contains("noise_report")) {
            const json& n = x["noise_report"];
            check_keys(n, "experiment.noise_report", {"modality", "levels"});
            cfg.noise_report.modality = n.value("modality", cfg.noise_report.modality);
            if (n.contains("levels"))
                cfg.noise_report.levels = n["levels"].get<std::vector<double>>();
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
    ordered_json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["output_dir"] = output_dir;
    j["trace"] = trace;
    j["structure"] = {{"kind", structure.kind}, {"n_residues", structure.n_residues}};
    if (!structure.pdb_path.empty()) j["structure"]["pdb_path"] = structure.pdb_path;
    j["covariance"] = {
        {"kind", covariance.kind == CovarianceKind::identity ? "identity" : "chain"},
        {"scale", covariance.scale}};
    j["schedule"] = {{"n_steps", schedule.n_steps},
                     {"beta_min", schedule.beta_min},
                     {"beta_max", schedule.beta_max}};
    j["prior"] = {{"component_std", prior.component_std},
                  {"perturbed_copies", prior.perturbed_copies},
                  {"perturbation_sigma", prior.perturbation_sigma},
                  {"perturbation_seed", prior.perturbation_seed},
                  {"threading_shifts", prior.threading_shifts},
                  {"include_reversed", prior.include_reversed},
                  {"reversed_shift", prior.reversed_shift},
                  {"window_offsets", prior.window_offsets}};
    j["sampler"] = guidance_json(sampler);
    j["modalities"] = {
        {"P", {{"count", p.count}, {"sigma", p.sigma}}},
        {"D",
         {{"count", d.count}, {"sigma", d.sigma}, {"min_separation", d.min_separation}}},
        {"E",
         {{"sigma", e.sigma},
          {"spacing", e.spacing},
          {"atom_width", e.atom_width},
          {"resolution_cutoff", e.resolution_cutoff},
          {"margin", e.margin}}}};
    ordered_json combos_j = ordered_json::array();
    for (const auto& c : combos) combos_j.push_back(combo_json(c));
    j["experiment"] = {{"combos", combos_j},
                       {"seeds", seeds},
                       {"samples_per_run", samples_per_run},
                       {"select_by", select_by},
                       {"reconstruct_modalities", combo_json(reconstruct_modalities)},
                       {"measurements_path", measurements_path},
                       {"sparsity",
                        {{"distance_counts", sparsity.distance_counts},
                         {"partial_counts", sparsity.partial_counts},
                         {"sigma", sparsity.sigma}}},
                       {"noise_report",
                        {{"modality", noise_report.modality},
                         {"levels", noise_report.levels}}}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

Problem build_problem(const ExperimentConfig& cfg) {
    cfg.validate();
    Backbone truth;
    if (cfg.structure.kind == "pdb") {
        truth = load_pdb_file(cfg.structure.pdb_path);
    } else {
        truth = make_backbone(cfg.structure.kind, cfg.structure.n_residues);
    }
    truth = center(truth);

    Problem prob{truth,
                 std::make_shared<CovarianceFactor>(cfg.covariance.kind, truth.n_atoms(),
                                                    cfg.covariance.scale),
                 NoiseSchedule(cfg.schedule.n_steps, cfg.schedule.beta_min,
                               cfg.schedule.beta_max),
                 GaussianMixturePrior{}};

    std::vector<Backbone> comps;
    for (int c = 0; c < cfg.prior.perturbed_copies; ++c)
        comps.push_back(perturbed(truth, cfg.prior.perturbation_sigma,
                                  derive_seed(cfg.prior.perturbation_seed,
                                              "perturb/" + std::to_string(c))));
    for (int shift : cfg.prior.threading_shifts)
        comps.push_back(block_rotated(truth, shift));
    if (cfg.prior.include_reversed) {
        Backbone rev = residue_reversed(truth);
        comps.push_back(cfg.prior.reversed_shift != 0
                            ? block_rotated(rev, cfg.prior.reversed_shift)
                            : rev);
    }
    for (int off : cfg.prior.window_offsets) {
        if (cfg.structure.kind == "pdb")
            throw ConfigError("window_offsets require a synthetic structure kind");
        comps.push_back(make_backbone(cfg.structure.kind, cfg.structure.n_residues, off));
    }
    if (comps.empty()) throw ConfigError("prior has no components; enable at least one");

    prob.prior.component_std = cfg.prior.component_std;
    prob.prior.weights.assign(comps.size(), 1.0 / double(comps.size()));
    for (auto& comp : comps) {
        Backbone centered_comp = center(comp);
        prob.prior.means.push_back(prob.cov->solve(centered_comp.coords));
    }
    prob.prior.validate();
    return prob;
}

std::vector<Measurement> build_measurements(const ExperimentConfig& cfg, const Problem& prob,
                                            const std::vector<Modality>& combo,
                                            const std::map<Modality, int>& count_override,
                                            const std::map<Modality, double>& sigma_override,
                                            std::uint64_t noise_seed) {
    int n_res = prob.truth.n_residues;
    int n_atoms = prob.truth.n_atoms();

    auto count_of = [&](Modality m, int dflt) {
        auto it = count_override.find(m);
        return it != count_override.end() ? it->second : dflt;
    };
    auto sigma_of = [&](Modality m, double dflt) {
        auto it = sigma_override.find(m);
        return it != sigma_override.end() ? it->second : dflt;
    };

    // Zero-count modalities drop out entirely, so a combo with an empty
    // member behaves exactly like the remaining combo (the noise streams
    // below are keyed per modality, not by list position).
    std::vector<Measurement> ms;
    for (Modality m : combo) {
        switch (m) {
            case Modality::P: {
                int count = count_of(Modality::P, cfg.p.count);
                if (count == 0) continue;
                auto atoms = spread_calpha_selection(n_res, count);
                auto model = std::make_shared<CoordinateSelection>(atoms, n_atoms);
                ms.push_back(simulate_measurement(model, prob.truth.coords,
                                                  sigma_of(Modality::P, cfg.p.sigma),
                                                  derive_seed(noise_seed, "noise/P")));
                break;
            }
            case Modality::D: {
                int count = count_of(Modality::D, cfg.d.count);
                if (count == 0) continue;
                auto pairs = random_calpha_pairs(
                    n_res, count, cfg.d.min_separation,
                    derive_seed(cfg.seed, "layout/D/" + std::to_string(count)));
                auto model = std::make_shared<PairDistances>(pairs, n_atoms);
                ms.push_back(simulate_measurement(model, prob.truth.coords,
                                                  sigma_of(Modality::D, cfg.d.sigma),
                                                  derive_seed(noise_seed, "noise/D")));
                break;
            }
            case Modality::E: {
                DensityGridSpec spec = DensityGridSpec::covering(
                    prob.truth.coords, cfg.e.spacing, cfg.e.atom_width,
                    cfg.e.resolution_cutoff, cfg.e.margin);
                auto model = std::make_shared<DensityMap>(spec, n_atoms);
                ms.push_back(simulate_measurement(model, prob.truth.coords,
                                                  sigma_of(Modality::E, cfg.e.sigma),
                                                  derive_seed(noise_seed, "noise/E")));
                break;
            }
        }
    }
    return ms;
}

// ---------------------------------------------------------------------------

SingleRun run_single(const ExperimentConfig& cfg, const Problem& prob,
                     const std::vector<Measurement>& measurements,
                     const std::string& condition, const std::string& label,
                     std::uint64_t seed) {
    SingleRun out;
    out.record.condition = condition;
    out.record.combo = label;
    out.record.seed = seed;

    for (const auto& m : measurements) {
        switch (m.modality()) {
            case Modality::P:
                out.record.n_p = m.out_dim() / 3;
                out.record.sigma_p = m.true_sigma;
                break;
            case Modality::D:
                out.record.n_d = m.out_dim();
                out.record.sigma_d = m.true_sigma;
                break;
            case Modality::E:
                out.record.sigma_e = m.true_sigma;
                break;
        }
    }
    if (measurements.empty()) {
        out.record.failed = true;
        out.record.error = "no active modalities";
        return out;
    }

    MixtureDenoiser denoiser(prob.prior, prob.sched);
    std::vector<std::string> labels;
    for (const auto& m : measurements) labels.push_back(modality_name(m.modality()));
    out.trace_labels = labels;

    std::vector<SamplerResult> samples;
    samples.reserve(size_t(cfg.samples_per_run));
    for (int s = 0; s < cfg.samples_per_run; ++s) {
        std::uint64_t run_seed = derive_seed(seed, "sample/" + std::to_string(s));
        samples.push_back(run_adam_pnp(measurements, denoiser, prob.sched, *prob.cov,
                                       cfg.sampler, run_seed, cfg.trace, &prob.truth));
    }

    // Keep the lowest-energy sample. Each trajectory finishes with noise
    // estimates adapted to its own residuals, which makes the per-sample
    // misfit nearly flat across samples stuck in different basins; scoring
    // everyone against the sharpest variance seen per modality puts the
    // energies on a common scale so residual size decides.
    size_t m_count = measurements.size();
    std::vector<double> yardstick(m_count, std::numeric_limits<double>::infinity());
    for (const auto& s : samples)
        for (size_t i = 0; i < m_count; ++i)
            yardstick[i] = std::min(yardstick[i], s.sigma_hat_sq[i]);
    size_t best_idx = 0;
    double best_key = std::numeric_limits<double>::infinity();
    for (size_t s = 0; s < samples.size(); ++s) {
        double key = 0.0;
        if (cfg.select_by == "rmsd_oracle") {
            Backbone bb = backbone_from_coords(prob.truth.n_residues, samples[s].x);
            key = calpha_rmsd(bb, prob.truth);
        } else {
            for (size_t i = 0; i < m_count; ++i)
                key += 0.5 * samples[s].residual_sq[i] / yardstick[i];
        }
        if (key < best_key) {
            best_key = key;
            best_idx = s;
        }
    }
    SamplerResult best = std::move(samples[best_idx]);

    out.structure = backbone_from_coords(prob.truth.n_residues, best.x);
    out.record.rmsd = calpha_rmsd(out.structure, prob.truth);
    out.record.misfit = best.data_misfit;
    out.record.clipped_steps = best.clipped_steps;
    for (size_t i = 0; i < measurements.size(); ++i) {
        std::string key = labels[i];
        // Duplicate modalities in one combo get numbered suffixes.
        if (out.record.sigma_hat.count(key)) key += "_" + std::to_string(i);
        out.record.sigma_hat[key] = std::sqrt(best.sigma_hat_sq[i]);
    }
    out.trace = std::move(best.trace);
    return out;
}

namespace {

void parallel_for(int n_jobs, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = int(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n_jobs));
    if (threads == 1) {
        for (int i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n_jobs) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct JobSpec {
    std::string condition;
    std::vector<Modality> combo;
    std::map<Modality, int> count_override;
    std::map<Modality, double> sigma_override;
    std::uint64_t seed;
};

SweepResult run_jobs(const ExperimentConfig& cfg, const std::string& name,
                     const std::vector<JobSpec>& jobs) {
    Problem prob = build_problem(cfg);
    SweepResult result;
    result.name = name;
    result.rows.resize(jobs.size());
    result.structures.resize(jobs.size());
    result.traces.resize(jobs.size());
    result.trace_labels.resize(jobs.size());

    parallel_for(int(jobs.size()), cfg.threads, [&](int i) {
        const JobSpec& job = jobs[size_t(i)];
        std::string label = combo_label(job.combo);
        try {
            std::uint64_t noise_seed =
                derive_seed(job.seed, "measure/" + name + "/" + job.condition);
            auto ms = build_measurements(cfg, prob, job.combo, job.count_override,
                                         job.sigma_override, noise_seed);
            SingleRun run = run_single(cfg, prob, ms, job.condition, label, job.seed);
            result.rows[size_t(i)] = std::move(run.record);
            result.structures[size_t(i)] = std::move(run.structure);
            result.traces[size_t(i)] = std::move(run.trace);
            result.trace_labels[size_t(i)] = std::move(run.trace_labels);
        } catch (const std::exception& e) {
            RunRecord rec;
            rec.condition = job.condition;
            rec.combo = label;
            rec.seed = job.seed;
            rec.failed = true;
            rec.error = e.what();
            result.rows[size_t(i)] = std::move(rec);
        }
    });

    // File names are assigned after the parallel section in row order.
    for (size_t i = 0; i < result.rows.size(); ++i) {
        RunRecord& rec = result.rows[i];
        if (rec.failed) continue;
        std::string base = name + "_" + rec.condition + "_seed" + std::to_string(rec.seed);
        rec.structure_file = "structures/" + base + ".pdb";
        if (!result.traces[i].empty()) rec.trace_file = "traces/" + base + ".csv";
    }
    return result;
}

} // namespace

SweepResult run_combo_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<JobSpec> jobs;
    for (const auto& combo : cfg.combos)
        for (std::uint64_t seed : cfg.seeds)
            jobs.push_back(JobSpec{combo_label(combo), combo, {}, {}, seed});
    return run_jobs(cfg, "combos", jobs);
}

SweepResult run_sparsity_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<JobSpec> jobs;
    for (size_t cell = 0; cell < cfg.sparsity.distance_counts.size(); ++cell) {
        int nd = cfg.sparsity.distance_counts[cell];
        int np = cfg.sparsity.partial_counts[cell];
        std::string condition =
            "nd" + std::to_string(nd) + "_np" + std::to_string(np);
        for (std::uint64_t seed : cfg.seeds) {
            JobSpec job;
            job.condition = condition;
            job.combo = {Modality::P, Modality::D};
            job.count_override = {{Modality::P, np}, {Modality::D, nd}};
            job.sigma_override = {{Modality::P, cfg.sparsity.sigma},
                                  {Modality::D, cfg.sparsity.sigma}};
            job.seed = seed;
            jobs.push_back(std::move(job));
        }
    }
    return run_jobs(cfg, "sparsity", jobs);
}

SweepResult run_noise_report(const ExperimentConfig& cfg) {
    cfg.validate();
    Modality m = modality_from_name(cfg.noise_report.modality);
    std::vector<JobSpec> jobs;
    for (double level : cfg.noise_report.levels) {
        std::string condition = "sigma" + format_double(level);
        for (std::uint64_t seed : cfg.seeds) {
            JobSpec job;
            job.condition = condition;
            job.combo = {m};
            job.sigma_override = {{m, level}};
            job.seed = seed;
            jobs.push_back(std::move(job));
        }
    }
    return run_jobs(cfg, "noise_report", jobs);
}

// ---------------------------------------------------------------------------

namespace {

struct Aggregate {
    int n = 0;
    double rmsd_mean = 0.0, rmsd_std = 0.0;
    std::map<std::string, double> sigma_hat_mean, sigma_hat_std;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / double(v.size() - 1));
}

std::vector<std::pair<std::string, Aggregate>> aggregate(const SweepResult& result) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const RunRecord*>> grouped;
    for (const auto& row : result.rows) {
        if (row.failed) continue;
        if (!grouped.count(row.condition)) order.push_back(row.condition);
        grouped[row.condition].push_back(&row);
    }
    std::vector<std::pair<std::string, Aggregate>> out;
    for (const auto& cond : order) {
        const auto& rows = grouped[cond];
        Aggregate agg;
        agg.n = int(rows.size());
        std::vector<double> rmsds;
        for (const auto* r : rows) rmsds.push_back(r->rmsd);
        agg.rmsd_mean = mean_of(rmsds);
        agg.rmsd_std = sample_std(rmsds, agg.rmsd_mean);
        std::map<std::string, std::vector<double>> hats;
        for (const auto* r : rows)
            for (const auto& [k, v] : r->sigma_hat) hats[k].push_back(v);
        for (const auto& [k, vals] : hats) {
            agg.sigma_hat_mean[k] = mean_of(vals);
            agg.sigma_hat_std[k] = sample_std(vals, agg.sigma_hat_mean[k]);
        }
        out.emplace_back(cond, agg);
    }
    return out;
}

ordered_json row_json(const RunRecord& r) {
    ordered_json j;
    j["condition"] = r.condition;
    j["combo"] = r.combo;
    j["seed"] = r.seed;
    if (r.failed) {
        j["failed"] = true;
        j["error"] = r.error;
        return j;
    }
    if (r.n_p > 0) j["n_p"] = r.n_p;
    if (r.n_d > 0) j["n_d"] = r.n_d;
    if (r.sigma_p >= 0.0) j["sigma_p"] = r.sigma_p;
    if (r.sigma_d >= 0.0) j["sigma_d"] = r.sigma_d;
    if (r.sigma_e >= 0.0) j["sigma_e"] = r.sigma_e;
    j["rmsd"] = r.rmsd;
    j["misfit"] = r.misfit;
    ordered_json hats;
    for (const auto& [k, v] : r.sigma_hat) hats[k] = v;
    j["sigma_hat"] = hats;
    j["clipped_steps"] = r.clipped_steps;
    j["structure_file"] = r.structure_file;
    if (!r.trace_file.empty()) j["trace_file"] = r.trace_file;
    return j;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

void emit_tables(const SweepResult& result, const std::string& output_dir) {
    fs::create_directories(output_dir);
    bool any_structure = false, any_trace = false;
    for (const auto& rec : result.rows) {
        any_structure = any_structure || !rec.structure_file.empty();
        any_trace = any_trace || !rec.trace_file.empty();
    }
    if (any_structure) fs::create_directories(fs::path(output_dir) / "structures");
    if (any_trace) fs::create_directories(fs::path(output_dir) / "traces");

    for (size_t i = 0; i < result.rows.size(); ++i) {
        const RunRecord& rec = result.rows[i];
        if (!rec.structure_file.empty())
            write_pdb_file(result.structures[i], (fs::path(output_dir) / rec.structure_file).string());
        if (!rec.trace_file.empty()) {
            std::ofstream out(fs::path(output_dir) / rec.trace_file);
            write_trace_csv(result.traces[i], result.trace_labels[i], out);
        }
    }

    ordered_json doc;
    doc["sweep"] = result.name;
    ordered_json rows = ordered_json::array();
    for (const auto& r : result.rows) rows.push_back(row_json(r));
    doc["rows"] = rows;
    ordered_json aggs;
    for (const auto& [cond, agg] : aggregate(result)) {
        ordered_json a;
        a["n"] = agg.n;
        a["rmsd_mean"] = agg.rmsd_mean;
        a["rmsd_std"] = agg.rmsd_std;
        if (!agg.sigma_hat_mean.empty()) {
            ordered_json hm, hs;
            for (const auto& [k, v] : agg.sigma_hat_mean) hm[k] = v;
            for (const auto& [k, v] : agg.sigma_hat_std) hs[k] = v;
            a["sigma_hat_mean"] = hm;
            a["sigma_hat_std"] = hs;
        }
        aggs[cond] = a;
    }
    doc["aggregates"] = aggs;
    {
        std::ofstream out(fs::path(output_dir) / (result.name + "_results.json"));
        out << doc.dump(2) << "\n";
    }

    std::ofstream csv(fs::path(output_dir) / (result.name + "_results.csv"));
    csv << "condition,combo,seed,n_p,n_d,sigma_p,sigma_d,sigma_e,rmsd,misfit,"
           "sigma_hat_P,sigma_hat_D,sigma_hat_E,clipped_steps,structure_file,trace_file,"
           "failed,error\n";
    auto opt_num = [](double v, bool present) {
        return present ? format_double(v) : std::string();
    };
    for (const auto& r : result.rows) {
        csv << csv_escape(r.condition) << "," << csv_escape(r.combo) << "," << r.seed << ","
            << (r.n_p > 0 ? std::to_string(r.n_p) : std::string()) << ","
            << (r.n_d > 0 ? std::to_string(r.n_d) : std::string()) << ","
            << opt_num(r.sigma_p, r.sigma_p >= 0.0) << ","
            << opt_num(r.sigma_d, r.sigma_d >= 0.0) << ","
            << opt_num(r.sigma_e, r.sigma_e >= 0.0) << ","
            << opt_num(r.rmsd, !r.failed) << "," << opt_num(r.misfit, !r.failed) << ",";
        auto hat = [&](const char* k) {
            auto it = r.sigma_hat.find(k);
            return it == r.sigma_hat.end() ? std::string() : format_double(it->second);
        };
        csv << hat("P") << "," << hat("D") << "," << hat("E") << ","
            << (r.failed ? std::string() : std::to_string(r.clipped_steps)) << ","
            << csv_escape(r.structure_file) << "," << csv_escape(r.trace_file) << ","
            << (r.failed ? "1" : "0") << "," << csv_escape(r.error) << "\n";
    }
}

std::string summary_table(const SweepResult& result) {
    std::ostringstream os;
    os << result.name << " sweep: " << result.rows.size() << " runs\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-16s %4s %12s %12s", "condition", "n", "rmsd_mean",
                  "rmsd_std");
    os << buf << "\n";
    for (const auto& [cond, agg] : aggregate(result)) {
        std::snprintf(buf, sizeof(buf), "%-16s %4d %12.4f %12.4f", cond.c_str(), agg.n,
                      agg.rmsd_mean, agg.rmsd_std);
        os << buf;
        for (const auto& [k, v] : agg.sigma_hat_mean) {
            std::snprintf(buf, sizeof(buf), "  sigma_hat_%s=%.4f+/-%.4f", k.c_str(), v,
                          agg.sigma_hat_std.at(k));
            os << buf;
        }
        os << "\n";
    }
    int failed = 0;
    for (const auto& r : result.rows) failed += r.failed ? 1 : 0;
    if (failed > 0) os << failed << " runs failed\n";
    return os.str();
}

void emit_single(const SingleRun& run, const std::string& output_dir) {
    fs::create_directories(output_dir);
    ordered_json doc = row_json(run.record);
    if (!run.record.failed) {
        write_pdb_file(run.structure, (fs::path(output_dir) / "reconstruction.pdb").string());
        doc["structure_file"] = "reconstruction.pdb";
        if (!run.trace.empty()) {
            std::ofstream t(fs::path(output_dir) / "trace.csv");
            write_trace_csv(run.trace, run.trace_labels, t);
            doc["trace_file"] = "trace.csv";
        }
    }
    std::ofstream out(fs::path(output_dir) / "result.json");
    out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

std::string measurements_to_json_text(const std::vector<Measurement>& ms, int n_atoms) {
    ordered_json doc;
    doc["n_atoms"] = n_atoms;
    ordered_json arr = ordered_json::array();
    for (const auto& m : ms) {
        m.validate();
        if (m.model->n_atoms() != n_atoms)
            throw DimensionError("measurement atom count does not match n_atoms");
        ordered_json j;
        j["modality"] = modality_name(m.modality());
        switch (m.modality()) {
            case Modality::P: {
                const auto* sel = dynamic_cast<const CoordinateSelection*>(m.model.get());
                j["atoms"] = sel->atoms();
                break;
            }
            case Modality::D: {
                const auto* pd = dynamic_cast<const PairDistances*>(m.model.get());
                ordered_json pairs = ordered_json::array();
                for (auto [a, b] : pd->pairs()) pairs.push_back({a, b});
                j["pairs"] = pairs;
                break;
            }
            case Modality::E: {
                const auto* dm = dynamic_cast<const DensityMap*>(m.model.get());
                const auto& s = dm->spec();
                j["grid"] = {{"origin", {s.origin[0], s.origin[1], s.origin[2]}},
                             {"shape", s.shape},
                             {"spacing", s.spacing},
                             {"atom_width", s.atom_width},
                             {"resolution_cutoff", s.resolution_cutoff}};
                break;
            }
        }
        j["y"] = std::vector<double>(m.y.data(), m.y.data() + m.y.size());
        if (m.true_sigma >= 0.0) j["true_sigma"] = m.true_sigma;
        arr.push_back(std::move(j));
    }
    doc["measurements"] = arr;
    return doc.dump(2) + "\n";
}

std::vector<Measurement> measurements_from_json_text(const std::string& text, int n_atoms) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("measurement file is not valid JSON: ") + e.what());
    }
    check_keys(doc, "measurements file", {"n_atoms", "measurements"});
    if (!doc.contains("n_atoms") || !doc.contains("measurements"))
        throw ParseError("measurement file needs n_atoms and measurements");
    int file_atoms = doc["n_atoms"].get<int>();
    if (file_atoms != n_atoms)
        throw DimensionError("measurement file is for " + std::to_string(file_atoms) +
                             " atoms, expected " + std::to_string(n_atoms));
    std::vector<Measurement> ms;
    for (const auto& j : doc["measurements"]) {
        check_keys(j, "measurement",
                   {"modality", "atoms", "pairs", "grid", "y", "true_sigma"});
        Modality mod = modality_from_name(j.at("modality").get<std::string>());
        Measurement m;
        switch (mod) {
            case Modality::P:
                m.model = std::make_shared<CoordinateSelection>(
                    j.at("atoms").get<std::vector<int>>(), n_atoms);
                break;
            case Modality::D: {
                std::vector<std::pair<int, int>> pairs;
                for (const auto& p : j.at("pairs"))
                    pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
                m.model = std::make_shared<PairDistances>(std::move(pairs), n_atoms);
                break;
            }
            case Modality::E: {
                const json& g = j.at("grid");
                check_keys(g, "measurement grid",
                           {"origin", "shape", "spacing", "atom_width",
                            "resolution_cutoff"});
                DensityGridSpec spec;
                spec.origin = Vec3(g.at("origin").at(0).get<double>(),
                                   g.at("origin").at(1).get<double>(),
                                   g.at("origin").at(2).get<double>());
                auto shape = g.at("shape").get<std::vector<int>>();
                if (shape.size() != 3) throw ParseError("grid shape must have 3 entries");
                spec.shape = {shape[0], shape[1], shape[2]};
                spec.spacing = g.at("spacing").get<double>();
                spec.atom_width = g.at("atom_width").get<double>();
                spec.resolution_cutoff = g.at("resolution_cutoff").get<double>();
                m.model = std::make_shared<DensityMap>(spec, n_atoms);
                break;
            }
        }
        auto y = j.at("y").get<std::vector<double>>();
        m.y = Eigen::Map<const Vec>(y.data(), Eigen::Index(y.size()));
        m.true_sigma = j.value("true_sigma", -1.0);
        m.validate();
        ms.push_back(std::move(m));
    }
    return ms;
}

void save_measurements(const std::vector<Measurement>& ms, int n_atoms,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << measurements_to_json_text(ms, n_atoms);
}

std::vector<Measurement> load_measurements(const std::string& path, int n_atoms) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open measurement file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return measurements_from_json_text(ss.str(), n_atoms);
}

} // namespace adampnp
