// Python bindings for the guided-reconstruction core. Coordinates cross
// the boundary as (n_atoms, 3) numpy arrays; configs and measurement sets
// as JSON text (same schemas as the command-line tool).

#include "adampnp/harness.hpp"
#include "adampnp/rng.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace adampnp;

namespace {

Vec flat_from(const Eigen::MatrixXd& rows) {
    if (rows.cols() != 3) throw DimensionError("expected an (n, 3) coordinate array");
    Vec f(rows.size());
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        f.segment<3>(3 * i) = rows.row(i).transpose();
    return f;
}

Eigen::MatrixXd rows_from(const Vec& flat) {
    Eigen::MatrixXd m(flat.size() / 3, 3);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        m.row(i) = flat.segment<3>(3 * i).transpose();
    return m;
}

Backbone backbone_from_rows(const Eigen::MatrixXd& rows) {
    if (rows.rows() % Backbone::kAtomsPerResidue != 0)
        throw DimensionError("coordinate rows must be a multiple of 4 (N, CA, C, O)");
    return backbone_from_coords(int(rows.rows()) / Backbone::kAtomsPerResidue,
                                flat_from(rows));
}

py::dict record_dict(const RunRecord& rec) {
    py::dict d;
    d["condition"] = rec.condition;
    d["combo"] = rec.combo;
    d["seed"] = rec.seed;
    d["rmsd"] = rec.rmsd;
    d["misfit"] = rec.misfit;
    d["sigma_hat"] = rec.sigma_hat;
    d["clipped_steps"] = rec.clipped_steps;
    d["failed"] = rec.failed;
    d["error"] = rec.error;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Reconstruction of protein backbones by diffusion sampling guided "
              "by heterogeneous noisy measurements.";

    m.def(
        "make_backbone",
        [](const std::string& kind, int n_residues) {
            return rows_from(make_backbone(kind, n_residues).coords);
        },
        py::arg("kind"), py::arg("n_residues"),
        "Synthetic ground-truth backbone ('hairpin' or 'helix') as an "
        "(n_atoms, 3) array in N, CA, C, O order per residue.");

    m.def(
        "load_pdb", [](const std::string& path) { return rows_from(load_pdb_file(path).coords); },
        py::arg("path"), "Backbone coordinates from a PDB file as an (n_atoms, 3) array.");

    m.def(
        "save_pdb",
        [](const std::string& path, const Eigen::MatrixXd& coords) {
            write_pdb_file(backbone_from_rows(coords), path);
        },
        py::arg("path"), py::arg("coords"),
        "Write (n_atoms, 3) backbone coordinates to a PDB file.");

    m.def(
        "calpha_rmsd",
        [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
            return calpha_rmsd(backbone_from_rows(a), backbone_from_rows(b));
        },
        py::arg("a"), py::arg("b"),
        "Optimal-superposition RMSD over CA atoms of two backbones.");

    m.def(
        "kabsch_align",
        [](const Eigen::MatrixXd& mobile, const Eigen::MatrixXd& ref) {
            Alignment al = kabsch_align(flat_from(mobile), flat_from(ref));
            return py::make_tuple(Mat3(al.rotation), Vec3(al.translation), al.rmsd);
        },
        py::arg("mobile"), py::arg("ref"),
        "Least-squares rigid superposition of point sets; returns "
        "(rotation, translation, rmsd).");

    py::class_<NoiseSchedule>(m, "NoiseSchedule",
                              "Variance-preserving diffusion schedule with a linear "
                              "beta ramp.")
        .def(py::init<int, double, double>(), py::arg("n_steps") = 200,
             py::arg("beta_min") = 1e-4, py::arg("beta_max") = 0.05)
        .def("beta", &NoiseSchedule::beta, py::arg("t"))
        .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"))
        .def("tau", &NoiseSchedule::tau, py::arg("t"))
        .def("step_alpha", &NoiseSchedule::step_alpha, py::arg("t"))
        .def("step_tau", &NoiseSchedule::step_tau, py::arg("t"))
        .def_property_readonly("n_steps", &NoiseSchedule::n_steps);

    m.def(
        "mixture_denoise",
        [](const Vec& z_t, int t, const std::vector<Vec>& means,
           const std::vector<double>& weights, double component_std,
           const NoiseSchedule& sched) {
            GaussianMixturePrior prior;
            prior.means = means;
            prior.weights = weights;
            prior.component_std = component_std;
            prior.validate();
            return mixture_denoise(z_t, t, prior, sched);
        },
        py::arg("z_t"), py::arg("t"), py::arg("means"), py::arg("weights"),
        py::arg("component_std"), py::arg("schedule"),
        "Exact posterior mean E[z_0 | z_t] under a Gaussian-mixture prior.");

    m.def(
        "validate_config",
        [](const std::string& text) {
            return ExperimentConfig::from_json_text(text).to_json_text();
        },
        py::arg("config_text"),
        "Parse and validate an experiment config; returns the normalized JSON "
        "with defaults filled in. Raises ValueError on bad input.");

    m.def(
        "sample_prior",
        [](const std::string& config_text, std::int64_t seed) {
            ExperimentConfig cfg = ExperimentConfig::from_json_text(config_text);
            if (seed >= 0) cfg.seed = std::uint64_t(seed);
            Problem prob = build_problem(cfg);
            MixtureDenoiser denoiser(prob.prior, prob.sched);
            Backbone bb =
                sample_unconditional(denoiser, prob.sched, *prob.cov, LangevinParams{}, cfg.seed);
            py::dict d;
            d["coords"] = rows_from(bb.coords);
            d["rmsd_to_truth"] = calpha_rmsd(bb, prob.truth);
            return d;
        },
        py::arg("config_text"), py::arg("seed") = -1,
        "Draw one unconditional sample from the configured prior; returns a "
        "dict with 'coords' and 'rmsd_to_truth'.");

    m.def(
        "reconstruct",
        [](const std::string& config_text, const py::object& measurements_json,
           std::int64_t seed) {
            ExperimentConfig cfg = ExperimentConfig::from_json_text(config_text);
            if (seed >= 0) cfg.seed = std::uint64_t(seed);
            Problem prob = build_problem(cfg);
            std::vector<Measurement> ms;
            if (measurements_json.is_none()) {
                ms = build_measurements(cfg, prob, cfg.reconstruct_modalities, {}, {},
                                        derive_seed(cfg.seed, "measure/reconstruct"));
            } else {
                ms = measurements_from_json_text(measurements_json.cast<std::string>(),
                                                 prob.truth.n_atoms());
            }
            std::string combo;
            for (size_t i = 0; i < ms.size(); ++i)
                combo += (i ? "+" : "") + std::string(modality_name(ms[i].modality()));
            SingleRun run = run_single(cfg, prob, ms, "reconstruct", combo, cfg.seed);
            py::dict d = record_dict(run.record);
            d["coords"] = rows_from(run.structure.coords);
            d["measurements"] = measurements_to_json_text(ms, prob.truth.n_atoms());
            return d;
        },
        py::arg("config_text"), py::arg("measurements_json") = py::none(),
        py::arg("seed") = -1,
        "Guided reconstruction from the config's modalities. Measurements are "
        "simulated from the config unless 'measurements_json' provides them. "
        "Returns the run record plus 'coords' and the measurement set used.");
}
