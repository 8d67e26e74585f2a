#pragma once

#include "adampnp/prior.hpp"
#include "adampnp/types.hpp"

#include <array>
#include <atomic>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace adampnp {

enum class Modality { P, D, E };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Regular 3D grid for simulated density maps. Grid point (gx, gy, gz) sits
// at origin + spacing * (gx, gy, gz); shape counts points per axis. Atoms
// are rendered as isotropic Gaussians of width `atom_width` (standard
// deviation, angstroms) normalized to unit mass per atom, truncated at 6
// widths. After a 3D DFT only modes with spatial frequency magnitude
// <= 1 / resolution_cutoff are retained.
struct DensityGridSpec {
    Vec3 origin = Vec3::Zero();
    std::array<int, 3> shape{0, 0, 0};
    double spacing = 1.0;
    double atom_width = 0.8;
    double resolution_cutoff = 2.0;

    void validate() const;

    // Smallest grid with odd dimensions covering every atom in `coords`
    // plus `margin` angstroms on all sides (the margin must absorb the
    // kernel truncation radius of 6 * atom_width, and then some, so that
    // plausible intermediate structures stay on the grid).
    static DensityGridSpec covering(const Vec& coords, double spacing, double atom_width,
                                    double resolution_cutoff, double margin);
};

// One retained Fourier mode. k_signed holds per-axis integer frequencies
// in [-(n-1)/2, n/2]; `freq` is the physical magnitude |f| in 1/angstrom.
// Self-conjugate modes (DC, and Nyquist rows on even-sized grids) carry
// only a real channel; all others contribute a (re, im) pair.
struct FourierMode {
    std::array<int, 3> k_signed;
    double freq;
    bool self_conjugate;
};

// Differentiable map from a flat coordinate vector (3 * n_atoms) to an
// observation vector, with exact Jacobian-vector products in both
// directions. `lipschitz_bound` is a certified upper bound on the spectral
// norm of the Jacobian of z -> F(R z); `component_sensitivity` is the
// typical scale of a single output component's gradient in z, used by the
// noise estimator's bias correction.
class ForwardModel {
public:
    virtual ~ForwardModel() = default;
    virtual Modality modality() const = 0;
    virtual int out_dim() const = 0;
    virtual int n_atoms() const = 0;
    virtual Vec apply(const Vec& x) const = 0;
    virtual Vec vjp(const Vec& x, const Vec& residual) const = 0;  // J(x)^T residual
    virtual Vec jvp(const Vec& x, const Vec& dx) const = 0;        // J(x) dx
    virtual double lipschitz_bound(const CovarianceFactor& r) const = 0;
    virtual double component_sensitivity(const CovarianceFactor& r) const = 0;
    virtual std::string describe() const = 0;

protected:
    void check_x(const Vec& x) const;
    void check_residual(const Vec& residual) const;
};

// P: reads out the coordinates of a subset of atoms (by default the CA
// trace). Output is the selected atoms' xyz triplets in list order.
class CoordinateSelection final : public ForwardModel {
public:
    CoordinateSelection(std::vector<int> atoms, int n_atoms);

    Modality modality() const override { return Modality::P; }
    int out_dim() const override { return int(3 * atoms_.size()); }
    int n_atoms() const override { return n_atoms_; }
    Vec apply(const Vec& x) const override;
    Vec vjp(const Vec& x, const Vec& residual) const override;
    Vec jvp(const Vec& x, const Vec& dx) const override;
    double lipschitz_bound(const CovarianceFactor& r) const override;
    double component_sensitivity(const CovarianceFactor& r) const override;
    std::string describe() const override;

    const std::vector<int>& atoms() const { return atoms_; }

private:
    std::vector<int> atoms_;
    int n_atoms_;
};

// D: Euclidean distances between listed atom pairs. The derivative of a
// zero-length pair is undefined; its gradient contribution is set to zero
// (a valid subgradient) and counted in degenerate_count().
class PairDistances final : public ForwardModel {
public:
    PairDistances(std::vector<std::pair<int, int>> pairs, int n_atoms);

    Modality modality() const override { return Modality::D; }
    int out_dim() const override { return int(pairs_.size()); }
    int n_atoms() const override { return n_atoms_; }
    Vec apply(const Vec& x) const override;
    Vec vjp(const Vec& x, const Vec& residual) const override;
    Vec jvp(const Vec& x, const Vec& dx) const override;
    double lipschitz_bound(const CovarianceFactor& r) const override;
    double component_sensitivity(const CovarianceFactor& r) const override;
    std::string describe() const override;

    const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
    std::uint64_t degenerate_count() const { return degenerate_count_.load(); }

private:
    std::vector<std::pair<int, int>> pairs_;
    int n_atoms_;
    int max_multiplicity_;  // most pairs any single atom participates in
    mutable std::atomic<std::uint64_t> degenerate_count_{0};
};

// E: renders atoms as unit-mass Gaussians on the grid, takes a 3D DFT and
// keeps the low-frequency modes. Output layout: retained modes sorted
// lexicographically by signed frequency triple, each contributing its real
// part then (unless self-conjugate) its imaginary part.
class DensityMap final : public ForwardModel {
public:
    DensityMap(DensityGridSpec spec, int n_atoms);

    Modality modality() const override { return Modality::E; }
    int out_dim() const override { return out_dim_; }
    int n_atoms() const override { return n_atoms_; }
    Vec apply(const Vec& x) const override;
    Vec vjp(const Vec& x, const Vec& residual) const override;
    Vec jvp(const Vec& x, const Vec& dx) const override;
    double lipschitz_bound(const CovarianceFactor& r) const override;
    double component_sensitivity(const CovarianceFactor& r) const override;
    std::string describe() const override;

    const DensityGridSpec& spec() const { return spec_; }
    const std::vector<FourierMode>& modes() const { return modes_; }

    // Real-space density on the full grid (row-major, z fastest); exposed
    // for tests and debugging.
    std::vector<double> render(const Vec& x) const;

private:
    Vec extract_channels(const std::vector<double>& grid) const;

    DensityGridSpec spec_;
    int n_atoms_;
    int out_dim_;
    std::vector<FourierMode> modes_;
};

// Convenience wrappers around one-shot model construction.
Vec apply_P(const Vec& x, const std::vector<int>& atoms);
Vec apply_D(const Vec& x, const std::vector<std::pair<int, int>>& pairs);
Vec apply_E(const Vec& x, const DensityGridSpec& spec);

// One observation: the forward model that produced it, the noisy data
// vector, and (for synthetic data) the generating noise level.
struct Measurement {
    std::shared_ptr<const ForwardModel> model;
    Vec y;
    double true_sigma = -1.0;  // negative: unknown

    Modality modality() const { return model->modality(); }
    int out_dim() const { return model->out_dim(); }
    void validate() const;
};

// y = F(x_true) + sigma * xi with iid standard Gaussian xi, deterministic
// in `seed`.
Measurement simulate_measurement(std::shared_ptr<const ForwardModel> model,
                                 const Vec& x_true, double sigma, std::uint64_t seed);

} // namespace adampnp
