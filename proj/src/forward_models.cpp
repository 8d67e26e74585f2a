#include "adampnp/forward_models.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <mutex>
#include <new>
#include <sstream>

namespace adampnp {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::P: return "P";
        case Modality::D: return "D";
        case Modality::E: return "E";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "P") return Modality::P;
    if (name == "D") return Modality::D;
    if (name == "E") return Modality::E;
    throw ConfigError("unknown modality '" + name + "' (expected P, D or E)");
}

namespace {

// FFTW plans are cached per (shape, direction). Plan creation is not
// thread-safe, so it is serialized; execution via fftw_execute_dft on
// distinct in-place fftw_malloc'ed buffers is safe concurrently.
struct PlanKey {
    int nx, ny, nz, sign;
    bool operator<(const PlanKey& o) const {
        return std::tie(nx, ny, nz, sign) < std::tie(o.nx, o.ny, o.nz, o.sign);
    }
};

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

struct FftBuffer {
    fftw_complex* data;
    size_t n;
    explicit FftBuffer(size_t n) : n(n) {
        data = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!data) throw std::bad_alloc();
        std::fill_n(&data[0][0], 2 * n, 0.0);
    }
    ~FftBuffer() { fftw_free(data); }
    FftBuffer(const FftBuffer&) = delete;
    FftBuffer& operator=(const FftBuffer&) = delete;
};

void run_fft(const std::array<int, 3>& shape, int sign, FftBuffer& buf) {
    static std::map<PlanKey, fftw_plan> plans;
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        PlanKey key{shape[0], shape[1], shape[2], sign};
        auto it = plans.find(key);
        if (it == plans.end()) {
            // Plan on a throwaway buffer so the caller's data survives
            // FFTW_ESTIMATE planning.
            FftBuffer scratch(buf.n);
            plan = fftw_plan_dft_3d(shape[0], shape[1], shape[2], scratch.data,
                                    scratch.data, sign, FFTW_ESTIMATE);
            if (!plan) throw std::runtime_error("fftw plan creation failed");
            plans.emplace(key, plan);
        } else {
            plan = it->second;
        }
    }
    fftw_execute_dft(plan, buf.data, buf.data);
}

// Spectral norm of a linear map given v -> A^T A v, by power iteration
// from a fixed-seed start vector to relative tolerance 1e-6.
double power_iteration_norm(Eigen::Index dim, const std::function<Vec(const Vec&)>& ata) {
    Rng rng(0x51f3c1u);
    Vec v = rng.gaussian_vec(dim);
    double nv = v.norm();
    if (nv == 0.0) return 0.0;
    v /= nv;
    double prev = 0.0;
    for (int it = 0; it < 10000; ++it) {
        Vec w = ata(v);
        double lambda = w.norm();
        if (lambda == 0.0) return 0.0;
        v = w / lambda;
        double sigma = std::sqrt(lambda);
        if (it > 0 && std::abs(sigma - prev) <= 1e-6 * sigma) return sigma;
        prev = sigma;
    }
    return prev;
}

} // namespace

void ForwardModel::check_x(const Vec& x) const {
    if (x.size() != Eigen::Index(3) * n_atoms())
        throw DimensionError("coordinate vector size " + std::to_string(x.size()) +
                             ", expected " + std::to_string(3 * n_atoms()));
    if (!x.allFinite()) throw std::invalid_argument("non-finite coordinates");
}

void ForwardModel::check_residual(const Vec& residual) const {
    if (residual.size() != out_dim())
        throw DimensionError("residual size " + std::to_string(residual.size()) +
                             ", expected " + std::to_string(out_dim()));
}

// ---------------------------------------------------------------------------
// P: coordinate selection

CoordinateSelection::CoordinateSelection(std::vector<int> atoms, int n_atoms)
    : atoms_(std::move(atoms)), n_atoms_(n_atoms) {
    if (atoms_.empty()) throw ConfigError("coordinate selection needs at least one atom");
    for (int a : atoms_)
        if (a < 0 || a >= n_atoms_)
            throw DimensionError("selected atom " + std::to_string(a) + " out of range [0, " +
                                 std::to_string(n_atoms_) + ")");
}

Vec CoordinateSelection::apply(const Vec& x) const {
    check_x(x);
    Vec y(out_dim());
    for (size_t i = 0; i < atoms_.size(); ++i)
        y.segment<3>(3 * i) = x.segment<3>(3 * atoms_[i]);
    return y;
}

Vec CoordinateSelection::vjp(const Vec& x, const Vec& residual) const {
    check_x(x);
    check_residual(residual);
    Vec g = Vec::Zero(x.size());
    for (size_t i = 0; i < atoms_.size(); ++i)
        g.segment<3>(3 * atoms_[i]) += residual.segment<3>(3 * i);
    return g;
}

Vec CoordinateSelection::jvp(const Vec& x, const Vec& dx) const {
    check_x(x);
    if (dx.size() != x.size()) throw DimensionError("tangent size mismatch");
    Vec dy(out_dim());
    for (size_t i = 0; i < atoms_.size(); ++i)
        dy.segment<3>(3 * i) = dx.segment<3>(3 * atoms_[i]);
    return dy;
}

double CoordinateSelection::lipschitz_bound(const CovarianceFactor& r) const {
    if (r.n_atoms() != n_atoms_) throw DimensionError("covariance atom count mismatch");
    // Exact spectral norm of select . R by power iteration on its normal map.
    return power_iteration_norm(r.dim(), [&](const Vec& v) {
        Vec sel = apply(r.apply(v));
        return r.apply_transpose(vjp(Vec::Zero(r.dim()), sel));
    });
}

double CoordinateSelection::component_sensitivity(const CovarianceFactor& r) const {
    if (r.n_atoms() != n_atoms_) throw DimensionError("covariance atom count mismatch");
    double worst = 0.0;
    for (int a : atoms_) worst = std::max(worst, r.atom_gram(a, a));
    return std::sqrt(worst);
}

std::string CoordinateSelection::describe() const {
    std::ostringstream os;
    os << "P: " << atoms_.size() << " of " << n_atoms_ << " atoms observed";
    return os.str();
}

// ---------------------------------------------------------------------------
// D: pair distances

PairDistances::PairDistances(std::vector<std::pair<int, int>> pairs, int n_atoms)
    : pairs_(std::move(pairs)), n_atoms_(n_atoms) {
    if (pairs_.empty()) throw ConfigError("pair distance model needs at least one pair");
    std::vector<int> mult(n_atoms_, 0);
    for (auto [i, j] : pairs_) {
        if (i < 0 || i >= n_atoms_ || j < 0 || j >= n_atoms_)
            throw DimensionError("pair atom index out of range");
        if (i == j) throw ConfigError("pair with identical endpoints");
        ++mult[i];
        ++mult[j];
    }
    max_multiplicity_ = *std::max_element(mult.begin(), mult.end());
}

Vec PairDistances::apply(const Vec& x) const {
    check_x(x);
    Vec y(out_dim());
    for (size_t p = 0; p < pairs_.size(); ++p) {
        Vec3 d = x.segment<3>(3 * pairs_[p].first) - x.segment<3>(3 * pairs_[p].second);
        y[p] = d.norm();
    }
    return y;
}

Vec PairDistances::vjp(const Vec& x, const Vec& residual) const {
    check_x(x);
    check_residual(residual);
    Vec g = Vec::Zero(x.size());
    for (size_t p = 0; p < pairs_.size(); ++p) {
        auto [i, j] = pairs_[p];
        Vec3 d = x.segment<3>(3 * i) - x.segment<3>(3 * j);
        double dist = d.norm();
        if (dist < 1e-8) {
            ++degenerate_count_;
            continue;  // subgradient 0 at the kink
        }
        Vec3 u = (residual[p] / dist) * d;
        g.segment<3>(3 * i) += u;
        g.segment<3>(3 * j) -= u;
    }
    return g;
}

Vec PairDistances::jvp(const Vec& x, const Vec& dx) const {
    check_x(x);
    if (dx.size() != x.size()) throw DimensionError("tangent size mismatch");
    Vec dy = Vec::Zero(out_dim());
    for (size_t p = 0; p < pairs_.size(); ++p) {
        auto [i, j] = pairs_[p];
        Vec3 d = x.segment<3>(3 * i) - x.segment<3>(3 * j);
        double dist = d.norm();
        if (dist < 1e-8) {
            ++degenerate_count_;
            continue;
        }
        dy[p] = d.dot(dx.segment<3>(3 * i) - dx.segment<3>(3 * j)) / dist;
    }
    return dy;
}

double PairDistances::lipschitz_bound(const CovarianceFactor& r) const {
    if (r.n_atoms() != n_atoms_) throw DimensionError("covariance atom count mismatch");
    // ||F(x) - F(x')||^2 <= 2 sum_p (||dx_i||^2 + ||dx_j||^2) <= 2 m_max ||dx||^2
    // uniformly in x (reverse triangle inequality per pair), so the map
    // z -> F(R z) is Lipschitz with sqrt(2 m_max) ||R||.
    return std::sqrt(2.0 * double(max_multiplicity_)) * r.operator_norm();
}

double PairDistances::component_sensitivity(const CovarianceFactor& r) const {
    if (r.n_atoms() != n_atoms_) throw DimensionError("covariance atom count mismatch");
    // Gradient of one distance in z has squared norm u^T (G_ii + G_jj -
    // 2 G_ij) u <= g_ii + g_jj - 2 g_ij for the unit direction u.
    double worst = 0.0;
    for (auto [i, j] : pairs_)
        worst = std::max(worst, r.atom_gram(i, i) + r.atom_gram(j, j) - 2.0 * r.atom_gram(i, j));
    return std::sqrt(worst);
}

std::string PairDistances::describe() const {
    std::ostringstream os;
    os << "D: " << pairs_.size() << " pair distances over " << n_atoms_ << " atoms";
    return os.str();
}

// ---------------------------------------------------------------------------
// E: truncated-resolution density map

void DensityGridSpec::validate() const {
    for (int s : shape)
        if (s < 3) throw ConfigError("density grid needs at least 3 points per axis");
    if (!(spacing > 0.0)) throw ConfigError("grid spacing must be positive");
    if (!(atom_width > 0.0)) throw ConfigError("atom width must be positive");
    if (!(resolution_cutoff > 0.0)) throw ConfigError("resolution cutoff must be positive");
    if (spacing > 0.5 * resolution_cutoff)
        throw ConfigError("grid spacing exceeds half the resolution cutoff (aliasing)");
    if (!origin.allFinite()) throw ConfigError("grid origin must be finite");
}

DensityGridSpec DensityGridSpec::covering(const Vec& coords, double spacing,
                                          double atom_width, double resolution_cutoff,
                                          double margin) {
    if (coords.size() == 0 || coords.size() % 3 != 0)
        throw DimensionError("coordinate vector length must be a positive multiple of 3");
    if (margin < 6.0 * atom_width)
        throw ConfigError("grid margin must cover the kernel truncation radius (6 widths)");
    Vec3 lo = coords.segment<3>(0), hi = lo;
    for (Eigen::Index a = 0; 3 * a < coords.size(); ++a) {
        Vec3 p = coords.segment<3>(3 * a);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    DensityGridSpec spec;
    spec.spacing = spacing;
    spec.atom_width = atom_width;
    spec.resolution_cutoff = resolution_cutoff;
    spec.origin = lo - Vec3::Constant(margin);
    for (int ax = 0; ax < 3; ++ax) {
        int n = int(std::ceil((hi[ax] - lo[ax] + 2.0 * margin) / spacing)) + 1;
        if (n % 2 == 0) ++n;  // odd sizes avoid Nyquist-row special cases
        spec.shape[ax] = n;
    }
    spec.validate();
    return spec;
}

namespace {

// Per-axis signed DFT frequencies: k in [0, n) maps to k or k - n.
int signed_freq(int k, int n) { return k <= n / 2 ? k : k - n; }

// Index of the conjugate mode along one axis, in signed terms.
int conj_signed(int s, int n) {
    if (n % 2 == 0 && s == n / 2) return s;  // Nyquist row is its own conjugate
    return -s;
}

struct AtomWindow {
    int lo[3];
    int len[3];
    std::vector<double> w[3];   // per-axis gaussian factors
    std::vector<double> d[3];   // grid coordinate minus atom coordinate
};

AtomWindow atom_window(const DensityGridSpec& spec, const Vec3& pos, int atom_index) {
    double s = spec.atom_width, h = spec.spacing, radius = 6.0 * s;
    AtomWindow win;
    for (int ax = 0; ax < 3; ++ax) {
        double rel_lo = (pos[ax] - radius - spec.origin[ax]) / h;
        double rel_hi = (pos[ax] + radius - spec.origin[ax]) / h;
        int lo = int(std::ceil(rel_lo));
        int hi = int(std::floor(rel_hi));
        if (lo < 0 || hi >= spec.shape[ax])
            throw OutOfGridError("atom " + std::to_string(atom_index) +
                                 " (plus kernel support) falls outside the density grid");
        win.lo[ax] = lo;
        win.len[ax] = hi - lo + 1;
        win.w[ax].resize(win.len[ax]);
        win.d[ax].resize(win.len[ax]);
        for (int i = 0; i < win.len[ax]; ++i) {
            double dist = spec.origin[ax] + h * (lo + i) - pos[ax];
            win.d[ax][i] = dist;
            win.w[ax][i] = std::exp(-dist * dist / (2.0 * s * s));
        }
    }
    return win;
}

} // namespace

DensityMap::DensityMap(DensityGridSpec spec, int n_atoms)
    : spec_(spec), n_atoms_(n_atoms) {
    spec_.validate();
    if (n_atoms_ <= 0) throw ConfigError("density model needs at least one atom");

    double fmax = 1.0 / spec_.resolution_cutoff;
    const auto& sh = spec_.shape;
    for (int kx = 0; kx < sh[0]; ++kx) {
        int sx = signed_freq(kx, sh[0]);
        for (int ky = 0; ky < sh[1]; ++ky) {
            int sy = signed_freq(ky, sh[1]);
            for (int kz = 0; kz < sh[2]; ++kz) {
                int sz = signed_freq(kz, sh[2]);
                double fx = sx / (sh[0] * spec_.spacing);
                double fy = sy / (sh[1] * spec_.spacing);
                double fz = sz / (sh[2] * spec_.spacing);
                double f = std::sqrt(fx * fx + fy * fy + fz * fz);
                if (f > fmax) continue;
                std::array<int, 3> s{sx, sy, sz};
                std::array<int, 3> c{conj_signed(sx, sh[0]), conj_signed(sy, sh[1]),
                                     conj_signed(sz, sh[2])};
                if (s < c) continue;  // keep one of each conjugate pair
                modes_.push_back(FourierMode{s, f, s == c});
            }
        }
    }
    std::sort(modes_.begin(), modes_.end(),
              [](const FourierMode& a, const FourierMode& b) { return a.k_signed < b.k_signed; });
    out_dim_ = 0;
    for (const auto& m : modes_) out_dim_ += m.self_conjugate ? 1 : 2;
}

std::vector<double> DensityMap::render(const Vec& x) const {
    check_x(x);
    const auto& sh = spec_.shape;
    std::vector<double> grid(size_t(sh[0]) * sh[1] * sh[2], 0.0);
    double s2 = spec_.atom_width * spec_.atom_width;
    double amp = std::pow(spec_.spacing, 3) / std::pow(2.0 * M_PI * s2, 1.5);
    for (int a = 0; a < n_atoms_; ++a) {
        AtomWindow win = atom_window(spec_, x.segment<3>(3 * a), a);
        for (int i = 0; i < win.len[0]; ++i) {
            double wx = amp * win.w[0][i];
            size_t base_x = size_t(win.lo[0] + i) * sh[1];
            for (int j = 0; j < win.len[1]; ++j) {
                double wxy = wx * win.w[1][j];
                size_t base_xy = (base_x + size_t(win.lo[1] + j)) * sh[2] + win.lo[2];
                for (int k = 0; k < win.len[2]; ++k)
                    grid[base_xy + k] += wxy * win.w[2][k];
            }
        }
    }
    return grid;
}

Vec DensityMap::extract_channels(const std::vector<double>& grid) const {
    const auto& sh = spec_.shape;
    FftBuffer buf(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) buf.data[i][0] = grid[i];
    run_fft(sh, FFTW_FORWARD, buf);
    Vec y(out_dim_);
    Eigen::Index c = 0;
    for (const auto& m : modes_) {
        size_t kx = m.k_signed[0] < 0 ? m.k_signed[0] + sh[0] : m.k_signed[0];
        size_t ky = m.k_signed[1] < 0 ? m.k_signed[1] + sh[1] : m.k_signed[1];
        size_t kz = m.k_signed[2] < 0 ? m.k_signed[2] + sh[2] : m.k_signed[2];
        size_t idx = (kx * sh[1] + ky) * sh[2] + kz;
        y[c++] = buf.data[idx][0];
        if (!m.self_conjugate) y[c++] = buf.data[idx][1];
    }
    return y;
}

Vec DensityMap::apply(const Vec& x) const {
    return extract_channels(render(x));
}

Vec DensityMap::jvp(const Vec& x, const Vec& dx) const {
    check_x(x);
    if (dx.size() != x.size()) throw DimensionError("tangent size mismatch");
    const auto& sh = spec_.shape;
    std::vector<double> dgrid(size_t(sh[0]) * sh[1] * sh[2], 0.0);
    double s2 = spec_.atom_width * spec_.atom_width;
    double amp = std::pow(spec_.spacing, 3) / std::pow(2.0 * M_PI * s2, 1.5);
    for (int a = 0; a < n_atoms_; ++a) {
        AtomWindow win = atom_window(spec_, x.segment<3>(3 * a), a);
        Vec3 da = dx.segment<3>(3 * a);
        for (int i = 0; i < win.len[0]; ++i) {
            double wx = amp * win.w[0][i];
            size_t base_x = size_t(win.lo[0] + i) * sh[1];
            for (int j = 0; j < win.len[1]; ++j) {
                double wxy = wx * win.w[1][j];
                size_t base_xy = (base_x + size_t(win.lo[1] + j)) * sh[2] + win.lo[2];
                for (int k = 0; k < win.len[2]; ++k) {
                    // d rho / d x_a = kernel * (p - x_a) / s^2 dotted with da
                    double dot = win.d[0][i] * da[0] + win.d[1][j] * da[1] + win.d[2][k] * da[2];
                    dgrid[base_xy + k] += wxy * win.w[2][k] * dot / s2;
                }
            }
        }
    }
    return extract_channels(dgrid);
}

Vec DensityMap::vjp(const Vec& x, const Vec& residual) const {
    check_x(x);
    check_residual(residual);
    const auto& sh = spec_.shape;
    size_t total = size_t(sh[0]) * sh[1] * sh[2];
    FftBuffer buf(total);
    // Place half-weight conjugate pairs so that the backward transform's
    // real part is exactly the adjoint of channel extraction.
    Eigen::Index c = 0;
    for (const auto& m : modes_) {
        size_t kx = m.k_signed[0] < 0 ? m.k_signed[0] + sh[0] : m.k_signed[0];
        size_t ky = m.k_signed[1] < 0 ? m.k_signed[1] + sh[1] : m.k_signed[1];
        size_t kz = m.k_signed[2] < 0 ? m.k_signed[2] + sh[2] : m.k_signed[2];
        size_t idx = (kx * sh[1] + ky) * sh[2] + kz;
        double u_re = residual[c++];
        if (m.self_conjugate) {
            buf.data[idx][0] += u_re;
        } else {
            double u_im = residual[c++];
            int cx = conj_signed(m.k_signed[0], sh[0]);
            int cy = conj_signed(m.k_signed[1], sh[1]);
            int cz = conj_signed(m.k_signed[2], sh[2]);
            size_t jdx = ((size_t(cx < 0 ? cx + sh[0] : cx) * sh[1] +
                           size_t(cy < 0 ? cy + sh[1] : cy)) *
                          sh[2]) +
                         size_t(cz < 0 ? cz + sh[2] : cz);
            buf.data[idx][0] += 0.5 * u_re;
            buf.data[idx][1] += 0.5 * u_im;
            buf.data[jdx][0] += 0.5 * u_re;
            buf.data[jdx][1] -= 0.5 * u_im;
        }
    }
    run_fft(sh, FFTW_BACKWARD, buf);

    double s2 = spec_.atom_width * spec_.atom_width;
    double amp = std::pow(spec_.spacing, 3) / std::pow(2.0 * M_PI * s2, 1.5);
    Vec g = Vec::Zero(x.size());
    for (int a = 0; a < n_atoms_; ++a) {
        AtomWindow win = atom_window(spec_, x.segment<3>(3 * a), a);
        Vec3 acc = Vec3::Zero();
        for (int i = 0; i < win.len[0]; ++i) {
            double wx = amp * win.w[0][i];
            size_t base_x = size_t(win.lo[0] + i) * sh[1];
            for (int j = 0; j < win.len[1]; ++j) {
                double wxy = wx * win.w[1][j];
                size_t base_xy = (base_x + size_t(win.lo[1] + j)) * sh[2] + win.lo[2];
                for (int k = 0; k < win.len[2]; ++k) {
                    double wgt = buf.data[base_xy + k][0] * wxy * win.w[2][k] / s2;
                    acc[0] += wgt * win.d[0][i];
                    acc[1] += wgt * win.d[1][j];
                    acc[2] += wgt * win.d[2][k];
                }
            }
        }
        g.segment<3>(3 * a) = acc;
    }
    return g;
}

double DensityMap::lipschitz_bound(const CovarianceFactor& r) const {
    if (r.n_atoms() != n_atoms_) throw DimensionError("covariance atom count mismatch");
    // Continuum bound on one atom's Jacobian into the retained modes: the
    // unit-mass kernel transform has magnitude ~exp(-2 pi^2 s^2 f^2) and a
    // position derivative of 2 pi f times that. The 1.1 factor absorbs the
    // few-percent excess of the discrete kernel (aliasing near Nyquist).
    double s2 = spec_.atom_width * spec_.atom_width;
    double frob2 = 0.0;
    for (const auto& m : modes_) {
        double a = 2.0 * M_PI * m.freq * std::exp(-2.0 * M_PI * M_PI * s2 * m.freq * m.freq);
        frob2 += a * a;
    }
    return 1.1 * std::sqrt(double(n_atoms_) * frob2) * r.operator_norm();
}

double DensityMap::component_sensitivity(const CovarianceFactor& r) const {
    if (r.n_atoms() != n_atoms_) throw DimensionError("covariance atom count mismatch");
    // Typical (median-mode) single-channel gradient scale; all atoms can
    // contribute to one mode, hence the sqrt(n_atoms) stacking.
    double s2 = spec_.atom_width * spec_.atom_width;
    std::vector<double> per_mode;
    per_mode.reserve(modes_.size());
    for (const auto& m : modes_)
        per_mode.push_back(2.0 * M_PI * m.freq *
                           std::exp(-2.0 * M_PI * M_PI * s2 * m.freq * m.freq));
    size_t mid = per_mode.size() / 2;
    std::nth_element(per_mode.begin(), per_mode.begin() + mid, per_mode.end());
    return per_mode[mid] * std::sqrt(double(n_atoms_)) * r.operator_norm();
}

std::string DensityMap::describe() const {
    std::ostringstream os;
    os << "E: " << spec_.shape[0] << "x" << spec_.shape[1] << "x" << spec_.shape[2]
       << " grid, spacing " << spec_.spacing << " A, " << modes_.size()
       << " retained modes (cutoff " << spec_.resolution_cutoff << " A)";
    return os.str();
}

// ---------------------------------------------------------------------------

Vec apply_P(const Vec& x, const std::vector<int>& atoms) {
    return CoordinateSelection(atoms, int(x.size() / 3)).apply(x);
}

Vec apply_D(const Vec& x, const std::vector<std::pair<int, int>>& pairs) {
    return PairDistances(pairs, int(x.size() / 3)).apply(x);
}

Vec apply_E(const Vec& x, const DensityGridSpec& spec) {
    return DensityMap(spec, int(x.size() / 3)).apply(x);
}

void Measurement::validate() const {
    if (!model) throw ConfigError("measurement has no forward model");
    if (y.size() != model->out_dim())
        throw DimensionError("measurement vector size " + std::to_string(y.size()) +
                             ", expected " + std::to_string(model->out_dim()));
    if (!y.allFinite()) throw std::invalid_argument("measurement contains non-finite values");
}

Measurement simulate_measurement(std::shared_ptr<const ForwardModel> model,
                                 const Vec& x_true, double sigma, std::uint64_t seed) {
    if (!model) throw ConfigError("simulate_measurement: null model");
    if (sigma < 0.0) throw ConfigError("noise level must be non-negative");
    Measurement m;
    m.model = std::move(model);
    m.y = m.model->apply(x_true);
    if (sigma > 0.0) {
        Rng rng(seed);
        m.y += sigma * rng.gaussian_vec(m.y.size());
    }
    m.true_sigma = sigma;
    m.validate();
    return m;
}

} // namespace adampnp
