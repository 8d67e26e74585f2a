#include "adampnp/synthetic.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <set>

namespace adampnp {

namespace {

constexpr double kHelixRadius = 2.3;   // CA distance from the helix axis
constexpr double kHelixRise = 1.5;     // rise per residue along the axis
constexpr double kHelixTwist = 100.0 * M_PI / 180.0;

// Ideal helix CA trace along +z, defined for any integer index.
Vec3 helix_ca(double i) {
    return Vec3(kHelixRadius * std::cos(kHelixTwist * i),
                kHelixRadius * std::sin(kHelixTwist * i), kHelixRise * i);
}

// Hairpin geometry: arm 1 ascends along +z for kArmLen residues, a short
// turn bridges to arm 2, which descends antiparallel at a typical helix
// packing offset in x. Defined for any integer index so windows can slide.
constexpr int kArmLen = 28;
constexpr int kTurnLen = 6;
constexpr double kPackingOffset = 9.8;
constexpr double kArm2Phase = 0.7;

Vec3 arm2_ca(double j) {
    // Right-handed helix around an axis pointing in -z.
    return Vec3(kPackingOffset + kHelixRadius * std::cos(-kHelixTwist * j + kArm2Phase),
                kHelixRadius * std::sin(-kHelixTwist * j + kArm2Phase),
                (kArmLen - 1) * kHelixRise + 2.0 - kHelixRise * j);
}

Vec3 hairpin_ca(int i) {
    if (i < kArmLen) return helix_ca(i);
    if (i >= kArmLen + kTurnLen) return arm2_ca(i - kArmLen - kTurnLen);
    // Cubic Hermite bridge between the arm endpoints with arm tangents.
    double s = double(i - kArmLen + 1) / double(kTurnLen + 1);
    Vec3 p0 = helix_ca(kArmLen - 1), p1 = arm2_ca(0);
    Vec3 m0 = (helix_ca(kArmLen) - p0) * double(kTurnLen + 1);
    Vec3 m1 = (arm2_ca(1) - p1) * double(kTurnLen + 1);
    double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 +
           (s3 - s2) * m1;
}

// Builds N, C, O around each CA of a polyline using the local tangent and
// curvature frame. The offsets give protein-like bond lengths; at straight
// stretches the curvature degenerates and a fixed perpendicular is used.
Backbone decorate(const std::vector<Vec3>& ca) {
    int n = int(ca.size());
    if (n < 2) throw ConfigError("need at least 2 residues to build a backbone");
    Backbone b;
    b.n_residues = n;
    b.coords.resize(12 * n);
    for (int k = 0; k < n; ++k) {
        Vec3 prev = ca[std::max(0, k - 1)];
        Vec3 next = ca[std::min(n - 1, k + 1)];
        Vec3 t = next - prev;
        if (t.norm() < 1e-9) t = Vec3::UnitZ();
        t.normalize();
        Vec3 curv = (k > 0 && k < n - 1) ? Vec3(ca[k + 1] - 2 * ca[k] + ca[k - 1])
                                         : Vec3::Zero();
        Vec3 nrm = curv - curv.dot(t) * t;
        if (nrm.norm() < 1e-6) {
            Vec3 e = std::abs(t.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
            nrm = e - e.dot(t) * t;
        }
        nrm.normalize();
        Vec3 bb = t.cross(nrm);

        Vec3 d_n = (-0.63 * t + 0.70 * nrm - 0.33 * bb).normalized();
        Vec3 d_c = (0.63 * t + 0.70 * nrm + 0.33 * bb).normalized();
        Vec3 d_o = (0.40 * nrm - 0.92 * bb).normalized();

        Vec3 pos_n = ca[k] + 1.458 * d_n;
        Vec3 pos_c = ca[k] + 1.525 * d_c;
        Vec3 pos_o = pos_c + 1.229 * d_o;

        b.coords.segment<3>(12 * k + 0) = pos_n;
        b.coords.segment<3>(12 * k + 3) = ca[k];
        b.coords.segment<3>(12 * k + 6) = pos_c;
        b.coords.segment<3>(12 * k + 9) = pos_o;
    }
    b.validate();
    return b;
}

} // namespace

Backbone make_helix(int n_residues, int window_offset) {
    if (n_residues < 2) throw ConfigError("helix needs at least 2 residues");
    std::vector<Vec3> ca(n_residues);
    for (int i = 0; i < n_residues; ++i) ca[i] = helix_ca(i + window_offset);
    return decorate(ca);
}

Backbone make_hairpin(int n_residues, int window_offset) {
    if (n_residues < 2) throw ConfigError("hairpin needs at least 2 residues");
    std::vector<Vec3> ca(n_residues);
    for (int i = 0; i < n_residues; ++i) ca[i] = hairpin_ca(i + window_offset);
    return decorate(ca);
}

Backbone make_backbone(const std::string& kind, int n_residues, int window_offset) {
    if (kind == "helix") return make_helix(n_residues, window_offset);
    if (kind == "hairpin") return make_hairpin(n_residues, window_offset);
    throw ConfigError("unknown synthetic backbone kind '" + kind + "'");
}

Backbone reversed_chain(const Backbone& b) {
    b.validate();
    std::vector<Vec3> ca(b.n_residues);
    for (int k = 0; k < b.n_residues; ++k)
        ca[k] = b.atom(Backbone::ca_index(b.n_residues - 1 - k));
    return decorate(ca);
}

Backbone block_rotated(const Backbone& b, int shift) {
    b.validate();
    int n = b.n_residues;
    Backbone out = b;
    for (int k = 0; k < n; ++k) {
        int src = ((k + shift) % n + n) % n;
        out.coords.segment<12>(12 * k) = b.coords.segment<12>(12 * src);
    }
    return out;
}

Backbone residue_reversed(const Backbone& b) {
    b.validate();
    int n = b.n_residues;
    Backbone out = b;
    for (int k = 0; k < n; ++k)
        out.coords.segment<12>(12 * k) = b.coords.segment<12>(12 * (n - 1 - k));
    return out;
}

Backbone perturbed(const Backbone& b, double sigma, std::uint64_t seed) {
    b.validate();
    if (sigma < 0.0) throw ConfigError("perturbation width must be non-negative");
    Rng rng(seed);
    Backbone out = b;
    out.coords += sigma * rng.gaussian_vec(b.coords.size());
    return out;
}

std::vector<int> spread_calpha_selection(int n_residues, int count) {
    if (count < 1 || count > n_residues)
        throw ConfigError("selection count must lie in [1, n_residues]");
    std::vector<int> atoms;
    atoms.reserve(count);
    if (count == 1) {
        atoms.push_back(Backbone::ca_index(n_residues / 2));
        return atoms;
    }
    int prev = -1;
    for (int r = 0; r < count; ++r) {
        int res = int(std::lround(double(r) * double(n_residues - 1) / double(count - 1)));
        if (res <= prev) res = prev + 1;  // keep indices strictly increasing
        prev = res;
        atoms.push_back(Backbone::ca_index(res));
    }
    return atoms;
}

std::vector<std::pair<int, int>> random_calpha_pairs(int n_residues, int count,
                                                     int min_sep, std::uint64_t seed) {
    if (min_sep < 1) throw ConfigError("minimum pair separation must be at least 1");
    long avail = 0;
    for (int i = 0; i + min_sep < n_residues; ++i) avail += n_residues - i - min_sep;
    if (count < 1 || count > avail)
        throw ConfigError("pair count " + std::to_string(count) +
                          " outside the feasible range [1, " + std::to_string(avail) + "]");
    Rng rng(seed);
    std::set<std::pair<int, int>> chosen;
    while (int(chosen.size()) < count) {
        int i = int(rng.uniform() * n_residues);
        int j = int(rng.uniform() * n_residues);
        if (i > j) std::swap(i, j);
        if (i == j || j - i < min_sep) continue;
        chosen.emplace(i, j);
    }
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(chosen.size());
    for (auto [i, j] : chosen)
        pairs.emplace_back(Backbone::ca_index(i), Backbone::ca_index(j));
    return pairs;
}

} // namespace adampnp
