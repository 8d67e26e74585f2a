#pragma once

#include "adampnp/types.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace adampnp {

// Protein backbone as a flat coordinate vector. Residues are stored in
// chain order; each residue contributes its four backbone atoms in the
// fixed order N, CA, C, O, each as (x, y, z) in angstroms. The flat
// layout (length 12 * n_residues) is what the prior and forward models
// operate on.
struct Backbone {
    Vec coords;      // 12 * n_residues
    int n_residues = 0;

    static constexpr std::array<const char*, 4> kAtomNames{"N", "CA", "C", "O"};
    static constexpr int kAtomsPerResidue = 4;

    int n_atoms() const { return kAtomsPerResidue * n_residues; }
    Eigen::Index dim() const { return coords.size(); }

    Vec3 atom(int a) const { return coords.segment<3>(3 * a); }
    void set_atom(int a, const Vec3& p) { coords.segment<3>(3 * a) = p; }

    // Index of residue r's CA atom in the atom numbering.
    static int ca_index(int r) { return kAtomsPerResidue * r + 1; }

    std::vector<int> calpha_indices() const {
        std::vector<int> idx(n_residues);
        for (int r = 0; r < n_residues; ++r) idx[r] = ca_index(r);
        return idx;
    }

    // Throws DimensionError on size mismatch, std::invalid_argument on
    // non-finite coordinates.
    void validate() const;
};

Backbone backbone_from_coords(int n_residues, const Vec& coords);

// Rigid transform mapping the mobile frame onto the reference frame:
// x_aligned = rotation * x_mobile + translation. `rmsd` is the RMSD over
// the atoms used for the fit, after applying the transform.
struct Alignment {
    Mat3 rotation;
    Vec3 translation;
    double rmsd;
};

// Reads backbone atoms from PDB text (fixed-column format). Keeps the
// first MODEL and the first chain encountered; for alternate locations
// keeps the highest-occupancy copy. Residues missing any of N/CA/C/O are
// dropped. Throws ParseError on malformed ATOM records or when no
// complete residue survives.
Backbone parse_pdb(std::istream& in);
Backbone parse_pdb(const std::string& text);
Backbone load_pdb_file(const std::string& path);

void write_pdb(const Backbone& b, std::ostream& out);
void write_pdb_file(const Backbone& b, const std::string& path);

// Translates the mean of all atoms to the origin.
Backbone center(const Backbone& b);

// Optimal rigid superposition (least-squares over the given point sets).
// Both arrays are flat xyz, equal length, at least 3 points. Handles the
// reflection case by sign correction so the result is a proper rotation.
Alignment kabsch_align(const Vec& mobile_xyz, const Vec& ref_xyz);

// Superposes `mobile` onto `ref` using the listed atom indices
// (default: CA atoms only). RMSD reported over those atoms.
Alignment kabsch_align(const Backbone& mobile, const Backbone& ref,
                       const std::vector<int>& atoms);
Alignment kabsch_align(const Backbone& mobile, const Backbone& ref);

// CA-RMSD after optimal superposition; structures must have the same
// residue count.
double calpha_rmsd(const Backbone& mobile, const Backbone& ref);

// Applies a rigid transform to every atom.
Backbone transformed(const Backbone& b, const Mat3& rotation, const Vec3& translation);

} // namespace adampnp
