#pragma once

#include "adampnp/geometry.hpp"
#include "adampnp/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace adampnp {

// Deterministic synthetic backbones used as ground truths and as prior
// components. `helix` is one ideal alpha helix along z. `hairpin` is two
// antiparallel helical arms joined by a turn; it has no sliding or
// reversal self-similarity, which the decoy construction relies on.
// `window_offset` slides the generated stretch along the underlying
// (infinite) curve by whole residues, producing registration-shifted
// decoys that occupy nearly the same density envelope.
Backbone make_helix(int n_residues, int window_offset = 0);
Backbone make_hairpin(int n_residues, int window_offset = 0);

// Dispatch by name: "helix" or "hairpin".
Backbone make_backbone(const std::string& kind, int n_residues, int window_offset = 0);

// Same chain traversed in reverse residue order (atoms rebuilt from the
// reversed CA trace).
Backbone reversed_chain(const Backbone& b);

// Chain-threading decoys: identical atom positions, different residue
// order. They are indistinguishable to a density map but far from the
// original in CA-RMSD, which makes them useful prior components when
// probing what each modality can and cannot resolve.
//   block_rotated:    residue k takes the coordinates of residue
//                     (k + shift) mod n.
//   residue_reversed: residue k takes the coordinates of residue n-1-k.
Backbone block_rotated(const Backbone& b, int shift);
Backbone residue_reversed(const Backbone& b);

// Adds iid Gaussian displacement of the given width to every atom.
Backbone perturbed(const Backbone& b, double sigma, std::uint64_t seed);

// Evenly spread selection of `count` CA atom indices (for P-type
// measurements). count must lie in [1, n_residues].
std::vector<int> spread_calpha_selection(int n_residues, int count);

// `count` distinct random CA-CA pairs with residue separation >= min_sep,
// deterministic in `seed`.
std::vector<std::pair<int, int>> random_calpha_pairs(int n_residues, int count,
                                                     int min_sep, std::uint64_t seed);

} // namespace adampnp
