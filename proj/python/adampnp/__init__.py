"""Reconstruction of protein backbones by diffusion sampling guided by
heterogeneous noisy measurements.

Coordinates are (n_atoms, 3) numpy arrays in N, CA, C, O order per residue.
Configs and measurement sets use the same JSON schemas as the command-line
tool (see the project README).
"""

from adampnp._core import (
    NoiseSchedule,
    calpha_rmsd,
    kabsch_align,
    load_pdb,
    make_backbone,
    mixture_denoise,
    reconstruct,
    sample_prior,
    save_pdb,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "NoiseSchedule",
    "calpha_rmsd",
    "kabsch_align",
    "load_pdb",
    "make_backbone",
    "mixture_denoise",
    "reconstruct",
    "sample_prior",
    "save_pdb",
    "validate_config",
]
