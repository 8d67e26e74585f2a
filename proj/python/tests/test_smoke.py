"""End-to-end smoke tests of the python bindings. Numerical depth lives in
the C++ test suites; these check that the boundary (numpy arrays, JSON
text, error mapping) behaves."""

import json
import math

import numpy as np
import pytest

import adampnp


def test_make_backbone_shape_and_order():
    coords = adampnp.make_backbone("hairpin", 12)
    assert coords.shape == (48, 3)
    assert np.isfinite(coords).all()
    # CA of consecutive residues sit ~3.8 A apart along the chain.
    ca = coords[1::4]
    steps = np.linalg.norm(np.diff(ca, axis=0), axis=1)
    assert steps.max() < 9.0 and steps.min() > 2.0


def test_self_alignment_is_exactly_zero():
    coords = adampnp.make_backbone("helix", 10)
    rot, trans, rmsd = adampnp.kabsch_align(coords, coords)
    assert rmsd == 0.0
    assert np.allclose(rot, np.eye(3))
    assert np.allclose(trans, 0.0)
    assert adampnp.calpha_rmsd(coords, coords) == 0.0


def test_alignment_recovers_rigid_motion():
    rng = np.random.default_rng(3)
    ref = adampnp.make_backbone("hairpin", 8)
    theta = 0.7
    rot = np.array(
        [
            [math.cos(theta), -math.sin(theta), 0.0],
            [math.sin(theta), math.cos(theta), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    mobile = ref @ rot.T + np.array([1.0, -2.0, 3.0])
    assert adampnp.calpha_rmsd(mobile, ref) < 1e-9
    del rng


def test_schedule_identities():
    sched = adampnp.NoiseSchedule()
    assert sched.n_steps == 200
    assert sched.alpha_bar(0) == pytest.approx(1.0)
    for t in (1, 50, 200):
        assert sched.alpha_bar(t) + sched.tau(t) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert sched.alpha_bar(200) == pytest.approx(0.0067, abs=5e-4)


def test_mixture_denoise_pulls_toward_nearest_mean():
    sched = adampnp.NoiseSchedule()
    means = [np.array([4.0, 0.0]), np.array([-4.0, 0.0])]
    t = 10
    z_t = math.sqrt(sched.alpha_bar(t)) * means[0]
    zhat = adampnp.mixture_denoise(z_t, t, means, [0.5, 0.5], 0.3, sched)
    assert np.linalg.norm(zhat - means[0]) < 0.5


def test_validate_config_normalizes_and_rejects():
    text = adampnp.validate_config('{"structure": {"kind": "helix", "n_residues": 24}}')
    cfg = json.loads(text)
    assert cfg["structure"]["n_residues"] == 24
    assert cfg["sampler"]["eta"] > 0
    with pytest.raises(ValueError):
        adampnp.validate_config('{"structure": {"kind": "moebius"}}')


@pytest.fixture(scope="module")
def tiny_config():
    return json.dumps(
        {
            "seed": 5,
            "threads": 1,
            "structure": {"kind": "hairpin", "n_residues": 10},
            "prior": {"perturbed_copies": 1, "threading_shifts": [3, 5], "reversed_shift": 3},
            "modalities": {"P": {"count": 10}, "D": {"count": 20}},
            "experiment": {
                "samples_per_run": 2,
                "seeds": [1],
                "reconstruct_modalities": ["P", "D"],
            },
        }
    )


def test_reconstruct_roundtrip(tiny_config):
    run = adampnp.reconstruct(tiny_config)
    assert not run["failed"]
    assert run["coords"].shape == (40, 3)
    assert run["combo"] == "P+D"
    assert 0.0 <= run["rmsd"] < 5.0
    assert set(run["sigma_hat"]) == {"P", "D"}

    # Same config, same seed: identical result.
    again = adampnp.reconstruct(tiny_config)
    assert again["rmsd"] == run["rmsd"]
    assert np.array_equal(again["coords"], run["coords"])

    # Feeding the emitted measurements back reproduces the run.
    replay = adampnp.reconstruct(tiny_config, measurements_json=run["measurements"])
    assert replay["rmsd"] == pytest.approx(run["rmsd"], abs=1e-9)


def test_sample_prior_returns_backbone(tiny_config):
    out = adampnp.sample_prior(tiny_config, seed=9)
    assert out["coords"].shape == (40, 3)
    assert out["rmsd_to_truth"] >= 0.0
