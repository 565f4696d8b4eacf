import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cddb.errors import ConfigError
from cddb.eval import (
    CSV_HEADER, Problem, SyntheticDataset, energy_distance, gd_ablation, mse, noise_robustness, pareto_sweep, psnr,
    run_trial, theorem_suite,
)
from cddb.eval.data import field_covariance, smooth_field
from cddb.eval.harness import measurement_hash
from cddb.linop import Mask, UniformQuantizer, gaussian_blur
from cddb.schedule import I2SB, IRSDE, TransitionCoefficients

samples = arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(1, 3)), elements=st.floats(-5, 5))


@given(samples, samples)
def test_energy_distance_symmetric_nonnegative(a, b):
    if a.shape[1] != b.shape[1]:
        b = np.resize(b, (b.shape[0], a.shape[1]))
    ab = energy_distance(a, b)
    assert ab == energy_distance(b, a)
    assert ab >= 0.0


@given(samples)
def test_energy_distance_zero_on_same_sample(a):
    assert energy_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_energy_distance_detects_shift():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((200, 2))
    assert energy_distance(a, a + 3.0) > 10 * energy_distance(a, rng.standard_normal((200, 2)))


def test_energy_distance_matches_definition():
    a = np.array([[0.0], [1.0]])
    b = np.array([[2.0], [4.0]])
    # 2 E|X-Y| - E|X-X'| - E|Y-Y'| with V-statistics
    ref = 2 * np.mean([2, 4, 1, 3]) - np.mean([0, 1, 1, 0]) - np.mean([0, 2, 2, 0])
    assert energy_distance(a, b) == pytest.approx(ref)


def test_psnr_and_mse():
    x = np.zeros((4, 4))
    assert mse(x + 0.1, x) == pytest.approx(0.01)
    assert psnr(x + 0.1, x) == pytest.approx(20.0)
    assert psnr(x, x) == math.inf


def test_smooth_field_covariance():
    cov = field_covariance(8, 1.5)
    np.testing.assert_allclose(np.diag(cov), 1.0, rtol=1e-12)
    rng = np.random.default_rng(0)
    fields = np.stack([smooth_field(rng, 8, 1.5).ravel() for _ in range(4000)])
    emp = fields.T @ fields / len(fields)
    assert np.max(np.abs(emp - cov)) < 0.12


def test_dataset_deterministic():
    ds = SyntheticDataset(size=5, image_size=8)
    np.testing.assert_array_equal(ds.train_images(), ds.train_images())
    assert ds.train_images().shape == (5, 8, 8)
    g = SyntheticDataset(kind="gaussian_field", image_size=8, amplitude=0.1)
    assert g.sample(np.random.default_rng(0)).shape == (8, 8)
    with pytest.raises(ConfigError):
        SyntheticDataset(kind="faces")


def _problem(op=None, **kw):
    ds = SyntheticDataset(size=16, image_size=8, amplitude=0.05)
    return Problem(ds, op if op is not None else gaussian_blur((8, 8), 5, 1.5), **kw)


def test_measurement_paired_across_methods():
    res = pareto_sweep(_problem(), [3], ["ddb", "cddb", "cddb_deep"], range(4))
    for seed in range(4):
        hashes = {r.y_hash for r in res.rows if r.seed == seed}
        assert len(hashes) == 1


def test_sweep_rows_and_csv(tmp_path):
    res = pareto_sweep(_problem(), [2, 4], ["ddb", "cddb"], range(3))
    assert len(res.rows) == 12
    path = tmp_path / "r.csv"
    res.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert {(r[0], r[1], r[2]) for r in rows[1:]} == {(m, str(n), str(s)) for m in ("ddb", "cddb")
                                                     for n in (2, 4) for s in range(3)}
    entry = res.lookup("cddb", 4)
    assert entry["n"] == 3 and np.isfinite(entry["energy_distance"])
    assert "psnr" in res.format_table()


def test_sweep_reproducible_and_thread_independent():
    p = _problem()
    a = pareto_sweep(p, [3], ["cddb"], range(4), workers=1)
    b = pareto_sweep(p, [3], ["cddb"], range(4), workers=3)
    for ra, rb in zip(a.rows, b.rows):
        np.testing.assert_array_equal(ra.x_hat, rb.x_hat)
        assert ra.energy_distance == rb.energy_distance


def test_noise_changes_only_measurement():
    p = _problem()
    x_a, y_a = p.measure(5, 0.0)
    x_b, y_b = p.measure(5, 0.1)
    np.testing.assert_array_equal(x_a, x_b)
    assert measurement_hash(y_a) != measurement_hash(y_b)
    res = noise_robustness(p, [0.0, 0.1], ["ddb"], range(2), nfe=2)
    assert sorted({r.noise_std for r in res.rows}) == [0.0, 0.1]
    assert res.per_seed("ddb", 2, "residual", 0.1).shape == (2,)


def test_gd_ablation_shapes():
    res = gd_ablation(_problem(), [0, 1, 3], range(3), nfe=4)
    assert res.psnr.shape == (3, 3) and res.index == 2
    assert np.all(np.diff(res.residual, axis=1) <= 1e-12)
    with pytest.raises(ConfigError):
        gd_ablation(_problem(UniformQuantizer(0.1, (8, 8))), [1], range(1))


def test_trial_on_mask_and_quantizer():
    rng = np.random.default_rng(0)
    r = run_trial(_problem(Mask(rng.random((8, 8)) < 0.5)), "cddb", 3, 0)
    assert r.residual == pytest.approx(0.0, abs=1e-12)
    q = run_trial(_problem(UniformQuantizer(0.1, (8, 8)), c=0.5), "cddb_deep", 3, 0)
    assert np.isfinite(q.psnr) and not q.error


def test_theorem_suite_passes_on_defaults():
    report = theorem_suite(n_pairs=200, probes=20)
    assert report.passed
    assert report.get("i2sb.indi_equivalence").max_residual < 1e-10
    assert "ALL PASSED" in report.format()


class _Corrupted(I2SB):
    def transition(self, s, t):
        a2, v = super().transition(s, t)
        return TransitionCoefficients(a2, 1.01 * v)


def test_theorem_suite_catches_corrupted_variance():
    report = theorem_suite([_Corrupted()], n_pairs=100, operators=False, oracles=False)
    assert not report.passed
    assert report.get("i2sb.total_variance").status == "fail"


def test_theorem_suite_skips_irsde_transition():
    t = np.linspace(0, 1, 5)
    report = theorem_suite([IRSDE(tuple(t), tuple(t))], n_pairs=10, operators=False, oracles=False)
    assert report.get("irsde.total_variance").status == "skipped"
    assert report.get("irsde.alpha_monotone").status == "pass"
    assert report.passed
