import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from cddb.errors import ConfigError, DomainError, UnsupportedError
from cddb.schedule import (
    I2SB, IRSDE, BetaProfile, InDI, indi_equivalent, indi_time_map, load_theta_bar, timestep_grid,
    total_variance_residual,
)

times = st.floats(0.0, 1.0)
open_times = st.floats(1e-6, 1.0)


def _pair(a, b):
    s, t = sorted((a, b))
    assume(1e-6 <= s < t)
    return s, t


@given(times)
def test_gamma_sum_is_constant(t):
    prof = BetaProfile()
    assert abs(prof.gamma_sq(t) + prof.bar_gamma_sq(t) - prof.total) < 1e-15


def test_beta_profile_values():
    prof = BetaProfile(1e-4, 2e-2)
    assert prof.beta(0.0) == pytest.approx(1e-4)
    assert prof.beta(0.5 - 1e-12) == pytest.approx(2e-2, rel=1e-9)
    # right branch starts at 2 beta_max - beta_d, a jump of beta_min
    assert prof.beta(0.5) == pytest.approx(2e-2 + 1e-4)
    assert prof.beta(1.0) == pytest.approx(2e-4)
    assert prof.gamma_sq(0.5) == pytest.approx(5.025e-3, rel=1e-14)
    assert prof.total == pytest.approx(1e-4 + 2e-2 / 2, rel=1e-14)


@given(times, times)
def test_integral_is_additive(a, b):
    prof = BetaProfile()
    s, t = sorted((a, b))
    m = 0.5 * (s + t)
    assert prof.integral(s, t) == pytest.approx(prof.integral(s, m) + prof.integral(m, t), rel=1e-12, abs=1e-18)


def test_beta_profile_rejects_bad_values():
    with pytest.raises(ConfigError):
        BetaProfile(0.0, 1e-2)
    with pytest.raises(ConfigError):
        BetaProfile(2e-2, 1e-4)


def test_i2sb_endpoints():
    sched = I2SB()
    assert sched.coefficients(0.0) == (0.0, 0.0)
    a, s = sched.coefficients(1.0)
    assert a == 1.0 and s == 0.0


@given(times)
def test_i2sb_alpha_in_unit_interval(t):
    a, s = I2SB().coefficients(t)
    assert 0.0 <= a <= 1.0 and s >= 0.0


@given(times, times)
def test_i2sb_total_variance(a, b):
    s, t = _pair(a, b)
    assert abs(total_variance_residual(I2SB(), s, t)) < 1e-12


@given(times, times)
def test_indi_map_reproduces_i2sb_transition(a, b):
    s, t = _pair(a, b)
    prof = BetaProfile()
    tau_s, e2_s = indi_time_map(prof, s)
    tau_t, e2_t = indi_time_map(prof, t)
    a2, v = I2SB(prof).transition(s, t)
    assert tau_s / tau_t == pytest.approx(a2, rel=1e-10)
    assert tau_s**2 * (e2_s - e2_t) == pytest.approx(v, rel=1e-10, abs=1e-300)


@given(open_times)
def test_indi_equivalent_marginals(t):
    prof = BetaProfile()
    tau, _ = indi_time_map(prof, t)
    assume(0.0 < tau < 1.0)
    ref = I2SB(prof).coefficients(t)
    got = indi_equivalent(prof).coefficients(tau)
    assert got.alpha_t == pytest.approx(ref.alpha_t, rel=1e-12)
    assert got.sigma_t == pytest.approx(ref.sigma_t, rel=1e-9)


def test_indi_time_map_undefined_at_zero():
    with pytest.raises(DomainError):
        indi_time_map(BetaProfile(), 0.0)


@given(times, times, st.floats(0.0, 1.0))
def test_indi_constant_eps_transition(a, b, eps):
    s, t = _pair(a, b)
    a2, v = InDI(eps).transition(s, t)
    assert a2 == s / t
    assert v == 0.0
    assert abs(total_variance_residual(InDI(eps), s, t)) < 1e-12


def test_transition_domain_errors():
    with pytest.raises(DomainError):
        I2SB().transition(0.5, 0.5)
    with pytest.raises(DomainError):
        I2SB().transition(0.6, 0.5)
    with pytest.raises(DomainError):
        I2SB().coefficients(1.5)


def _irsde():
    t = np.linspace(0, 1, 11)
    return IRSDE(tuple(t), tuple(3.0 * t**2))


def test_irsde_forward_only():
    sched = _irsde()
    a, s = sched.coefficients(1.0)
    assert a == pytest.approx(1 - math.exp(-3.0))
    assert s == pytest.approx(10 / 255 * math.sqrt(1 - math.exp(-6.0)))
    with pytest.raises(UnsupportedError):
        sched.transition(0.2, 0.5)


def test_irsde_table_validation(tmp_path):
    with pytest.raises(ConfigError):
        IRSDE((0.0, 0.5), (0.0, 1.0))
    with pytest.raises(ConfigError):
        IRSDE((0.0, 1.0), (0.0, -1.0))
    path = tmp_path / "theta.txt"
    path.write_text("# t theta\n0 0\n0.5 1\n1 2\n")
    t, th = load_theta_bar(path)
    assert IRSDE(tuple(t), tuple(th)).theta(0.25) == pytest.approx(0.5)


@given(st.integers(1, 500))
def test_grid_shapes(nfe):
    for kind in ("uniform", "quadratic"):
        g = timestep_grid(nfe, kind)
        assert g.shape == (nfe + 1,)
        assert g[0] == 0.0 and g[-1] == 1.0
        assert np.all(np.diff(g) > 0)


def test_quadratic_grid_values():
    np.testing.assert_array_equal(timestep_grid(4, "quadratic"), np.array([0, 1, 4, 9, 16]) / 16)
    with pytest.raises(DomainError):
        timestep_grid(0)


@pytest.mark.parametrize("got, want", [
    (lambda: I2SB().coefficients(0.5), (0.49752, 0.050249)),
    (lambda: I2SB().transition(0.25, 0.5), (0.25249, 9.4841e-4)),
    (lambda: indi_time_map(BetaProfile(), 0.5), (0.49752, 1.0200e-2)),
    (lambda: InDI(0.01).coefficients(0.5), (0.5, 0.005)),
    (lambda: InDI(0.01).transition(0.25, 0.5), (0.5, 0.0)),
    (lambda: (BetaProfile().gamma_sq(0.25), BetaProfile().gamma_sq(0.5)), (1.26875e-3, 5.025e-3)),
], ids=["i2sb_coefficients", "i2sb_transition", "indi_time_map", "indi_coefficients", "indi_transition", "gamma_sq"])
def test_reference_values(got, want):
    np.testing.assert_allclose(got(), want, rtol=5e-5)
