import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyboltz.cross_section import CrossSectionModel, GasSpec
from polyboltz.errors import DomainError
from polyboltz.frequency import coercivity_fit, eval_nu, maxwell_molecule_nu, monotony_check, profile
from polyboltz.quadrature import QuadratureSpec

MODEL = CrossSectionModel()
Q = QuadratureSpec(samples=100_000, seed=77)


@pytest.mark.parametrize("alpha, expected", [(0.0, 8 * math.pi / 5), (0.5, 1.12795)])
def test_maxwell_nu_closed_form(alpha, expected):
    assert maxwell_molecule_nu(alpha) == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("v, I", [((0, 0, 0), 0.0), ((1.0, 2.0, -0.5), 3.0), ((4.0, 0, 0), 0.2)])
def test_maxwell_nu_monte_carlo(v, I):
    res = eval_nu(v, I, GasSpec(0.0, 0.0), MODEL, Q)
    target = 8 * math.pi / 5
    assert res.within(target)
    assert abs(res.mean - target) < 0.01 * target


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_nu_rotation_invariant(d):
    d = np.array(d)
    if np.linalg.norm(d) < 1e-2:
        return
    d = 1.5 * d / np.linalg.norm(d)
    gas = GasSpec(0.5, 1.0)
    a = eval_nu(d, 0.8, gas, MODEL, Q, key=(1,))
    b = eval_nu([1.5, 0, 0], 0.8, gas, MODEL, Q, key=(2,))
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)


def test_nu_positive_at_origin():
    res = eval_nu([0, 0, 0], 0.0, GasSpec(0.5, 1.0), MODEL, Q)
    assert res.mean - 3 * res.stderr > 0


def test_nu_rejects_negative_energy():
    with pytest.raises(DomainError):
        eval_nu([0, 0, 0], -1.0, GasSpec(0.5, 0.0), MODEL, Q)


GRID_S = np.linspace(0, 6, 10)
GRID_E = np.linspace(0, 10, 10)


def test_coercivity_gamma_zero_is_third_of_nu():
    fit = coercivity_fit(GasSpec(0.5, 0.0), MODEL, GRID_S, GRID_E, Q)
    nu0 = maxwell_molecule_nu(0.5)
    assert fit.passed
    assert abs(fit.c_hat - nu0 / 3) < 0.01 * nu0


def test_coercivity_gamma_one_passes():
    fit = coercivity_fit(GasSpec(0.5, 1.0), MODEL, GRID_S, GRID_E, Q)
    assert fit.passed and fit.c_hat > 0


def test_coercivity_grid_too_small():
    with pytest.raises(DomainError):
        coercivity_fit(GasSpec(0.5, 1.0), MODEL, np.linspace(0, 6, 5), GRID_E, Q)


def test_profile_common_random_numbers():
    prof = profile([0.0, 1.0, 2.0], [0.0, 1.0], GasSpec(0.5, 1.0), MODEL, Q)
    assert np.all(prof.diff_stderr_speed < prof.stderr[1:])


@pytest.mark.parametrize("gamma, expected", [(0.0, "CONSTANT"), (1.0, "MONOTONE-INCREASING")])
def test_monotony_classification(gamma, expected):
    rep = monotony_check(GasSpec(0.5, gamma), MODEL, [0.0, 1.0, 2.0, 4.0], [0.0, 1.0, 3.0], Q)
    assert rep.overall == expected


def test_monotony_stable_under_doubling():
    speeds, energies = [0.0, 1.0, 2.0, 4.0], [0.0, 1.0, 3.0]
    gas = GasSpec(0.5, 1.0)
    a = monotony_check(gas, MODEL, speeds, energies, Q)
    b = monotony_check(gas, MODEL, speeds, energies, Q.with_(samples=200_000, seed=78))
    assert a.overall == b.overall
