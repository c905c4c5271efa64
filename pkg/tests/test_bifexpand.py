import numpy as np
import pytest

from hopfbalance.bifexpand import (BifurcationProblem, expand_amplitude, expand_frequency,
                                   find_bautin, first_order)
from hopfbalance.errors import DegeneracyError
from hopfbalance.hopf import find_critical
from hopfbalance.models_builtin import pyragas_reference

PYR = {"beta": np.pi / 4, "gamma": -10.0}


@pytest.fixture(scope="module")
def pyr_cp(pyragas):
    return find_critical(pyragas, {"kappa": -0.05}, ("tau", 2.0))


def closed(name, cp, kappa):
    return pyragas_reference(name, {"kappa": kappa, "tau": cp.tau0, "omega0": cp.omega0, **PYR})


def test_kappa_zero_first_order(pyragas):
    cp = find_critical(pyragas, {"kappa": 0.0}, ("tau", 1.0))
    mu1, om1 = first_order(pyragas, cp)
    assert np.isclose(mu1, -2, rtol=1e-10) and np.isclose(om1, -20, rtol=1e-10)
    be = expand_amplitude(pyragas, cp, 1)
    assert np.isclose(be.mu_k[1], -2, rtol=1e-9) and np.isclose(be.omega_k[1], -20, rtol=1e-9)


def test_pyragas_coefficients(pyragas, pyr_cp):
    be = expand_amplitude(pyragas, pyr_cp, 3)
    for k in (1, 2, 3):
        for name, val in (("mu", be.mu_k[k]), ("omega", be.omega_k[k])):
            ref = closed(f"{name}{k}", pyr_cp, -0.05)
            assert abs(val - ref) <= 1e-6 * abs(ref)
    d = be.fit_diagnostics
    assert d["residual_mu"] < 1e-8 and d["residual_omega"] < 1e-8


def test_leukemia_bautin_delta2(leukemia, leuk_bautin):
    be = expand_amplitude(leukemia, leuk_bautin, 2)
    assert abs(be.mu_k[1]) < 1e-10
    assert abs(be.mu_k[2] - 0.0019537383) < 5e-10


@pytest.mark.parametrize("q", [1, 2, 3])
def test_fit_order_stability(pyragas, pyr_cp, q):
    a = expand_amplitude(pyragas, pyr_cp, q)
    b = expand_amplitude(pyragas, pyr_cp, q, fit_degree=2 * q + 2)
    for k in range(1, q + 1):
        assert abs(a.mu_k[k] - b.mu_k[k]) < 1e-7 * abs(a.mu_k[k])


def test_series_matches_direct_solve(pyragas, pyr_cp):
    be = expand_amplitude(pyragas, pyr_cp, 3)
    prob = BifurcationProblem(pyragas, 3, pyr_cp.tau0, pyr_cp.rho)
    # truncating the series at z**3 leaves an O(z**4) residual
    for th, bound in ((0.003, 1e-15), (0.01, 1e-11), (0.02, 1e-9)):
        res = prob.residual(be.omega(th), be.mu(th), th * th)
        assert np.max(np.abs(res)) < bound


def test_frequency_slice_closed_form(pyragas, pyr_cp):
    fs = expand_frequency(pyragas, pyr_cp, half_width=1e-3, q=1)
    pt = {"kappa": -0.05, "tau": pyr_cp.tau0, **PYR, "omega": fs.omega_grid}
    assert np.allclose(fs.z_values, pyragas_reference("z_of_omega", pt), atol=1e-12)
    assert np.allclose(fs.mu_values, pyragas_reference("mu_of_omega", pt), atol=1e-12)
    assert fs.negative_z.any() and not fs.negative_z.all()


def test_frequency_gamma_flip(pyragas):
    out = []
    for g in (-10.0, 10.0):
        rho = {"kappa": -0.05, "gamma": g}
        cp = find_critical(pyragas, rho, ("tau", 2.0))
        out.append(expand_frequency(pyragas, cp, q=1).z_values)
    assert np.allclose(out[0], -out[1], atol=1e-12)


def test_parametrizations_agree(leukemia):
    cp = find_critical(leukemia, None, ("tau", 4.7))
    be = expand_amplitude(leukemia, cp, 2)
    fs = expand_frequency(leukemia, cp, half_width=2e-4, q=2)
    for w, z, mu in zip(fs.omega_grid, fs.z_values, fs.mu_values):
        if z <= 0:
            continue
        th = np.sqrt(z)
        assert abs(be.mu(th) - mu) <= 1e-8 + th ** 6
        assert abs(be.omega(th) - w) <= 1e-8 + th ** 6


def test_degenerate_point_rejected(pyragas, pyr_cp):
    with pytest.raises(DegeneracyError):
        expand_frequency(pyragas, pyr_cp, cond_tol=1e6)


def test_find_bautin_leukemia(leukemia):
    cp = find_bautin(leukemia, None, (4.8, 5.2), ngrid=5)
    assert abs(cp.tau0 - 4.9740704569) < 1e-8
    assert abs(cp.omega0 - 0.2624792103) < 1e-8
