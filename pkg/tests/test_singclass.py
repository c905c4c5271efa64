import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.optimize import fsolve

from hopfbalance.bifexpand import expand_amplitude, expand_frequency
from hopfbalance.errors import CodimensionOverflowError, IndeterminateOrderError
from hopfbalance.hopf import find_critical
from hopfbalance.singclass import (classify_amplitude, classify_coefficients,
                                   classify_frequency, frequency_unfolding, scan_varieties)

from oracles import oracle_signature


@pytest.mark.parametrize("q", [1, 2, 3])
def test_labels_match_root_count_oracle(rng, q):
    for _ in range(100):
        mu = rng.normal(size=q) * 10.0 ** rng.uniform(-2, 1, size=q)
        rep = classify_coefficients(mu, order=q)
        assert rep.signature == oracle_signature(mu), (mu, rep.diagram_label)


@pytest.mark.parametrize("q", [1, 2, 3])
def test_scale_invariance(rng, q):
    for _ in range(50):
        mu = rng.normal(size=q)
        base = classify_coefficients(mu, order=q)
        for c in (1e-3, 0.5, 7.0, 1e4):
            rep = classify_coefficients(c * mu, order=q)
            assert rep.diagram_label == base.diagram_label
            assert rep.criticality == base.criticality
            for name, v in base.varieties.items():
                if isinstance(v, bool):
                    assert rep.varieties[name] == v
                else:
                    assert np.sign(rep.varieties[name]) == np.sign(v)


def test_synthetic_q3_example():
    mu = (-0.01, 0.05, -1.0)
    rep = classify_coefficients(mu)
    assert rep.family == "amplitude_q1"
    rep = classify_coefficients(mu, order=3)
    assert rep.family == "amplitude_q3" and rep.mirrored
    assert rep.varieties["H1"] == pytest.approx(3 * 0.01 - 0.0025)
    assert rep.varieties["D"] == pytest.approx(4 * 0.01 - 0.0025)
    assert rep.varieties["H1_D_branch"]
    assert rep.diagram_label == "q3_region_1"
    assert rep.signature == oracle_signature(mu)
    assert set(rep.unfolding) == {"mu1", "mu2"}


def test_h1_crossing_changes_count_by_two():
    m2, m3 = 0.05, -1.0
    h1 = m2 ** 2 / (3 * m3)
    sides = []
    for m1 in (h1 * 1.05, h1 * 0.95):
        mu = (m1, m2, m3)
        sides.append(max(oracle_signature(mu)))
        assert classify_coefficients(mu, order=3).signature == oracle_signature(mu)
    assert abs(sides[0] - sides[1]) == 2
    assert classify_coefficients((h1, m2, m3), order=3).diagram_label == "q3_H1"


def test_d_crossing_merges_roots():
    m2, m3 = 0.05, -1.0
    d = m2 ** 2 / (4 * m3)
    # on D the cubic touches zero at a positive double root
    zd = -m2 / (2 * m3)
    poly = np.polynomial.Polynomial([0.0, d, m2, m3])
    assert abs(poly(zd)) < 1e-15 and abs(poly.deriv()(zd)) < 1e-15
    labels = [classify_coefficients((m1, m2, m3), order=3).diagram_label
              for m1 in (d * 1.05, d, d * 0.95)]
    assert labels == ["q3_region_2", "q3_D", "q3_region_3"]
    sig_a = oracle_signature((d * 1.05, m2, m3))
    sig_b = oracle_signature((d * 0.95, m2, m3))
    # the fold value of mu passes mu_0, so exactly one interval changes its count
    assert len(sig_a) == len(sig_b)
    assert sum(a != b for a, b in zip(sig_a, sig_b)) == 1


def test_pyragas_kappa_zero_subcritical(pyragas):
    cp = find_critical(pyragas, {"kappa": 0.0}, ("tau", 1.0))
    be = expand_amplitude(pyragas, cp, 1)
    assert be.mu_k[1] == pytest.approx(-2.0, rel=1e-6)
    rep = classify_amplitude(be)
    assert rep.family == "amplitude_q1" and rep.criticality == "subcritical"
    assert rep.diagram_label == "q1_subcritical"


def test_leukemia_bautin_is_q2(leukemia, leuk_bautin):
    be = expand_amplitude(leukemia, leuk_bautin, 2)
    rep = classify_amplitude(be)
    assert rep.family == "amplitude_q2"
    assert rep.leading_coeff == pytest.approx(0.0019537383, abs=5e-5)
    assert rep.leading_coeff > 0
    signs = []
    for dt in (-0.05, 0.05):
        cp = find_critical(leukemia, None, ("tau", leuk_bautin.tau0 + dt))
        rep = classify_amplitude(expand_amplitude(leukemia, cp, 2), order=2)
        signs.append(np.sign(rep.unfolding["mu1"]))
        assert rep.diagram_label == ("q2_supercritical" if dt < 0 else "q2_fold")
    assert signs == [1.0, -1.0]


def test_indeterminate_order():
    with pytest.raises(IndeterminateOrderError):
        classify_coefficients((0.0, 0.0, 0.0))
    with pytest.raises(IndeterminateOrderError):
        classify_coefficients((1.0, 0.0), order=2)


def _slice(dmu, dz):
    return SimpleNamespace(dmu=tuple(dmu), dz=tuple(dz))


def test_p2_synthetic_endpoints():
    # mu - mu_0 = omega - omega_0 and z = Z1 s - s**2 gives eps = 1, eps_0 = -Z1**2/4
    z1 = 2 * np.sqrt(0.1)
    dmu, dz = (1.0, 0.0, 0.0), (z1, -2.0, 0.0)
    eps, e1, e0 = frequency_unfolding(dmu, dz, 2)
    assert eps == pytest.approx(1.0) and e0 == pytest.approx(-0.1)
    rep = classify_frequency(_slice(dmu, dz), order=2)
    assert rep.family == "freq_p2" and rep.diagram_label == "p2_bubble"
    assert rep.signature == (0, 1, 0)
    # Hopf endpoints are the zeros of z; in the shifted variable they sit at +-sqrt(-eps_0)
    ends = np.sort(np.polynomial.Polynomial([0.0, z1, -1.0]).roots()) - z1 / 2
    assert np.allclose(ends, [-np.sqrt(0.1), np.sqrt(0.1)], atol=1e-14)


def test_p2_inverted_sign():
    rep = classify_frequency(_slice((1.0, 0.0, 0.0), (0.3, 2.0, 0.0)), order=2)
    assert rep.leading_coeff < 0 and rep.diagram_label == "p2_inverted_gap"


def test_p3_labels():
    rep = classify_frequency(_slice((1.0, 0.0, 0.0), (0.0, 0.0, -6.0)))
    assert rep.family == "freq_p3" and rep.diagram_label == "p3_B"
    for z1, label in ((-0.03, "p3_plain"), (0.03, "p3_bubble_plus_branch")):
        rep = classify_frequency(_slice((1.0, 0.0, 0.0), (z1, 0.0, -6.0)), order=3)
        assert rep.diagram_label == label
        assert set(rep.unfolding) == {"eps0", "eps1"}
        e1 = rep.unfolding["eps1"]
        assert np.sign(rep.varieties["B"]) == np.sign(4 * e1 ** 3)


def test_frequency_delegates_to_amplitude():
    rep = classify_frequency(_slice((2.0, 0.0, 0.0), (1.0, 0.0, 0.0)))
    assert rep.family == "amplitude_q1" and rep.criticality == "supercritical"
    rep = classify_frequency(_slice((0.0, 1.0, 0.0), (1.0, 0.0, 0.0)))
    assert rep.family == "amplitude_q2"


def test_codimension_overflow():
    with pytest.raises(CodimensionOverflowError):
        classify_frequency(_slice((0.0, 1.0, 0.0), (0.0, 1.0, 0.0)))
    with pytest.raises(CodimensionOverflowError):
        classify_frequency(_slice((1.0, 0.0, 0.0), (0.0, 0.0, 0.0)))


def _pyragas_p2_point(kappa=-0.5, beta=np.pi / 4):
    # the fold of the Hopf curve in tau, where dz/domega vanishes
    def eqs(x):
        w, t = x
        return [w - 1 + kappa * np.sin(beta) - kappa * np.sin(beta - w * t),
                1 + kappa * t * np.cos(beta - w * t)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        w, t = fsolve(eqs, (0.877, 6.62), xtol=1e-14)
    mu = kappa * np.cos(beta) - kappa * np.cos(beta - w * t)
    return w, t, mu


def test_pyragas_p2_locus(pyragas):
    w, t, mu = _pyragas_p2_point()
    assert t == pytest.approx(6.61943309, abs=1e-8)
    cp = find_critical(pyragas, {"kappa": -0.5}, ("mu", mu), guess=(w, t))
    assert abs(cp.tau0 - t) < 1e-9
    fs = expand_frequency(pyragas, cp, q=1)
    rep = classify_frequency(fs)
    assert rep.family == "freq_p2"
    assert rep.diagram_label == "p2_B0"
    # anchored at a Hopf point the unfolding has eps_0 <= 0; here eps < 0
    rep = classify_frequency(fs, order=2)
    assert rep.leading_coeff < 0
    off = find_critical(pyragas, {"kappa": -0.5}, ("mu", mu - 1e-3), guess=(w, t))
    rep = classify_frequency(expand_frequency(pyragas, off, q=1), order=2)
    assert rep.unfolding["eps0"] < 0 and rep.diagram_label == "p2_inverted_gap"


def test_no_sign_change_gives_empty_contours(pyragas):
    grid = {"kappa": np.array([-0.02, -0.01]), "tau": np.array([2.0, 2.2])}
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        scan = scan_varieties(pyragas, grid, q=1, triple=False)
    assert scan.contours == {"H0": []}
    assert not scan.failures
    mu1 = scan.coefficients[..., 0]
    assert np.all(mu1 < 0) or np.all(mu1 > 0)
