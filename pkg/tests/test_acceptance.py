"""Acceptance suite: one test per criterion, each printing a PASS or FAIL line."""

import time
import warnings

import numpy as np
import pytest

import hopfbalance.hbalance as hb
from hopfbalance.bifexpand import expand_amplitude, find_bautin
from hopfbalance.cli import main
from hopfbalance.ddesim import SimConfig, amplitude_branch, predict_cycle
from hopfbalance.hbalance import extract_xi, fourier_c, harmonic_residual, solve_harmonics
from hopfbalance.hopf import find_critical
from hopfbalance.model import load_model
from hopfbalance.models_builtin import pyragas_reference
from hopfbalance.singclass import classify_coefficients, scan_varieties

from oracles import oracle_signature, quadrature_c, rotated_select

PYR = {"beta": np.pi / 4, "gamma": -10.0}
PYR_GRID = [(-0.08, 1.5), (-0.05, 2.0), (-0.02, 2.5), (0.03, 1.0), (0.06, 1.8)]


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def test_criterion_1_leukemia_bautin(capsys):
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = load_model("leukemia")
    cp = find_bautin(r, None, (4.8, 5.2), ngrid=5)
    be = expand_amplitude(r, cp, 2)
    elapsed = time.perf_counter() - start
    errs = (abs(cp.omega0 - 0.2624792103), abs(cp.mu0 - 0.1100351576),
            abs(cp.tau0 - 4.9740704569))
    d2 = abs(be.mu_k[2] - 0.0019537383)
    ok = max(errs) <= 1e-6 and d2 <= 5e-5 and elapsed <= 30
    verdict(capsys, 1, ok, f"(omega0, delta0, tau0) errors {max(errs):.2e}, "
            f"delta2 = {be.mu_k[2]:.10f} (error {d2:.1e}), {elapsed:.1f} s")


def test_criterion_2_leukemia_second_case(capsys, leukemia):
    cp = find_bautin(leukemia, {"k": 1.01}, (5.2, 5.4), guess=(0.04, 0.0023), ngrid=5)
    be = expand_amplitude(leukemia, cp, 2)
    errs = (abs(cp.omega0 - 0.0396791), abs(cp.mu0 - 0.0023073665),
            abs(cp.tau0 - 5.301432998))
    d2 = abs(be.mu_k[2] - 0.0000417833)
    ok = max(errs) <= 1e-6 and d2 <= 5e-6
    verdict(capsys, 2, ok, f"(omega0, delta0, tau0) = ({cp.omega0:.9f}, {cp.mu0:.10f}, "
            f"{cp.tau0:.9f}), max error {max(errs):.2e}; delta2 = {be.mu_k[2]:.4e} "
            f"(error {d2:.1e})")


def test_criterion_3_pyragas_closed_forms(capsys, pyragas):
    rng = np.random.default_rng(2024)
    xi_err, xi_rest = 0.0, 0.0
    for _ in range(10):
        k = rng.uniform(-0.3, 0.3)
        pt = {"omega": rng.uniform(0.8, 1.3), "mu": rng.uniform(-0.1, 0.1),
              "tau": rng.uniform(0.5, 3.0), "rho": {"kappa": k}}
        xi = extract_xi(pyragas, solve_harmonics(pyragas, pt, 3)).xi
        ref = pyragas_reference("xi1", {**pt, "kappa": k, **PYR})
        xi_err = max(xi_err, abs(xi[0] - ref) / abs(ref))
        xi_rest = max(xi_rest, max(abs(x) for x in xi[1:]))
    coef_err = 0.0
    for kappa, tau in PYR_GRID:
        cp = find_critical(pyragas, {"kappa": kappa}, ("tau", tau))
        be = expand_amplitude(pyragas, cp, 3)
        pt = {"kappa": kappa, "tau": cp.tau0, "omega0": cp.omega0, **PYR}
        for k in (1, 2, 3):
            for name, val in (("mu", be.mu_k[k]), ("omega", be.omega_k[k])):
                ref = pyragas_reference(f"{name}{k}", pt)
                coef_err = max(coef_err, abs(val - ref) / abs(ref))
    ok = xi_err <= 1e-10 and xi_rest <= 1e-10 and coef_err <= 1e-6
    verdict(capsys, 3, ok, f"xi1 rel error {xi_err:.1e}, |xi2|,|xi3| <= {xi_rest:.1e}, "
            f"mu_k/omega_k rel error {coef_err:.1e}")


@pytest.mark.slow
def test_criterion_4_triple_point(capsys, pyragas):
    grid = {"kappa": np.linspace(-0.049, -0.046, 3), "tau": np.linspace(2.07, 2.11, 3)}
    scan = scan_varieties(pyragas, grid, q=3, guess=(1.08, -0.03), xtol=1e-10)
    if not scan.triple_points:
        verdict(capsys, 4, False, "no triple point found in the grid")
    tp = scan.triple_points[0]
    ek, et = abs(tp["kappa"] + 0.0475468061), abs(tp["tau"] - 2.0927529542)
    ok = max(ek, et) <= 1e-5 and tp["mu3"] < 0
    verdict(capsys, 4, ok, f"triple point (kappa, tau) = ({tp['kappa']:.10f}, "
            f"{tp['tau']:.10f}), mu3 = {tp['mu3']:.2f}; distance to the published point "
            f"({ek:.1e}, {et:.1e}); see the decision ledger")


def test_criterion_5_residuals(capsys, pyragas, leukemia, leuk_bautin):
    cpp = find_critical(pyragas, {"kappa": -0.05}, ("tau", 2.0))
    worst = 0.0
    for r, cp in ((pyragas, cpp), (leukemia, leuk_bautin)):
        for k in range(5):
            d = 1e-3 * (k - 2)
            pt = {"omega": cp.omega0 * (1 + d), "mu": cp.mu0 + 0.1 * d, "tau": cp.tau0,
                  "rho": cp.rho}
            res = harmonic_residual(solve_harmonics(r, pt, 2))
            worst = max(worst, max(np.abs(v).max() for v in res.values()))
    verdict(capsys, 5, worst <= 1e-9, f"max residual coefficient {worst:.1e} over 10 points")


def test_criterion_6_fourier_oracle(capsys, pyragas, leukemia, leuk_bautin):
    cpp = find_critical(pyragas, {"kappa": -0.05}, ("tau", 2.0))
    q = 2
    worst = -np.inf
    for r, cp in ((pyragas, cpp), (leukemia, leuk_bautin)):
        hs = solve_harmonics(r, cp, q)
        for theta in (0.01, 0.05):
            bound = 1e-8 + 10 * theta ** (2 * q + 1)
            for j in range(2 * q + 1):
                diff = np.max(np.abs(fourier_c(hs.tensors, hs, j)(theta)
                                     - quadrature_c(r, hs, theta, j)))
                worst = max(worst, diff / bound)
    verdict(capsys, 6, worst <= 1, f"largest error is {worst:.2e} of the allowed bound")


@pytest.mark.slow
def test_criterion_7_simulation(capsys, leukemia):
    tau = 4.7
    cp = find_critical(leukemia, None, ("tau", tau))
    be = expand_amplitude(leukemia, cp, 2)
    grid = cp.mu0 + np.array([3e-4, 4e-4, 5e-4, 6e-4])
    cfg = SimConfig(dt=0.1, t_transient=8000, t_measure=500, perturbation=0.1)
    sims = amplitude_branch(leukemia, grid, tau, None, cfg)
    rows = []
    for mu, m in zip(grid, sims):
        if not m.converged:
            continue
        pred = predict_cycle(leukemia, be, mu)
        rows.append((mu - cp.mu0, abs(m.amplitude[0] - pred["amplitude"][0]) / m.amplitude[0],
                     abs(m.frequency - pred["omega"]) / pred["omega"]))
    rows = rows[:3]
    ok = (len(rows) == 3 and max(r[1] for r in rows) <= 0.05
          and max(r[2] for r in rows) <= 0.02)
    detail = "; ".join(f"offset {d:.0e}: amp {a:.2%}, freq {f:.2%}" for d, a, f in rows)
    verdict(capsys, 7, ok, detail or "no converged branch point")


def test_criterion_8_invariance(capsys, pyragas, leukemia, leuk_bautin, monkeypatch):
    cpp = find_critical(pyragas, {"kappa": -0.05}, ("tau", 2.0))
    cases = [(pyragas, cpp), (leukemia, leuk_bautin)]
    base = [(expand_amplitude(r, c, 2), solve_harmonics(r, c, 2)) for r, c in cases]
    phase_err = 0.0
    for phi in (0.7, 2.9):
        monkeypatch.setattr(hb, "select_eig", rotated_select(phi))
        for (r, c), (be0, hs0) in zip(cases, base):
            be = expand_amplitude(r, c, 2)
            hs = solve_harmonics(r, c, 2)
            # differences are measured against max(1, |value|)
            for new, ref in ((be.mu_k, be0.mu_k), (be.omega_k, be0.omega_k),
                             (np.abs(hs.coeffs), np.abs(hs0.coeffs))):
                ref = np.asarray(ref)
                rel = np.abs(np.subtract(new, ref)) / np.maximum(1.0, np.abs(ref))
                phase_err = max(phase_err, float(np.max(rel)))
    monkeypatch.undo()
    rng = np.random.default_rng(7)
    scale_bad = oracle_bad = 0
    for q in (1, 2, 3):
        for _ in range(100):
            mu = rng.normal(size=q) * 10.0 ** rng.uniform(-2, 1, size=q)
            rep = classify_coefficients(mu, order=q)
            oracle_bad += rep.signature != oracle_signature(mu)
            for c in (1e-3, 3.0, 1e3):
                scale_bad += classify_coefficients(c * mu, order=q).diagram_label \
                    != rep.diagram_label
    ok = phase_err <= 1e-9 and scale_bad == 0 and oracle_bad == 0
    verdict(capsys, 8, ok, f"rephasing changes mu_k, omega_k, |a_j| by {phase_err:.1e} (scaled); "
            f"{scale_bad} label changes under scaling; {oracle_bad}/300 oracle mismatches")


def test_criterion_9_cli_determinism(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    runs = [
        ["hopf", "--model", "pyragas", "--param", "kappa=-0.05", "--fix", "tau=1.5",
         "--range", "1.5:2.5:0.25", "--svg"],
        ["coeffs", "--model", "leukemia", "--fix", "tau=4.9740704569", "--q", "2"],
        ["classify", "--model", "pyragas", "--param", "kappa=-0.06:-0.04:3",
         "--param", "tau=1.9:2.1:2", "--q", "1", "--guess", "1.08:-0.03", "--threads", "2"],
        ["compare", "--model", "leukemia", "--fix", "tau=4.7", "--range",
         "0.1013:0.1014:0.0001", "--sim-dt", "0.1", "--sim-transient", "300",
         "--sim-measure", "200"],
    ]
    differing = []
    for i, argv in enumerate(runs):
        outputs = []
        for rep in ("a", "b"):
            d = tmp_path / f"{i}{rep}"
            d.mkdir()
            monkeypatch.chdir(d)
            assert main(argv + ["--out", "out"]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted((d / "out").iterdir())})
        if outputs[0] != outputs[1]:
            differing.append(argv[0])
    verdict(capsys, 9, not differing,
            f"{len(runs)} commands rerun; outputs differ for {differing or 'none'}")
