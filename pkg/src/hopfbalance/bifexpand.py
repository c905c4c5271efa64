"""Amplitude and frequency parametrizations of the bifurcation equation.

The bifurcation equation ``lambda_hat(i omega, mu) + 1 + sum_k z^k xi_k = 0``
(with ``z = theta**2``) is two real equations in ``(omega, mu, z)``.  Near a
critical point it defines either ``mu(z), omega(z)`` (amplitude form) or
``mu(omega), z(omega)`` (frequency form).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (ConvergenceError, DegeneracyError, HopfBalanceError,
                     IllConditionedError, SingularityError)
from .hbalance import extract_xi, solve_harmonics
from .hopf import CriticalProblem, find_critical, lambda_derivatives
from .numcore import NewtonConfig, fd_weights, newton_polish, newton_solve

__all__ = ["BifExpansion", "FreqSlice", "BifurcationProblem", "expand_amplitude",
           "first_order", "expand_frequency", "find_bautin", "solve_orbit"]


@dataclass(frozen=True)
class BifExpansion:
    """``mu = sum mu_k z^k`` and ``omega = sum omega_k z^k`` with ``z = theta**2``."""

    q: int
    mu_k: tuple
    omega_k: tuple
    rho: dict
    tau: float
    fit_diagnostics: dict = field(default_factory=dict, compare=False)

    def mu(self, theta):
        z = theta * theta
        return sum(c * z ** k for k, c in enumerate(self.mu_k))

    def omega(self, theta):
        z = theta * theta
        return sum(c * z ** k for k, c in enumerate(self.omega_k))


@dataclass(frozen=True)
class FreqSlice:
    omega_grid: np.ndarray
    z_values: np.ndarray
    mu_values: np.ndarray
    omega0: float
    mu0: float
    dmu: tuple
    dz: tuple
    condition: float
    negative_z: np.ndarray = field(default=None, compare=False)
    rho: dict = field(default_factory=dict)
    tau: float = float("nan")


class BifurcationProblem:
    """Evaluate ``lambda_hat + 1 + sum_k z^k xi_k`` at ``(omega, mu, z)`` for fixed delay."""

    def __init__(self, r, q, tau, rho=None, complement="hermitian"):
        self.r = r
        self.q = q
        self.tau = float(tau)
        self.rho = dict(rho or {})
        self.complement = complement
        self._crit = CriticalProblem(r, rho)

    def bif_equation(self, omega, mu):
        eq, _ = self._crit.linear(mu, self.tau)
        point = {"omega": omega, "mu": mu, "tau": self.tau, "rho": self.rho}
        hs = solve_harmonics(self.r, point, self.q, eq=eq, complement=self.complement)
        return extract_xi(self.r, hs)

    def value(self, omega, mu, z):
        be = self.bif_equation(omega, mu)
        return be.lambda_hat + 1 + sum(x * z ** (k + 1) for k, x in enumerate(be.xi))

    def residual(self, omega, mu, z):
        f = self.value(omega, mu, z)
        return np.array([f.real, f.imag])


def first_order(r, cp, complement="hermitian"):
    """Exact first coefficients ``(mu_1, omega_1)`` by implicit differentiation.

    Solves ``[[Re l_w, Re l_mu], [Im l_w, Im l_mu]] (omega_1, mu_1) = -(Re xi_1, Im xi_1)``.
    """
    prob = BifurcationProblem(r, 1, cp.tau0, cp.rho, complement)
    xi1 = prob.bif_equation(cp.omega0, cp.mu0).xi[0]
    lw, lm = lambda_derivatives(prob._crit, cp.omega0, cp.mu0, cp.tau0)
    J = np.array([[lw.real, lm.real], [lw.imag, lm.imag]])
    w1, m1 = np.linalg.solve(J, [-xi1.real, -xi1.imag])
    return float(m1), float(w1)


def _z_nodes(zmax, n):
    k = np.arange(n)
    return zmax * (1 - np.cos(np.pi * (k + 0.5) / n)) / 2


def _fit(z, values, base, degree, zscale):
    """Least squares ``values - base = sum_{k=1..degree} c_k z^k``; returns (c, residual)."""
    s = z / zscale
    V = np.column_stack([s ** k for k in range(1, degree + 1)])
    rhs = values - base
    c, *_ = np.linalg.lstsq(V, rhs, rcond=None)
    resid = float(np.max(np.abs(V @ c - rhs))) if len(z) else 0.0
    return c / zscale ** np.arange(1, degree + 1), resid, float(np.linalg.cond(V))


def expand_amplitude(r, cp, q, zmax=None, theta_max=None, n_samples=None, fit_degree=None,
                     complement="hermitian", cfg=None, fit_tol=1e-8):
    """Fit ``mu(z)``, ``omega(z)`` around a critical point.

    The bifurcation equation is solved for ``(omega, mu)`` at Chebyshev
    nodes ``z_i`` in ``(0, zmax]`` by continuation from the critical point,
    then polynomials in ``z`` of degree `fit_degree` (default ``q + 6``)
    with fixed constant terms ``(mu_0, omega_0)`` are fitted by least
    squares.  The first `q` coefficients are reported.

    Parameters
    ----------
    zmax : float, optional
        Largest ``z = theta**2`` sampled.  Defaults to ``theta_max**2``,
        itself defaulting to a scale derived from ``|omega_1|`` and
        ``|mu_1|`` so that the sampled arc stays inside the region where
        the series converge quickly.  The default window shrinks by a
        factor ``10**(-1/2)`` per degree when `fit_degree` is below ``q + 6``.
    n_samples : int, optional
        Number of nodes (default ``2 * fit_degree + 2``).

    Raises
    ------
    ConvergenceError
        Newton failure at a node even after halving ``zmax`` once.
    IllConditionedError
        Fit residual above `fit_tol`.
    """
    if not 1 <= q <= 3:
        raise ValueError("q must be 1, 2 or 3")
    if not cp.nondegenerate:
        raise DegeneracyError("transversality condition fails at the critical point")
    prob = BifurcationProblem(r, q, cp.tau0, cp.rho, complement)
    K = fit_degree or q + 6
    if K < q:
        raise ValueError("fit_degree must be at least q")
    n = n_samples or 2 * K + 2
    mu1, w1 = first_order(r, cp, complement)
    if zmax is None:
        if theta_max is not None:
            zmax = theta_max ** 2
        else:
            scale = max(abs(w1) / max(cp.omega0, 1e-12), abs(mu1), 1.0)
            zmax = 0.12 / scale
            if K < q + 6:
                # lower-degree fits need a shorter arc to keep truncation small
                zmax *= 10.0 ** (-(q + 6 - K) / 2)
    cfg = cfg or NewtonConfig(tol_residual=1e-14, tol_step=1e-15)
    for attempt in range(2):
        try:
            sols = _solve_nodes(prob, cp, _z_nodes(zmax, n), (w1, mu1), cfg)
            break
        except (ConvergenceError, SingularityError):
            if attempt:
                raise
            zmax /= 2
    z = np.array([s[0] for s in sols])
    wv = np.array([s[1] for s in sols])
    mv = np.array([s[2] for s in sols])
    cm, rm, cond = _fit(z, mv, cp.mu0, K, zmax)
    cw, rw, _ = _fit(z, wv, cp.omega0, K, zmax)
    diag = {"residual_mu": rm, "residual_omega": rw, "zmax": zmax, "n_samples": n,
            "fit_degree": K, "vandermonde_cond": cond, "mu1_exact": mu1, "omega1_exact": w1}
    if max(rm, rw) > fit_tol:
        raise IllConditionedError(f"series fit residual {max(rm, rw):.3g} above {fit_tol:g}",
                                  diagnostics=diag)
    return BifExpansion(q, (cp.mu0,) + tuple(float(c) for c in cm[:q]),
                        (cp.omega0,) + tuple(float(c) for c in cw[:q]), dict(cp.rho),
                        cp.tau0, diag)


def _solve_nodes(prob, cp, zs, slope, cfg):
    out = []
    prev = (0.0, cp.omega0, cp.mu0)
    for z in zs:
        dz = z - prev[0]
        if len(out) >= 2:
            (za, wa, ma), (zb, wb, mb) = out[-2], out[-1]
            sw, sm = (wb - wa) / (zb - za), (mb - ma) / (zb - za)
        else:
            sw, sm = slope
        guess = [prev[1] + sw * dz, prev[2] + sm * dz]

        def f(x, z=z):
            return prob.residual(x[0], x[1], z)
        x = newton_polish(f, newton_solve(f, guess, cfg))
        prev = (z, x[0], x[1])
        out.append(prev)
    return out


def solve_orbit(prob, mu, guess, cfg=None):
    """Solve the bifurcation equation for ``(omega, z)`` at a given ``mu``.

    Returns ``(omega, z)``; ``z`` may be negative (no real orbit).
    """
    cfg = cfg or NewtonConfig(tol_residual=1e-13)

    def f(x):
        return prob.residual(x[0], mu, x[1])
    w, z = newton_solve(f, guess, cfg)
    return float(w), float(z)


def expand_frequency(r, cp, half_width=1e-3, npts=9, q=1, complement="hermitian",
                     cond_tol=1e-8, cfg=None):
    """Solve for ``(z, mu)`` on an ``omega`` grid centred at ``omega_0``.

    Derivatives at ``omega_0`` (orders 1 to 3) come from finite-difference
    weights on the grid.

    Raises
    ------
    DegeneracyError
        ``Re l_mu Im xi_1 - Im l_mu Re xi_1`` vanishes (within `cond_tol`),
        so ``(z, mu)`` cannot be expressed as functions of ``omega``.
    """
    if npts < 5 or npts % 2 == 0:
        raise ValueError("npts must be odd and at least 5")
    prob = BifurcationProblem(r, q, cp.tau0, cp.rho, complement)
    be0 = prob.bif_equation(cp.omega0, cp.mu0)
    xi1 = be0.xi[0]
    _, lm = lambda_derivatives(prob._crit, cp.omega0, cp.mu0, cp.tau0)
    cond = float(lm.real * xi1.imag - lm.imag * xi1.real)
    if abs(cond) <= cond_tol:
        raise DegeneracyError("Re(lambda_mu) Im(xi_1) - Im(lambda_mu) Re(xi_1) = 0: "
                              "z and mu are not functions of omega here")
    cfg = cfg or NewtonConfig(tol_residual=1e-14, tol_step=1e-16)
    half = npts // 2
    offsets = np.arange(-half, half + 1)
    grid = cp.omega0 + offsets * (half_width / half)
    zs = np.zeros(npts)
    ms = np.zeros(npts)
    zs[half], ms[half] = 0.0, cp.mu0
    for direction in (1, -1):
        prev = (0.0, cp.mu0)
        for i in range(half + direction, half + direction * (half + 1), direction):
            w = grid[i]

            def f(x, w=w):
                return prob.residual(w, x[1], x[0])
            x = newton_solve(f, [prev[0], prev[1]], cfg)
            zs[i], ms[i] = x
            prev = (x[0], x[1])
    h = half_width / half
    dmu, dz = [], []
    for d in (1, 2, 3):
        wts = fd_weights(d, offsets)
        dmu.append(float(wts @ ms / h ** d))
        dz.append(float(wts @ zs / h ** d))
    return FreqSlice(grid, zs, ms, cp.omega0, cp.mu0, tuple(dmu), tuple(dz), cond,
                     zs < -1e-12, dict(cp.rho), cp.tau0)


def find_bautin(r, rho=None, tau_bracket=(None, None), guess=None, xtol=1e-12, ngrid=21,
                complement="hermitian"):
    """Delay where the first amplitude coefficient ``mu_1`` vanishes on a Hopf curve.

    Critical points are computed at fixed delay and ``mu_1(tau)`` is
    bracketed on a grid, then refined with Brent's method.

    Returns
    -------
    CriticalPoint
    """
    lo, hi = tau_bracket
    state = {"guess": guess}

    def crit(tau):
        cp = find_critical(r, rho, ("tau", tau), guess=state["guess"], check=False)
        state["guess"] = (cp.omega0, cp.mu0)
        return cp

    def mu1(tau):
        return first_order(r, crit(tau), complement)[0]

    taus = np.linspace(lo, hi, ngrid)
    vals, guesses = [], []
    for t in taus:
        guesses.append(state["guess"])
        try:
            vals.append(mu1(t))
        except HopfBalanceError:
            vals.append(np.nan)
    for i in range(ngrid - 1):
        a, b = vals[i], vals[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b <= 0:
            state["guess"] = guesses[i + 1]
            t0 = brentq(mu1, taus[i], taus[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)
            return find_critical(r, rho, ("tau", t0), guess=state["guess"])
    raise ConvergenceError("no sign change of mu_1 in the delay bracket")
