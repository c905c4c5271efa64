"""Direct simulation of the DDE, used as an independent check.

The integrator is the classical fourth-order Runge-Kutta method with a
fixed step.  Delayed values are read from the stored solution by cubic
Hermite interpolation, using the stored derivatives as slopes.  Because
``dt <= tau / 20`` every delayed argument lies in the already computed
past, so no iteration over steps is needed.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .errors import ValidationError
from .model import find_equilibrium

__all__ = ["SimConfig", "Trajectory", "CycleMeasurement", "integrate", "measure_cycle",
           "amplitude_branch", "orbit_history", "predict_cycle", "write_csv", "DIVERGENCE_BOUND"]

DIVERGENCE_BOUND = 1e8


@dataclass(frozen=True)
class SimConfig:
    """Integration and measurement settings.

    Parameters
    ----------
    dt : float
        Step size; must not exceed ``tau / 20``.
    t_transient, t_measure : float
        Time discarded before measuring, and time measured.
    history : None, array_like, callable or (t, X) tuple
        Initial function on ``[-tau, 0]``.  ``None`` uses the equilibrium
        shifted by `perturbation` in every component, an array gives a
        constant history, a callable ``t -> x`` is sampled, and a pair of
        arrays is interpolated by a cubic spline.
    interpolation : str
        Dense-output scheme; only ``"hermite3"`` is implemented.
    """

    dt: float = 0.01
    t_transient: float = 500.0
    t_measure: float = 200.0
    history: object = None
    interpolation: str = "hermite3"
    perturbation: float = 1e-2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not (self.t_transient >= 0 and self.t_measure > 0):
            raise ValidationError("durations must be positive")
        if self.interpolation != "hermite3":
            raise ValidationError(f"unknown interpolation {self.interpolation!r}")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    dt: float
    tau: float
    t_transient: float
    diverged: bool = False
    history_t: np.ndarray = None
    history_x: np.ndarray = None


@dataclass
class CycleMeasurement:
    """Limit-cycle measurements; ``period`` and ``frequency`` are NaN unless converged."""

    amplitude: np.ndarray
    period: float
    frequency: float
    converged: bool
    fourier: dict = field(default_factory=dict)
    diverged: bool = False
    mean: np.ndarray = None
    periods: np.ndarray = None
    mu: float = None


def _hermite(h, y0, y1, f0, f1, s):
    """Cubic Hermite value at fraction `s` of a step of length `h`."""
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1)


def _history_samples(history, t, n, default):
    if history is None:
        return np.tile(default, (t.size, 1)), np.zeros((t.size, n))
    if callable(history):
        x = np.array([np.atleast_1d(history(ti)) for ti in t], dtype=float)
        h = 1e-6 * max(1.0, float(np.max(np.abs(t))))
        xp = np.array([np.atleast_1d(history(ti + h)) for ti in t], dtype=float)
        xm = np.array([np.atleast_1d(history(ti - h)) for ti in t], dtype=float)
        return x.reshape(t.size, n), ((xp - xm) / (2 * h)).reshape(t.size, n)
    if isinstance(history, tuple) and len(history) == 2:
        ht, hx = (np.asarray(a, dtype=float) for a in history)
        hx = hx.reshape(ht.size, n)
        if ht[0] > t[0] + 1e-12 or ht[-1] < t[-1] - 1e-12:
            raise ValidationError("sampled history does not cover [-tau, 0]")
        cs = CubicSpline(ht, hx, axis=0)
        return cs(t), cs(t, 1)
    x = np.atleast_1d(np.asarray(history, dtype=float))
    if x.size == 1:
        x = np.full(n, float(x[0]))
    if x.size != n:
        raise ValidationError(f"constant history has {x.size} components, expected {n}")
    return np.tile(x, (t.size, 1)), np.zeros((t.size, n))


def _raw_system(r, mu, tau, rho):
    """``(f, n, x_default)`` for a Realization or a raw callable ``f(x, x_tau)``."""
    if callable(r) and not hasattr(r, "matrices"):
        return (lambda x, xt: np.atleast_1d(r(x, xt))), None, None
    params = r.params(mu, tau, rho)
    mats = r.matrices(params)
    try:
        x0 = find_equilibrium(r, mu, tau, rho).x_hat
    except Exception:       # a missing equilibrium only affects the default history
        x0 = np.zeros(r.n)
    return (lambda x, xt: r.rhs(x, xt, mu, params, mats)), r.n, x0


def integrate(r, mu, tau, rho=None, cfg=None, n=None):
    """Integrate ``x' = f(x(t), x(t - tau), mu)`` from ``t = 0``.

    Parameters
    ----------
    r : Realization or callable
        A callable ``f(x, x_tau)`` may be given instead of a realization,
        in which case `n` (state dimension) is required unless the history
        fixes it.

    Returns
    -------
    Trajectory
        Sampled at every step.  Blow-up beyond ``DIVERGENCE_BOUND`` stops the
        run and sets ``diverged``.
    """
    cfg = cfg or SimConfig()
    tau = float(tau)
    if not tau > 0:
        raise ValidationError("tau must be positive")
    if cfg.dt > tau / 20 * (1 + 1e-12):
        raise ValidationError(f"dt = {cfg.dt} exceeds tau/20 = {tau / 20}")
    f, dim, x_default = _raw_system(r, mu, tau, rho)
    dt = cfg.dt
    if dim is None:
        dim = n
        if dim is None:
            h = cfg.history
            if h is None:
                raise ValidationError("state dimension unknown: pass n or a history")
            probe = h(0.0) if callable(h) else (h[1][0] if isinstance(h, tuple) else h)
            dim = np.atleast_1d(probe).size
        x_default = np.zeros(dim)
    if cfg.history is None:
        x_default = x_default + cfg.perturbation
    nh = int(np.ceil(tau / dt)) + 2
    th = -dt * np.arange(nh, -1, -1)
    hx, hf = _history_samples(cfg.history, th, dim, x_default)
    nsteps = int(round((cfg.t_transient + cfg.t_measure) / dt))
    X = np.empty((nh + 1 + nsteps, dim))
    F = np.empty_like(X)
    X[:nh + 1] = hx
    F[:nh + 1] = hf
    base = nh                       # index of t = 0
    # delayed argument of stage c at step k: t_k + c dt - tau
    lookups = []
    for c in (0.0, 0.5, 1.0):
        pos = c - tau / dt
        i0 = int(np.floor(pos))
        lookups.append((i0, pos - i0))
    F[base] = f(X[base], _delayed(X, F, base, lookups[0], dt))
    diverged = False
    last = base + nsteps
    for k in range(base, base + nsteps):
        x = X[k]
        dh = _delayed(X, F, k, lookups[1], dt)
        d1 = _delayed(X, F, k, lookups[2], dt)
        k1 = F[k]
        k2 = f(x + 0.5 * dt * k1, dh)
        k3 = f(x + 0.5 * dt * k2, dh)
        k4 = f(x + dt * k3, d1)
        xn = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[k + 1] = xn
        if not np.all(np.isfinite(xn)) or np.max(np.abs(xn)) > DIVERGENCE_BOUND:
            diverged = True
            last = k + 1
            break
        F[k + 1] = f(xn, d1)
    t = dt * np.arange(last - base + 1)
    return Trajectory(t, X[base:last + 1].copy(), dt, tau, cfg.t_transient, diverged,
                      th, hx)


def _delayed(X, F, k, lookup, dt):
    i0, s = lookup
    i = k + i0
    if s == 0.0:
        return X[i]
    return _hermite(dt, X[i], X[i + 1], F[i], F[i + 1], s)


def _crossings(t, u):
    """Upward zero crossings of `u`, refined by a parabola through three samples."""
    idx = np.nonzero((u[:-1] < 0) & (u[1:] >= 0))[0]
    out = []
    for i in idx:
        j = min(max(i, 1), u.size - 2)
        coef = np.polyfit(t[j - 1:j + 2] - t[i], u[j - 1:j + 2], 2)
        roots = np.roots(coef) if abs(coef[0]) > 0 else np.array([-coef[2] / coef[1]])
        roots = roots[np.isreal(roots)].real
        h = t[i + 1] - t[i]
        good = roots[(roots >= -1e-9 * h) & (roots <= h * (1 + 1e-9))]
        if good.size:
            out.append(t[i] + good[0])
        else:
            out.append(t[i] - u[i] * h / (u[i + 1] - u[i]))
    return np.array(out)


def measure_cycle(traj, cfg=None, component=0, q=2, nfft=256, rtol=1e-6):
    """Period, amplitude and Fourier coefficients of a settled oscillation.

    Only samples with ``t >= traj.t_transient`` are used.  The period comes
    from upward zero crossings of ``x[component]`` minus its mean; the run
    counts as converged when the last five period estimates agree within
    `rtol` relative.  Amplitudes are half peak-to-peak values and the
    Fourier coefficients ``c_j`` for ``|j| <= 2q`` are taken over the last
    full period, resampled by a cubic spline (trapezoid rule).
    """
    nan = float("nan")
    if traj.diverged:
        return CycleMeasurement(np.full(traj.x.shape[1], np.inf), nan, nan, False, {}, True)
    mask = traj.t >= traj.t_transient - 1e-12
    t = traj.t[mask]
    x = traj.x[mask]
    n = x.shape[1]
    if t.size < 4:
        return CycleMeasurement(np.zeros(n), nan, nan, False, {})
    mean = x.mean(axis=0)
    u = x[:, component] - mean[component]
    tc = _crossings(t, u)
    if tc.size >= 3:
        # re-centre on the mean over whole periods so the crossings are unbiased
        span = (t >= tc[0]) & (t <= tc[-1])
        mean = trapezoid(x[span], t[span], axis=0) / (t[span][-1] - t[span][0])
        u = x[:, component] - mean[component]
        tc = _crossings(t, u)
    if tc.size < 3:
        amp = 0.5 * (x.max(axis=0) - x.min(axis=0))
        return CycleMeasurement(amp, nan, nan, False, {}, False, mean)
    periods = np.diff(tc)
    last5 = periods[-5:]
    T = float(last5[-1])
    converged = bool(periods.size >= 5 and
                     (last5.max() - last5.min()) <= rtol * last5.mean())
    i0 = np.searchsorted(t, tc[-2]) - 2
    i1 = np.searchsorted(t, tc[-1]) + 2
    i0 = max(i0, 0)
    cs = CubicSpline(t[i0:i1], x[i0:i1], axis=0)
    ts = tc[-2] + T * np.arange(nfft) / nfft
    xs = cs(ts)
    dense = cs(np.linspace(tc[-2], tc[-1], 8 * nfft + 1))
    amp = 0.5 * (dense.max(axis=0) - dense.min(axis=0))
    spec = np.fft.fft(xs, axis=0) / nfft
    # phase reference: the crossing at tc[-2] is t = 0 of the resampled period
    fourier = {j: spec[j % nfft] for j in range(-2 * q, 2 * q + 1)}
    mean_p = spec[0].real
    return CycleMeasurement(amp, T if converged else nan,
                            2 * np.pi / T if converged else nan, converged, fourier,
                            False, mean_p, periods)


def orbit_history(r, hs, theta, npts=256, max_theta=1.0):
    """History function on the predicted orbit of a harmonic state.

    The output orbit ``y(t)`` is lifted to the state: each harmonic of ``x``
    is ``(ij omega I - A0 - A1 e^{-ij omega tau})^{-1} B g_j``, with ``g_j``
    the Fourier coefficients of ``g`` along the orbit.  Harmonics where that
    matrix is singular fall back to ``-pinv(C) y_j``.
    """
    from .hbalance import assemble_orbit
    orb = assemble_orbit(hs, theta, npts, max_theta)
    params = r.params(hs.mu, hs.tau, hs.rho)
    A0, A1, B, C = r.matrices(params)
    w = hs.omega
    y = orb.y
    # y(t - tau) on the same grid, evaluated exactly from the harmonics
    Y = np.fft.fft(y, axis=0) / npts
    freqs = np.fft.fftfreq(npts, d=1.0 / npts)
    Yd = Y * np.exp(-1j * freqs * w * hs.tau)[:, None]
    yd = (np.fft.ifft(Yd * npts, axis=0)).real
    g = np.array([r.g_eval(y[i], yd[i], hs.mu, params) for i in range(npts)])
    Gj = np.fft.fft(g, axis=0) / npts
    Xj = np.zeros((npts, r.n), dtype=complex)
    pinvC = np.linalg.pinv(C)
    x_hat = hs.equilibrium.x_hat
    for k, fk in enumerate(freqs):
        s = 1j * fk * w
        M = s * np.eye(r.n) - A0 - A1 * np.exp(-s * hs.tau)
        if k == 0:
            continue
        if np.linalg.cond(M) < 1e10:
            Xj[k] = np.linalg.solve(M, B @ Gj[k])
        else:
            Xj[k] = -pinvC @ Y[k]
    # the mean follows from the output mean when possible
    Xj[0] = x_hat - pinvC @ (Y[0] - hs.equilibrium.y_hat)

    def hist(t):
        ph = np.exp(1j * freqs * w * t)
        return (ph @ Xj).real
    return hist


def predict_cycle(r, be, mu, q=None, rho=None, npts=256):
    """Cycle predicted by the truncated bifurcation equation at parameter `mu`.

    The equation of order `q` (default ``be.q``) is solved exactly for
    ``(omega, theta)`` starting from the fitted expansion, and the orbit is
    lifted to the state.

    Returns
    -------
    dict
        ``theta``, ``omega``, ``amplitude`` (half peak-to-peak per state
        component) and ``history`` (callable on the predicted orbit), or
        ``None`` when no cycle exists at `mu` on this side.
    """
    from .bifexpand import BifurcationProblem, solve_orbit
    from .errors import HopfBalanceError
    from .hbalance import solve_harmonics
    q = q or be.q
    rho = be.rho if rho is None else rho
    mu_k = np.asarray(be.mu_k, dtype=float)
    # initial guess for z from the fitted polynomial mu(z)
    coeffs = list(reversed(mu_k[1:])) + [mu_k[0] - mu]
    roots = np.roots(coeffs)
    roots = roots[(np.abs(roots.imag) < 1e-9 * max(1.0, np.max(np.abs(roots)))) & (roots.real > 0)]
    if roots.size == 0:
        return None
    z0 = float(np.min(roots.real))
    prob = BifurcationProblem(r, q, be.tau, rho)
    try:
        w, z = solve_orbit(prob, mu, (be.omega(np.sqrt(z0)), z0))
    except HopfBalanceError:
        return None
    if not z > 0:
        return None
    theta = float(np.sqrt(z))
    hs = solve_harmonics(r, {"omega": w, "mu": mu, "tau": be.tau, "rho": rho}, q)
    hist = orbit_history(r, hs, theta, npts)
    t = np.arange(npts) * (2 * np.pi / w) / npts
    xs = np.array([hist(ti) for ti in t])
    amp = 0.5 * (xs.max(axis=0) - xs.min(axis=0))
    return {"theta": theta, "omega": float(w), "amplitude": amp, "history": hist}


def amplitude_branch(r, mu_grid, tau, rho=None, cfg=None, component=0, q=2):
    """Simulated cycles along `mu_grid`, each run seeded by the previous one.

    Returns one :class:`CycleMeasurement` per grid value; failures are
    flagged in the measurement rather than raised.
    """
    cfg = cfg or SimConfig()
    out = []
    history = cfg.history
    for mu in mu_grid:
        run_cfg = SimConfig(cfg.dt, cfg.t_transient, cfg.t_measure, history,
                            cfg.interpolation, cfg.perturbation)
        traj = integrate(r, mu, tau, rho, run_cfg)
        m = measure_cycle(traj, run_cfg, component, q)
        m.mu = float(mu)
        out.append(m)
        if not traj.diverged:
            keep = int(np.ceil(tau / cfg.dt)) + 4
            ht = traj.t[-keep:] - traj.t[-1]
            history = (ht, traj.x[-keep:])
    return out


def write_csv(path, traj):
    """Write a trajectory as CSV with header ``t,x1,...,xn``."""
    n = traj.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
        for ti, xi in zip(traj.t, traj.x):
            w.writerow(["%.17g" % ti] + ["%.17g" % v for v in xi])
