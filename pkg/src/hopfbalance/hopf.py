"""Critical points ``lambda_hat(i omega0, mu0, tau0) = -1`` and Hopf curves."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceError, DegenerateFrequencyError, HopfBalanceError,
                     MultiplicityError, SingularityError, TrackingError)
from .model import find_equilibrium
from .numcore import NewtonConfig, newton_polish, newton_solve
from .transfer import linearize, select_eig

__all__ = ["CriticalPoint", "HopfCurve", "CriticalProblem", "find_critical",
           "check_transversality", "hopf_curve", "scan_seed", "lambda_derivatives"]

_FD_STEP = 1e-6
_MIN_OMEGA = 1e-8


@dataclass(frozen=True)
class CriticalPoint:
    omega0: float
    mu0: float
    tau0: float
    rho: dict
    eig: object
    nondegenerate: bool
    transversality: float = float("nan")
    equilibrium: object = field(default=None, compare=False, repr=False)


@dataclass
class HopfCurve:
    points: list
    parametrized_by: str

    def __len__(self):
        return len(self.points)

    def as_array(self):
        """Rows ``(omega0, mu0, tau0)``."""
        return np.array([[p.omega0, p.mu0, p.tau0] for p in self.points]).reshape(-1, 3)


def _canon(r, name):
    if name in ("mu", r.mu_name):
        return "mu"
    if name == "tau":
        return "tau"
    raise ValueError(f"fixed parameter must be 'mu', {r.mu_name!r} or 'tau', got {name!r}")


class CriticalProblem:
    """lambda_hat as a function of ``(omega, mu, tau)`` with warm-started equilibria."""

    def __init__(self, r, rho=None):
        self.r = r
        self.rho = dict(rho or {})
        self._y = None

    def linear(self, mu, tau):
        try:
            eq, lp = linearize(self.r, mu, tau, self.rho, y0=self._y)
        except (ConvergenceError, SingularityError):
            eq, lp = linearize(self.r, mu, tau, self.rho)
        self._y = eq.y_hat
        return eq, lp

    def triple(self, omega, mu, tau, seed=None):
        eq, lp = self.linear(mu, tau)
        return select_eig(lp.GJ(1j * omega), seed, max_jump=np.inf if seed is None else 0.5)

    def lam(self, omega, mu, tau, seed=None):
        return self.triple(omega, mu, tau, seed).lambda_hat


def lambda_derivatives(prob, omega, mu, tau, h=_FD_STEP):
    """Central differences ``(lambda_omega, lambda_mu)`` with relative step `h`."""
    seed = prob.triple(omega, mu, tau)
    hw = h * max(1.0, abs(omega))
    hm = h * max(1.0, abs(mu))
    lw = (prob.lam(omega + hw, mu, tau, seed) - prob.lam(omega - hw, mu, tau, seed)) / (2 * hw)
    lm = (prob.lam(omega, mu + hm, tau, seed) - prob.lam(omega, mu - hm, tau, seed)) / (2 * hm)
    return lw, lm


def check_transversality(r, cp, h=_FD_STEP, tol=1e-8):
    """Implicit-function determinant ``Re l_mu Im l_omega - Im l_mu Re l_omega``.

    Returns
    -------
    value : float
    nondegenerate : bool
        ``abs(value) > tol``.
    """
    prob = CriticalProblem(r, cp.rho)
    lw, lm = lambda_derivatives(prob, cp.omega0, cp.mu0, cp.tau0, h)
    value = float(lm.real * lw.imag - lm.imag * lw.real)
    return value, bool(abs(value) > tol)


def _make_point(r, prob, omega, mu, tau, check=True):
    eq, lp = prob.linear(mu, tau)
    trip = select_eig(lp.GJ(1j * omega))
    cp = CriticalPoint(float(omega), float(mu), float(tau), dict(prob.rho), trip, True,
                       equilibrium=eq)
    if check:
        val, ok = check_transversality(r, cp)
        cp = CriticalPoint(cp.omega0, cp.mu0, cp.tau0, cp.rho, trip, ok, val, eq)
    return cp


def _solve(r, prob, fixed_name, fixed_value, omega, free, cfg):
    def unpack(x):
        if fixed_name == "tau":
            return x[0], x[1], fixed_value
        return x[0], fixed_value, x[1]

    def resid(x):
        w, mu, tau = unpack(x)
        if fixed_name == "mu" and not tau > 0:
            return np.array([np.nan, np.nan])
        lam = prob.lam(w, mu, tau) + 1.0
        return np.array([lam.real, lam.imag])

    x = newton_polish(resid, newton_solve(resid, [omega, free], cfg))
    w, mu, tau = unpack(x)
    if abs(w) < _MIN_OMEGA:
        raise DegenerateFrequencyError("critical frequency collapsed to zero")
    return abs(w), mu, tau


def find_critical(r, rho=None, fixed=("tau", None), guess=None, cfg=None, check=True):
    """Solve ``lambda_hat(i omega, mu, tau) + 1 = 0`` for two unknowns.

    Parameters
    ----------
    r : Realization
    rho : dict, optional
        Auxiliary parameter overrides.
    fixed : (str, float)
        ``("tau", value)`` to solve for ``(omega, mu)`` or ``("mu", value)``
        to solve for ``(omega, tau)``.  A value of None uses the model default.
    guess : (float, float), optional
        Initial ``(omega, free parameter)``.  Defaults to the model's
        ``hopf_guess``; a coarse grid scan is tried if Newton fails from it.
    check : bool
        Evaluate the transversality determinant.

    Returns
    -------
    CriticalPoint
    """
    name, value = fixed
    name = _canon(r, name)
    base = r.params(None, None, rho)
    if value is None:
        value = base["tau"] if name == "tau" else base["mu"]
    value = float(value)
    if name == "tau" and not value > 0:
        raise ValueError("tau must be positive")
    cfg = cfg or NewtonConfig(tol_residual=1e-12)
    prob = CriticalProblem(r, rho)
    free_name = "mu" if name == "tau" else "tau"
    user_guess = guess is not None
    if guess is None:
        hg = dict(r.hopf_guess or {})
        omega = hg.get("omega", 1.0)
        free = hg.get(r.mu_name, hg.get("mu", base["mu"])) if free_name == "mu" \
            else hg.get("tau", base["tau"])
        guess = (omega, free)
    try:
        w, mu, tau = _solve(r, prob, name, value, guess[0], guess[1], cfg)
    except (ConvergenceError, SingularityError) as exc:
        if user_guess:
            raise
        seed = scan_seed(r, rho, (name, value), guess)
        if seed is None:
            raise ConvergenceError(f"no critical point found near {guess}") from exc
        w, mu, tau = _solve(r, prob, name, value, seed[0], seed[1], cfg)
    return _make_point(r, prob, w, mu, tau, check)


def scan_seed(r, rho, fixed, guess, n_omega=60, n_free=41, spread=2.0):
    """Coarse grid search of ``|lambda_hat + 1|`` around `guess`.

    Returns the best ``(omega, free)`` or None when every evaluation fails.
    """
    name, value = fixed
    name = _canon(r, name)
    prob = CriticalProblem(r, rho)
    w0, f0 = guess
    omegas = np.linspace(max(abs(w0), 1e-3) / (1 + spread), abs(w0) * (1 + spread) + 1e-3,
                         n_omega)
    half = spread * max(abs(f0), 0.1)
    frees = np.linspace(f0 - half, f0 + half, n_free)
    best, arg = np.inf, None
    for f in frees:
        mu, tau = (f, value) if name == "tau" else (value, f)
        if not tau > 0:
            continue
        try:
            eq, lp = prob.linear(mu, tau)
        except HopfBalanceError:
            continue
        for w in omegas:
            try:
                lam = select_eig(lp.GJ(1j * w), max_jump=np.inf).lambda_hat
            except HopfBalanceError:
                continue
            d = abs(lam + 1)
            if d < best:
                best, arg = d, (w, f)
    return arg


def hopf_curve(r, rho=None, param="mu", param_range=(0.0, 0.0), step=0.01, guess=None,
               branch=0, max_halvings=10, max_points=100000):
    """Continue critical points while `param` sweeps `param_range`.

    At each value of `param` (``"mu"`` or ``"tau"``) the remaining pair of
    unknowns is solved for.  Natural-parameter continuation with a secant
    predictor and step halving is used; when halving fails (a fold in the
    sweep direction) the curve switches to pseudo-arclength continuation in
    ``(omega, mu, tau)``.  `branch` shifts a delay seed by
    ``2 pi branch / omega``.

    Returns
    -------
    HopfCurve
    """
    name = _canon(r, param)
    lo, hi = float(param_range[0]), float(param_range[1])
    curve = HopfCurve([], name)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo or step <= 0:
        return curve
    if name == "tau" and lo <= 0:
        raise ValueError("delay range must be positive")
    cfg = NewtonConfig(tol_residual=1e-12)
    prob = CriticalProblem(r, rho)

    if guess is None:
        base = r.params(None, None, rho)
        hg = dict(r.hopf_guess or {})
        omega = hg.get("omega", 1.0)
        free = hg.get("tau", base["tau"]) if name == "mu" else hg.get(r.mu_name, hg.get("mu",
                                                                                        base["mu"]))
        guess = (omega, free)
    omega, free = guess
    if branch and name == "mu":
        free = free + 2 * np.pi * branch / omega
    try:
        w, mu, tau = _solve(r, prob, name, lo, omega, free, cfg)
    except (ConvergenceError, SingularityError):
        seed = scan_seed(r, rho, (name, lo), (omega, free))
        if seed is None:
            raise
        w, mu, tau = _solve(r, prob, name, lo, seed[0], seed[1], cfg)

    def state(w, mu, tau):
        return np.array([w, mu, tau])

    def add(x):
        try:
            curve.points.append(_make_point(r, prob, x[0], x[1], x[2]))
        except (MultiplicityError, TrackingError) as exc:
            warnings.warn(f"curve truncated: {exc}", stacklevel=3)
            return False
        return True

    pidx = 1 if name == "mu" else 2
    fidx = 2 if name == "mu" else 1
    xs = [state(w, mu, tau)]
    if not add(xs[0]):
        return curve
    h = step
    nsteps = int(np.floor((hi - lo) / step + 1e-9))
    target = lo
    k = 0
    while k < nsteps and len(curve.points) < max_points:
        target_next = lo + (k + 1) * step
        ok = True
        cur = target
        while cur < target_next - 1e-14 * max(1.0, abs(target_next)):
            nxt = min(cur + h, target_next)
            x = xs[-1]
            if len(xs) >= 2 and xs[-1][pidx] != xs[-2][pidx]:
                slope = (xs[-1] - xs[-2]) / (xs[-1][pidx] - xs[-2][pidx])
                pred = x + slope * (nxt - cur)
            else:
                pred = x
            try:
                sol = _solve(r, prob, name, nxt, pred[0], pred[fidx], cfg)
                xn = state(*sol)
                if np.linalg.norm(xn - pred) > 10 * max(h, 1e-3) * (1 + np.linalg.norm(x)):
                    raise ConvergenceError("jumped to another branch")
                xs.append(xn)
                cur = nxt
                h = min(step, 2 * h)
            except (ConvergenceError, SingularityError, DegenerateFrequencyError):
                h *= 0.5
                if h < step / 2 ** max_halvings:
                    ok = False
                    break
            except (MultiplicityError, TrackingError) as exc:
                warnings.warn(f"curve truncated: {exc}", stacklevel=2)
                return curve
        if not ok:
            _arclength(r, prob, curve, xs, pidx, lo, hi, step, cfg, max_points, add)
            return curve
        if not add(xs[-1]):
            return curve
        target = target_next
        k += 1
    return curve


def _arclength(r, prob, curve, xs, pidx, lo, hi, step, cfg, max_points, add):
    """Pseudo-arclength continuation in (omega, mu, tau) after a fold."""
    def lam_res(x):
        if not x[2] > 0:
            return np.array([np.nan, np.nan])
        lam = prob.lam(x[0], x[1], x[2]) + 1.0
        return np.array([lam.real, lam.imag])

    if len(xs) < 2:
        return
    x = xs[-1]
    t = xs[-1] - xs[-2]
    t /= np.linalg.norm(t)
    ds = step
    while len(curve.points) < max_points:
        pred = x + ds * t

        def f(y, pred=pred, t=t):
            return np.concatenate([lam_res(y), [t @ (y - pred)]])
        try:
            y = newton_solve(f, pred, cfg)
        except (ConvergenceError, SingularityError):
            ds *= 0.5
            if ds < step / 1024:
                warnings.warn("continuation stopped: step underflow", stacklevel=3)
                return
            continue
        if not lo <= y[pidx] <= hi:
            return
        if abs(y[0]) < _MIN_OMEGA:
            return
        t = (y - x) / np.linalg.norm(y - x)
        x = y
        if not add(y):
            return
        ds = min(step, 2 * ds)
