"""Transfer functions G, GJ and the tracked characteristic function."""

from dataclasses import dataclass, field

import numpy as np

from .errors import MultiplicityError, SingularityError, TrackingError
from .model import find_equilibrium, tensors_at
from .numcore import eig

__all__ = ["FrequencyPoint", "EigTriple", "LinearPart", "linearize", "transfer_G",
           "transfer_GJ", "char_function", "select_eig"]


@dataclass(frozen=True)
class FrequencyPoint:
    s: complex
    mu: float
    tau: float
    rho: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class EigTriple:
    """Characteristic function value with eigenvectors.

    ``v`` has unit norm and its first largest-magnitude component is real
    positive; ``w`` is a left eigenvector scaled so that ``w.T @ v == 1``
    (bilinear, no conjugation).
    """

    lambda_hat: complex
    v: np.ndarray
    w: np.ndarray
    others: tuple = ()


class LinearPart:
    """Matrices and linearization of ``g`` at one parameter point.

    Caches nothing across points; cheap to rebuild.
    """

    def __init__(self, r, params, D1=None, D2=None):
        self.r = r
        self.params = params
        self.tau = params["tau"]
        self.A0, self.A1, self.B, self.C = r.matrices(params)
        self.D1 = D1
        self.D2 = D2

    def resolvent_matrix(self, s):
        n = self.r.n
        return s * np.eye(n) - self.A0 - self.A1 * np.exp(-s * self.tau)

    def G(self, s):
        R = self.resolvent_matrix(s)
        try:
            sol = np.linalg.solve(R, self.B.astype(complex))
        except np.linalg.LinAlgError:
            raise SingularityError(f"sI - A0 - A1 exp(-s tau) is singular at s={s}", where=s)
        if np.linalg.cond(R) > 1e14:
            raise SingularityError(f"sI - A0 - A1 exp(-s tau) is singular at s={s}", where=s)
        return self.C @ sol

    def Dj(self, s):
        return self.D1 + self.D2 * np.exp(-s * self.tau)

    def GJ(self, s):
        return self.G(s) @ self.Dj(s)

    def closed_loop(self, s):
        """Characteristic matrix of the linearized DDE, ``R(s) + B Dj(s) C``."""
        return self.resolvent_matrix(s) + self.B @ self.Dj(s) @ self.C


def linearize(r, mu, tau, rho=None, eq=None, y0=None):
    """Equilibrium plus :class:`LinearPart` with D1, D2 filled in."""
    params = r.params(mu, tau, rho)
    if eq is None:
        eq = find_equilibrium(r, mu, tau, rho, y0=y0)
    t = tensors_at(r, eq, 1, params)
    return eq, LinearPart(r, params, t.D1, t.D2)


def _fp_args(fp):
    return fp.s, fp.mu, fp.tau, fp.rho


def transfer_G(r, fp):
    """``G(s, mu, tau) = C (sI - A0 - A1 e^{-s tau})^{-1} B`` (m x p)."""
    s, mu, tau, rho = _fp_args(fp)
    return LinearPart(r, r.params(mu, tau, rho)).G(s)


def transfer_GJ(r, eq, fp):
    """``GJ = G (D1 + D2 e^{-s tau})`` at the equilibrium `eq` (m x m)."""
    s, mu, tau, rho = _fp_args(fp)
    params = r.params(mu, tau, rho)
    t = tensors_at(r, eq, 1, params)
    return LinearPart(r, params, t.D1, t.D2).GJ(s)


def _phase_fix(v):
    mag = np.abs(v)
    i = int(np.nonzero(mag >= (1 - 1e-8) * mag.max())[0][0])
    return v * (np.conj(v[i]) / mag[i])


def select_eig(GJ, seed=None, max_jump=0.5):
    """Pick the tracked eigen-triple of a GJ matrix.

    Without a seed the eigenvalue nearest -1 is chosen, otherwise the one
    nearest ``seed.lambda_hat``.
    """
    pairs = eig(GJ)
    vals = np.array([p[0] for p in pairs])
    target = -1.0 if seed is None else seed.lambda_hat
    k = int(np.argmin(np.abs(vals - target)))
    lam = vals[k]
    if seed is not None and abs(lam - seed.lambda_hat) > max_jump:
        raise TrackingError(f"characteristic function jumped by {abs(lam - seed.lambda_hat):.3g}")
    others = np.delete(vals, k)
    if others.size and np.min(np.abs(others - lam)) < 1e-8:
        raise MultiplicityError("characteristic function is not simple (eigenvalue collision)")
    v = _phase_fix(pairs[k][1])
    lpairs = eig(np.asarray(GJ).T)
    lvals = np.array([p[0] for p in lpairs])
    w = lpairs[int(np.argmin(np.abs(lvals - lam)))][1]
    w = w / (w @ v)
    return EigTriple(complex(lam), v, w, tuple(complex(o) for o in others))


def char_function(r, eq, fp, seed=None):
    """Tracked characteristic function of GJ at a frequency point."""
    return select_eig(transfer_GJ(r, eq, fp), seed)
