"""Dense complex linear algebra, Newton solving and truncated theta-series.

Everything here is a pure function of its inputs.  Matrices are plain
:class:`numpy.ndarray` objects (``complex`` or ``float``); the only custom
container is :class:`ThetaSeries`.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ConvergenceError, DimensionError, SingularityError

__all__ = ["NewtonConfig", "ThetaSeries", "as_cmatrix", "eig", "newton_solve",
           "newton_polish", "fd_weights", "central_derivative", "series_mul"]


def as_cmatrix(m):
    """Return `m` as a finite 2-D complex array or raise."""
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("matrix has non-finite entries")
    return arr


def eig(m):
    """All eigenpairs of a square matrix.

    Parameters
    ----------
    m : array_like, shape (k, k)

    Returns
    -------
    list of (complex, ndarray)
        Eigenvalue and unit-norm right eigenvector, in LAPACK order.

    Raises
    ------
    DimensionError
        If `m` is not square.
    ConvergenceError
        If LAPACK fails or a returned pair violates
        ``|m v - lam v| <= 1e-10 |m| |v|``.
    """
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"eig needs a square matrix, got {a.shape}")
    try:
        # LAPACK zgeev: balancing + Hessenberg QR
        vals, vecs = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    scale = max(np.linalg.norm(a, 2), np.finfo(float).tiny)
    out = []
    worst = 0.0
    for k in range(len(vals)):
        v = vecs[:, k] / np.linalg.norm(vecs[:, k])
        res = np.linalg.norm(a @ v - vals[k] * v)
        worst = max(worst, res / scale)
        out.append((complex(vals[k]), v))
    if worst > 1e-10:
        raise ConvergenceError("eigenpair residual above 1e-10", residual=worst)
    return out


@dataclass(frozen=True)
class NewtonConfig:
    max_iter: int = 50
    tol_residual: float = 1e-12
    tol_step: float = 1e-13
    jacobian_step: float = 1e-7

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if min(self.tol_residual, self.tol_step, self.jacobian_step) <= 0:
            raise ValueError("tolerances must be strictly positive")


def _fd_jacobian(f, x, fx, step):
    n = x.size
    jac = np.empty((fx.size, n))
    for i in range(n):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(f(xp), float) - np.asarray(f(xm), float)) / (2 * h)
    return jac


def newton_solve(f, x0, cfg=None, full_output=False):
    """Solve ``f(x) = 0`` for a square real system.

    The Jacobian is built by central differences with step
    ``cfg.jacobian_step * max(1, |x_i|)``.  A backtracking line search halves
    the step while the residual grows.

    Returns
    -------
    x : ndarray
        Root with ``max|f(x)| <= cfg.tol_residual``.
    info : dict
        Only when `full_output` is true: ``iterations``, ``residual``.
    """
    cfg = cfg or NewtonConfig()
    x = np.array(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial guess has non-finite entries")
    fx = np.asarray(f(x), float).ravel()
    if fx.size != x.size:
        raise DimensionError(f"f maps R^{x.size} to R^{fx.size}; need a square system")
    res = np.max(np.abs(fx))
    it = 0
    while res > cfg.tol_residual:
        if it >= cfg.max_iter:
            raise ConvergenceError(f"Newton did not converge in {cfg.max_iter} iterations",
                                   residual=res)
        jac = _fd_jacobian(f, x, fx, cfg.jacobian_step)
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e14:
            raise SingularityError("Newton Jacobian is singular (condition > 1e14)", where=x)
        dx = np.linalg.solve(jac, -fx)
        lam = 1.0
        for _ in range(12):
            xn = x + lam * dx
            fn = np.asarray(f(xn), float).ravel()
            rn = np.max(np.abs(fn)) if np.all(np.isfinite(fn)) else np.inf
            if rn < res or rn <= cfg.tol_residual:
                break
            lam *= 0.5
        else:
            raise ConvergenceError("line search failed to reduce the residual", residual=res)
        step = np.max(np.abs(lam * dx))
        x, fx, res = xn, fn, rn
        it += 1
        if res > cfg.tol_residual and step <= cfg.tol_step * (1.0 + np.max(np.abs(x))):
            raise ConvergenceError("Newton stalled: step below tol_step before the residual "
                                   "reached tol_residual", residual=res)
    if full_output:
        return x, {"iterations": it, "residual": res}
    return x


def newton_polish(f, x, max_iter=3, step=1e-7):
    """Extra Newton steps after convergence, kept only while the residual shrinks.

    Useful when the caller needs the root to full working precision rather
    than to a residual tolerance.
    """
    x = np.array(x, dtype=float).ravel()
    fx = np.asarray(f(x), float).ravel()
    res = np.max(np.abs(fx))
    for _ in range(max_iter):
        if res == 0.0:
            break
        jac = _fd_jacobian(f, x, fx, step)
        try:
            xn = x - np.linalg.solve(jac, fx)
        except np.linalg.LinAlgError:
            break
        fn = np.asarray(f(xn), float).ravel()
        rn = np.max(np.abs(fn)) if np.all(np.isfinite(fn)) else np.inf
        if not rn < res:
            break
        x, fx, res = xn, fn, rn
    return x


def fd_weights(derivative, offsets):
    """Finite-difference weights for the `derivative`-th derivative.

    ``sum(w[k] * f(x + offsets[k] * h)) / h**derivative`` approximates
    ``f^(derivative)(x)``.
    """
    offsets = np.asarray(offsets, dtype=float)
    k = offsets.size
    if derivative >= k:
        raise ValueError("need more stencil points than the derivative order")
    vander = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[derivative] = factorial(derivative)
    return np.linalg.solve(vander, rhs)


def central_derivative(f, x, h, accuracy=4):
    """First derivative of a (possibly complex, vector valued) f at scalar x."""
    r = accuracy // 2
    offsets = np.arange(-r, r + 1)
    w = fd_weights(1, offsets)
    total = 0
    for wk, ok in zip(w, offsets):
        if wk != 0.0:
            total = total + wk * np.asarray(f(x + ok * h))
    return total / h


class ThetaSeries:
    """Truncated power series in a real variable theta with vector coefficients.

    ``coeffs[k]`` is the coefficient (a complex vector of length `dim`) of
    ``theta**k`` for ``k = 0..order``.  Products are truncated at `order`.
    A series of dimension 1 multiplies any other series as a scalar.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise DimensionError(f"bad coefficient array shape {c.shape}")
        self.coeffs = c

    @classmethod
    def zeros(cls, order, dim):
        return cls(np.zeros((order + 1, dim), dtype=complex))

    @classmethod
    def monomial(cls, order, power, vector):
        vec = np.atleast_1d(np.asarray(vector, dtype=complex))
        s = cls.zeros(order, vec.size)
        if power <= order:
            s.coeffs[power] = vec
        return s

    @property
    def order(self):
        return self.coeffs.shape[0] - 1

    @property
    def dim(self):
        return self.coeffs.shape[1]

    def __getitem__(self, k):
        if k > self.order:
            return np.zeros(self.dim, dtype=complex)
        return self.coeffs[k]

    def copy(self):
        return ThetaSeries(self.coeffs.copy())

    def _check(self, other):
        if not isinstance(other, ThetaSeries):
            raise TypeError("expected a ThetaSeries")
        if other.order != self.order:
            raise DimensionError(f"order mismatch: {self.order} vs {other.order}")
        if other.dim != self.dim and 1 not in (self.dim, other.dim):
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        self._check(other)
        if self.dim != other.dim:
            raise DimensionError("cannot add series of different dimension")
        return ThetaSeries(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return ThetaSeries(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, ThetaSeries):
            return series_mul(self, other)
        return ThetaSeries(self.coeffs * complex(other))

    __rmul__ = __mul__

    def __rmatmul__(self, matrix):
        # coefficientwise matrix action: (M s)_k = M s_k
        return ThetaSeries(self.coeffs @ np.asarray(matrix, dtype=complex).T)

    def conj(self):
        return ThetaSeries(self.coeffs.conj())

    def reciprocal(self):
        """1/s for a scalar series with non-zero constant term."""
        if self.dim != 1:
            raise DimensionError("reciprocal needs a scalar series")
        a = self.coeffs[:, 0]
        if a[0] == 0:
            raise ZeroDivisionError("constant term is zero")
        b = np.zeros_like(a)
        b[0] = 1.0 / a[0]
        for k in range(1, a.size):
            b[k] = -np.dot(a[1:k + 1], b[k - 1::-1][:k]) / a[0]
        return ThetaSeries(b)

    def __truediv__(self, other):
        if isinstance(other, ThetaSeries):
            return self * other.reciprocal()
        return ThetaSeries(self.coeffs / complex(other))

    def __call__(self, theta):
        powers = theta ** np.arange(self.order + 1)
        return powers @ self.coeffs

    def lowest_degree(self, tol=0.0):
        nz = np.nonzero(np.max(np.abs(self.coeffs), axis=1) > tol)[0]
        return int(nz[0]) if nz.size else None

    def __eq__(self, other):
        return isinstance(other, ThetaSeries) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"ThetaSeries(order={self.order}, dim={self.dim})"


def series_mul(a, b):
    """Cauchy product of two theta-series truncated at their common order."""
    a._check(b)
    order = a.order
    dim = max(a.dim, b.dim)
    out = np.zeros((order + 1, dim), dtype=complex)
    ac, bc = a.coeffs, b.coeffs
    for i in range(order + 1):
        if np.any(ac[i]):
            out[i:] += ac[i] * bc[:order + 1 - i]
    return ThetaSeries(out)
