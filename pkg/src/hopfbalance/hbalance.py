"""Graded harmonic balance: Fourier coefficients c_j, harmonics a_j and xi_k.

The periodic orbit near a critical point is written as

    y(t) = yhat + sum_j a_j(theta) exp(i j omega t),   a_{-j} = conj(a_j),

with ``a_1 = v theta + (terms of degree >= 2 in the complement of v)``.
Every ``a_j`` is a :class:`~hopfbalance.numcore.ThetaSeries` of order
``2q``.  Balancing harmonic ``j`` of the feedback equation gives

    L_j a_j + G(i j omega) c_j(a) = 0,        L_j = I + GJ(i j omega),

solved degree by degree in theta, because the theta^d coefficient of the
nonlinear remainder ``c_j`` only involves coefficients of ``a`` of degree
below ``d``.  For ``j = 1`` only the part transverse to ``v`` is solved and
the remaining scalar equation is the bifurcation equation

    lambda_hat + 1 + sum_k theta^(2k) xi_k = 0.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ProjectionError, ResonanceError
from .model import tensors_at
from .numcore import ThetaSeries
from .transfer import linearize, select_eig

__all__ = ["HarmonicState", "BifEquation", "OrbitSamples", "fourier_c", "fourier_all",
           "solve_harmonics", "extract_xi", "assemble_orbit", "harmonic_residual",
           "bifurcation_equation", "time_grid_size"]

MAX_Q = 3
_RESONANCE_COND = 1e12


@dataclass
class HarmonicState:
    """Solved harmonics at one parameter point.

    ``coeffs[j, d]`` is the theta^d coefficient of ``a_j`` for ``j = 0..2q``;
    negative harmonics are the complex conjugates.
    """

    q: int
    coeffs: np.ndarray
    omega: float
    mu: float
    tau: float
    rho: dict
    eig: object
    equilibrium: object = field(default=None, repr=False)
    linear: object = field(default=None, repr=False)
    tensors: object = field(default=None, repr=False)
    complement: str = "hermitian"

    @property
    def m(self):
        return self.coeffs.shape[2]

    def harmonic(self, j):
        """ThetaSeries ``a_j`` for any integer ``j``."""
        if abs(j) > 2 * self.q:
            return ThetaSeries.zeros(2 * self.q, self.m)
        c = self.coeffs[abs(j)]
        return ThetaSeries(c if j >= 0 else c.conj())

    @property
    def a(self):
        return {j: self.harmonic(j) for j in range(-2 * self.q, 2 * self.q + 1)}


@dataclass(frozen=True)
class BifEquation:
    """``lambda_hat + 1 + sum_{k=1..q} theta^(2k) xi_k`` at a point."""

    q: int
    xi: tuple
    lambda_hat: complex
    point: dict
    eig: object = field(default=None, repr=False)

    def __call__(self, theta):
        z = theta * theta
        return self.lambda_hat + 1 + sum(x * z ** (k + 1) for k, x in enumerate(self.xi))


@dataclass(frozen=True)
class OrbitSamples:
    t: np.ndarray
    y: np.ndarray
    max_imag: float


def time_grid_size(max_harmonic, degree):
    """Power-of-two sample count that resolves products of `degree` factors."""
    need = 2 * max_harmonic * max(degree, 1) + 1
    n = 8
    while n < need:
        n *= 2
    return n


def _series_prod(x, y, order):
    """Truncated theta-product of sampled series with shape (order+1, N)."""
    out = np.zeros_like(x)
    for i in range(1, order + 1):
        xi = x[i]
        if not np.any(xi):
            continue
        out[i + 1:] += xi * y[1:order + 1 - i]
    return out


def _slot_signals(coeffs, omega, tau, order, npts):
    """Sampled theta-series of ``h = (y - yhat, y(t - tau) - yhat)``.

    Returns an array of shape (2m, order+1, npts), real valued.
    """
    jmax, deg, m = coeffs.shape[0] - 1, coeffs.shape[1] - 1, coeffs.shape[2]
    top = min(order, deg)
    spec = np.zeros((top + 1, npts, m), dtype=complex)
    for j in range(jmax + 1):
        for d in range(top + 1):
            spec[d, j % npts] += coeffs[j, d]
            if j:
                spec[d, (-j) % npts] += coeffs[j, d].conj()
    # delayed copy: multiply harmonic j by exp(-i j omega tau)
    freq = np.fft.fftfreq(npts, 1.0 / npts)
    shift = np.exp(-1j * freq * omega * tau)[None, :, None]
    y = np.fft.ifft(spec, axis=1).real * npts
    yt = np.fft.ifft(spec * shift, axis=1).real * npts
    out = np.zeros((2 * m, order + 1, npts))
    out[:m, :top + 1] = np.moveaxis(y, 2, 0)
    out[m:, :top + 1] = np.moveaxis(yt, 2, 0)
    return out


def fourier_all(tensors, coeffs, omega, tau, order, jmax=None, npts=None):
    """Fourier coefficients of the nonlinear remainder for every harmonic.

    Parameters
    ----------
    tensors : TaylorTensors
        Must hold every order that can contribute (up to `order`).
    coeffs : ndarray, shape (J+1, D+1, m)
        Harmonic coefficients ``a_{j,d}`` for ``j = 0..J``.
    order : int
        Highest theta degree kept.
    jmax : int, optional
        Highest harmonic returned (default ``J``).

    Returns
    -------
    ndarray, shape (jmax+1, order+1, p)
        ``c[j, d]`` is the theta^d coefficient of ``c_j``.
    """
    J = coeffs.shape[0] - 1
    jmax = J if jmax is None else jmax
    if tensors.order < order:
        raise CapabilityError(f"Fourier coefficients to degree {order} need tensors of "
                              f"order {order}, have {tensors.order}")
    npts = npts or time_grid_size(max(J, jmax, 1), order)
    h = _slot_signals(coeffs, omega, tau, order, npts)
    total = np.zeros((order + 1, npts, tensors.p))
    cache = {}

    def mono(key):
        if key in cache:
            return cache[key]
        if len(key) == 1:
            val = h[key[0]]
        else:
            val = _series_prod(mono(key[:-1]), h[key[-1]], order)
        cache[key] = val
        return val

    for key, coef in tensors.nonlinear():
        if len(key) > order:
            continue
        total += mono(key)[:, :, None] * coef[None, None, :]
    spec = np.fft.fft(total, axis=1) / npts
    out = np.zeros((jmax + 1, order + 1, tensors.p), dtype=complex)
    for j in range(jmax + 1):
        out[j] = spec[:, j % npts, :]
    return out


def fourier_c(tensors, hs, j, order=None):
    """ThetaSeries ``c_j`` for the harmonics in `hs` (default order ``2q``)."""
    order = 2 * hs.q if order is None else order
    c = fourier_all(tensors, hs.coeffs, hs.omega, hs.tau, order, jmax=abs(j))[abs(j)]
    return ThetaSeries(c if j >= 0 else c.conj())


def _closed_loop_solver(lp, j, omega):
    """Return ``c -> -L_j^{-1} G(i j omega) c`` via ``-C (R + B D_j C)^{-1} B c``."""
    s = 1j * j * omega
    K = lp.closed_loop(s)
    if not np.all(np.isfinite(K)) or np.linalg.cond(K) > _RESONANCE_COND:
        raise ResonanceError(f"harmonic {j} is resonant: I + GJ(i*{j}*omega) is singular",
                             harmonic=j)
    B = lp.B.astype(complex)
    C = lp.C.astype(complex)

    def solve(c):
        return -C @ np.linalg.solve(K, B @ c)
    return solve


def _transverse_solver(lp, omega, eig, complement):
    """Solve ``(I-Q) L_1 x = -(I-Q) G(i omega) c`` for ``x`` in the complement of v."""
    m = eig.v.size
    s = 1j * omega
    Gs = lp.G(s)
    L1 = np.eye(m) + Gs @ lp.Dj(s)
    P = np.eye(m) - np.outer(eig.v, eig.w)
    row = eig.v.conj() if complement == "hermitian" else eig.w
    border = np.zeros((m + 1, m + 1), dtype=complex)
    border[:m, :m] = P @ L1
    border[:m, m] = eig.v
    border[m, :m] = row
    if m > 1 and np.linalg.cond(border) > _RESONANCE_COND:
        raise ProjectionError("restricted first-harmonic system is singular")
    PG = P @ Gs

    def solve(c):
        rhs = np.zeros(m + 1, dtype=complex)
        rhs[:m] = -PG @ c
        return np.linalg.solve(border, rhs)[:m]
    return solve, Gs


def solve_harmonics(r, point, q, eq=None, eig=None, complement="hermitian", tensors=None):
    """Run the graded harmonic-balance recursion to theta-order ``2q``.

    Parameters
    ----------
    r : Realization
    point : dict or CriticalPoint
        Needs ``omega``, ``mu``, ``tau`` and optionally ``rho`` (a
        :class:`~hopfbalance.hopf.CriticalPoint` is accepted as well).
    q : int
        Order, 1 to 3.
    eq : Equilibrium, optional
        Re-solved when omitted.
    eig : EigTriple, optional
        Tracking seed for the characteristic function.
    complement : {"hermitian", "bilinear"}
        Complement of ``v`` holding the higher first-harmonic terms:
        ``v^H x = 0`` or ``w^T x = 0``.

    Returns
    -------
    HarmonicState

    Raises
    ------
    ResonanceError
        ``I + GJ(i j omega)`` singular for some ``j != 1``.
    ProjectionError
        Restricted first-harmonic system singular.
    """
    omega, mu, tau, rho = _unpack(point)
    if not 1 <= q <= MAX_Q:
        raise CapabilityError(f"order q={q} not supported (1..{MAX_Q})")
    if complement not in ("hermitian", "bilinear"):
        raise ValueError("complement must be 'hermitian' or 'bilinear'")
    eq, lp = linearize(r, mu, tau, rho, eq=eq)
    params = lp.params
    trip = select_eig(lp.GJ(1j * omega), eig, max_jump=np.inf if eig is None else 0.5)
    T = tensors if tensors is not None else tensors_at(r, eq, 2 * q + 1, params)
    m = r.m
    Q2 = 2 * q
    coeffs = np.zeros((Q2 + 1, Q2 + 1, m), dtype=complex)
    coeffs[1, 1] = trip.v
    solvers = {j: _closed_loop_solver(lp, j, omega) for j in range(Q2 + 1) if j != 1}
    solve1, _ = _transverse_solver(lp, omega, trip, complement)
    for d in range(2, Q2 + 1):
        c = fourier_all(T, coeffs, omega, tau, d, jmax=min(d, Q2))
        for j in range(0, min(d, Q2) + 1):
            cjd = c[j, d]
            if not np.any(cjd):
                continue
            coeffs[j, d] = solve1(cjd) if j == 1 else solvers[j](cjd)
        coeffs[0, d] = coeffs[0, d].real
    return HarmonicState(q, coeffs, float(omega), float(mu), float(tau), dict(rho or {}), trip,
                         eq, lp, T, complement)


def _unpack(point):
    if isinstance(point, dict):
        return point["omega"], point["mu"], point["tau"], point.get("rho")
    return point.omega0, point.mu0, point.tau0, point.rho


def extract_xi(r, hs):
    """Coefficients ``xi_1..xi_q`` of the bifurcation equation.

    ``xi_k = (lambda_hat + 1) w^T a_{1,2k+1} + w^T G(i omega) [c_1]_{2k+1}``,
    where ``a_{1,2q+1}`` lies beyond the stored order and is taken as zero.
    """
    q = hs.q
    D = 2 * q + 1
    c = fourier_all(hs.tensors, hs.coeffs, hs.omega, hs.tau, D, jmax=1)[1]
    lp = hs.linear
    wG = hs.eig.w @ lp.G(1j * hs.omega)
    lam1 = hs.eig.lambda_hat + 1
    xi = []
    for k in range(1, q + 1):
        d = 2 * k + 1
        a1 = hs.coeffs[1, d] if d <= 2 * q else np.zeros(hs.m)
        xi.append(complex(lam1 * (hs.eig.w @ a1) + wG @ c[d]))
    point = {"omega": hs.omega, "mu": hs.mu, "tau": hs.tau, "rho": dict(hs.rho)}
    return BifEquation(q, tuple(xi), hs.eig.lambda_hat, point, hs.eig)


def bifurcation_equation(r, point, q, **kw):
    """Convenience wrapper: :func:`solve_harmonics` then :func:`extract_xi`."""
    return extract_xi(r, solve_harmonics(r, point, q, **kw))


def assemble_orbit(hs, theta, npts=256, max_theta=0.5):
    """Sample ``y(t) = yhat + sum_j a_j(theta) e^{i j omega t}`` over one period."""
    if abs(theta) > max_theta:
        raise ValueError(f"|theta| = {abs(theta)} exceeds the bound {max_theta}")
    period = 2 * np.pi / hs.omega
    t = np.arange(npts) * period / npts
    y = np.tile(hs.equilibrium.y_hat.astype(complex), (npts, 1))
    powers = theta ** np.arange(hs.coeffs.shape[1])
    for j in range(-2 * hs.q, 2 * hs.q + 1):
        aj = powers @ hs.harmonic(j).coeffs
        y += np.exp(1j * j * hs.omega * t)[:, None] * aj[None, :]
    return OrbitSamples(t, y.real, float(np.max(np.abs(y.imag))))


def harmonic_residual(hs):
    """Balance residual per harmonic, as arrays of theta coefficients.

    Returns a dict ``j -> ndarray (2q+1, m)``: ``L_j a_j + G c_j`` for
    ``j != 1`` and ``(I - Q)(L_1 a_1 + G c_1)`` for ``j = 1``.
    """
    Q2 = 2 * hs.q
    c = fourier_all(hs.tensors, hs.coeffs, hs.omega, hs.tau, Q2)
    lp = hs.linear
    out = {}
    for j in range(Q2 + 1):
        s = 1j * j * hs.omega
        K = lp.closed_loop(s)
        # multiply the balance through by C K^{-1} B form: a_j + C K^{-1} B c_j
        res = hs.coeffs[j] + (hs.linear.C @ np.linalg.solve(K, lp.B @ c[j].T)).T
        if j == 1:
            Gs = lp.G(s)
            L1 = np.eye(hs.m) + Gs @ lp.Dj(s)
            P = np.eye(hs.m) - np.outer(hs.eig.v, hs.eig.w)
            res = (P @ (L1 @ hs.coeffs[1].T + Gs @ c[1].T)).T
        out[j] = res
    return out
