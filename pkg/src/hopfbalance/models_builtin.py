"""The two reference systems: Pyragas-controlled Hopf normal form and a scalar
leukemia model, with analytic Taylor tensors and closed-form quantities.

Closed forms here are used as regression oracles and never by the numeric
pipeline itself.
"""

from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, fsolve
from scipy.special import binom

from .errors import CapabilityError
from .model import BuiltinNonlinearity, PolynomialNonlinearity, TaylorTensors
from .numcore import ThetaSeries

__all__ = ["PyragasNonlinearity", "LeukemiaNonlinearity", "builtin_nonlinearity",
           "BUILTIN_FILES", "pyragas_reference", "leukemia_reference", "builtin_model"]

_DATA = Path(str(resources.files("hopfbalance") / "data"))
BUILTIN_FILES = {"pyragas": _DATA / "pyragas.json", "leukemia": _DATA / "leukemia.json"}


class PyragasNonlinearity(BuiltinNonlinearity):
    """Rotation, Pyragas sine part and cubic terms; parameters kappa, beta, gamma."""

    name = "pyragas"

    def evaluate(self, z1, z2, mu, params):
        k, b, g = params["kappa"], params["beta"], params["gamma"]
        y1, y2 = z1
        y1t, y2t = z2
        ks = k * np.sin(b)
        r2 = y1 * y1 + y2 * y2
        return np.array([y2 - ks * (y2 - y2t) - r2 * (y1 - g * y2),
                         -y1 + ks * (y1 - y1t) - r2 * (g * y1 + y2)])

    def _polynomial(self, params):
        k, b, g = params["kappa"], params["beta"], params["gamma"]
        ks = k * np.sin(b)
        e = {
            (1,): np.array([1 - ks, 0.0]), (3,): np.array([ks, 0.0]),
            (0,): np.array([0.0, -(1 - ks)]), (2,): np.array([0.0, -ks]),
            (0, 0, 0): np.array([-1.0, -g]), (0, 0, 1): np.array([g, -1.0]),
            (0, 1, 1): np.array([-1.0, -g]), (1, 1, 1): np.array([g, -1.0]),
        }
        return TaylorTensors(2, 2, 3, e)

    def taylor(self, z1, z2, mu, params, order):
        poly = PolynomialNonlinearity(self._polynomial(params))
        t = poly.taylor(z1, z2, mu, params, min(order, 3))
        return TaylorTensors(2, 2, order, dict(t.entries))


def _hill_taylor(x0, n, order):
    """Taylor coefficients of ``u(x) = x / (1 + x**n)`` at ``x0 > 0``."""
    j = np.arange(order + 1)
    den = binom(n, j) * x0 ** (n - j)
    den[0] += 1.0
    num = np.zeros(order + 1)
    num[0] = x0
    if order >= 1:
        num[1] = 1.0
    return (ThetaSeries(num) / ThetaSeries(den)).coeffs[:, 0].real


class LeukemiaNonlinearity(BuiltinNonlinearity):
    """``g(y, y_tau) = -y - beta*u(-y) + beta*k*u(-y_tau)``, ``u(x) = x/(1+x**n)``."""

    name = "leukemia"

    def evaluate(self, z1, z2, mu, params):
        b, n, k = params["beta"], params["n"], params["k"]
        x, xt = -z1[0], -z2[0]
        return np.array([-z1[0] - b * x / (1 + x ** n) + b * k * xt / (1 + xt ** n)])

    def taylor(self, z1, z2, mu, params, order):
        b, n, k = params["beta"], params["n"], params["k"]
        x1, x2 = -float(z1[0]), -float(z2[0])
        u1 = _hill_taylor(x1, n, order)
        u2 = _hill_taylor(x2, n, order) if x2 != x1 else u1
        sign = (-1.0) ** np.arange(order + 1)
        entries = {(): self.evaluate(np.atleast_1d(z1), np.atleast_1d(z2), mu, params)}
        for d in range(1, order + 1):
            c1 = -b * sign[d] * u1[d] - (1.0 if d == 1 else 0.0)
            c2 = b * k * sign[d] * u2[d]
            entries[(0,) * d] = np.array([c1])
            entries[(1,) * d] = np.array([c2])
        return TaylorTensors(1, 1, order, entries)

    @staticmethod
    def default_y_guess(params):
        xh = leukemia_reference("x_hat", params)
        return np.array([-xh])


_REGISTRY = {"pyragas": PyragasNonlinearity, "leukemia": LeukemiaNonlinearity}


def builtin_nonlinearity(name):
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise CapabilityError(f"unknown builtin nonlinearity {name!r}") from None


def builtin_model(name, **aux):
    """Load a shipped model and override auxiliary defaults."""
    from dataclasses import replace

    from .model import load_model
    r = load_model(name)
    if aux:
        r = replace(r, aux={**r.aux, **aux})
    return r


# ---------------------------------------------------------------------------
# closed forms

def _pyr(point):
    return (point.get("kappa"), point.get("beta"), point.get("gamma"), point.get("tau"))


def _pyragas_coeffs(point):
    k, b, g, t = _pyr(point)
    ph = b - t * point["omega0"]
    c, s = np.cos(ph), np.sin(ph)
    den = 1 + k * t * c
    return {
        "mu1": -(2 + 2 * k * g * t * s / den),
        "mu2": 2 * k * g ** 2 * t ** 2 * (k * t + c) / den ** 3,
        "mu3": -4 / 3 * k * g ** 3 * t ** 3 * (-1 + 3 * k ** 2 * t ** 2 + 2 * k * t * c) * s
        / den ** 5,
        "omega1": 2 * g / den,
        "omega2": -2 * k * g ** 2 * t ** 2 * s / den ** 3,
        "omega3": -4 / 3 * k * g ** 3 * t ** 3 * (-c + k * t * (-2 + np.cos(2 * ph))) / den ** 5,
    }


def pyragas_reference(quantity, point):
    """Closed-form Pyragas quantities.

    ``point`` is a dict with the needed keys among ``s, omega, omega0, mu,
    tau, kappa, beta, gamma``.  Quantities: ``G``, ``lambda_hat``, ``xi1``,
    ``mu1..mu3``, ``omega1..omega3``, ``z_of_omega``, ``mu_of_omega``,
    ``hopf_residual``, ``hopf_omega``, ``hopf_tau``, ``p2_conditions``,
    ``triple_point``.
    """
    k, b, g, t = _pyr(point)
    if quantity in ("G", "lambda_hat"):
        s = point["s"]
        e = np.exp(-s * t)
        d = s - point["mu"] + k * np.cos(b) * (1 - e)
        if quantity == "G":
            return 1.0 / d
        return -1j * (1 - k * np.sin(b) * (1 - e)) / d
    if quantity == "xi1":
        w, mu = point["omega"], point["mu"]
        return -2 * (1 + 1j * g) / (1j * w - mu + (1 - np.exp(-1j * w * t)) * k * np.cos(b))
    if quantity in ("mu1", "mu2", "mu3", "omega1", "omega2", "omega3"):
        return _pyragas_coeffs(point)[quantity]
    if quantity in ("z_of_omega", "mu_of_omega"):
        w = np.asarray(point["omega"], dtype=float)
        z = (w - 1 + k * np.sin(b) - k * np.sin(b - w * t)) / (2 * g)
        if quantity == "z_of_omega":
            return z
        return k * np.cos(b) - k * np.cos(b - w * t) - 2 * z
    if quantity == "hopf_residual":
        w, mu = point["omega"], point["mu"]
        return np.array([-mu + k * np.cos(b) - k * np.cos(b - w * t),
                         k * np.sin(b) - k * np.sin(b - w * t) - 1 + w])
    if quantity in ("hopf_omega", "hopf_tau"):
        mu = point["mu"]
        sw = point.get("omega_sign", 1)
        rad = np.sqrt(k ** 2 - (-mu + k * np.cos(b)) ** 2)
        w = 1 - k * np.sin(b) + sw * rad
        if quantity == "hopf_omega":
            return w
        st = point.get("arccos_sign", 1)
        n = point.get("branch", 0)
        return (st * np.arccos(np.cos(b) - mu / k) + b + 2 * np.pi * n) / w
    if quantity == "p2_conditions":
        ph = b - point["omega0"] * t
        return (1 + k * t * np.cos(ph), k * t ** 2 * np.sin(ph),
                1 + k * t * np.cos(ph) + g * k * t * np.sin(ph))
    if quantity == "triple_point":
        guess = point.get("guess", (1.08, -0.0477, 2.087))

        def eqs(x):
            w, kk, tt = x
            q = {"kappa": kk, "beta": b, "gamma": g, "tau": tt, "omega0": w}
            c = _pyragas_coeffs(q)
            return [kk * np.sin(b) - kk * np.sin(b - w * tt) - 1 + w, c["mu1"], c["mu2"]]
        w, kk, tt = fsolve(eqs, guess, xtol=1e-14)
        q = {"kappa": kk, "beta": b, "gamma": g, "tau": tt, "omega0": w}
        return {"kappa": kk, "tau": tt, "omega0": w, "mu3": _pyragas_coeffs(q)["mu3"]}
    raise CapabilityError(f"unknown Pyragas quantity {quantity!r}")


def leukemia_reference(quantity, point):
    """Closed-form leukemia quantities.

    ``point`` holds ``beta, n, k`` and ``delta`` (or ``tau`` for
    ``critical_point``).  Quantities: ``beta1``, ``x_hat``, ``omega``,
    ``tau``, ``D1``, ``D2``, ``critical_point``.
    """
    b, n, k = point["beta"], point["n"], point["k"]
    if quantity == "critical_point":
        t = point["tau"]
        lo, hi = point.get("bracket", (1e-6, b * (k - 1) * (1 - 1e-9)))

        def f(d):
            return leukemia_reference("tau", {**point, "delta": d}) - t
        grid = np.linspace(lo, hi, 400)
        vals = []
        for d in grid:
            with np.errstate(invalid="ignore"):
                vals.append(f(d))
        vals = np.array(vals)
        for i in range(len(grid) - 1):
            if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] < 0:
                d = brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
                w = leukemia_reference("omega", {**point, "delta": d})
                return {"delta": d, "omega": w, "tau": t}
        raise CapabilityError("no Hopf point for this tau in the bracket")
    d = point.get("delta", point.get("mu"))
    if quantity == "x_hat":
        base = (b / d) * (k - 1) - 1
        return base ** (1.0 / n) if base > 0 else 0.0
    b1 = d * ((n - 1) * (k - 1) * b - n * d) / (b * (k - 1) ** 2)
    if quantity == "beta1":
        return b1
    if quantity == "D1":
        return -1 - b1
    if quantity == "D2":
        return k * b1
    w = np.sqrt((b1 * k) ** 2 - (d - b1) ** 2)
    if quantity == "omega":
        return w
    if quantity == "tau":
        return np.arccos((b1 - d) / (b1 * k)) / w
    raise CapabilityError(f"unknown leukemia quantity {quantity!r}")
