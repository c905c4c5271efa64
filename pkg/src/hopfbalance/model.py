"""Feedback realization of a DDE, Taylor tensors of its nonlinearity, equilibria.

A model is written as ::

    x'(t) = A0 x(t) + A1 x(t - tau) + B g(y(t), y(t - tau), mu)
    y(t)  = -C x(t)

with ``x`` in R^n, ``y`` in R^m and ``g`` valued in R^p.  Matrices may depend
on the bifurcation parameter and on auxiliary parameters.
"""

import json
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb, factorial
from pathlib import Path

import jsonschema
import numpy as np

from . import _expr
from .errors import (CapabilityError, ModelParseError, PrecisionError, SingularityError,
                     ValidationError)
from .numcore import NewtonConfig, fd_weights, newton_solve

__all__ = ["TaylorTensors", "Realization", "Equilibrium", "PolynomialNonlinearity",
           "CallableNonlinearity", "BuiltinNonlinearity", "find_equilibrium", "tensors_at",
           "load_model", "model_from_dict", "multi_indices"]

MAX_TENSOR_ORDER = 7


def multi_indices(nslots, order):
    """Sorted multi-indices (tuples of 0-based slots) of exactly `order` entries."""
    return list(combinations_with_replacement(range(nslots), order))


def _counts(index, nslots):
    c = [0] * nslots
    for s in index:
        c[s] += 1
    return c


def _index_factorial(index, nslots):
    out = 1
    for c in _counts(index, nslots):
        out *= factorial(c)
    return out


@dataclass(frozen=True)
class TaylorTensors:
    """Taylor coefficients of ``g`` at ``(yhat, yhat)``.

    ``entries`` maps sorted tuples of 0-based input slots to length-`p`
    vectors.  Slots ``0..m-1`` are the components of ``z1 = y(t)`` and slots
    ``m..2m-1`` those of ``z2 = y(t - tau)``.  Each value is the partial
    derivative divided by the multi-index factorial, so that
    ``g(zhat + h) = sum(T[alpha] * h**alpha)``.
    """

    m: int
    p: int
    order: int
    entries: dict = field(default_factory=dict)

    @property
    def nslots(self):
        return 2 * self.m

    def coefficient(self, multi_index):
        key = tuple(sorted(multi_index))
        if len(key) > self.order:
            raise CapabilityError(f"tensor order {len(key)} beyond stored order {self.order}")
        return self.entries.get(key, np.zeros(self.p))

    def derivative(self, multi_index):
        """Full partial derivative for a multi-index (any slot ordering)."""
        key = tuple(sorted(multi_index))
        return self.coefficient(key) * _index_factorial(key, self.nslots)

    @property
    def value(self):
        return self.entries.get((), np.zeros(self.p))

    def _block(self, offset):
        d = np.zeros((self.p, self.m))
        for i in range(self.m):
            d[:, i] = self.coefficient((offset + i,))
        return d

    @property
    def D1(self):
        return self._block(0)

    @property
    def D2(self):
        return self._block(self.m)

    def nonlinear(self):
        """Entries of order >= 2 with a non-zero value, in sorted order."""
        return sorted(((k, v) for k, v in self.entries.items()
                       if len(k) >= 2 and np.any(v != 0)), key=lambda kv: (len(kv[0]), kv[0]))

    def evaluate(self, h):
        """Polynomial value ``sum T[alpha] h**alpha`` at a displacement `h` (length 2m)."""
        h = np.asarray(h, dtype=float)
        total = np.zeros(self.p)
        for k, v in self.entries.items():
            total = total + v * np.prod([h[s] for s in k]) if k else total + v
        return total

    def truncated(self, order):
        return TaylorTensors(self.m, self.p, order,
                             {k: v for k, v in self.entries.items() if len(k) <= order})


class PolynomialNonlinearity:
    """``g`` given by stored Taylor tensors around a reference point."""

    kind = "polynomial"

    def __init__(self, tensors, reference_point=None):
        self.tensors = tensors
        self.reference = (np.zeros(tensors.nslots) if reference_point is None
                          else np.asarray(reference_point, dtype=float))
        # the polynomial is exact, so every higher tensor is zero
        self.max_order = MAX_TENSOR_ORDER

    def evaluate(self, z1, z2, mu, params):
        z = np.concatenate([np.atleast_1d(z1), np.atleast_1d(z2)])
        return self.tensors.evaluate(z - self.reference)

    def taylor(self, z1, z2, mu, params, order):
        z = np.concatenate([np.atleast_1d(z1), np.atleast_1d(z2)]).astype(float)
        d = z - self.reference
        t = self.tensors
        if not np.any(d):
            if order == t.order:
                return t
            return TaylorTensors(t.m, t.p, order,
                                 {k: v for k, v in t.entries.items() if len(k) <= order})
        # binomial re-centering of every stored monomial
        ns = t.nslots
        new = {}
        for key, val in t.entries.items():
            alpha = _counts(key, ns)
            ranges = [range(a + 1) for a in alpha]
            for beta in np.ndindex(*[len(r) for r in ranges]):
                w = 1.0
                for s in range(ns):
                    w *= comb(alpha[s], beta[s]) * d[s] ** (alpha[s] - beta[s])
                if w == 0.0:
                    continue
                bkey = tuple(s for s in range(ns) for _ in range(beta[s]))
                if len(bkey) <= order:
                    new[bkey] = new.get(bkey, 0.0) + w * val
        return TaylorTensors(t.m, t.p, order, new)


class CallableNonlinearity:
    """``g`` given as a Python callable ``evaluator(z1, z2, mu, params)``.

    Taylor tensors are obtained by tensor-product central finite differences
    of fourth-order accuracy.
    """

    kind = "callable"

    def __init__(self, evaluator, max_order=MAX_TENSOR_ORDER):
        self.evaluator = evaluator
        self.max_order = max_order

    def evaluate(self, z1, z2, mu, params):
        return np.atleast_1d(np.asarray(self.evaluator(z1, z2, mu, params), dtype=float))

    def taylor(self, z1, z2, mu, params, order):
        return fd_tensors(lambda z1_, z2_: self.evaluate(z1_, z2_, mu, params), z1, z2, order)


class BuiltinNonlinearity:
    """Base class for nonlinearities with analytic Taylor tensors."""

    kind = "builtin"
    name = ""
    max_order = MAX_TENSOR_ORDER

    def evaluate(self, z1, z2, mu, params):
        raise NotImplementedError

    def taylor(self, z1, z2, mu, params, order):
        raise NotImplementedError


def _stencil(count):
    if count == 0:
        return np.array([0.0]), np.array([1.0])
    r = (count + 1) // 2 + 1
    offs = np.arange(-r, r + 1, dtype=float)
    return offs, fd_weights(count, offs)


def fd_tensors(fun, z1, z2, order):
    """Taylor tensors of ``fun(z1, z2)`` at a point by finite differences.

    Each mixed derivative uses a tensor product of 1-D central stencils of
    fourth-order accuracy; the step for total order ``n`` is
    ``eps**(1/(n+4)) * max(1, |z|)``.
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    m = z1.size
    z = np.concatenate([z1, z2])
    ns = 2 * m
    g0 = np.atleast_1d(fun(z1, z2))
    p = g0.size
    scale = max(1.0, float(np.max(np.abs(z))))
    eps = np.finfo(float).eps
    cache = {}

    def at(disp):
        key = tuple(disp)
        if key not in cache:
            zz = z + np.array(disp)
            cache[key] = np.atleast_1d(fun(zz[:m], zz[m:]))
        return cache[key]

    entries = {(): g0.astype(float)}
    for n in range(1, order + 1):
        h = eps ** (1.0 / (n + 4)) * scale
        if h * scale < np.finfo(float).tiny:
            raise PrecisionError("finite-difference step underflow")
        for key in multi_indices(ns, n):
            counts = _counts(key, ns)
            stencils = [_stencil(c) for c in counts]
            acc = np.zeros(p)
            for combo in np.ndindex(*[len(s[0]) for s in stencils]):
                w = 1.0
                disp = [0.0] * ns
                for s in range(ns):
                    offs, wts = stencils[s]
                    w *= wts[combo[s]]
                    disp[s] = offs[combo[s]] * h
                if w != 0.0:
                    acc = acc + w * at(disp)
            deriv = acc / h ** n
            entries[key] = deriv / _index_factorial(key, ns)
    return TaylorTensors(m, p, order, entries)


@dataclass(frozen=True)
class Realization:
    """A DDE in feedback form.

    Matrix attributes are callables ``params -> ndarray`` where ``params``
    is the merged parameter dictionary built by :meth:`params`.
    """

    name: str
    n: int
    m: int
    p: int
    A0: object
    A1: object
    B: object
    C: object
    g: object
    mu_name: str = "mu"
    aux: dict = field(default_factory=dict)
    mu_default: float = 0.0
    y_guess: object = None
    hopf_guess: object = None
    source: dict = field(default=None, compare=False, repr=False)

    @property
    def aux_names(self):
        return tuple(self.aux)

    def params(self, mu=None, tau=None, rho=None):
        """Merge defaults, overrides `rho`, `tau` and `mu` into one dictionary."""
        out = dict(self.aux)
        if rho:
            out.update(rho)
        if tau is not None:
            out["tau"] = float(tau)
        mu = self.mu_default if mu is None else float(mu)
        out[self.mu_name] = mu
        out["mu"] = mu
        return out

    def matrices(self, params):
        mats = tuple(np.atleast_2d(np.asarray(f(params), dtype=float))
                     for f in (self.A0, self.A1, self.B, self.C))
        _check_dims(self, *mats)
        return mats

    def g_eval(self, y1, y2, mu, params):
        return np.atleast_1d(self.g.evaluate(np.atleast_1d(y1), np.atleast_1d(y2), mu, params))

    def rhs(self, x, x_tau, mu, params, mats=None):
        """State derivative f(x, x_tau, mu) of the original DDE."""
        A0, A1, B, C = mats or self.matrices(params)
        return A0 @ x + A1 @ x_tau + B @ self.g_eval(-C @ x, -C @ x_tau, mu, params)

    def default_y_guess(self, params):
        if self.y_guess is None:
            return np.zeros(self.m)
        if callable(self.y_guess):
            return np.atleast_1d(np.asarray(self.y_guess(params), dtype=float))
        return np.atleast_1d(np.asarray(self.y_guess, dtype=float))

    def is_minimal(self, params=None):
        """Kalman rank test on ``(A0 + A1, B, C)``; a necessary heuristic only."""
        A0, A1, B, C = self.matrices(params or self.params())
        A = A0 + A1
        n = self.n
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
        return (np.linalg.matrix_rank(ctrb) == n) and (np.linalg.matrix_rank(obsv) == n)


def _check_dims(r, A0, A1, B, C):
    n, m, p = r.n, r.m, r.p
    for label, mat, shape in (("A0", A0, (n, n)), ("A1", A1, (n, n)), ("B", B, (n, p)),
                              ("C", C, (m, n))):
        if mat.shape != shape:
            raise ValidationError(f"{label} has shape {mat.shape}, expected {shape}")


@dataclass(frozen=True)
class Equilibrium:
    y_hat: np.ndarray
    x_hat: np.ndarray
    mu: float
    tau: float
    rho: dict
    residual: float = 0.0
    iterations: int = 0


def static_gain(r, params):
    """``G(0) = C (-A0 - A1)^{-1} B``, or None when A0 + A1 is singular."""
    A0, A1, B, C = r.matrices(params)
    A = A0 + A1
    if np.linalg.cond(A) > 1e12:
        return None
    return C @ np.linalg.solve(-A, B)


def find_equilibrium(r, mu, tau=None, rho=None, y0=None, cfg=None):
    """Solve ``y = -G(0) g(y, y, mu)`` by Newton's method.

    When ``A0 + A1`` is singular (``G(0)`` undefined) the state form
    ``(A0 + A1) x + B g(-Cx, -Cx) = 0`` is solved instead.
    """
    params = r.params(mu, tau, rho)
    mu = params["mu"]
    cfg = cfg or NewtonConfig(tol_residual=1e-13)
    A0, A1, B, C = r.matrices(params)
    y0 = r.default_y_guess(params) if y0 is None else np.atleast_1d(np.asarray(y0, float))
    G0 = static_gain(r, params)
    if G0 is not None:
        def resid(y):
            return y + G0 @ r.g_eval(y, y, mu, params)
        y, info = newton_solve(resid, y0, cfg, full_output=True)
        gy = r.g_eval(y, y, mu, params)
        x = np.linalg.solve(-(A0 + A1), B @ gy)
    else:
        x0 = np.linalg.lstsq(-C, y0, rcond=None)[0]

        def resid(x):
            return (A0 + A1) @ x + B @ r.g_eval(-C @ x, -C @ x, mu, params)
        try:
            x, info = newton_solve(resid, x0, cfg, full_output=True)
        except SingularityError as exc:
            raise SingularityError("static matrix A0+A1 singular and state-form Newton "
                                   "failed", where=mu) from exc
        y = -C @ x
    return Equilibrium(np.asarray(y, float), np.asarray(x, float), mu, params.get("tau"),
                       dict(rho or {}), info["residual"], info["iterations"])


def tensors_at(r, eq, order, params=None):
    """Taylor tensors of ``g`` at ``(yhat, yhat, mu)`` up to `order`."""
    if order > MAX_TENSOR_ORDER:
        raise CapabilityError(f"tensor order {order} > {MAX_TENSOR_ORDER}")
    if order > r.g.max_order:
        raise CapabilityError(f"nonlinearity supports order <= {r.g.max_order}")
    params = params or r.params(eq.mu, eq.tau, eq.rho)
    return r.g.taylor(eq.y_hat, eq.y_hat, eq.mu, params, order)


# ---------------------------------------------------------------------------
# model files

_MATRIX = {"type": "array", "items": {"type": "array",
                                      "items": {"type": ["number", "string"]}}}
MODEL_SCHEMA = {
    "type": "object",
    "required": ["name", "n", "m", "p", "A0", "A1", "B", "C", "g", "mu_name", "aux"],
    "properties": {
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 1},
        "A0": _MATRIX, "A1": _MATRIX, "B": _MATRIX, "C": _MATRIX,
        "mu_name": {"type": "string"},
        "mu_default": {"type": "number"},
        "aux": {"type": "object", "additionalProperties": {"type": "number"},
                "required": ["tau"]},
        "y_guess": {"type": "array", "items": {"type": "number"}},
        "hopf_guess": {"type": "object", "additionalProperties": {"type": "number"}},
        "g": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["builtin", "polynomial"]},
                "name": {"type": "string"},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
                "order": {"type": "integer", "minimum": 1, "maximum": MAX_TENSOR_ORDER},
                "reference_point": {"type": "array", "items": {"type": "number"}},
                "tensors": {"type": "array", "items": {
                    "type": "object", "required": ["multi_index", "value"],
                    "properties": {
                        "multi_index": {"type": "array", "items": {"type": "integer",
                                                                   "minimum": 1}},
                        "value": {"type": "array", "items": {"type": "number"}}}}},
            },
        },
    },
}


def _matrix_fn(rows, label, names):
    if not rows:
        raise ModelParseError("empty matrix", label)
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ValidationError(f"{label}: ragged rows")
    if all(isinstance(v, (int, float)) for row in rows for v in row):
        const = np.array(rows, dtype=float)
        return lambda params: const
    cells = []
    for i, row in enumerate(rows):
        out_row = []
        for j, v in enumerate(row):
            if isinstance(v, str):
                try:
                    out_row.append(_expr.compile_expr(v, names))
                except _expr.ExprError as exc:
                    raise ModelParseError(str(exc), f"{label}[{i}][{j}]") from exc
            else:
                out_row.append(float(v))
        cells.append(out_row)

    def build(params):
        return np.array([[c(params) if callable(c) else c for c in row] for row in cells])
    return build


def model_from_dict(doc, check_minimal=True):
    """Build a validated :class:`Realization` from a parsed model document."""
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelParseError(exc.message, path) from exc
    n, m, p = doc["n"], doc["m"], doc["p"]
    gdoc = doc["g"]
    aux = {**gdoc.get("params", {}), **doc["aux"]}
    names = set(aux) | {doc["mu_name"], "mu", "tau"}
    mats = {k: _matrix_fn(doc[k], k, names) for k in ("A0", "A1", "B", "C")}
    if gdoc["type"] == "builtin":
        from .models_builtin import builtin_nonlinearity
        if "name" not in gdoc:
            raise ModelParseError("builtin nonlinearity needs a name", "g")
        g = builtin_nonlinearity(gdoc["name"])
    else:
        if "tensors" not in gdoc or "order" not in gdoc:
            raise ModelParseError("polynomial nonlinearity needs order and tensors", "g")
        entries = {}
        for i, t in enumerate(gdoc["tensors"]):
            idx = t["multi_index"]
            if any(s > 2 * m for s in idx):
                raise ValidationError(f"g/tensors/{i}: slot beyond 2m={2 * m}")
            if list(idx) != sorted(idx):
                raise ValidationError(f"g/tensors/{i}: multi_index must be sorted")
            if len(idx) > gdoc["order"]:
                raise ValidationError(f"g/tensors/{i}: multi_index longer than order")
            if len(t["value"]) != p:
                raise ValidationError(f"g/tensors/{i}: value length {len(t['value'])} != p={p}")
            key = tuple(s - 1 for s in idx)
            entries[key] = entries.get(key, 0.0) + np.array(t["value"], dtype=float)
        ref = gdoc.get("reference_point")
        if ref is not None and len(ref) != 2 * m:
            raise ValidationError("g/reference_point must have length 2m")
        g = PolynomialNonlinearity(TaylorTensors(m, p, gdoc["order"], entries), ref)
    y_guess = doc.get("y_guess")
    if y_guess is not None and len(y_guess) != m:
        raise ValidationError("y_guess must have length m")
    if gdoc["type"] == "builtin" and y_guess is None:
        y_guess = getattr(g, "default_y_guess", None)
    r = Realization(doc["name"], n, m, p, mats["A0"], mats["A1"], mats["B"], mats["C"], g,
                    doc["mu_name"], aux, float(doc.get("mu_default", 0.0)), y_guess,
                    doc.get("hopf_guess"), source=doc)
    r.matrices(r.params())  # dimension validation at defaults
    if check_minimal and not r.is_minimal():
        warnings.warn(f"model {r.name!r}: realization fails the Kalman rank test on "
                      "(A0+A1, B, C); it may not be minimal", stacklevel=2)
    return r


def load_model(path, check_minimal=True):
    """Load a JSON model file or a builtin model name (``pyragas``, ``leukemia``)."""
    p = Path(path)
    if not p.exists():
        from .models_builtin import BUILTIN_FILES
        if str(path) in BUILTIN_FILES:
            p = BUILTIN_FILES[str(path)]
        else:
            raise FileNotFoundError(f"no model file or builtin named {path!r}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"invalid JSON: {exc}", str(p)) from exc
    return model_from_dict(doc, check_minimal=check_minimal)
