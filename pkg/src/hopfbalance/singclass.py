"""Classification of the bifurcation equation by its low-order coefficients.

Amplitude families (``q = 1, 2, 3``) use the unfolding

    mu_q z^q + ... + mu_1 z - (mu - mu_0) = 0,      z = theta**2 > 0,

and frequency families (``p = 2, 3``) the unfolding

    eps z + s^p + eps_1 s + eps_0 = 0,               s = mu - mu_0 (shifted).

Only sign and vanishing rules are applied; no formal equivalence is computed.
Every diagram label has a *signature*: the number of small cycles on the
successive intervals of ``mu`` from left to right.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (CodimensionOverflowError, HopfBalanceError, IndeterminateOrderError,
                     ValidationError)

__all__ = ["NormalFormReport", "classify_amplitude", "classify_coefficients",
           "classify_frequency", "frequency_unfolding", "amplitude_signature",
           "frequency_signature", "count_amplitude_cycles", "LABEL_SIGNATURES",
           "VarietyScan", "scan_varieties", "STABILITY_ASSUMPTION"]

STABILITY_ASSUMPTION = ("stability labels assume the equilibrium is asymptotically stable "
                        "for mu < mu_0")

# Signatures for a positive leading coefficient; mirrored when it is negative.
LABEL_SIGNATURES = {
    "q1_supercritical": (0, 1),
    "q1_subcritical": (1, 0),
    "q2_supercritical": (0, 1),
    "q2_fold": (0, 2, 1),
    "q3_region_1": (0, 1),
    "q3_region_2": (0, 1, 3, 1),
    "q3_region_3": (0, 2, 3, 1),
    "q3_region_4": (0, 2, 1),
    "p2_bubble": (0, 1, 0),
    "p2_empty": (0,),
    "p2_inverted_gap": (1, 0, 1),
    "p2_inverted_full": (1,),
    "p3_plain": (1, 0),
    "p3_bubble_plus_branch": (1, 0, 1, 0),
}


@dataclass(frozen=True)
class NormalFormReport:
    family: str
    order: int
    leading_coeff: float
    unfolding: dict
    varieties: dict
    diagram_label: str
    criticality: str = None
    mirrored: bool = False
    signature: tuple = ()
    notes: tuple = field(default=(STABILITY_ASSUMPTION,))

    def as_dict(self):
        return {"family": self.family, "order": self.order,
                "leading_coeff": self.leading_coeff, "unfolding": dict(self.unfolding),
                "varieties": dict(self.varieties), "diagram_label": self.diagram_label,
                "criticality": self.criticality, "mirrored": self.mirrored,
                "signature": list(self.signature), "notes": list(self.notes)}


def _signature(label, mirrored):
    sig = LABEL_SIGNATURES.get(label, ())
    return tuple(reversed(sig)) if mirrored else sig


def amplitude_signature(label, mirrored=False):
    """Cycle counts per ``mu`` interval for an amplitude-family label."""
    return _signature(label, mirrored)


frequency_signature = amplitude_signature


def _scale(values):
    return max([abs(v) for v in values] + [0.0])


def classify_coefficients(mu, tol=None, order=None):
    """Classify from ``mu = (mu_1, ..., mu_Q)``.

    Parameters
    ----------
    mu : sequence of float
        Amplitude coefficients, index 0 holding ``mu_1``.
    tol : float, optional
        Vanishing threshold.  Defaults to ``1e-7 * max|mu_k|``.
    order : int, optional
        Force the family order ``q``; lower coefficients become unfolding
        parameters even when they are large.

    Raises
    ------
    IndeterminateOrderError
        Every coefficient is below `tol`.
    """
    mu = [float(x) for x in mu]
    if not mu or not all(np.isfinite(mu)):
        raise ValidationError("coefficients must be a non-empty finite sequence")
    scale = _scale(mu)
    tol = 1e-7 * scale if tol is None else tol
    if order is None:
        big = [k for k, x in enumerate(mu, start=1) if abs(x) > tol]
        if not big:
            raise IndeterminateOrderError("all amplitude coefficients vanish; increase q")
        q = big[0]
    else:
        q = int(order)
        if not 1 <= q <= min(3, len(mu)):
            raise ValidationError(f"order {q} not available")
        if abs(mu[q - 1]) <= tol:
            raise IndeterminateOrderError(f"leading coefficient mu_{q} vanishes")
    if q > 3:
        raise CodimensionOverflowError("first non-vanishing coefficient beyond mu_3")
    lead = mu[q - 1]
    s = 1.0 if lead > 0 else -1.0
    unf = {f"mu{k}": mu[k - 1] for k in range(1, q)}
    m1 = mu[0]
    if abs(m1) <= tol:
        crit = "degenerate"
    else:
        crit = "supercritical" if m1 > 0 else "subcritical"
    var = {}
    if q == 1:
        label = "q1_supercritical" if lead > 0 else "q1_subcritical"
        return NormalFormReport("amplitude_q1", 1, lead, unf, var, label, crit, False,
                                LABEL_SIGNATURES[label])
    # normalise so the leading coefficient is +1
    t = [x / abs(lead) * s for x in mu[:q]]
    if q == 2:
        var["H0"] = mu[0]
        on = abs(mu[0]) <= tol
        label = "q2_H0" if on else ("q2_supercritical" if t[0] > 0 else "q2_fold")
        return NormalFormReport("amplitude_q2", 2, lead, unf, var, label, crit, s < 0,
                                _signature(label, s < 0))
    m1, m2, m3 = mu[0], mu[1], mu[2]
    h1 = 3 * m1 * m3 - m2 * m2
    d = 4 * m1 * m3 - m2 * m2
    var["H0"] = m1
    var["H1"] = h1
    var["D"] = d
    var["H1_D_branch"] = bool(m2 * m3 <= 0)
    vtol = 2 * tol * scale
    a1, a2 = t[0], t[1]
    if abs(m1) <= tol:
        label = "q3_H0"
    elif a2 < 0 and abs(h1) <= vtol and a1 > 0:
        label = "q3_H1"
    elif a2 < 0 and abs(d) <= vtol and a1 > 0:
        label = "q3_D"
    elif a1 < 0:
        label = "q3_region_4"
    elif a2 >= 0 or a2 * a2 < 3 * a1:
        label = "q3_region_1"
    elif a2 * a2 < 4 * a1:
        label = "q3_region_2"
    else:
        label = "q3_region_3"
    return NormalFormReport("amplitude_q3", 3, lead, unf, var, label, crit, s < 0,
                            _signature(label, s < 0))


def classify_amplitude(be, tol=None, order=None):
    """Classify a :class:`~hopfbalance.bifexpand.BifExpansion` (see :func:`classify_coefficients`)."""
    return classify_coefficients(be.mu_k[1:], tol, order)


def count_amplitude_cycles(mu, dmu):
    """Number of positive roots ``z`` of ``sum mu_k z^k = dmu``."""
    coeffs = [float(x) for x in reversed(mu)] + [-float(dmu)]
    while coeffs and coeffs[0] == 0.0:
        coeffs.pop(0)
    if len(coeffs) < 2:
        return 0
    roots = np.roots(coeffs)
    scale = max(1.0, max(abs(roots))) if roots.size else 1.0
    real = roots[np.abs(roots.imag) <= 1e-9 * scale].real
    return int(np.sum(real > 1e-12 * scale))


def _series_in_mu(dmu, dz):
    """Coefficients ``(Z1, Z2, Z3)`` of ``z`` as a series in ``s = mu - mu_0``."""
    m1, m2, m3 = dmu[0], dmu[1] / 2, dmu[2] / 6
    z1, z2, z3 = dz[0], dz[1] / 2, dz[2] / 6
    # omega - omega_0 = t(s) = s/m1 - m2 s^2/m1^3 + (2 m2^2 - m1 m3) s^3/m1^5
    t1 = 1 / m1
    t2 = -m2 / m1 ** 3
    t3 = (2 * m2 ** 2 - m1 * m3) / m1 ** 5
    Z1 = z1 * t1
    Z2 = z1 * t2 + z2 * t1 ** 2
    Z3 = z1 * t3 + 2 * z2 * t1 * t2 + z3 * t1 ** 3
    return Z1, Z2, Z3


def _series_in_z(dmu, dz):
    """Coefficients ``(mu_1, mu_2, mu_3)`` of ``mu - mu_0`` as a series in ``z``."""
    z1, z2, z3 = dz[0], dz[1] / 2, dz[2] / 6
    m1, m2, m3 = dmu[0], dmu[1] / 2, dmu[2] / 6
    t1 = 1 / z1
    t2 = -z2 / z1 ** 3
    t3 = (2 * z2 ** 2 - z1 * z3) / z1 ** 5
    return (m1 * t1, m1 * t2 + m2 * t1 ** 2, m1 * t3 + 2 * m2 * t1 * t2 + m3 * t1 ** 3)


def frequency_unfolding(dmu, dz, p):
    """``(eps, eps_1, eps_0)`` of the p-family unfolding from derivatives at omega_0."""
    Z1, Z2, Z3 = _series_in_mu(dmu, dz)
    if p == 2:
        eps = -1.0 / Z2
        zv = -Z1 * Z1 / (4 * Z2)
        return eps, 0.0, -eps * zv
    if p == 3:
        eps = -1.0 / Z3
        e1 = Z1 / Z3 - Z2 ** 2 / (3 * Z3 ** 2)
        e0 = 2 * Z2 ** 3 / (27 * Z3 ** 3) - Z1 * Z2 / (3 * Z3 ** 2)
        return eps, e1, e0
    raise ValidationError("p must be 2 or 3")


def _p_label(p, eps, e1, e0, tol):
    mirrored = eps < 0
    var = {}
    if p == 2:
        var["B0"] = e0
        if abs(e0) <= tol:
            label = "p2_B0"
        elif eps > 0:
            label = "p2_bubble" if e0 < 0 else "p2_empty"
        else:
            label = "p2_inverted_gap" if e0 < 0 else "p2_inverted_full"
        return label, var, False
    # the cubic s^3 + e1 s + e0 has three real roots iff 4 e1^3 + 27 e0^2 < 0
    disc = 4 * e1 ** 3 + 27 * e0 ** 2
    var["B"] = disc
    if abs(disc) <= tol:
        label = "p3_B"
    else:
        label = "p3_bubble_plus_branch" if disc < 0 else "p3_plain"
    return label, var, mirrored


def classify_frequency(fs, tol=1e-6, order=None):
    """Classify a :class:`~hopfbalance.bifexpand.FreqSlice`.

    With ``d mu/d omega != 0`` the family is ``freq_p<p>`` where ``p`` is the
    first non-vanishing ``d^p z/d omega^p`` (``p = 1`` is an ordinary Hopf
    point, reported as ``amplitude_q1``).  With ``d mu/d omega = 0`` and
    ``dz/d omega != 0`` the amplitude families apply.  Values are compared
    with ``tol * max(1, |derivatives|)``.

    Raises
    ------
    CodimensionOverflowError
        ``d mu/d omega`` and ``dz/d omega`` vanish together, or no
        derivative up to order 3 is non-zero.
    """
    dmu = tuple(float(x) for x in fs.dmu)
    dz = tuple(float(x) for x in fs.dz)
    tmu = tol * max(1.0, _scale(dmu))
    tz = tol * max(1.0, _scale(dz))
    mu_zero = abs(dmu[0]) <= tmu
    z_zero = abs(dz[0]) <= tz
    if mu_zero and z_zero:
        raise CodimensionOverflowError("d mu/d omega and dz/d omega vanish together: "
                                       "codimension beyond the supported normal forms")
    if mu_zero or (order is None and not z_zero):
        coeffs = _series_in_z(dmu, dz)
        rep = classify_coefficients(coeffs, tol * max(1.0, _scale(coeffs)))
        return rep
    if order is None:
        big = [k for k, x in enumerate(dz, start=1) if abs(x) > tz]
        if not big:
            raise CodimensionOverflowError("all z derivatives vanish through order 3")
        p = big[0]
    else:
        p = int(order)
    if p not in (2, 3):
        raise CodimensionOverflowError(f"frequency family p={p} not supported")
    eps, e1, e0 = frequency_unfolding(dmu, dz, p)
    label, var, mirrored = _p_label(p, eps, e1, e0, tol * max(1.0, abs(e0), abs(e1) ** 1.5))
    unf = {"eps0": e0} if p == 2 else {"eps0": e0, "eps1": e1}
    return NormalFormReport(f"freq_p{p}", p, eps, unf, var, label, None, mirrored,
                            _signature(label, mirrored))


# ---------------------------------------------------------------------------
# scans over two auxiliary parameters

@dataclass
class VarietyScan:
    """Coefficients on a grid, refined contour points and triple points."""

    names: tuple
    axes: tuple
    coefficients: np.ndarray
    reports: list
    contours: dict
    triple_points: list
    failures: list


_VARIETIES = {
    "H0": lambda m: m[0],
    "H1": lambda m: 3 * m[0] * m[2] - m[1] ** 2,
    "D": lambda m: 4 * m[0] * m[2] - m[1] ** 2,
}


def _branch_ok(name, m):
    return name == "H0" or m[1] * m[2] <= 0


class _NodeEvaluator:
    def __init__(self, r, names, q, base_rho, guess, fit_degree):
        self.r = r
        self.names = names
        self.q = q
        self.base_rho = dict(base_rho or {})
        self.guess = guess
        self.fit_degree = fit_degree

    def rho(self, p1, p2):
        return {**self.base_rho, self.names[0]: float(p1), self.names[1]: float(p2)}

    def __call__(self, p1, p2, q=None, guess=None):
        from .bifexpand import expand_amplitude
        from .hopf import find_critical
        from .bifexpand import BifExpansion, first_order
        q = q or self.q
        rho = self.rho(p1, p2)
        cp = find_critical(self.r, rho, ("tau", None), guess=guess or self.guess)
        m = np.full(3, np.nan)
        if q == 1:
            # mu_1 is available in closed form from xi_1; no fit needed
            mu1, om1 = first_order(self.r, cp)
            be = BifExpansion(1, (cp.mu0, mu1), (cp.omega0, om1), cp.rho, cp.tau0)
        else:
            be = expand_amplitude(self.r, cp, q, fit_degree=self.fit_degree)
        m[:q] = be.mu_k[1:]
        return m, cp, be


def scan_varieties(r, grid, q=3, rho=None, guess=None, varieties=("H0", "H1", "D"),
                   refine="brent", xtol=1e-8, triple=True, fit_degree=None, tol=None,
                   workers=1):
    """Transition-variety contours over a grid of two auxiliary parameters.

    Parameters
    ----------
    r : Realization
    grid : dict
        Exactly two entries ``name -> 1-D array`` (``"tau"`` allowed).
    q : int
        Expansion order used at the nodes (3 for all three varieties).
    guess : (float, float), optional
        Critical point guess ``(omega, mu)`` at the first node; later nodes
        are warm-started from their neighbour.
    refine : {"brent", "linear", None}
        Edge refinement of sign changes.
    triple : bool
        Newton-refine points where ``mu_1 = mu_2 = 0`` inside grid cells.
    workers : int
        Rows of the grid are evaluated in this many threads.

    Notes
    -----
    Nodes that fail are left as NaN and listed in ``failures``; contour
    detection skips edges touching them.

    Returns
    -------
    VarietyScan
    """
    names = tuple(grid)
    if len(names) != 2:
        raise ValidationError("grid must have exactly two parameters")
    ax = tuple(np.asarray(grid[n], dtype=float) for n in names)
    n1, n2 = ax[0].size, ax[1].size
    ev = _NodeEvaluator(r, names, q, rho, guess, fit_degree)
    coef = np.full((n1, n2, 3), np.nan)
    seeds = np.full((n1, n2, 2), np.nan)
    results = {}

    def node(i, j, start):
        try:
            m, cp, be = ev(ax[0][i], ax[1][j], guess=start)
        except HopfBalanceError as exc:
            return (i, j), None, None, f"{type(exc).__name__}: {exc}"
        try:
            rep = classify_amplitude(be, tol).as_dict()
            err = None
        except HopfBalanceError as exc:
            rep, err = None, f"{type(exc).__name__}: {exc}"
        return (i, j), (m, (cp.omega0, cp.mu0)), rep, err

    # first column sequentially, then every row warm-started from its first node;
    # the outcome does not depend on the number of workers
    start = guess
    for i in range(n1):
        res = node(i, 0, start)
        results[(i, 0)] = res
        if res[1] is not None:
            start = res[1][1]

    def row(i):
        out = []
        first = results[(i, 0)][1]
        last = first[1] if first is not None else guess
        for j in range(1, n2):
            res = node(i, j, last)
            out.append(res)
            if res[1] is not None:
                last = res[1][1]
        return out

    if workers > 1 and n1 > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, range(n1)))
    else:
        rows = [row(i) for i in range(n1)]
    for out in rows:
        for res in out:
            results[res[0]] = res
    reports = []
    failures = []
    for i in range(n1):
        for j in range(n2):
            _, val, rep, err = results[(i, j)]
            if val is None:
                failures.append(((i, j), err))
            else:
                coef[i, j] = val[0]
                seeds[i, j] = val[1]
            reports.append(((i, j), rep, err))
    if failures:
        warnings.warn(f"{len(failures)} grid nodes failed and were skipped", stacklevel=2)
    contours = {}
    for name in varieties:
        fn = _VARIETIES[name]
        if name != "H0" and q < 3:
            continue
        pts = []
        for (i, j), (k, l) in _edges(n1, n2):
            a, b = coef[i, j], coef[k, l]
            if not (np.all(np.isfinite(a[:q])) and np.all(np.isfinite(b[:q]))):
                continue
            fa, fb = fn(a), fn(b)
            if fa * fb > 0 or not (_branch_ok(name, a) or _branch_ok(name, b)):
                continue
            pa = np.array([ax[0][i], ax[1][j]])
            pb = np.array([ax[0][k], ax[1][l]])
            pt = _refine_edge(ev, name, fn, pa, pb, fa, fb, refine, xtol, seeds[i, j])
            if pt is not None:
                pts.append(pt)
        contours[name] = pts
    triples = []
    if triple:
        for i in range(n1 - 1):
            for j in range(n2 - 1):
                cell = coef[i:i + 2, j:j + 2].reshape(4, 3)
                if not np.all(np.isfinite(cell[:, :2])):
                    continue
                if _changes(cell[:, 0]) and _changes(cell[:, 1]):
                    start = np.array([(ax[0][i] + ax[0][i + 1]) / 2,
                                      (ax[1][j] + ax[1][j + 1]) / 2])
                    tp = _triple_newton(ev, start, tuple(seeds[i, j]), xtol)
                    if tp is not None and not any(
                            np.allclose([tp[names[0]], tp[names[1]]],
                                        [t[names[0]], t[names[1]]], atol=10 * xtol)
                            for t in triples):
                        triples.append(tp)
    return VarietyScan(names, ax, coef, reports, contours, triples, failures)


def _changes(vals):
    return np.min(vals) <= 0 <= np.max(vals)


def _edges(n1, n2):
    for i in range(n1):
        for j in range(n2):
            if i + 1 < n1:
                yield (i, j), (i + 1, j)
            if j + 1 < n2:
                yield (i, j), (i, j + 1)


def _refine_edge(ev, name, fn, pa, pb, fa, fb, refine, xtol, seed):
    if fa == fb:
        return None
    if refine is None or refine == "linear":
        t = fa / (fa - fb)
        return tuple(pa + t * (pb - pa))
    state = {"guess": tuple(seed)}

    def f(t):
        p = pa + t * (pb - pa)
        m, cp, _ = ev(p[0], p[1], q=1 if name == "H0" else None, guess=state["guess"])
        state["guess"] = (cp.omega0, cp.mu0)
        return fn(m)
    length = float(np.max(np.abs(pb - pa)))
    try:
        t = brentq(f, 0.0, 1.0, xtol=xtol / max(length, 1e-300), rtol=1e-12)
    except (HopfBalanceError, ValueError) as exc:
        warnings.warn(f"edge refinement failed: {exc}", stacklevel=3)
        return None
    return tuple(pa + t * (pb - pa))


def _triple_newton(ev, start, seed, xtol, max_iter=12):
    """Newton on ``(mu_1, mu_2) = 0`` in the two grid parameters."""
    x = np.array(start, dtype=float)
    state = {"guess": seed}

    def f(p):
        m, cp, _ = ev(p[0], p[1], guess=state["guess"])
        state["guess"] = (cp.omega0, cp.mu0)
        return m[:2]
    try:
        fx = f(x)
        for _ in range(max_iter):
            h = 1e-7 * np.maximum(1.0, np.abs(x))
            J = np.empty((2, 2))
            for k in range(2):
                e = np.zeros(2)
                e[k] = h[k]
                J[:, k] = (f(x + e) - fx) / h[k]
            dx = np.linalg.solve(J, -fx)
            x = x + dx
            fx = f(x)
            if np.max(np.abs(dx)) <= xtol:
                break
        else:
            return None
        m, cp, be = ev(x[0], x[1], guess=state["guess"])
    except (HopfBalanceError, np.linalg.LinAlgError) as exc:
        warnings.warn(f"triple-point refinement failed: {exc}", stacklevel=3)
        return None
    return {ev.names[0]: float(x[0]), ev.names[1]: float(x[1]), "omega0": cp.omega0,
            "mu0": cp.mu0, "mu1": float(m[0]), "mu2": float(m[1]), "mu3": float(m[2])}
