"""Integral remainders of the half-step expansions and their defect oracle.

For smooth ``f`` and ``a_k = (n - 2k) h / 2``,

    D_i^n f = d_i^n f + R_D,   R_D = h^2 sum_k (-1)^k C(n,k) ((n-2k)/2)^(n+2)
                                      * int_0^1 (1-s)^(n+1)/(n+1)! d_i^(n+2) f(x + s a_k e_i) ds
    A_i^n f = f + R_A,         R_A = h^2/2^n sum_k C(n,k) (n-2k)^2/4
                                      * int_0^1 (1-s) d_i^2 f(x + s a_k e_i) ds

Cross-direction remainders are the double integrals of the products of the two
one-direction kernels, so that for instance

    (A_j^m - I)(A_i^n - I) f = R_AA,   (D_j^m - d_j^m)(D_i^n - d_i^n) f = R_DD.

The "alternative" reading of the cross formulas uses a second set of kernels
and coefficients, kept for auditing.  The audit compares every formula with
the defect, which is computed directly from stencils and is the ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial
from typing import Callable, Sequence

import numpy as np

from .discrete import avg, diff
from .fields import DerivField, ScalarField, as_points


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    max_panels: int = 256
    low: int = 10
    high: int = 20

    def __post_init__(self):
        if self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")
        if self.max_panels < 1 or not 1 <= self.low < self.high:
            raise ValueError("invalid quadrature rule configuration")


def _unit_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


def integrate_1d(g: Callable[[np.ndarray], np.ndarray], q: QuadratureSpec = QuadratureSpec()):
    """Adaptive Gauss-Legendre on [0, 1] for a batch of integrands.

    ``g(sigma)`` maps ``S`` nodes to an ``(S, N)`` array.  Panels are bisected
    until the high/low rule difference on each is below its share of
    ``abs_tol``.  Returns ``(value, error_estimate)``, each of shape ``(N,)``.
    """
    xl, wl = _unit_nodes(q.low)
    xh, wh = _unit_nodes(q.high)
    todo = [(0.0, 1.0)]
    value = err = None
    used = 0
    while todo:
        a = np.array([p[0] for p in todo])
        w = np.array([p[1] - p[0] for p in todo])
        nodes = np.concatenate([(a[:, None] + w[:, None] * xl).ravel(),
                                (a[:, None] + w[:, None] * xh).ravel()])
        vals = g(nodes)
        P = len(todo)
        lo = vals[: P * q.low].reshape(P, q.low, -1)
        hi = vals[P * q.low:].reshape(P, q.high, -1)
        I_lo = np.einsum("pkn,k,p->pn", lo, wl, w)
        I_hi = np.einsum("pkn,k,p->pn", hi, wh, w)
        e = np.abs(I_hi - I_lo)
        ok = e.max(axis=1) <= q.abs_tol * w
        if value is None:
            value = np.zeros(I_hi.shape[1])
            err = np.zeros(I_hi.shape[1])
        value += I_hi[ok].sum(axis=0)
        err += e[ok].sum(axis=0)
        used += int(ok.sum())
        nxt = []
        for (p0, p1), good in zip(todo, ok):
            if not good:
                mid = (p0 + p1) / 2
                nxt += [(p0, mid), (mid, p1)]
        if used + len(nxt) > q.max_panels:
            raise QuadratureError(f"no convergence within {q.max_panels} panels")
        todo = nxt
    return value, err


def integrate_2d(g: Callable[[np.ndarray, np.ndarray], np.ndarray], q: QuadratureSpec = QuadratureSpec()):
    """Tensor-product adaptive Gauss-Legendre on [0, 1]^2.

    ``g(s, t)`` takes paired node arrays of length ``S`` and returns ``(S, N)``.
    Square panels are split into four until converged.
    """
    xl, wl = _unit_nodes(q.low)
    xh, wh = _unit_nodes(q.high)
    SL, TL = (a.ravel() for a in np.meshgrid(xl, xl, indexing="ij"))
    WL = np.outer(wl, wl).ravel()
    SH, TH = (a.ravel() for a in np.meshgrid(xh, xh, indexing="ij"))
    WH = np.outer(wh, wh).ravel()
    todo = [(0.0, 0.0, 1.0)]
    value = err = None
    used = 0
    while todo:
        a = np.array([p[0] for p in todo])
        b = np.array([p[1] for p in todo])
        w = np.array([p[2] for p in todo])
        s = np.concatenate([(a[:, None] + w[:, None] * SL).ravel(), (a[:, None] + w[:, None] * SH).ravel()])
        t = np.concatenate([(b[:, None] + w[:, None] * TL).ravel(), (b[:, None] + w[:, None] * TH).ravel()])
        vals = g(s, t)
        P = len(todo)
        nl, nh = len(WL), len(WH)
        lo = vals[: P * nl].reshape(P, nl, -1)
        hi = vals[P * nl:].reshape(P, nh, -1)
        area = w * w
        I_lo = np.einsum("pkn,k,p->pn", lo, WL, area)
        I_hi = np.einsum("pkn,k,p->pn", hi, WH, area)
        e = np.abs(I_hi - I_lo)
        ok = e.max(axis=1) <= q.abs_tol * area
        if value is None:
            value = np.zeros(I_hi.shape[1])
            err = np.zeros(I_hi.shape[1])
        value += I_hi[ok].sum(axis=0)
        err += e[ok].sum(axis=0)
        used += int(ok.sum())
        nxt = []
        for (p0, p1, pw), good in zip(todo, ok):
            if not good:
                hw = pw / 2
                nxt += [(p0, p1, hw), (p0 + hw, p1, hw), (p0, p1 + hw, hw), (p0 + hw, p1 + hw, hw)]
        if used + len(nxt) > q.max_panels:
            raise QuadratureError(f"no convergence within {q.max_panels} panels")
        todo = nxt
    return value, err


def _deriv_values(f: ScalarField, alpha: tuple[int, ...], Y: np.ndarray) -> np.ndarray:
    dims = tuple(i for i, a in enumerate(alpha) if a)
    return f.jet(Y, dims, sum(alpha)).derivative(alpha)


def _alpha(ndim: int, pairs: dict[int, int]) -> tuple[int, ...]:
    a = [0] * ndim
    for i, n in pairs.items():
        a[i] += n
    return tuple(a)


@dataclass
class RemainderValue:
    value: np.ndarray
    error: np.ndarray


def _single(f, i, X, h, terms, kernel, order, q):
    """Generic single-direction integral: sum_k c_k int kernel(s) d_i^order f(x + s a_k e_i)."""
    X = as_points(X, f.ndim)
    N = X.shape[0]
    alpha = _alpha(f.ndim, {i: order})
    shifts = np.array([a for a, _ in terms])
    coefs = np.array([c for _, c in terms])

    def g(sig):
        S = sig.size
        Y = np.repeat(X[None, None, :, :], S, axis=0).repeat(len(shifts), axis=1).copy()
        Y[..., i] += (sig[:, None] * shifts[None, :])[:, :, None]
        v = _deriv_values(f, alpha, Y.reshape(-1, f.ndim)).reshape(S, len(shifts), N)
        return kernel(sig)[:, None] * np.einsum("skn,k->sn", v, coefs)

    val, err = integrate_1d(g, q)
    return RemainderValue(val, err)


def remainder_D(f: ScalarField, i: int, n: int, h: float, X, q: QuadratureSpec = QuadratureSpec()) -> RemainderValue:
    """Integral form of ``D_i^n f - d_i^n f``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    terms = [((n - 2 * k) * h / 2,
              h * h * (-1) ** k * comb(n, k) * ((n - 2 * k) / 2) ** (n + 2) / factorial(n + 1))
             for k in range(n + 1)]
    return _single(f, i, X, h, terms, lambda s: (1 - s) ** (n + 1), n + 2, q)


def remainder_A(f: ScalarField, i: int, n: int, h: float, X, q: QuadratureSpec = QuadratureSpec()) -> RemainderValue:
    """Integral form of ``A_i^n f - f``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    terms = [((n - 2 * k) * h / 2, h * h / 2 ** n * comb(n, k) * (n - 2 * k) ** 2 / 4)
             for k in range(n + 1)]
    return _single(f, i, X, h, terms, lambda s: 1 - s, 2, q)


def _cross_terms(kind: str, n: int, m: int, h: float, reading: str):
    """Coefficients, kernel and derivative orders of a cross remainder.

    Returns ``(terms, kernel, ord_i, ord_j)`` where ``terms`` lists
    ``(a_i, a_j, coef)`` and the integrand is
    ``kernel(s, t) * d_i^ord_i d_j^ord_j f(x + s a_i e_i + t a_j e_j)``.
    """
    terms = []
    for k in range(n + 1):
        for kp in range(m + 1):
            ai, aj = (n - 2 * k) * h / 2, (m - 2 * kp) * h / 2
            Cn, Cm = comb(n, k), comb(m, kp)
            if kind == "AA":
                c = h ** 4 / 2 ** (m + n) * Cm * Cn * (n - 2 * k) ** 2 / 4 * (m - 2 * kp) ** 2 / 4
            elif kind == "DD":
                pj = m + 2 if reading == "corrected" else m + 1
                c = ((-1) ** (k + kp) * h ** 4 / (factorial(n + 1) * factorial(m + 1)) * Cm * Cn
                     * ((n - 2 * k) / 2) ** (n + 2) * ((m - 2 * kp) / 2) ** pj)
            elif kind == "AD":
                c = ((-1) ** k * h ** 4 / (factorial(n + 1) * 2 ** m) * Cm * Cn
                     * ((n - 2 * k) / 2) ** (n + 2) * ((m - 2 * kp) / 2) ** 2)
            else:
                raise ValueError(f"unknown cross kind {kind!r}")
            terms.append((ai, aj, c))
    if kind == "AA":
        return terms, lambda s, t: (1 - s) * (1 - t), 2, 2
    if kind == "DD":
        if reading == "corrected":
            return terms, lambda s, t: (1 - s) ** (n + 1) * (1 - t) ** (m + 1), n + 2, m + 2
        return terms, lambda s, t: (1 - s) ** (n + 2) * (1 - t) ** (m + 2), n + 2, m + 2
    if reading == "corrected":
        # D_i^n acts along i, A_j^m along j
        return terms, lambda s, t: (1 - s) ** (n + 1) * (1 - t), n + 2, 2
    # alternative kernel: (1-s)^2 (1-t)^(n+2) with the derivative orders swapped
    return terms, lambda s, t: (1 - s) ** 2 * (1 - t) ** (n + 2), 2, n + 2


def remainder_cross(f: ScalarField, kind: str, dirs: tuple[int, int], orders: tuple[int, int], h: float,
                    X, q: QuadratureSpec = QuadratureSpec(), reading: str = "corrected") -> RemainderValue:
    """Double-integral cross remainder.

    ``kind`` is ``AA`` for ``A_j^m A_i^n``, ``DD`` for ``D_j^m D_i^n`` and
    ``AD`` for ``A_j^m D_i^n``, with ``dirs = (i, j)`` and ``orders = (n, m)``.
    ``reading="alternative"`` swaps in the alternative kernels and coefficients.
    """
    if reading not in ("corrected", "alternative"):
        raise ValueError(f"unknown reading {reading!r}")
    i, j = dirs
    if i == j:
        raise ValueError("cross remainders need two distinct directions")
    n, m = orders
    if n < 1 or m < 1:
        raise ValueError("orders must be >= 1")
    X = as_points(X, f.ndim)
    N = X.shape[0]
    terms, kernel, oi, oj = _cross_terms(kind, n, m, h, reading)
    alpha = _alpha(f.ndim, {i: oi, j: oj})
    ai = np.array([t[0] for t in terms])
    aj = np.array([t[1] for t in terms])
    coefs = np.array([t[2] for t in terms])
    K = len(terms)

    def g(s, t):
        S = s.size
        Y = np.broadcast_to(X, (S, K, N, f.ndim)).copy()
        Y[..., i] += (s[:, None] * ai[None, :])[:, :, None]
        Y[..., j] += (t[:, None] * aj[None, :])[:, :, None]
        v = _deriv_values(f, alpha, Y.reshape(-1, f.ndim)).reshape(S, K, N)
        return kernel(s, t)[:, None] * np.einsum("skn,k->sn", v, coefs)

    val, err = integrate_2d(g, q)
    return RemainderValue(val, err)


# -- defect oracle -------------------------------------------------------------

def defect(pipeline, leading, f: ScalarField, X) -> np.ndarray:
    """``pipeline(f)(x) - leading(f)(x)``.

    Each of ``pipeline`` and ``leading`` is a ``DiscreteOpPipeline``, a
    callable mapping a field to a field, or ``None`` for the identity.
    """
    def build(p):
        if p is None:
            return f
        if hasattr(p, "apply"):
            return p.apply(f)
        return p(f)

    X = as_points(X, f.ndim)
    return build(pipeline)(X) - build(leading)(X)


def defect_D(f, i, n, h, X):
    return defect(lambda g: diff(g, i, n, h), lambda g: DerivField(g, _alpha(g.ndim, {i: n})), f, X)


def defect_A(f, i, n, h, X):
    return defect(lambda g: avg(g, i, n, h), None, f, X)


def defect_cross(f: ScalarField, kind: str, dirs, orders, h: float, X) -> np.ndarray:
    """Exact cross defect: the product of the two single-direction defect operators applied to ``f``."""
    i, j = dirs
    n, m = orders
    X = as_points(X, f.ndim)
    nd = f.ndim

    if kind not in ("AA", "DD", "AD"):
        raise ValueError(f"unknown cross kind {kind!r}")
    # expand (P_j - Q_j)(P_i - Q_i) f term by term so each stencil acts on a plain field
    Pi = avg if kind == "AA" else diff
    Pj = diff if kind == "DD" else avg
    Qi = (lambda g: g) if kind == "AA" else (lambda g: DerivField(g, _alpha(nd, {i: n})))
    Qj = (lambda g: DerivField(g, _alpha(nd, {j: m}))) if kind == "DD" else (lambda g: g)
    t1 = Pj(Pi(f, i, n, h), j, m, h)(X)
    t2 = Pj(Qi(f), j, m, h)(X)
    t3 = Qj(Pi(f, i, n, h))(X)
    t4 = Qj(Qi(f))(X)
    return (t1 - t2) - (t3 - t4)


# -- audit ---------------------------------------------------------------------

@dataclass
class AuditReport:
    kind: str
    reading: str
    params: dict
    formula: np.ndarray
    defect: np.ndarray
    quad_error: np.ndarray
    tol: np.ndarray = field(repr=False)

    @property
    def discrepancy(self) -> np.ndarray:
        return np.abs(self.formula - self.defect)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.discrepancy <= self.tol))

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.formula / self.defect

    @property
    def ratio_stats(self) -> tuple[float, float, float]:
        """Median ratio and its relative spread ``(max - min) / |median|``."""
        r = self.ratio
        r = r[np.isfinite(r)]
        if r.size == 0:
            return float("nan"), float("nan"), float("inf")
        med = float(np.median(r))
        spread = float((r.max() - r.min()) / abs(med)) if med != 0 else float("inf")
        return med, spread, float(r.min())

    @property
    def ratio_stable(self) -> bool:
        return self.ratio_stats[1] <= 0.02

    def ledger_entry(self) -> dict | None:
        """Discrepancy-ledger row for a failing audit, ``None`` on pass."""
        if self.passed:
            return None
        med, spread, _ = self.ratio_stats
        return {"kind": self.kind, "reading": self.reading, **self.params,
                "ratio_median": med, "ratio_rel_spread": spread,
                "ratio_stable_1pct": self.ratio_stable,
                "max_discrepancy": float(self.discrepancy.max())}

    def as_row(self) -> dict:
        med, spread, _ = self.ratio_stats
        return {"kind": self.kind, "reading": self.reading, **self.params,
                "npoints": int(self.defect.size),
                "max_discrepancy": float(self.discrepancy.max()),
                "max_defect": float(np.abs(self.defect).max()),
                "max_quad_error": float(self.quad_error.max()),
                "ratio_median": med, "ratio_rel_spread": spread,
                "verdict": "PASS" if self.passed else "FAIL"}


def audit_remainder_formula(kind: str, f: ScalarField, params: dict, X,
                            q: QuadratureSpec = QuadratureSpec(), reading: str = "corrected") -> AuditReport:
    """Compare an integral remainder formula with the defect at every point.

    ``kind`` in ``D, A, AA, DD, AD``.  ``params`` holds ``h`` plus ``i, n``
    (single direction) or ``dirs, orders`` (cross).  A point passes when
    ``|formula - defect| <= max(1e-10, 1e-6 |defect|)``.
    """
    X = as_points(X, f.ndim)
    h = params["h"]
    if kind in ("D", "A"):
        i, n = params["i"], params["n"]
        rem = (remainder_D if kind == "D" else remainder_A)(f, i, n, h, X, q)
        d = (defect_D if kind == "D" else defect_A)(f, i, n, h, X)
        shown = {"h": h, "i": i, "n": n}
    else:
        dirs, orders = tuple(params["dirs"]), tuple(params["orders"])
        if kind == "AD" and reading == "alternative":
            # the alternative form is stated for A along the first direction
            # and D along the second, so audit it against that composition
            rem = remainder_cross(f, kind, dirs, orders, h, X, q, reading)
            d = defect_cross(f, kind, (dirs[1], dirs[0]), (orders[0], orders[1]), h, X)
        else:
            rem = remainder_cross(f, kind, dirs, orders, h, X, q, reading)
            d = defect_cross(f, kind, dirs, orders, h, X)
        shown = {"h": h, "dirs": list(dirs), "orders": list(orders)}
    tol = np.maximum(1e-10, 1e-6 * np.abs(d))
    return AuditReport(kind, reading, shown, rem.value, d, rem.error, tol)
