"""Half-step translation, difference and average operators.

Operators are combinators from field to field.  Every stencil is stored as a
map from integer offsets (in units of ``h/2`` along space directions and
``dt/2`` along time) to exact rational weights, times one floating-point
scale such as ``h**-n``.  Composing stencils convolves the offset maps, so an
expression like ``A_i^2 D_j^3 f`` is evaluated in a single pass over its
``3 * 4`` shifted points.

Directions are 0-based: direction ``i`` is coordinate ``i`` of a point, and
the time slot is the last coordinate.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Sequence

import numpy as np

from .fields import DerivField, ScalarField, as_points
from .jets import Jet


class ReachError(ValueError):
    """Raised when a stencil reaches further than the field's margin allows."""


def compensated_sum(terms: np.ndarray) -> np.ndarray:
    """Neumaier summation along axis 0."""
    terms = np.asarray(terms, dtype=float)
    s = terms[0].copy()
    c = np.zeros_like(s)
    for x in terms[1:]:
        t = s + x
        big = np.abs(s) >= np.abs(x)
        c += np.where(big, (s - t) + x, (x - t) + s)
        s = t
    return s + c


def binomial(n: int, k: int) -> int:
    if n > 20:
        raise OverflowError("binomials are tabulated exactly up to n = 20")
    return comb(n, k)


# -- index types --------------------------------------------------------------

@dataclass(frozen=True)
class MultiIndex:
    entries: tuple[int, ...]

    def __post_init__(self):
        if any(int(e) != e or e < 0 for e in self.entries):
            raise ValueError(f"multi-index entries must be non-negative integers: {self.entries}")
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))

    @property
    def order(self) -> int:
        return sum(self.entries)

    def __len__(self):
        return len(self.entries)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def padded(self, ndim: int) -> tuple[int, ...]:
        return self.entries + (0,) * (ndim - len(self.entries))


@dataclass(frozen=True)
class BiIndex:
    """Two-component index ``(k_i, k_j)`` attached to directions ``(dir_i, dir_j)``."""

    k_i: int
    k_j: int
    dir_i: int = 0
    dir_j: int = 1

    def __post_init__(self):
        if self.dir_i == self.dir_j:
            raise ValueError("a bi-index needs two distinct directions")
        if self.k_i < 0 or self.k_j < 0:
            raise ValueError("bi-index components must be non-negative")

    @property
    def order(self) -> int:
        return self.k_i + self.k_j

    def as_multi(self, d: int) -> MultiIndex:
        e = [0] * d
        e[self.dir_i] += self.k_i
        e[self.dir_j] += self.k_j
        return MultiIndex(tuple(e))

    @property
    def dirs(self) -> tuple[int, int]:
        return self.dir_i, self.dir_j


# -- stencils -----------------------------------------------------------------

class StencilField(ScalarField):
    """``scale * sum_k w_k f(x + o_k * unit)`` with exact rational ``w_k``."""

    def __init__(self, base: ScalarField, offsets: dict[tuple[int, ...], Fraction],
                 scale: float, unit: Sequence[float | None], collapse: bool = True):
        unit = tuple(unit)
        if collapse and isinstance(base, StencilField):
            merged = _merge_units(base.unit, unit)
            combined: dict[tuple[int, ...], Fraction] = {}
            for o1, w1 in base.offsets.items():
                for o2, w2 in offsets.items():
                    o = tuple(a + b for a, b in zip(o1, o2))
                    combined[o] = combined.get(o, Fraction(0)) + w1 * w2
            offsets = {o: w for o, w in combined.items() if w != 0} or {(0,) * base.ndim: Fraction(0)}
            scale = scale * base.scale
            unit = merged
            base = base.base
        self.base = base
        self.offsets = offsets
        self.scale = float(scale)
        self.unit = unit
        self.ndim = base.ndim

    def displacements(self) -> tuple[np.ndarray, np.ndarray]:
        unit = np.array([0.0 if u is None else u for u in self.unit])
        keys = sorted(self.offsets)
        disp = np.array(keys, dtype=float) * unit
        w = np.array([float(self.offsets[k]) for k in keys])
        return disp, w

    def jet(self, X, dims=(), cap=0):
        X = as_points(X, self.ndim)
        disp, w = self.displacements()
        K, N = len(w), X.shape[0]
        Xall = (X[None, :, :] + disp[:, None, :]).reshape(K * N, self.ndim)
        J = self.base.jet(Xall, dims, cap)
        out = {}
        for key, v in J.coeffs.items():
            terms = v.reshape(K, N) * w[:, None]
            out[key] = self.scale * compensated_sum(terms)
        return Jet(X, cap, J.dims, out)

    def reach(self):
        disp, _ = self.displacements()
        return self.base.reach() + np.max(np.abs(disp), axis=0)

    def half_step_reach(self) -> int:
        return max(max(abs(o) for o in key) for key in self.offsets)


def _merge_units(a: tuple, b: tuple) -> tuple:
    out = []
    for ua, ub in zip(a, b):
        if ua is None:
            out.append(ub)
        elif ub is None or ua == ub:
            out.append(ua)
        else:
            raise ValueError(f"cannot compose stencils with step {ua} and {ub} in one direction")
    return tuple(out)


def _unit_for(ndim: int, i: int, size: float) -> tuple:
    u: list[float | None] = [None] * ndim
    u[i] = size
    return tuple(u)


def _axis_offsets(ndim: int, i: int, pairs) -> dict[tuple[int, ...], Fraction]:
    out: dict[tuple[int, ...], Fraction] = {}
    for step, w in pairs:
        o = [0] * ndim
        o[i] = step
        out[tuple(o)] = out.get(tuple(o), Fraction(0)) + w
    return out


def check_margin(f: ScalarField, margin: float | None) -> None:
    if margin is None:
        return
    need = float(np.max(f.reach()))
    if need > margin + 1e-15:
        raise ReachError(f"stencil reaches {need:g} but the margin is {margin:g}")


def translate(f: ScalarField, i: int, steps: int, h: float) -> ScalarField:
    """``x -> f(x + steps * (h/2) e_i)``."""
    if steps == 0:
        return f
    return StencilField(f, _axis_offsets(f.ndim, i, [(steps, Fraction(1))]), 1.0,
                        _unit_for(f.ndim, i, h / 2))


def diff(f: ScalarField, i: int, n: int, h: float) -> ScalarField:
    """``D_i^n f = h^-n sum_k (-1)^k C(n,k) f(x + (n-2k) h/2 e_i)``."""
    if n < 0:
        raise ValueError("difference order must be >= 0")
    if n == 0:
        return f
    pairs = [(n - 2 * k, Fraction((-1) ** k * binomial(n, k))) for k in range(n + 1)]
    return StencilField(f, _axis_offsets(f.ndim, i, pairs), h ** (-n), _unit_for(f.ndim, i, h / 2))


def avg(f: ScalarField, i: int, n: int, h: float) -> ScalarField:
    """``A_i^n f = 2^-n sum_k C(n,k) f(x + (n-2k) h/2 e_i)``."""
    if n < 0:
        raise ValueError("average order must be >= 0")
    if n == 0:
        return f
    pairs = [(n - 2 * k, Fraction(binomial(n, k), 2 ** n)) for k in range(n + 1)]
    return StencilField(f, _axis_offsets(f.ndim, i, pairs), 1.0, _unit_for(f.ndim, i, h / 2))


def diff_iterated(f: ScalarField, i: int, n: int, h: float) -> ScalarField:
    """``D_i`` applied ``n`` times without merging stencils (2^n evaluations)."""
    out = f
    for _ in range(n):
        pairs = [(1, Fraction(1)), (-1, Fraction(-1))]
        out = StencilField(out, _axis_offsets(f.ndim, i, pairs), 1.0 / h,
                           _unit_for(f.ndim, i, h / 2), collapse=False)
    return out


def avg_iterated(f: ScalarField, i: int, n: int, h: float) -> ScalarField:
    out = f
    for _ in range(n):
        pairs = [(1, Fraction(1, 2)), (-1, Fraction(1, 2))]
        out = StencilField(out, _axis_offsets(f.ndim, i, pairs), 1.0,
                           _unit_for(f.ndim, i, h / 2), collapse=False)
    return out


def bi_diff(f: ScalarField, k: BiIndex, h: float) -> ScalarField:
    """``D_h^k = D_i^{k_i} D_j^{k_j}``."""
    return diff(diff(f, k.dir_j, k.k_j, h), k.dir_i, k.k_i, h)


def bi_avg(f: ScalarField, l: BiIndex, h: float) -> ScalarField:
    """``A_h^l = A_i^{l_i} A_j^{l_j}``."""
    return avg(avg(f, l.dir_j, l.k_j, h), l.dir_i, l.k_i, h)


def apply_bi(f: ScalarField, D: BiIndex, A: BiIndex, h: float) -> ScalarField:
    """``A_h^l D_h^k f`` for ``D = k`` and ``A = l`` on the same direction pair."""
    if D.dirs != A.dirs:
        raise ValueError(f"direction mismatch: D on {D.dirs}, A on {A.dirs}")
    return bi_avg(bi_diff(f, D, h), A, h)


def time_translate(f: ScalarField, dt: float, sign: int = 1, half: bool = False) -> ScalarField:
    """``f(t + sign * dt)`` (or ``dt/2`` when ``half``)."""
    t = f.ndim - 1
    step = sign * (1 if half else 2)
    return StencilField(f, _axis_offsets(f.ndim, t, [(step, Fraction(1))]), 1.0,
                        _unit_for(f.ndim, t, dt / 2))


def dt_diff(f: ScalarField, dt: float, variant: str = "forward") -> ScalarField:
    """Time difference quotient.

    ``forward``: ``(f(t + dt) - f(t)) / dt``.
    ``centered_half``: ``(f(t + dt/2) - f(t - dt/2)) / dt``.
    """
    t = f.ndim - 1
    if variant == "forward":
        pairs = [(2, Fraction(1)), (0, Fraction(-1))]
    elif variant == "centered_half":
        pairs = [(1, Fraction(1)), (-1, Fraction(-1))]
    else:
        raise ValueError(f"unknown time-difference variant {variant!r}")
    return StencilField(f, _axis_offsets(f.ndim, t, pairs), 1.0 / dt, _unit_for(f.ndim, t, dt / 2))


# -- exact identities ---------------------------------------------------------

@dataclass
class IdentityReport:
    name: str
    max_rel_residual: float
    max_abs_residual: float
    tol: float
    npoints: int

    @property
    def passed(self) -> bool:
        return self.max_rel_residual <= self.tol

    def as_row(self) -> dict:
        return {"identity": self.name, "max_rel_residual": self.max_rel_residual,
                "max_abs_residual": self.max_abs_residual, "tol": self.tol,
                "npoints": self.npoints, "verdict": "PASS" if self.passed else "FAIL"}


def _compare(name: str, lhs: np.ndarray, terms: list[np.ndarray], tol: float) -> IdentityReport:
    terms_arr = np.array(terms)
    rhs = compensated_sum(terms_arr)
    res = np.abs(lhs - rhs)
    scale = np.maximum(np.abs(lhs), np.sum(np.abs(terms_arr), axis=0))
    rel = np.where(scale > 0, res / np.where(scale > 0, scale, 1.0), res)
    return IdentityReport(name, float(rel.max()), float(res.max()), tol, lhs.size)


def check_product_rules(u: ScalarField, v: ScalarField, i: int, h: float, points,
                        tol: float = 1e-13) -> list[IdentityReport]:
    """Residuals of ``D(uv) = Du Av + Dv Au`` and ``A(uv) = Au Av + h^2/4 Du Dv``."""
    X = as_points(points, u.ndim)
    uv = u * v
    Du, Dv, Au, Av = (diff(u, i, 1, h)(X), diff(v, i, 1, h)(X),
                      avg(u, i, 1, h)(X), avg(v, i, 1, h)(X))
    r1 = _compare("D_product", diff(uv, i, 1, h)(X), [Du * Av, Dv * Au], tol)
    r2 = _compare("A_product", avg(uv, i, 1, h)(X), [Au * Av, h * h / 4 * Du * Dv], tol)
    return [r1, r2]


def check_leibniz(u: ScalarField, v: ScalarField, i: int, n: int, h: float, points,
                  tol: float = 1e-12) -> IdentityReport:
    """``D^n(uv) = sum_k C(n,k) D^{n-k}A^k u * A^{n-k}D^k v``."""
    X = as_points(points, u.ndim)
    lhs = diff(u * v, i, n, h)(X)
    terms = []
    for k in range(n + 1):
        a = diff(avg(u, i, k, h), i, n - k, h)(X)
        b = avg(diff(v, i, k, h), i, n - k, h)(X)
        terms.append(binomial(n, k) * a * b)
    return _compare(f"D_leibniz_n{n}", lhs, terms, tol)


def avg_power_terms(w: ScalarField, i: int, m: int, h: float, X, form: str = "corrected") -> list[np.ndarray]:
    """Terms of ``A^{2m} w = sum_j c_j (h/2)^{2j} D^{2j} w``.

    ``form="corrected"`` uses ``c_j = C(m, j)``, which follows from
    ``A^2 = I + (h^2/4) D^2``; ``form="alternative"`` uses ``c_j = 1``, which
    agrees only for ``m <= 1``.
    """
    if form not in ("corrected", "alternative"):
        raise ValueError(f"unknown form {form!r}")
    out = []
    for j in range(m + 1):
        c = binomial(m, j) if form == "corrected" else 1
        out.append(c * (h / 2) ** (2 * j) * diff(w, i, 2 * j, h)(X))
    return out


def check_avg_leibniz_even(u: ScalarField, v: ScalarField, i: int, m: int, h: float, points,
                           tol: float = 1e-12, form: str = "corrected",
                           odd: bool = False) -> IdentityReport:
    """Average-power identity for ``A^{2m}(uv)``, or ``A^{2m+1}(uv)`` when ``odd``.

    The odd power expands ``A(uv)`` with the product rule first:
    ``A^{2m+1}(uv) = A^{2m}(Au Av) + h^2/4 A^{2m}(Du Dv)``.
    """
    X = as_points(points, u.ndim)
    if not odd:
        lhs = avg(u * v, i, 2 * m, h)(X)
        terms = avg_power_terms(u * v, i, m, h, X, form)
        return _compare(f"A_leibniz_even_m{m}_{form}", lhs, terms, tol)
    lhs = avg(u * v, i, 2 * m + 1, h)(X)
    w1 = avg(u, i, 1, h) * avg(v, i, 1, h)
    w2 = diff(u, i, 1, h) * diff(v, i, 1, h)
    terms = avg_power_terms(w1, i, m, h, X, form)
    terms += [h * h / 4 * t for t in avg_power_terms(w2, i, m, h, X, form)]
    return _compare(f"A_leibniz_odd_m{m}_{form}", lhs, terms, tol)


def tepper_sum(n: int, r: int, x, exact: bool = True) -> float:
    """``sum_{k=0}^n (-1)^k C(n,k) (x - k)^r``.

    With ``exact`` the float ``x`` is converted to the rational it represents
    and the sum is carried out without rounding; otherwise terms are rounded
    and accumulated with ``math.fsum``.
    """
    if n < 0 or r < 0:
        raise ValueError("n and r must be non-negative")
    if exact:
        xq = Fraction(x)
        total = sum(((-1) ** k * comb(n, k) * (xq - k) ** r for k in range(n + 1)), Fraction(0))
        return float(total)
    from math import fsum
    return fsum((-1) ** k * comb(n, k) * (float(x) - k) ** r for k in range(n + 1))


def tepper_expected(n: int, r: int) -> float | None:
    """Closed form for ``r <= n``; ``None`` outside that range."""
    if r < n:
        return 0.0
    if r == n:
        return float(factorial(n))
    return None


def odd_moment_sum(n: int) -> float:
    """``sum_k (-1)^k C(n,k) (n/2 - k)^{n+1}``, which vanishes for every n."""
    return tepper_sum(n, n + 1, Fraction(n, 2))


# -- pipelines ----------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteOpPipeline:
    """Ordered operator list, outermost first, applied to a field.

    Primitive ops: ``("T", i, steps)``, ``("D", i, n)``, ``("A", i, n)``,
    ``("Dbi", BiIndex)``, ``("Abi", BiIndex)``, ``("d", alpha)``,
    ``("Dt", variant)``, ``("t+",)``, ``("t-",)``.
    """

    ops: tuple
    h: float
    dt: float | None = None

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if any(op[0] in ("Dt", "t+", "t-") for op in self.ops) and not self.dt:
            raise ValueError("time operators need dt > 0")

    def apply(self, f: ScalarField) -> ScalarField:
        out = f
        for op in reversed(self.ops):
            kind = op[0]
            if kind == "T":
                out = translate(out, op[1], op[2], self.h)
            elif kind == "D":
                out = diff(out, op[1], op[2], self.h)
            elif kind == "A":
                out = avg(out, op[1], op[2], self.h)
            elif kind == "Dbi":
                out = bi_diff(out, op[1], self.h)
            elif kind == "Abi":
                out = bi_avg(out, op[1], self.h)
            elif kind == "d":
                out = DerivField(out, op[1])
            elif kind == "Dt":
                out = dt_diff(out, self.dt, op[1])
            elif kind == "t+":
                out = time_translate(out, self.dt, +1)
            elif kind == "t-":
                out = time_translate(out, self.dt, -1)
            else:
                raise ValueError(f"unknown op {kind!r}")
        return out

    @property
    def half_step_reach(self) -> int:
        total = 0
        for op in self.ops:
            if op[0] == "T":
                total += abs(op[2])
            elif op[0] in ("D", "A"):
                total += op[2]
            elif op[0] in ("Dbi", "Abi"):
                total += max(op[1].k_i, op[1].k_j)
        return total

    def with_h(self, h: float, dt: float | None = None) -> "DiscreteOpPipeline":
        return DiscreteOpPipeline(self.ops, h, self.dt if dt is None else dt)


_TOKEN = re.compile(r"\s*(?:(A|D)\[(\d+),(\d+)\]|d\^\(([\d,\s]+)\)|(Dt|t\+|t-)|([A-Za-z_]\w*)|"
                    r"(\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)|(\^)|([()*]))")


def _tokenize(text: str) -> list[tuple]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse pipeline near {text[pos:pos + 12]!r}")
        pos = m.end()
        if m.group(1):
            out.append(("op", m.group(1), (int(m.group(2)), int(m.group(3)))))
        elif m.group(4):
            out.append(("op", "d", tuple(int(v) for v in m.group(4).split(","))))
        elif m.group(5):
            out.append(("op", m.group(5), None))
        elif m.group(6):
            out.append(("name", m.group(6)))
        elif m.group(7):
            out.append(("num", float(m.group(7))))
        elif m.group(8):
            out.append(("pow",))
        else:
            out.append(("sym", m.group(9)))
    return out


def parse_pipeline(text: str, fields: dict[str, ScalarField], h: float,
                   dt: float | None = None, dirs: tuple[int, int] = (0, 1)) -> ScalarField:
    """Build a field from the claim syntax, e.g. ``"A[1,1]D[1,0]d^(1,0)( r * A[0,1]D[0,1] rho )"``.

    ``A[a,b]``/``D[a,b]`` are bi-index averages/differences on ``dirs``,
    ``d^(..)`` an exact partial derivative, ``Dt`` the forward time
    difference, ``t+``/``t-`` time translations; ``*`` multiplies and
    ``name^k`` raises a named field to an integer power.
    """
    toks = _tokenize(text)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take():
        nonlocal pos
        if pos >= len(toks):
            raise ValueError(f"unexpected end of pipeline {text!r}")
        pos += 1
        return toks[pos - 1]

    def product():
        out = term()
        while peek() == ("sym", "*"):
            take()
            out = out * term()
        return out

    def term():
        ops = []
        while peek() is not None and peek()[0] == "op":
            ops.append(take())
        tok = take() if peek() is not None else None
        if tok == ("sym", "("):
            inner = product()
            if take() != ("sym", ")"):
                raise ValueError("unbalanced parentheses in pipeline")
        elif tok is not None and tok[0] == "name":
            if tok[1] not in fields:
                raise ValueError(f"unknown field {tok[1]!r}")
            inner = fields[tok[1]]
            if peek() == ("pow",):
                take()
                k = take()
                if k[0] != "num" or int(k[1]) != k[1] or k[1] < 1:
                    raise ValueError("field powers must be positive integers")
                base = inner
                for _ in range(int(k[1]) - 1):
                    inner = inner * base
        else:
            raise ValueError("expected a field or parenthesized expression")
        out = inner
        for _, kind, arg in reversed(ops):
            if kind == "A":
                out = bi_avg(out, BiIndex(arg[0], arg[1], *dirs), h)
            elif kind == "D":
                out = bi_diff(out, BiIndex(arg[0], arg[1], *dirs), h)
            elif kind == "d":
                out = DerivField(out, arg)
            elif kind == "Dt":
                if dt is None:
                    raise ValueError("Dt needs a time step")
                out = dt_diff(out, dt, "forward")
            else:
                if dt is None:
                    raise ValueError("time translation needs a time step")
                out = time_translate(out, dt, +1 if kind == "t+" else -1)
        return out

    result = product()
    if pos != len(toks):
        raise ValueError(f"trailing tokens in pipeline: {toks[pos:]}")
    return result
