"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` holds the Taylor coefficients ``d^a f / a!`` of a function at a
batch of centers, for every multi-index ``a`` of total degree at most the order
cap.  Coefficients are stored sparsely: a missing key means an exact zero.
Multi-indices always have one slot per coordinate of the ambient point (space
plus the time slot); only the ``dims`` listed as active may be nonzero.

Everything is vectorized over the batch of centers, so a coefficient is a 1-D
array with one entry per center.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial
from typing import Iterable, Sequence

import numpy as np


class JetError(ValueError):
    """Raised on incompatible operands or out-of-range requests."""


@lru_cache(maxsize=None)
def monomials(ndim: int, dims: tuple[int, ...], cap: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices supported on ``dims`` with total degree <= cap, graded."""
    out: list[tuple[int, ...]] = []

    def rec(pos: int, remaining: int, current: list[int]) -> None:
        if pos == len(dims):
            out.append(tuple(current))
            return
        for e in range(remaining + 1):
            current[dims[pos]] = e
            rec(pos + 1, remaining - e, current)
        current[dims[pos]] = 0

    rec(0, cap, [0] * ndim)
    out.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return tuple(out)


def _factorial_of(alpha: Sequence[int]) -> int:
    p = 1
    for a in alpha:
        p *= factorial(a)
    return p


def _sub(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...] | None:
    out = tuple(x - y for x, y in zip(a, b))
    return None if min(out) < 0 else out


def _add(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(x + y for x, y in zip(a, b))


class Jet:
    """Truncated Taylor polynomial at a batch of centers.

    Jets are treated as immutable values: every operation returns a new jet.
    """

    __slots__ = ("center", "cap", "dims", "coeffs")
    __array_ufunc__ = None

    def __init__(self, center: np.ndarray, cap: int, dims: Iterable[int],
                 coeffs: dict[tuple[int, ...], np.ndarray]):
        center = np.atleast_2d(np.asarray(center, dtype=float))
        dims = tuple(sorted(set(dims)))
        ndim = center.shape[1]
        if cap < 0:
            raise JetError(f"order cap must be >= 0, got {cap}")
        if any(d < 0 or d >= ndim for d in dims):
            raise JetError(f"active dims {dims} outside 0..{ndim - 1}")
        for key in coeffs:
            if len(key) != ndim or sum(key) > cap:
                raise JetError(f"multi-index {key} invalid for cap {cap}, ndim {ndim}")
            if any(key[d] for d in range(ndim) if d not in dims):
                raise JetError(f"multi-index {key} uses an inactive dimension")
        self.center = center
        self.cap = cap
        self.dims = dims
        self.coeffs = coeffs

    # -- construction -----------------------------------------------------

    @property
    def ndim(self) -> int:
        return self.center.shape[1]

    @property
    def npoints(self) -> int:
        return self.center.shape[0]

    @property
    def zero_key(self) -> tuple[int, ...]:
        return (0,) * self.ndim

    @classmethod
    def constant(cls, value, center: np.ndarray, cap: int, dims: Iterable[int]) -> "Jet":
        center = np.atleast_2d(np.asarray(center, dtype=float))
        v = np.broadcast_to(np.asarray(value, dtype=float), (center.shape[0],)).copy()
        return cls(center, cap, dims, {(0,) * center.shape[1]: v})

    def like(self, coeffs: dict[tuple[int, ...], np.ndarray]) -> "Jet":
        return Jet(self.center, self.cap, self.dims, coeffs)

    # -- queries ----------------------------------------------------------

    @property
    def value(self) -> np.ndarray:
        return self.coeffs.get(self.zero_key, np.zeros(self.npoints))

    def coeff(self, alpha: Sequence[int]) -> np.ndarray:
        alpha = tuple(alpha)
        if sum(alpha) > self.cap:
            raise JetError(f"|alpha| = {sum(alpha)} exceeds order cap {self.cap}")
        return self.coeffs.get(alpha, np.zeros(self.npoints))

    def derivative(self, alpha: Sequence[int]) -> np.ndarray:
        """Exact mixed partial ``d^alpha f`` at the centers."""
        alpha = tuple(alpha)
        if any(alpha[d] for d in range(self.ndim) if d not in self.dims):
            raise JetError(f"derivative {alpha} along an inactive dimension")
        return self.coeff(alpha) * _factorial_of(alpha)

    def differentiate(self, alpha: Sequence[int]) -> "Jet":
        """Jet of ``d^alpha f``; the cap drops by ``|alpha|``."""
        alpha = tuple(alpha)
        k = sum(alpha)
        if k > self.cap:
            raise JetError(f"|alpha| = {k} exceeds order cap {self.cap}")
        if any(alpha[d] for d in range(self.ndim) if d not in self.dims):
            raise JetError(f"derivative {alpha} along an inactive dimension")
        out = {}
        for key, v in self.coeffs.items():
            base = _sub(key, alpha)
            if base is None:
                continue
            out[base] = v * (_factorial_of(key) / _factorial_of(base))
        return Jet(self.center, self.cap - k, self.dims, out)

    def restrict(self, dims: Iterable[int], cap: int) -> "Jet":
        """Drop coefficients outside ``dims`` or above ``cap``."""
        dims = tuple(sorted(set(dims)))
        if cap > self.cap or not set(dims) <= set(self.dims):
            raise JetError("restrict can only shrink a jet")
        inactive = [d for d in range(self.ndim) if d not in dims]
        out = {key: v for key, v in self.coeffs.items()
               if sum(key) <= cap and not any(key[d] for d in inactive)}
        return Jet(self.center, cap, dims, out)

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "Jet") -> None:
        if self.cap != other.cap or self.dims != other.dims:
            raise JetError("jets differ in order cap or active dims")
        if self.center is other.center:
            return
        if self.center.shape != other.center.shape or not np.array_equal(self.center, other.center):
            raise JetError("jets have different centers")

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            out = dict(self.coeffs)
            for key, v in other.coeffs.items():
                out[key] = out[key] + v if key in out else v
            return self.like(out)
        out = dict(self.coeffs)
        z = self.zero_key
        out[z] = self.value + other
        return self.like(out)

    __radd__ = __add__

    def __neg__(self):
        return self.like({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.like({k: v * other for k, v in self.coeffs.items()})
        self._check(other)
        cap = self.cap
        out: dict[tuple[int, ...], np.ndarray] = {}
        b_items = [(kb, sum(kb), vb) for kb, vb in other.coeffs.items()]
        for ka, va in self.coeffs.items():
            da = sum(ka)
            for kb, db, vb in b_items:
                if da + db > cap:
                    continue
                key = _add(ka, kb)
                prod = va * vb
                out[key] = out[key] + prod if key in out else prod
        return self.like(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise JetError("only non-negative integer powers are supported")
        result = Jet.constant(1.0, self.center, self.cap, self.dims)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # -- transcendental functions -----------------------------------------

    def _graded(self):
        return [a for a in monomials(self.ndim, self.dims, self.cap) if sum(a)]

    def _pivot(self, gamma: tuple[int, ...]) -> int:
        for d in self.dims:
            if gamma[d]:
                return d
        raise AssertionError("zero multi-index has no pivot")

    def exp(self) -> "Jet":
        """Exponential via ``d(e^u) = e^u du`` on graded coefficients."""
        z = self.zero_key
        out = {z: np.exp(self.value)}
        u_items = [(k, v) for k, v in self.coeffs.items() if sum(k)]
        for gamma in self._graded():
            p = self._pivot(gamma)
            acc = None
            for beta, ub in u_items:
                if beta[p] == 0:
                    continue
                rest = _sub(gamma, beta)
                if rest is None or rest not in out:
                    continue
                term = beta[p] * ub * out[rest]
                acc = term if acc is None else acc + term
            if acc is not None:
                out[gamma] = acc / gamma[p]
        return self.like(out)

    def sincos(self) -> tuple["Jet", "Jet"]:
        """Sine and cosine via the coupled recurrences ``dS = C du``, ``dC = -S du``."""
        z = self.zero_key
        S = {z: np.sin(self.value)}
        C = {z: np.cos(self.value)}
        u_items = [(k, v) for k, v in self.coeffs.items() if sum(k)]
        for gamma in self._graded():
            p = self._pivot(gamma)
            s_acc = None
            c_acc = None
            for beta, ub in u_items:
                if beta[p] == 0:
                    continue
                rest = _sub(gamma, beta)
                if rest is None:
                    continue
                w = beta[p] * ub
                if rest in C:
                    t = w * C[rest]
                    s_acc = t if s_acc is None else s_acc + t
                if rest in S:
                    t = -w * S[rest]
                    c_acc = t if c_acc is None else c_acc + t
            if s_acc is not None:
                S[gamma] = s_acc / gamma[p]
            if c_acc is not None:
                C[gamma] = c_acc / gamma[p]
        return self.like(S), self.like(C)

    def sin(self) -> "Jet":
        return self.sincos()[0]

    def cos(self) -> "Jet":
        return self.sincos()[1]

    def reciprocal(self) -> "Jet":
        z = self.zero_key
        a0 = self.value
        if np.any(a0 == 0):
            raise JetError("reciprocal of a jet with zero value")
        inv0 = 1.0 / a0
        out = {z: inv0}
        a_items = [(k, v) for k, v in self.coeffs.items() if sum(k)]
        for gamma in self._graded():
            acc = None
            for beta, ab in a_items:
                rest = _sub(gamma, beta)
                if rest is None or rest not in out:
                    continue
                term = ab * out[rest]
                acc = term if acc is None else acc + term
            if acc is not None:
                out[gamma] = -inv0 * acc
        return self.like(out)

    def __repr__(self) -> str:
        return f"Jet(npoints={self.npoints}, cap={self.cap}, dims={self.dims}, nnz={len(self.coeffs)})"


def jet_var(center, active_dims: Sequence[int], order_cap: int,
            dims: Sequence[int] | None = None) -> list[Jet]:
    """Seed jets for the coordinates listed in ``active_dims``.

    ``dims`` is the full set of dimensions the jets may carry; it defaults to
    ``active_dims``.  Coordinates not in ``active_dims`` can be obtained with
    :func:`coordinate_jets`.
    """
    center = np.atleast_2d(np.asarray(center, dtype=float))
    ndim = center.shape[1]
    active = list(active_dims)
    if len(set(active)) != len(active):
        raise JetError(f"active dims must be distinct, got {active}")
    if any(d < 0 or d >= ndim for d in active):
        raise JetError(f"active dims {active} outside 0..{ndim - 1}")
    if order_cap < 0:
        raise JetError("order cap must be >= 0")
    dims = tuple(active if dims is None else dims)
    return [_seed(center, d, order_cap, dims) for d in active]


def _seed(center: np.ndarray, d: int, cap: int, dims: tuple[int, ...]) -> Jet:
    ndim = center.shape[1]
    coeffs = {(0,) * ndim: center[:, d].copy()}
    if cap >= 1 and d in dims:
        e = [0] * ndim
        e[d] = 1
        coeffs[tuple(e)] = np.ones(center.shape[0])
    return Jet(center, cap, dims, coeffs)


def coordinate_jets(center, dims: Sequence[int], cap: int) -> list[Jet]:
    """One jet per coordinate of the ambient point; only ``dims`` carry seeds."""
    center = np.atleast_2d(np.asarray(center, dtype=float))
    dims = tuple(sorted(set(dims)))
    return [_seed(center, d, cap, dims) for d in range(center.shape[1])]


def jet_add(a: Jet, b) -> Jet:
    return a + b


def jet_mul(a: Jet, b) -> Jet:
    return a * b


def jet_scale(a: Jet, c: float) -> Jet:
    return a * float(c)


def jet_exp(a: Jet) -> Jet:
    return a.exp()
