"""Scalar fields with exact derivative access, and the Carleman weights.

A field is anything with a ``jet(X, dims, cap)`` method returning the
truncated Taylor expansion at each row of ``X``.  Points always carry one
coordinate per spatial direction plus a trailing time slot; purely spatial
fields ignore the time coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .jets import Jet, coordinate_jets


class DomainError(ValueError):
    """Raised when a field is evaluated outside its extended domain."""


class SpecError(ValueError):
    """Raised for an invalid :class:`WeightSpec`."""


def as_points(X, ndim: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != ndim:
        raise ValueError(f"points must have {ndim} coordinates, got {X.shape[1]}")
    return X


class ScalarField:
    """Base class: real-valued function of (x_1, ..., x_d, t)."""

    ndim: int
    __array_ufunc__ = None

    def jet(self, X, dims: Sequence[int] = (), cap: int = 0) -> Jet:
        raise NotImplementedError

    def __call__(self, X) -> np.ndarray:
        return self.jet(X, (), 0).value

    def reach(self) -> np.ndarray:
        """Largest displacement, per coordinate, at which leaves get evaluated."""
        return np.zeros(self.ndim)

    def __add__(self, other):
        return SumField([(1.0, self), (1.0, _lift(other, self.ndim))])

    __radd__ = __add__

    def __sub__(self, other):
        return SumField([(1.0, self), (-1.0, _lift(other, self.ndim))])

    def __rsub__(self, other):
        return SumField([(1.0, _lift(other, self.ndim)), (-1.0, self)])

    def __neg__(self):
        return SumField([(-1.0, self)])

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            return ProductField([self, other])
        return SumField([(float(other), self)])

    __rmul__ = __mul__


def _lift(obj, ndim: int) -> ScalarField:
    if isinstance(obj, ScalarField):
        return obj
    c = float(obj)
    return ExprField(lambda x: c, ndim, name=repr(c))


class ExprField(ScalarField):
    """Field given by a function of coordinate jets.

    ``fn`` receives a list of jets (one per coordinate, time last) and
    returns a jet or a plain number.  ``lo``/``hi`` bound the evaluable region,
    i.e. the closed domain already widened by its margin.
    """

    def __init__(self, fn: Callable[[list[Jet]], Jet | float], ndim: int,
                 lo=None, hi=None, name: str = "field"):
        self.fn = fn
        self.ndim = ndim
        self.lo = np.full(ndim, -np.inf) if lo is None else np.asarray(lo, dtype=float)
        self.hi = np.full(ndim, np.inf) if hi is None else np.asarray(hi, dtype=float)
        self.name = name

    def jet(self, X, dims=(), cap=0):
        X = as_points(X, self.ndim)
        bad = np.any((X < self.lo) | (X > self.hi), axis=1)
        if bad.any():
            p = X[np.argmax(bad)]
            raise DomainError(f"{self.name}: point {p.tolist()} outside its extended domain")
        out = self.fn(coordinate_jets(X, dims, cap))
        if not isinstance(out, Jet):
            out = Jet.constant(out, X, cap, dims)
        return out

    def __repr__(self):
        return f"ExprField({self.name})"


class SumField(ScalarField):
    def __init__(self, terms: list[tuple[float, ScalarField]]):
        self.terms = terms
        self.ndim = terms[0][1].ndim

    def jet(self, X, dims=(), cap=0):
        out = None
        for c, f in self.terms:
            j = f.jet(X, dims, cap) * c
            out = j if out is None else out + j
        return out

    def reach(self):
        return np.max([f.reach() for _, f in self.terms], axis=0)


class ProductField(ScalarField):
    def __init__(self, factors: list[ScalarField]):
        self.factors = factors
        self.ndim = factors[0].ndim

    def jet(self, X, dims=(), cap=0):
        out = None
        for f in self.factors:
            j = f.jet(X, dims, cap)
            out = j if out is None else out * j
        return out

    def reach(self):
        return np.max([f.reach() for f in self.factors], axis=0)


class DerivField(ScalarField):
    """Exact partial derivative ``d^alpha f`` (alpha over all coordinates)."""

    def __init__(self, base: ScalarField, alpha: Sequence[int]):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) < base.ndim:
            alpha = alpha + (0,) * (base.ndim - len(alpha))
        if len(alpha) != base.ndim or min(alpha) < 0:
            raise ValueError(f"bad multi-index {alpha} for a field with {base.ndim} coordinates")
        self.base = base
        self.alpha = alpha
        self.ndim = base.ndim

    def jet(self, X, dims=(), cap=0):
        if not any(self.alpha):
            return self.base.jet(X, dims, cap)
        need = tuple(sorted(set(dims) | {d for d, a in enumerate(self.alpha) if a}))
        j = self.base.jet(X, need, cap + sum(self.alpha)).differentiate(self.alpha)
        return j.restrict(dims, cap) if need != tuple(sorted(set(dims))) else j

    def reach(self):
        return self.base.reach()


def partial(f: ScalarField, alpha: Sequence[int]) -> ScalarField:
    return DerivField(f, alpha)


# -- Carleman weights -------------------------------------------------------

def paraboloid_coeffs(shift: Sequence[float], scale: float = 0.125) -> dict[tuple[int, ...], float]:
    """Coefficients of ``scale * sum_i (x_i + shift_i)^2``."""
    d = len(shift)
    out: dict[tuple[int, ...], float] = {}
    for i, c in enumerate(shift):
        e2 = [0] * d
        e2[i] = 2
        e1 = [0] * d
        e1[i] = 1
        out[tuple(e2)] = out.get(tuple(e2), 0.0) + scale
        out[tuple(e1)] = out.get(tuple(e1), 0.0) + 2 * scale * c
        out[(0,) * d] = out.get((0,) * d, 0.0) + scale * c * c
    return out


def default_shift(d: int) -> tuple[float, ...]:
    # keeps every gradient component of psi nonzero on the closed unit box
    base = (1.0, 0.5, 0.75, 1.25)
    return tuple(base[i % len(base)] for i in range(d))


@dataclass(frozen=True)
class WeightSpec:
    """Parameters of the weights ``r = exp(s phi)``, ``rho = 1/r``, ``phi = exp(lam psi)``.

    ``s_mode="time_dependent"`` replaces ``s`` by ``tau * theta(t)``.  A
    negative ``s`` (or ``tau``) is accepted: it is how ``r`` and ``rho`` are
    swapped.
    """

    psi_preset: str = "poly"
    lam: float = 1.0
    s_mode: str = "constant"
    s: float = 1.0
    tau: float = 1.0
    delta: float = 0.3
    T: float = 1.0
    beta: float = 0.5
    x_star: tuple[float, ...] = (-0.2, -0.2)
    c0: float = 1.5
    d: int = 2
    poly_coeffs: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.psi_preset not in ("poly", "hyperbolic"):
            raise SpecError(f"unknown psi preset {self.psi_preset!r}")
        if self.s_mode not in ("constant", "time_dependent"):
            raise SpecError(f"unknown s mode {self.s_mode!r}")
        if self.d < 1:
            raise SpecError("dimension must be >= 1")
        if not 0 < self.delta <= 0.5:
            raise SpecError(f"delta must lie in (0, 1/2], got {self.delta}")
        if self.T <= 0:
            raise SpecError("T must be positive")
        if self.lam < 1:
            raise SpecError(f"lambda must be >= 1, got {self.lam}")
        if self.s_mode == "constant" and abs(self.s) < 1:
            raise SpecError(f"|s| must be >= 1, got {self.s}")
        if self.s_mode == "time_dependent" and abs(self.tau) < 1:
            raise SpecError(f"|tau| must be >= 1, got {self.tau}")
        if self.psi_preset == "hyperbolic":
            if not 0 < self.beta < 1:
                raise SpecError("beta must lie in (0, 1)")
            if self.c0 <= 0:
                raise SpecError("c0 must be positive")
            xs = np.asarray(self.x_star, dtype=float)
            if xs.shape != (self.d,):
                raise SpecError(f"x_star must have {self.d} coordinates")
            if np.all((xs >= 0) & (xs <= 1)):
                raise SpecError("x_star must lie outside the closed unit box")
            lo = _hyperbolic_psi_min(self)
            if lo < 1:
                raise SpecError(f"hyperbolic psi must be >= 1 on the space-time box, min is {lo:.4g}")
        if self.poly_coeffs is not None:
            for key in self.poly_coeffs:
                if len(key) != self.d:
                    raise SpecError(f"monomial {key} does not match dimension {self.d}")

    @property
    def coeffs(self) -> dict[tuple[int, ...], float]:
        if self.poly_coeffs is not None:
            return dict(self.poly_coeffs)
        return paraboloid_coeffs(default_shift(self.d))

    def with_(self, **changes) -> "WeightSpec":
        return replace(self, **changes)


def _hyperbolic_psi_min(spec: WeightSpec, n: int = 41) -> float:
    g = np.linspace(0.0, 1.0, n)
    grids = np.meshgrid(*([g] * spec.d), indexing="ij")
    dist2 = sum((gi - xs) ** 2 for gi, xs in zip(grids, spec.x_star))
    return float(dist2.min() - spec.beta * spec.T ** 2 + spec.c0)


class Weights(NamedTuple):
    r: ScalarField
    rho: ScalarField
    phi: ScalarField
    psi: ScalarField


def theta(t, delta: float, T: float):
    """Parabolic time factor ``1 / ((t + delta T)(T + delta T - t))`` on [0, T]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ValueError(f"theta is defined on [0, {T}] only")
    out = 1.0 / ((t_arr + delta * T) * (T + delta * T - t_arr))
    return float(out) if out.ndim == 0 else out


def theta_max(delta: float, T: float) -> float:
    return 1.0 / (T * T * delta * (1.0 + delta))


def _theta_jet(t, delta: float, T: float):
    return 1.0 / ((t + delta * T) * (T + delta * T - t))


def _poly(coeffs: dict[tuple[int, ...], float], xs: list[Jet]):
    total = 0.0
    for expo, c in coeffs.items():
        term = c
        for x, e in zip(xs, expo):
            if e:
                term = term * x ** e
        total = total + term
    return total


def _as_jet(v, like: Jet) -> Jet:
    return v if isinstance(v, Jet) else Jet.constant(v, like.center, like.cap, like.dims)


def psi_function(spec: WeightSpec) -> Callable[[list[Jet]], Jet]:
    d = spec.d
    if spec.psi_preset == "poly":
        coeffs = spec.coeffs
        return lambda xs: _as_jet(_poly(coeffs, xs[:d]), xs[0])
    xs_star = tuple(float(v) for v in spec.x_star)

    def hyper(xs):
        out = spec.c0 - spec.beta * xs[d] ** 2
        for x, c in zip(xs[:d], xs_star):
            out = out + (x - c) ** 2
        return out

    return hyper


def make_weights(spec: WeightSpec, margin: float = 0.5, margin_t: float | None = None) -> Weights:
    """Build ``(r, rho, phi, psi)`` for ``spec``.

    Fields are evaluable on ``[0, 1]^d`` widened by ``margin`` and, for
    time-dependent weights, on ``[0, T]`` widened by ``margin_t``.
    """
    d = spec.d
    ndim = d + 1
    lo = np.full(ndim, -margin)
    hi = np.full(ndim, 1.0 + margin)
    time_bound = spec.s_mode == "time_dependent" or spec.psi_preset == "hyperbolic"
    if time_bound:
        mt = margin if margin_t is None else margin_t
        lo[d], hi[d] = -mt, spec.T + mt
    else:
        lo[d], hi[d] = -np.inf, np.inf
    psi_fn = psi_function(spec)
    lam = spec.lam

    def phi_fn(xs):
        return (lam * psi_fn(xs)).exp()

    if spec.s_mode == "constant":
        s = spec.s

        def exponent(xs):
            return s * phi_fn(xs)
    else:
        tau, delta, T = spec.tau, spec.delta, spec.T

        def exponent(xs):
            return tau * _theta_jet(xs[d], delta, T) * phi_fn(xs)

    psi = ExprField(psi_fn, ndim, lo, hi, name="psi")
    phi = ExprField(phi_fn, ndim, lo, hi, name="phi")
    r = ExprField(lambda xs: exponent(xs).exp(), ndim, lo, hi, name="r")
    rho = ExprField(lambda xs: (-exponent(xs)).exp(), ndim, lo, hi, name="rho")
    return Weights(r, rho, phi, psi)


def hyperbolic_factors(spec: WeightSpec, margin: float = 0.5) -> tuple[ScalarField, ScalarField]:
    """``(theta_tilde(t), phi_tilde(x))`` with ``r = exp(s * theta_tilde * phi_tilde)``."""
    if spec.psi_preset != "hyperbolic":
        raise SpecError("factorization applies to the hyperbolic preset only")
    d, mu = spec.d, spec.lam
    ndim = d + 1
    lo = np.full(ndim, -margin)
    hi = np.full(ndim, 1.0 + margin)
    lo[d], hi[d] = -margin, spec.T + margin
    xs_star = tuple(float(v) for v in spec.x_star)

    def ttilde(xs):
        return (-mu * spec.beta * xs[d] ** 2).exp()

    def ptilde(xs):
        out = spec.c0
        for x, c in zip(xs[:d], xs_star):
            out = out + (x - c) ** 2
        return (mu * out).exp()

    return ExprField(ttilde, ndim, lo, hi, "theta_tilde"), ExprField(ptilde, ndim, lo, hi, "phi_tilde")


def s_field(spec: WeightSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Pointwise large parameter: ``s`` or ``tau * theta(t)``."""
    if spec.s_mode == "constant":
        return lambda X: np.full(np.atleast_2d(X).shape[0], abs(spec.s))
    return lambda X: abs(spec.tau) * _theta_jet(np.atleast_2d(X)[:, spec.d], spec.delta, spec.T)


@dataclass(frozen=True)
class RegimeReport:
    s_eff: float
    h: float
    dt: float | None
    eps: float
    sh: float
    tau_h: float | None
    dt_ratio: float | None
    sh_le_1: bool
    sh_le_eps: bool
    tau_h_ok: bool | None
    dt_ok: bool | None

    def holds(self, *names: str) -> bool:
        return all(bool(getattr(self, n)) for n in names)


def regime_check(spec: WeightSpec, h: float, dt: float | None = None, eps: float = 0.5) -> RegimeReport:
    """Report which smallness conditions hold for ``(spec, h, dt)``.

    For time-dependent weights the effective ``s`` is ``tau * max theta``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if dt is not None and dt <= 0:
        raise ValueError("dt must be positive")
    if spec.s_mode == "constant":
        s_eff = abs(spec.s)
    else:
        s_eff = abs(spec.tau) * theta_max(spec.delta, spec.T)
    tau = abs(spec.tau)
    tau_h = tau * h / (spec.delta * spec.T ** 2)
    dt_ratio = None if dt is None else dt * tau / (spec.T ** 3 * spec.delta ** 2)
    sh = s_eff * h
    return RegimeReport(
        s_eff=s_eff, h=h, dt=dt, eps=eps, sh=sh,
        tau_h=tau_h, dt_ratio=dt_ratio,
        sh_le_1=sh <= 1.0, sh_le_eps=sh <= eps,
        tau_h_ok=tau_h <= 1.0,
        dt_ok=None if dt_ratio is None else dt_ratio <= 0.5,
    )


DEFAULT_CAP = 10


def derivative(f: ScalarField, alpha: Sequence[int], x, cap_limit: int = DEFAULT_CAP) -> np.ndarray:
    """Exact mixed partial ``d^alpha f`` at the rows of ``x`` (via jets)."""
    alpha = tuple(int(a) for a in alpha) + (0,) * (f.ndim - len(alpha))
    if sum(alpha) > cap_limit:
        from .jets import JetError
        raise JetError(f"derivative order {sum(alpha)} exceeds the cap {cap_limit}")
    X = as_points(x, f.ndim)
    dims = tuple(i for i, a in enumerate(alpha) if a)
    return f.jet(X, dims, sum(alpha)).derivative(alpha)
