"""Registry of asymptotic claims about the Carleman weights, and their numerical checks.

An expansion claim states ``LHS = leading + sum of error terms`` where each
error term is a monomial ``s^a h^b dt^c T^p theta^q``.  A bound claim states
``LHS = O(error term)``.  The checks are

* :func:`fit_h_order`: with ``s`` fixed, the defect ``max |LHS - leading|``
  must decay like ``h^2`` (log-log least-squares slope);
* :func:`bounded_ratio`: over a grid of ``(s, h)`` the defect divided by the
  largest error monomial must stay within a factor 50.

Claims only run inside their validity regime (see ``fields.regime_check``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .discrete import BiIndex, avg, bi_avg, bi_diff, dt_diff, translate
from .fields import DerivField, ScalarField, WeightSpec, make_weights, regime_check, theta

NOISE_FLOOR = 1e-13
SLOPE_WINDOW = (-0.15, 0.25)
MAX_FIT_RESIDUAL = 0.05
RATIO_SPREAD = 50.0


class RegimeError(ValueError):
    """Raised when a claim is asked to run outside its validity regime."""


@dataclass(frozen=True)
class ErrorTerm:
    """Monomial ``s^s_exp h^h_exp dt^dt_exp T^T_pow theta(t)^theta_pow``."""

    s_exp: int
    h_exp: int = 2
    dt_exp: int = 0
    T_pow: int = 0
    theta_pow: int = 0

    def value(self, s, h, dt, T, th):
        out = np.asarray(s, dtype=float) ** self.s_exp * h ** self.h_exp
        if self.dt_exp:
            out = out * dt ** self.dt_exp
        return out * T ** self.T_pow * np.asarray(th) ** self.theta_pow

    def describe(self) -> str:
        parts = [f"s^{self.s_exp}"]
        if self.h_exp:
            parts.append(f"h^{self.h_exp}")
        if self.dt_exp:
            parts.append(f"dt^{self.dt_exp}")
        if self.T_pow:
            parts.append(f"T^{self.T_pow}")
        if self.theta_pow:
            parts.append(f"theta^{self.theta_pow}")
        return " ".join(parts)


Builder = Callable[[ScalarField, ScalarField, float, float | None, dict], tuple[list[ScalarField], ScalarField | None]]


@dataclass(frozen=True)
class ExpansionClaim:
    """One registered statement.

    ``build(r, rho, h, dt, indices)`` returns the list of left-hand sides (a
    bound claim may quantify over several shifted variants) and the leading
    term, or ``None`` for a bound claim.
    """

    id: str
    statement: str
    kind: str  # "expansion" or "bound"
    build: Builder = field(compare=False, repr=False)
    indices: dict = field(default_factory=dict, compare=False)
    error_terms: Callable[[dict], list[ErrorTerm]] = field(default=lambda idx: [], compare=False, repr=False)
    regime: tuple[str, ...] = ()
    time_dependent: bool = False
    uses_h: bool = True
    dt_rule: str | None = None  # "h2" couples dt = h^2
    fit_normalized: bool = False
    reach: Callable[[dict], int] = field(default=lambda idx: 0, compare=False, repr=False)
    notes: str = ""
    variant_of: str | None = None

    def terms(self) -> list[ErrorTerm]:
        return self.error_terms(self.indices)

    def s_exponents(self) -> list[int]:
        """Exponents of ``s`` in front of the ``(sh)^2`` factors (or of the bound)."""
        return [t.s_exp - t.h_exp for t in self.terms()]

    @property
    def sigma_max(self) -> int:
        return max(self.s_exponents())

    def with_indices(self, **changes) -> "ExpansionClaim":
        idx = dict(self.indices)
        for k, v in changes.items():
            if k not in idx:
                raise KeyError(f"claim {self.id} has no index {k!r}")
            idx[k] = type(idx[k])(*v) if isinstance(idx[k], BiIndex) else tuple(v)
        return replace(self, indices=idx)

    def discrete_orders_zero(self) -> bool:
        return all(v.order == 0 for v in self.indices.values() if isinstance(v, BiIndex))

    def default_env(self) -> WeightSpec:
        if self.time_dependent:
            return WeightSpec(s_mode="time_dependent", tau=1.0)
        return WeightSpec(s=2.0)


# -- helpers for builders -------------------------------------------------------

def _pad(alpha: Sequence[int], ndim: int = 3) -> tuple[int, ...]:
    a = tuple(alpha)
    return a + (0,) * (ndim - len(a))


def _d(f: ScalarField, alpha) -> ScalarField:
    a = _pad(alpha, f.ndim)
    return DerivField(f, a) if any(a) else f


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _bi(k: BiIndex) -> tuple[int, int]:
    return (k.k_i, k.k_j)


def _AD(f, l: BiIndex, k: BiIndex, h):
    """``A_h^l D_h^k f``."""
    return bi_avg(bi_diff(f, k, h), l, h)


def _DA(f, k: BiIndex, l: BiIndex, h):
    """``D_h^k A_h^l f``."""
    return bi_diff(bi_avg(f, l, h), k, h)


def _sum_orders(idx: dict, *names) -> int:
    return sum(idx[n].k_i + idx[n].k_j for n in names)


B = BiIndex


# -- builders -------------------------------------------------------------------

def _b_weight_deriv(r, rho, h, dt, idx):
    return [_d(r * _d(rho, idx["alpha"]), idx["beta"])], None


def _b_weight_deriv_shifted(r, rho, h, dt, idx):
    i = idx["dir"][0]
    out = []
    for steps in (-2, -1, 0, 1, 2):
        out.append(_d(r * translate(_d(rho, idx["alpha"]), i, steps, h), idx["beta"]))
    return out, None


def _b_weight_sq_deriv(r, rho, h, dt, idx):
    return [_d(r * r * _d(rho, idx["alpha"]) * _d(rho, idx["beta"]), idx["delta"])], None


def _b_weighted_avg_diff(r, rho, h, dt, idx):
    a, k, l = idx["alpha"], idx["k"], idx["l"]
    lhs = r * _AD(_d(rho, a), l, k, h)
    lead = r * _d(rho, _add(_pad(_bi(k), 2), a))
    return [lhs], lead


def _b_weighted_avg_diff_wrong(r, rho, h, dt, idx):
    lhs, lead = _b_weighted_avg_diff(r, rho, h, dt, idx)
    a, k = idx["alpha"], idx["k"]
    # one spatial derivative too many along the first direction
    wrong = r * _d(rho, _add(_add(_pad(_bi(k), 2), a), (1, 0)))
    return lhs, wrong


def _b_avg_diff_weight_deriv(r, rho, h, dt, idx):
    a, b, k, l = idx["alpha"], idx["beta"], idx["k"], idx["l"]
    g = _d(r * _d(rho, a), b)
    return [_AD(g, l, k, h)], _d(g, _bi(k))


def _b_avg_diff_weight_sq(r, rho, h, dt, idx):
    a, b, dl, k, l = idx["alpha"], idx["beta"], idx["delta"], idx["k"], idx["l"]
    g = _d(r * r * _d(rho, a) * _d(rho, b), dl)
    return [_AD(g, l, k, h)], _d(g, _bi(k))


def _b_avg_diff_shifted(r, rho, h, dt, idx):
    a, b, k, l = idx["alpha"], idx["beta"], idx["k"], idx["l"]
    i = idx["dir"][0]
    out = []
    for steps in (0, 1, 2):  # sigma h with sigma in {0, 1/2, 1}
        g = _d(r * translate(_d(rho, a), i, steps, h), b)
        out.append(_AD(g, l, k, h))
    return out, None


def _b_avg_diff_sq_shifted(r, rho, h, dt, idx):
    a, b, dl, k, l = idx["alpha"], idx["beta"], idx["delta"], idx["k"], idx["l"]
    out = []
    for si in (0, 1, 2):
        for sj in (0, 1, 2):
            g = _d(r * r * translate(_d(rho, a), 0, si, h) * translate(_d(rho, b), 1, sj, h), dl)
            out.append(_AD(g, l, k, h))
    return out, None


def _b_nested(r, rho, h, dt, idx):
    a, k, l, m, n = idx["alpha"], idx["k"], idx["l"], idx["m"], idx["n"]
    lhs = _AD(_d(r * _AD(rho, m, n, h), a), l, k, h)
    lead = _d(r * _d(rho, _bi(n)), _add(_pad(_bi(k), 2), a))
    return [lhs], lead


def _b_nested_alt(r, rho, h, dt, idx):
    lhs, _ = _b_nested(r, rho, h, dt, idx)
    a, n = idx["alpha"], idx["n"]
    lead = _d(r * _d(rho, _bi(n)), _add(_pad(_bi(n), 2), a))
    return lhs, lead


def _b_nested_sq(r, rho, h, dt, idx):
    a, b, k, l, m, n, p, q = (idx[x] for x in ("alpha", "beta", "k", "l", "m", "n", "p", "q"))
    inner = r * r * _AD(_d(rho, a), p, q, h) * _AD(rho, m, n, h)
    lhs = _AD(_d(inner, b), l, k, h)
    lead_inner = r * r * _d(rho, _add(_pad(_bi(q), 2), a)) * _d(rho, _bi(n))
    lead = _d(lead_inner, _add(_pad(_bi(k), 2), b))
    return [lhs], lead


_DT = (0, 0, 1)


def _b_time_deriv(r, rho, h, dt, idx):
    a, m, n = idx["alpha"], idx["m"], idx["n"]
    lhs = DerivField(r * _AD(_d(rho, a), m, n, h), _DT)
    lead = DerivField(r * _d(rho, _add(_pad(_bi(n), 2), a)), _DT)
    return [lhs], lead


def _b_time_deriv_nested(r, rho, h, dt, idx):
    a, j, k, m, n = idx["alpha"], idx["l"], idx["k"], idx["m"], idx["n"]
    inner = r * _AD(_d(rho, a), m, n, h)
    return [DerivField(_AD(inner, j, k, h), _DT)], None


def _b_time_diff(r, rho, h, dt, idx):
    a, m, n = idx["alpha"], idx["m"], idx["n"]
    lhs = dt_diff(r * _DA(_d(rho, a), n, m, h), dt, "forward")
    lead = DerivField(r * _d(rho, _add(_pad(_bi(n), 2), a)), _DT)
    return [lhs], lead


# -- registry ---------------------------------------------------------------------

def _abs(a) -> int:
    return int(sum(a))


def register_builtin_claims() -> dict[str, ExpansionClaim]:
    """Build the registry of claims with their default indices."""
    claims: list[ExpansionClaim] = []

    claims.append(ExpansionClaim(
        "weight-deriv-bound",
        "d^beta (r d^alpha rho) = O(s^|alpha|)",
        "bound", _b_weight_deriv,
        {"alpha": (1, 1), "beta": (1, 0)},
        lambda i: [ErrorTerm(_abs(i["alpha"]), 0)],
        regime=(), uses_h=False))

    claims.append(ExpansionClaim(
        "weight-deriv-shifted-bound",
        "d^beta (r(x) (d^alpha rho)(x + sigma h e_i)) = O(s^|alpha|), sigma in [-1, 1], sh <= eps",
        "bound", _b_weight_deriv_shifted,
        {"alpha": (1, 1), "beta": (1, 0), "dir": (0,)},
        lambda i: [ErrorTerm(_abs(i["alpha"]), 0)],
        regime=("sh_le_eps",), reach=lambda i: 2,
        notes="sigma sampled at -1, -1/2, 0, 1/2, 1"))

    claims.append(ExpansionClaim(
        "weight-sq-deriv-bound",
        "d^delta (r^2 d^alpha rho d^beta rho) = O(s^|alpha+beta|)",
        "bound", _b_weight_sq_deriv,
        {"alpha": (1, 0), "beta": (1, 0), "delta": (0, 1)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + _abs(i["beta"]), 0)],
        regime=(), uses_h=False))

    claims.append(ExpansionClaim(
        "weighted-avg-diff",
        "r A^l D^k d^alpha rho = r d^(k+alpha) rho + s^(|alpha|+k_i) O((sh)^2)"
        " + s^(|alpha|+k_j) O((sh)^2) + s^|alpha+k| O((sh)^2), sh <= eps",
        "expansion", _b_weighted_avg_diff,
        {"alpha": (1, 0), "k": B(1, 1), "l": B(1, 1)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + i["k"].k_i + 2),
                   ErrorTerm(_abs(i["alpha"]) + i["k"].k_j + 2),
                   ErrorTerm(_abs(i["alpha"]) + i["k"].order + 2)],
        regime=("sh_le_eps",), reach=lambda i: _sum_orders(i, "k", "l")))

    claims.append(ExpansionClaim(
        "weighted-avg-diff.wrong-order",
        "r A^l D^k d^alpha rho compared with r d^(k+alpha+e_1) rho (deliberately wrong)",
        "expansion", _b_weighted_avg_diff_wrong,
        {"alpha": (1, 0), "k": B(1, 1), "l": B(1, 1)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + i["k"].order + 2)],
        regime=("sh_le_eps",), reach=lambda i: _sum_orders(i, "k", "l"),
        variant_of="weighted-avg-diff", notes="control variant with an off-by-one leading term"))

    claims.append(ExpansionClaim(
        "avg-diff-of-weight-deriv",
        "A^l D^k d^beta (r d^alpha rho) = d^k d^beta (r d^alpha rho) + h^2 O(s^|alpha|), sh <= 1",
        "expansion", _b_avg_diff_weight_deriv,
        {"alpha": (1, 0), "beta": (0, 1), "k": B(1, 1), "l": B(1, 0)},
        lambda i: [ErrorTerm(_abs(i["alpha"]), 2)],
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l")))

    claims.append(ExpansionClaim(
        "avg-diff-of-weight-sq",
        "A^l D^k d^delta (r^2 d^alpha rho d^beta rho) = d^(k+delta)(r^2 d^alpha rho d^beta rho)"
        " + h^2 O(s^(|alpha|+|beta|)), sh <= 1",
        "expansion", _b_avg_diff_weight_sq,
        {"alpha": (1, 0), "beta": (0, 1), "delta": (0, 0), "k": B(1, 0), "l": B(0, 1)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + _abs(i["beta"]), 2)],
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l")))

    claims.append(ExpansionClaim(
        "avg-diff-shifted-bound",
        "A^l D^k d^beta (r(x) d^alpha rho(x + sigma h e_i)) = O(s^|alpha|), sigma in [0, 1], sh <= 1",
        "bound", _b_avg_diff_shifted,
        {"alpha": (1, 0), "beta": (0, 1), "k": B(1, 0), "l": B(0, 1), "dir": (0,)},
        lambda i: [ErrorTerm(_abs(i["alpha"]), 0)],
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l") + 2,
        notes="sigma sampled at 0, 1/2, 1"))

    claims.append(ExpansionClaim(
        "avg-diff-sq-shifted-bound",
        "A^l D^k d^delta (r^2 d^alpha rho(x + sigma h e_i) d^beta rho(x + sigma' h e_j))"
        " = O(s^(|alpha|+|beta|)), sh <= 1",
        "bound", _b_avg_diff_sq_shifted,
        {"alpha": (1, 0), "beta": (0, 1), "delta": (0, 0), "k": B(1, 0), "l": B(0, 1)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + _abs(i["beta"]), 0)],
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l") + 2,
        notes="sigma, sigma' sampled at 0, 1/2, 1"))

    def nested_terms(i):
        a = _abs(i["alpha"])
        n = i["n"]
        return [ErrorTerm(a + n.k_i + 2), ErrorTerm(a + n.k_j + 2), ErrorTerm(n.order + 2)]

    nested_idx = {"alpha": (1, 0), "k": B(1, 0), "l": B(0, 1), "m": B(1, 0), "n": B(0, 1)}
    claims.append(ExpansionClaim(
        "nested-avg-diff",
        "A^l D^k d^alpha (r A^m D^n rho) = d^(k+alpha)(r d^n rho) + s^(|alpha|+n_i) O((sh)^2)"
        " + s^(|alpha|+n_j) O((sh)^2) + s^|n| O((sh)^2), sh <= 1",
        "expansion", _b_nested, nested_idx, nested_terms,
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l", "m", "n"),
        notes="leading term uses the outer difference index k"))
    claims.append(ExpansionClaim(
        "nested-avg-diff.alt-leading",
        "A^l D^k d^alpha (r A^m D^n rho) compared with d^(n+alpha)(r d^n rho)",
        "expansion", _b_nested_alt, dict(nested_idx), nested_terms,
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l", "m", "n"),
        variant_of="nested-avg-diff",
        notes="alternative leading term with the inner index n in place of k; equal when k = n"))

    claims.append(ExpansionClaim(
        "nested-avg-diff-sq",
        "A^l D^k d^beta (r^2 A^p D^q (d^alpha rho) A^m D^n rho) = d^(k+beta)(r^2 d^(q+alpha) rho d^n rho)"
        " + s^|alpha+n+q| O((sh)^2), sh <= 1",
        "expansion", _b_nested_sq,
        {"alpha": (1, 0), "beta": (0, 1), "k": B(1, 0), "l": B(0, 1),
         "p": B(1, 0), "q": B(0, 1), "m": B(0, 1), "n": B(1, 0)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + i["n"].order + i["q"].order + 2)],
        regime=("sh_le_1",), reach=lambda i: _sum_orders(i, "k", "l", "p", "q", "m", "n")))

    def time_terms(i):
        a = _abs(i["alpha"])
        n = i["n"]
        return [ErrorTerm(a + n.k_i + 2, T_pow=1, theta_pow=1),
                ErrorTerm(a + n.k_j + 2, T_pow=1, theta_pow=1),
                ErrorTerm(a + n.order + 2, T_pow=1, theta_pow=1)]

    claims.append(ExpansionClaim(
        "time-deriv-avg-diff",
        "d_t (r A^m D^n d^alpha rho) = d_t (r d^(n+alpha) rho) + T s^|alpha+n| theta O((sh)^2) + ...,"
        " s = tau theta(t), tau h / (delta T^2) <= 1",
        "expansion", _b_time_deriv,
        {"alpha": (1, 0), "m": B(1, 0), "n": B(0, 1)},
        time_terms, regime=("tau_h_ok",), time_dependent=True, fit_normalized=True,
        reach=lambda i: _sum_orders(i, "m", "n"),
        notes="exponent of s read as |alpha + n|; s(t) = tau theta(t)"))

    claims.append(ExpansionClaim(
        "time-deriv-nested-bound",
        "d_t A^l D^k (r A^m D^n d^alpha rho) = T theta s^|alpha+n| O(1), tau h / (delta T^2) <= 1",
        "bound", _b_time_deriv_nested,
        {"alpha": (1, 0), "l": B(1, 0), "k": B(0, 1), "m": B(0, 1), "n": B(1, 0)},
        lambda i: [ErrorTerm(_abs(i["alpha"]) + i["n"].order, 0, T_pow=1, theta_pow=1)],
        regime=("tau_h_ok",), time_dependent=True, reach=lambda i: _sum_orders(i, "l", "k", "m", "n"),
        notes="exponent of s read as |alpha + n|"))

    def fully_terms(i):
        sig = _abs(i["alpha"]) + i["n"].order
        return [ErrorTerm(sig + 2, 2, T_pow=1, theta_pow=1),
                ErrorTerm(sig + 2, 2, dt_exp=1, T_pow=2, theta_pow=2),
                ErrorTerm(sig, 0, dt_exp=1, T_pow=2, theta_pow=2)]

    claims.append(ExpansionClaim(
        "time-diff-avg-diff",
        "D_t (r D^n A^m d^alpha rho) = d_t (r d^(n+alpha) rho) + T (sh)^2 s^|n+alpha| theta O(1)"
        " + dt t+((sh)^2 T^2 s^|n+alpha| theta^2) O(1) + dt T^2 t+(s^|n+alpha| theta^2) O(1),"
        " tau h / (delta T^2) <= 1 and dt tau / (T^3 delta^2) <= 1/2",
        "expansion", _b_time_diff,
        {"alpha": (1, 0), "m": B(1, 0), "n": B(0, 1)},
        fully_terms, regime=("tau_h_ok", "dt_ok"), time_dependent=True, dt_rule="h2",
        reach=lambda i: _sum_orders(i, "m", "n"),
        notes="forward time difference; dt = h^2"))

    return {c.id: c for c in claims}


REGISTRY = register_builtin_claims()


def get_claim(claim_id: str) -> ExpansionClaim:
    try:
        return REGISTRY[claim_id]
    except KeyError:
        raise KeyError(f"unknown claim {claim_id!r}; known: {', '.join(sorted(REGISTRY))}") from None


# -- measurement ------------------------------------------------------------------

def sample_points(n: int = 50, d: int = 2, seed: int = 0, time_range: tuple[float, float] | None = None) -> np.ndarray:
    """Scrambled Halton points in ``(0, 1)^d`` with a time slot.

    The time slot is 0 unless ``time_range`` is given, in which case it is
    drawn from that interval as an extra quasi-random coordinate.
    """
    dim = d + (1 if time_range is not None else 0)
    U = qmc.Halton(dim, scramble=True, seed=seed).random(n)
    X = np.zeros((n, d + 1))
    X[:, :d] = U[:, :d]
    if time_range is not None:
        X[:, d] = time_range[0] + (time_range[1] - time_range[0]) * U[:, d]
    return X


def claim_points(claim: ExpansionClaim, env: WeightSpec, n: int = 50, seed: int = 0,
                 dt_max: float = 0.0) -> np.ndarray:
    if claim.time_dependent or env.psi_preset == "hyperbolic":
        return sample_points(n, env.d, seed, (0.0, env.T - dt_max))
    return sample_points(n, env.d, seed)


def _check_env(claim: ExpansionClaim, env: WeightSpec) -> None:
    if claim.time_dependent and env.s_mode != "time_dependent":
        raise ValueError(f"claim {claim.id} needs time-dependent weights")
    if not claim.time_dependent and env.s_mode != "constant":
        raise ValueError(f"claim {claim.id} needs a constant s")
    if env.d != 2:
        raise ValueError("claims act on the direction pair (0, 1) of a two-dimensional domain")


def dt_for(claim: ExpansionClaim, h: float, dt: float | None) -> float | None:
    if dt is None and claim.dt_rule == "h2":
        return h * h
    return dt


def check_regime(claim: ExpansionClaim, env: WeightSpec, h: float, dt: float | None, eps: float = 0.5):
    rep = regime_check(env, h, dt, eps)
    if claim.regime and not rep.holds(*claim.regime):
        raise RegimeError(f"claim {claim.id} refused: regime {claim.regime} fails "
                          f"(sh={rep.sh:.4g}, tau h/(delta T^2)={rep.tau_h:.4g}, dt ratio={rep.dt_ratio})")
    return rep


def point_scale(claim: ExpansionClaim, env: WeightSpec, X: np.ndarray, h: float, dt: float | None,
                mode: str) -> np.ndarray:
    """Pointwise normalizer.

    ``mode="ratio"``: the largest error monomial at each point.
    ``mode="fit"``: for time-dependent claims flagged ``fit_normalized``,
    ``T theta(t) s(t)^sigma``; otherwise 1.
    """
    N = X.shape[0]
    if env.s_mode == "time_dependent":
        th = theta(X[:, env.d], env.delta, env.T)
        s = abs(env.tau) * th
    else:
        th = np.ones(N)
        s = np.full(N, abs(env.s))
    if mode == "fit":
        if not claim.fit_normalized:
            return np.ones(N)
        sig = claim.sigma_max
        t0 = claim.terms()[0]
        return env.T ** t0.T_pow * th ** t0.theta_pow * s ** sig
    vals = [t.value(s, h if claim.uses_h else 1.0, dt if dt is not None else 0.0, env.T, th)
            for t in claim.terms()]
    return np.max(vals, axis=0)


def _weights_for(claim: ExpansionClaim, env: WeightSpec, h: float, swap: bool):
    margin = max(0.05, (claim.reach(claim.indices) + 2) * h / 2)
    spec = env
    if swap:
        spec = env.with_(tau=-env.tau) if env.s_mode == "time_dependent" else env.with_(s=-env.s)
    W = make_weights(spec, margin=margin, margin_t=min(0.1, 0.3 * env.delta * env.T))
    # with s -> -s the roles flip: what the claim calls r is exp(-s phi) of the swapped spec
    return (W.rho, W.r) if swap else (W.r, W.rho)


def defect_values(claim: ExpansionClaim, env: WeightSpec, h: float, dt: float | None = None,
                  points=None, swap: bool = False, eps: float = 0.5, check: bool = True) -> np.ndarray:
    """``|LHS - leading|`` (or ``|LHS|`` for bounds) per point, max over shifted variants."""
    _check_env(claim, env)
    dt = dt_for(claim, h, dt)
    if check:
        check_regime(claim, env, h, dt, eps)
    X = claim_points(claim, env, dt_max=dt or 0.0) if points is None else np.asarray(points, dtype=float)
    r, rho = _weights_for(claim, env, h, swap)
    lhs_list, lead = claim.build(r, rho, h, dt, claim.indices)
    lead_v = 0.0 if lead is None else lead(X)
    return np.max([np.abs(f(X) - lead_v) for f in lhs_list], axis=0)


def measure_defect(claim: ExpansionClaim, env: WeightSpec, h: float, dt: float | None = None,
                   points=None, swap: bool = False, eps: float = 0.5, normalize: str | None = None) -> float:
    """Max over points of the defect, optionally divided pointwise by a normalizer."""
    dt = dt_for(claim, h, dt)
    X = claim_points(claim, env, dt_max=dt or 0.0) if points is None else np.asarray(points, dtype=float)
    v = defect_values(claim, env, h, dt, X, swap, eps)
    if normalize:
        v = v / point_scale(claim, env, X, h, dt, normalize)
    return float(v.max())


# -- reports ------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    claim_id: str
    test: str
    samples: list[dict]
    verdict: str
    statistic: dict
    thresholds: dict
    environment: dict
    statement: str = ""
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict in ("PASS", "NOISE")

    def to_json(self) -> dict:
        return {"claim": self.claim_id, "statement": self.statement, "test": self.test,
                "verdict": self.verdict, "statistic": self.statistic, "thresholds": self.thresholds,
                "environment": self.environment, "notes": self.notes, "samples": self.samples}


def env_block(env: WeightSpec) -> dict:
    out = {"psi_preset": env.psi_preset, "lambda": env.lam, "s_mode": env.s_mode,
           "delta": env.delta, "T": env.T, "d": env.d}
    if env.psi_preset == "hyperbolic":
        out.update(beta=env.beta, x_star=list(env.x_star), c0=env.c0)
    return out


def _with_s(env: WeightSpec, s: float) -> WeightSpec:
    return env.with_(tau=s) if env.s_mode == "time_dependent" else env.with_(s=s)


def fit_loglog(h: Sequence[float], E: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log E`` against ``log h`` and the RMS residual."""
    x, y = np.log(np.asarray(h)), np.log(np.asarray(E))
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def fit_h_order(claim: ExpansionClaim, env: WeightSpec | None = None, h_seq: Sequence[float] = (),
                s_policy: str = "fixed_s", s: float = 2.0, sh: float = 0.25, points=None,
                expected: float | None = None, seed: int = 0) -> ConvergenceReport:
    """Fit the h-order of a claim's defect.

    ``fixed_s`` keeps ``s`` (or ``tau``) at ``s``; the expected slope is the
    claim's h exponent (2).  ``fixed_sh`` sets ``s = sh / h`` at each level;
    the expected slope is then ``-sigma_max``.
    """
    if claim.kind != "expansion":
        raise ValueError(f"claim {claim.id} is a bound; use bounded_ratio")
    env = claim.default_env() if env is None else env
    h_seq = [float(v) for v in h_seq] or [2.0 ** -k for k in range(4, 10)]
    if len(h_seq) < 4:
        raise ValueError("fit_h_order needs at least 4 h levels")
    if s_policy not in ("fixed_s", "fixed_sh"):
        raise ValueError(f"unknown s policy {s_policy!r}")
    h_exp = claim.terms()[0].h_exp
    if expected is None:
        expected = float(h_exp) if s_policy == "fixed_s" else float(-claim.sigma_max)
    samples, E = [], []
    for h in h_seq:
        s_val = s if s_policy == "fixed_s" else sh / h
        e = _with_s(env, s_val)
        dt = dt_for(claim, h, None)
        X = claim_points(claim, e, dt_max=dt or 0.0, seed=seed) if points is None else points
        val = measure_defect(claim, e, h, dt, X, normalize="fit" if claim.fit_normalized else None)
        samples.append({"claim": claim.id, "h": h, "s": s_val, "dt": dt, "E": val})
        E.append(val)
    lo, hi = expected + SLOPE_WINDOW[0], expected + SLOPE_WINDOW[1]
    notes = []
    if max(E) <= NOISE_FLOOR:
        notes.append("below noise floor: defects at round-off level, no fit performed")
        return ConvergenceReport(claim.id, "h_order", samples, "NOISE",
                                 {"slope": None, "residual": None, "max_E": max(E)},
                                 {"slope": [lo, hi], "residual": MAX_FIT_RESIDUAL},
                                 env_block(env), claim.statement, notes)
    if min(E) <= 0:
        notes.append("zero defect at some level")
        Epos = [max(v, 1e-300) for v in E]
    else:
        Epos = E
    slope, resid = fit_loglog(h_seq, Epos)
    ok = lo <= slope <= hi and resid <= MAX_FIT_RESIDUAL
    return ConvergenceReport(claim.id, "h_order", samples, "PASS" if ok else "FAIL",
                             {"slope": slope, "residual": resid, "expected": expected},
                             {"slope": [lo, hi], "residual": MAX_FIT_RESIDUAL},
                             env_block(env), claim.statement, notes)


def bounded_ratio(claim: ExpansionClaim, env: WeightSpec | None = None,
                  s_values: Sequence[float] = (1, 2, 4, 8, 16, 32), sh_values: Sequence[float] = (0.5, 0.25),
                  points=None, seed: int = 0) -> ConvergenceReport:
    """Spread of ``E / (largest error monomial)`` over a grid of ``(s, h)``."""
    env = claim.default_env() if env is None else env
    s_values = [float(v) for v in s_values]
    if max(s_values) < 10 * min(s_values):
        raise ValueError("s values must span at least one decade")
    samples, ratios = [], []
    sh_list = [float(v) for v in sh_values] if claim.uses_h else [None]
    for s in s_values:
        e = _with_s(env, s)
        for shv in sh_list:
            if shv is None:
                h = 0.1
            elif env.s_mode == "time_dependent":
                h = shv / (s * (1.0 / (env.T ** 2 * env.delta * (1 + env.delta))))
            else:
                h = shv / s
            dt = dt_for(claim, h, None)
            X = claim_points(claim, e, dt_max=dt or 0.0, seed=seed) if points is None else points
            v = defect_values(claim, e, h, dt, X)
            ratio = float(np.max(v / point_scale(claim, e, X, h, dt, "ratio")))
            samples.append({"claim": claim.id, "s": s, "h": h if claim.uses_h else None, "dt": dt,
                            "E": float(v.max()), "ratio": ratio})
            ratios.append(ratio)
    ratios_a = np.array(ratios)
    spread = float(ratios_a.max() / ratios_a.min()) if ratios_a.min() > 0 else float("inf")
    ok = spread <= RATIO_SPREAD
    return ConvergenceReport(claim.id, "bounded_ratio", samples, "PASS" if ok else "FAIL",
                             {"max_over_min": spread, "ratio_min": float(ratios_a.min()),
                              "ratio_max": float(ratios_a.max()),
                              "normalizer": " | ".join(t.describe() for t in claim.terms())},
                             {"max_over_min": RATIO_SPREAD}, env_block(env), claim.statement)


def disambiguate(variants: Sequence[ExpansionClaim], env: WeightSpec | None = None,
                 h_seq: Sequence[float] = (), s: float = 2.0, seed: int = 0) -> dict:
    """Fit each variant's h-order and report which leading terms give slope about 2.

    A wrong leading term leaves an O(1) defect, i.e. slope about 0.  The
    registry is not modified.
    """
    if len(variants) < 1:
        raise ValueError("need at least one variant")
    reports = [fit_h_order(v, env, h_seq, s=s, seed=seed) for v in variants]
    rows = [{"claim": r.claim_id, "slope": r.statistic["slope"], "residual": r.statistic["residual"],
             "verdict": r.verdict} for r in reports]
    supported = [r.claim_id for r in reports if r.passed]
    return {"variants": rows, "supported": supported, "reports": reports}
