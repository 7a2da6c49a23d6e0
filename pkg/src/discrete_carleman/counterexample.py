"""Failure of uniform observability for the fully discrete backward heat equation.

On the unit square with ``M`` interior nodes per direction (``h = 1/(M+1)``)
the diagonal checkerboard ``q~`` (``+1`` on even diagonal nodes, ``-1`` on odd
ones, ``0`` elsewhere) is an eigenfunction of the five-point Laplacian with
eigenvalue ``-4/h^2``.  With ``alpha = 4/h^2`` and the base
``a = (1/(1 - alpha dt))^(1/(alpha dt))``, the grid function
``q(t) = a^(-alpha (T - t)) q~`` solves

    D_t q + Lap_h q(t + dt/2) = 0,   D_t q(t) = (q(t + dt/2) - q(t - dt/2)) / dt.

It vanishes off the diagonal, so any observation set ``omega`` that misses the
diagonal sees nothing, while ``|q(0)|`` is of size ``a^(-4T/h^2)``.

Amplitudes are kept as natural logarithms, because ``a^(-4T/h^2)`` underflows
double precision already for moderate ``M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class GridFunction2D:
    M: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.M + 2, self.M + 2):
            raise ValueError(f"values must have shape {(self.M + 2,) * 2}, got {v.shape}")
        if np.any(v[0, :]) or np.any(v[-1, :]) or np.any(v[:, 0]) or np.any(v[:, -1]):
            raise ValueError("boundary values must be exactly zero")

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    def norm_l2h(self) -> float:
        return float(self.h * np.sqrt(np.sum(self.values.astype(float) ** 2)))


@dataclass(frozen=True)
class TimeGrid:
    N: int
    T: float

    def __post_init__(self):
        if self.N < 1 or self.T <= 0:
            raise ValueError("need N >= 1 and T > 0")

    @property
    def dt(self) -> float:
        return self.T / self.N

    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


def stencil_sum(q: GridFunction2D) -> np.ndarray:
    """Unscaled five-point sum ``q_E + q_N + q_W + q_S - 4 q`` on the interior, zero boundary."""
    v = q.values
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4 * v[1:-1, 1:-1]
    return out


def laplacian5(q: GridFunction2D) -> GridFunction2D:
    """Five-point Laplacian with homogeneous Dirichlet data."""
    return GridFunction2D(q.M, stencil_sum(q).astype(float) / q.h ** 2)


def build_checkerboard(M: int) -> GridFunction2D:
    if M < 2:
        raise ValueError("M must be >= 2")
    v = np.zeros((M + 2, M + 2), dtype=np.int64)
    i = np.arange(1, M + 1)
    v[i, i] = np.where(i % 2 == 0, 1, -1)
    return GridFunction2D(M, v)


def sine_mode(M: int, p: int = 1, r: int = 1) -> tuple[GridFunction2D, float]:
    """Discrete Dirichlet eigenfunction ``sin(p pi x) sin(r pi y)`` and its eigenvalue."""
    h = 1.0 / (M + 1)
    x = np.arange(M + 2) * h
    v = np.outer(np.sin(p * np.pi * x), np.sin(r * np.pi * x))
    v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0
    lam = -(2.0 / h ** 2) * (2.0 - math.cos(p * math.pi * h) - math.cos(r * math.pi * h))
    return GridFunction2D(M, v), lam


def eigen_residual(M: int) -> int:
    """``max |stencil_sum(q~) + 4 q~|`` in integer arithmetic; zero for the checkerboard."""
    q = build_checkerboard(M)
    return int(np.max(np.abs(stencil_sum(q) + 4 * q.values)))


def amplification_base(alpha: float, dt: float) -> float:
    """``a = (1 / (1 - alpha dt))^(1 / (alpha dt))``."""
    c = alpha * dt
    if not 0 < c < 1:
        raise ValueError(f"need 0 < alpha*dt < 1, got {c}")
    return math.exp(-math.log1p(-c) / c)


def log_amplification_base(c: float) -> float:
    if not 0 < c < 1:
        raise ValueError(f"need 0 < alpha*dt < 1, got {c}")
    return -math.log1p(-c) / c


@dataclass(frozen=True)
class ExactSolution:
    """``q(t) = exp(logamp(t)) q~`` with ``logamp(t) = -alpha (T - t) ln a``."""

    M: int
    N: int
    T: float

    def __post_init__(self):
        if self.c >= 1:
            raise ValueError(f"alpha*dt = {self.c:g} must be < 1")

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    @property
    def alpha(self) -> float:
        return 4.0 / self.h ** 2

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def c(self) -> float:
        return self.alpha * self.dt

    @property
    def ln_a(self) -> float:
        return log_amplification_base(self.c)

    @property
    def pattern(self) -> GridFunction2D:
        return build_checkerboard(self.M)

    def log_amp(self, t) -> np.ndarray:
        return -self.alpha * (self.T - np.asarray(t, dtype=float)) * self.ln_a

    def values(self, t: float) -> GridFunction2D:
        """Grid values at time ``t`` (zero where the amplitude underflows)."""
        return GridFunction2D(self.M, math.exp(float(self.log_amp(t))) * self.pattern.values.astype(float))

    def scheme_residual(self) -> dict:
        """Residual of ``D_t q + Lap_h q(t + dt/2)`` at the nodes ``t_j``, ``j = 0..N-1``.

        Each node is evaluated in units of ``q(t_j)`` (the amplitude cancels
        exactly in log space), so ``rel_q`` is the residual relative to
        ``|q(t_j)|_inf`` and ``rel_terms`` relative to the size of the two terms.
        """
        q = self.pattern.values.astype(float)
        lap = laplacian5(self.pattern).values
        # q(t +- dt/2) / q(t) = a^(+- alpha dt / 2) at every node; forming the
        # exponent directly avoids cancelling two large log amplitudes, and
        # makes the residual field (in units of q(t_j)) the same for all j
        up = math.exp(0.5 * self.c * self.ln_a)
        down = math.exp(-0.5 * self.c * self.ln_a)
        field = (up - down) / self.dt * q + up * lap
        res = float(np.abs(field).max())
        term = max(abs(up - down) / self.dt, up * float(np.abs(lap).max()))
        return {"rel_q": res / float(np.abs(q).max()), "rel_terms": res / term, "term_scale": term}


def parse_omega(text: str) -> tuple[tuple[int, int], tuple[int, int]]:
    """``"i0:i1,j0:j1"`` (inclusive interior index ranges)."""
    try:
        a, b = text.split(",")
        i0, i1 = (int(v) for v in a.split(":"))
        j0, j1 = (int(v) for v in b.split(":"))
    except ValueError:
        raise ValueError(f"omega must look like 'i0:i1,j0:j1', got {text!r}") from None
    if i0 > i1 or j0 > j1 or min(i0, j0) < 1:
        raise ValueError(f"invalid omega {text!r}")
    return (i0, i1), (j0, j1)


def omega_mask(M: int, omega) -> np.ndarray:
    (i0, i1), (j0, j1) = parse_omega(omega) if isinstance(omega, str) else omega
    if max(i1, j1) > M:
        raise ValueError(f"omega exceeds the interior 1..{M}")
    mask = np.zeros((M + 2, M + 2), dtype=bool)
    mask[i0:i1 + 1, j0:j1 + 1] = True
    return mask


def steps_for(M: int, T: float, c: float) -> int:
    """Number of time steps giving ``alpha dt = c`` exactly when it is an integer."""
    N = 4.0 * T * (M + 1) ** 2 / c
    Nr = round(N)
    if abs(N - Nr) > 1e-9 * N:
        raise ValueError(f"alpha*dt = {c} does not give an integer step count for M={M}, T={T}")
    return int(Nr)


def _log10(x: float) -> float:
    return x / math.log(10.0)


@dataclass
class DemoRow:
    M: int
    h: float
    alpha_dt: float
    N: int
    eigen_residual: int
    scheme_residual_rel_q: float
    scheme_residual_rel_terms: float
    log10_norm_q0: float
    log10_norm_qT: float
    omega_norm: float
    log10_omega_norm: float | None
    log10_ratio: float | None
    log10_time_sum: float
    log10_time_sum_closed: float

    @property
    def ratio_text(self) -> str:
        return "INF" if self.log10_ratio is None else f"{self.log10_ratio:.16e}"


def observability_row(M: int, omega, T: float = 1.0, c: float = 0.5) -> DemoRow:
    N = steps_for(M, T, c)
    sol = ExactSolution(M, N, T)
    h, dt = sol.h, sol.dt
    q = sol.pattern.values.astype(float)
    mask = omega_mask(M, omega)
    count_omega = float(np.sum(q[mask] ** 2))
    count_all = float(np.sum(q ** 2))
    # right-endpoint nodes t_j = j dt, j = 1..N
    tj = np.arange(1, N + 1) * dt
    log_time_sum = float(logsumexp(2 * sol.log_amp(tj)))
    log_closed = math.log1p(-(1 - c) ** (2 * N)) - math.log1p(-(1 - c) ** 2)
    log_q0 = 0.5 * math.log(h * h * count_all) + float(sol.log_amp(0.0))
    log_qT = 0.5 * math.log(h * h * count_all)
    if count_omega == 0:
        omega_norm, log_omega, log_ratio = 0.0, None, None
    else:
        log_omega = 0.5 * (math.log(h * h * dt * count_omega) + log_time_sum)
        omega_norm = math.exp(log_omega)
        log_ratio = _log10(log_q0 - log_omega)
        log_omega = _log10(log_omega)
    res = sol.scheme_residual()
    return DemoRow(M, h, sol.c, N, eigen_residual(M), res["rel_q"], res["rel_terms"],
                   _log10(log_q0), _log10(log_qT), omega_norm, log_omega, log_ratio,
                   _log10(log_time_sum), _log10(log_closed))


@dataclass
class DemoReport:
    rows: list[DemoRow]
    omega: str
    T: float
    c: float
    decay_slope: float
    decay_slope_expected: float
    decay_residual: float

    @property
    def decay_slope_rel_error(self) -> float:
        return abs(self.decay_slope - self.decay_slope_expected) / abs(self.decay_slope_expected)


def observability_demo(M_list, omega: str = "1:2,5:6", T: float = 1.0, c: float = 0.5) -> DemoReport:
    """Per ``M``: norms, the omega-localized norm and the observability ratio.

    The decay fit regresses ``log10(|q(0)| / |q(T)|)`` on ``1/h^2``; its
    expected slope is ``-4 T log10(a)``.
    """
    rows = [observability_row(int(M), omega, T, c) for M in M_list]
    x = np.array([1.0 / r.h ** 2 for r in rows])
    y = np.array([r.log10_norm_q0 - r.log10_norm_qT for r in rows])
    if len(rows) >= 2:
        coef = np.polyfit(x, y, 1)
        resid = float(np.sqrt(np.mean((y - np.polyval(coef, x)) ** 2)))
        slope = float(coef[0])
    else:
        slope, resid = float("nan"), float("nan")
    expected = -4 * T * _log10(log_amplification_base(c))
    return DemoReport(rows, omega if isinstance(omega, str) else str(omega), T, c, slope, expected, resid)
