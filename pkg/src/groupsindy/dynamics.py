"""Test systems, a fixed-step RK4 integrator and trajectory utilities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import SourceSeries, StructuralError


class IntegrationError(RuntimeError):
    """The trajectory left the finite range."""


Coefficients = list[dict[tuple[int, ...], float]]


@dataclass
class OdeSystem:
    """An autonomous polynomial ODE with its ground-truth coefficient table.

    ``coefficients[j]`` maps exponent tuples to the coefficient of that
    monomial in component ``j``; zero entries are dropped.
    """

    name: str
    n: int
    rhs: Callable[[np.ndarray], np.ndarray]
    params: dict[str, float] = field(default_factory=dict)
    coefficients: Coefficients = field(default_factory=list)

    def __post_init__(self):
        self.coefficients = [
            {tuple(int(e) for e in k): float(v) for k, v in comp.items() if v != 0}
            for comp in self.coefficients
        ]

    def __call__(self, x):
        return self.rhs(np.asarray(x, dtype=float))

    def support(self, j: int) -> set[tuple[int, ...]]:
        return set(self.coefficients[j])

    def polynomial_rhs(self, x) -> np.ndarray:
        """Evaluate the coefficient table as a polynomial at ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n)
        for j, comp in enumerate(self.coefficients):
            for exps, c in comp.items():
                out[j] += c * np.prod([x[d] ** e for d, e in enumerate(exps)])
        return out


def logistic(alpha: float) -> OdeSystem:
    def f(x):
        return np.array([alpha * x[0] * (1.0 - x[0])])

    return OdeSystem(
        "logistic", 1, f, {"alpha": alpha}, [{(1,): alpha, (2,): -alpha}]
    )


def lorenz(alpha: float) -> OdeSystem:
    """Lorenz system with a single bifurcation parameter.

    The second component is (24 - 4 alpha) x1 + alpha x2 - x1 x3, which is
    the form that reproduces the published recovered coefficients.
    """

    def f(x):
        return np.array(
            [
                10.0 * (x[1] - x[0]),
                (24.0 - 4.0 * alpha) * x[0] + alpha * x[1] - x[0] * x[2],
                x[0] * x[1] - (8.0 / 3.0) * x[2],
            ]
        )

    coeffs = [
        {(1, 0, 0): -10.0, (0, 1, 0): 10.0},
        {(1, 0, 0): 24.0 - 4.0 * alpha, (0, 1, 0): alpha, (1, 0, 1): -1.0},
        {(1, 1, 0): 1.0, (0, 0, 1): -8.0 / 3.0},
    ]
    return OdeSystem("lorenz", 3, f, {"alpha": alpha}, coeffs)


def duffing(beta: float, delta: float) -> OdeSystem:
    def f(x):
        return np.array([x[1], beta * x[0] - delta * x[1] - x[0] ** 3])

    coeffs = [{(0, 1): 1.0}, {(1, 0): beta, (0, 1): -delta, (3, 0): -1.0}]
    return OdeSystem("duffing", 2, f, {"beta": beta, "delta": delta}, coeffs)


SYSTEMS = {"logistic": logistic, "lorenz": lorenz, "duffing": duffing}


def make_system(name: str, **params) -> OdeSystem:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise StructuralError(f"unknown system {name!r}; expected one of {sorted(SYSTEMS)}")
    return factory(**params)


def _rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def n_steps(dt: float, t_final: float) -> int:
    # tolerate t_final/dt landing a hair below an integer
    return int(math.floor(t_final / dt * (1.0 + 1e-12) + 1e-9))


def _march(rhs_for_step, x0, dt, steps, t0=0.0):
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for k in range(steps):
        # overflow is detected below and reported with its time
        with np.errstate(over="ignore", invalid="ignore"):
            x = _rk4_step(rhs_for_step(k), x, dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"state became non-finite at t = {t0 + (k + 1) * dt:.6g}")
        out[k + 1] = x
    return out


def integrate(system, x0, dt: float, t_final: float, source_id: int = 1) -> SourceSeries:
    """Classical RK4 on the grid t = 0, dt, 2dt, ... <= t_final."""
    if not dt > 0 or not t_final >= dt:
        raise StructuralError(f"need dt > 0 and t_final >= dt, got dt={dt}, t_final={t_final}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    steps = n_steps(dt, t_final)
    states = _march(lambda k: system, x0, dt, steps)
    return SourceSeries(dt, dt * np.arange(steps + 1), states, source_id)


def simulate_switching(
    alpha_before: float,
    alpha_after: float,
    x0,
    dt: float,
    t_switch: float,
    t_final: float,
    source_id: int = 1,
) -> SourceSeries:
    """Lorenz trajectory whose parameter jumps at ``t_switch``.

    A step from t_k to t_{k+1} uses the "before" system when t_{k+1} <= t_switch,
    so a sample at exactly t_switch belongs to the first regime.
    """
    if not 0 < t_switch < t_final:
        raise StructuralError("need 0 < t_switch < t_final")
    if not dt > 0:
        raise StructuralError("dt must be positive")
    before, after = lorenz(alpha_before), lorenz(alpha_after)
    steps = n_steps(dt, t_final)
    k_switch = n_steps(dt, t_switch)  # last grid index in the first regime
    states = _march(lambda k: before if k + 1 <= k_switch else after, x0, dt, steps)
    return SourceSeries(dt, dt * np.arange(steps + 1), states, source_id)


def split_into_segments(series: SourceSeries, M: int) -> list[SourceSeries]:
    """Cut a series into M contiguous pieces; earlier pieces absorb the remainder."""
    L = len(series)
    if M < 1 or L < 3 * M:
        raise StructuralError(f"cannot split {L} samples into {M} segments of >= 3")
    base, extra = divmod(L, M)
    out, start = [], 0
    for i in range(M):
        size = base + (1 if i < extra else 0)
        sl = slice(start, start + size)
        out.append(SourceSeries(series.dt, series.times[sl], series.states[sl], i + 1))
        start += size
    return out


def write_series_csv(series: SourceSeries, path) -> Path:
    path = Path(path)
    header = ["t"] + [f"x{d + 1}" for d in range(series.n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, row in zip(series.times, series.states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
    return path


def read_series_csv(path, source_id: int = 1) -> SourceSeries:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise StructuralError(f"{path}: {exc}") from exc
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise StructuralError(f"{path}: expected a header starting with 't'")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise StructuralError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(rows[0]) or data.shape[0] < 3:
        raise StructuralError(f"{path}: need >= 3 rows of {len(rows[0])} numbers")
    times = data[:, 0]
    dt = (times[-1] - times[0]) / (len(times) - 1)
    try:
        return SourceSeries(dt, times, data[:, 1:], source_id)
    except StructuralError as exc:
        raise StructuralError(f"{path}: {exc}") from exc


def random_points(n: int, count: int, seed: int = 0, scale: float = 2.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-scale, scale, size=(count, n))


def max_table_mismatch(system: OdeSystem, points: Sequence) -> float:
    return max(
        float(np.max(np.abs(system(x) - system.polynomial_rhs(x)))) for x in points
    )
