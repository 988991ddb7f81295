"""Group hard-iterative thresholding for multi-source sparse regression.

Each iteration takes one gradient step on the (rescaled) least-squares term,
keeps the rows whose Euclidean norm across sources exceeds the threshold,
then refits every source by least squares on the kept rows.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .core import CoefficientMatrix, RegressionProblem, StructuralError, nonzero_rows, residual_norms, row_norms

VARIANTS = ("group-l20", "per-source-l0", "ks-rows")
INITS = ("zero", "lstsq")
RANK_RTOL = 1e-10
DESCENT_SLACK = 1e-9


class RankDeficiencyWarning(UserWarning):
    pass


class EmptySupportWarning(UserWarning):
    pass


class ConfigError(StructuralError):
    """A configuration value is out of range; ``field`` names the offender."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class SolverConfig:
    threshold: float = 0.0
    tol: float = 1e-8
    max_iter: int = 500
    variant: str = "group-l20"
    s: int | None = None
    k_factor: float = 2.0
    init: str = "zero"
    check_descent: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def gamma(self) -> float:
        return self.threshold**2

    def validate(self, prefix: str = "solver") -> None:
        if not self.threshold >= 0:
            raise ConfigError(f"{prefix}.threshold", f"must be >= 0, got {self.threshold}")
        if not self.tol > 0:
            raise ConfigError(f"{prefix}.tol", f"must be > 0, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"{prefix}.max_iter", f"must be a positive integer, got {self.max_iter}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"{prefix}.variant", f"must be one of {VARIANTS}, got {self.variant!r}")
        if self.init not in INITS:
            raise ConfigError(f"{prefix}.init", f"must be one of {INITS}, got {self.init!r}")
        if self.variant == "ks-rows":
            if self.s is None or int(self.s) != self.s or self.s < 1:
                raise ConfigError(f"{prefix}.s", "ks-rows needs a positive integer sparsity s")
            if not self.k_factor > 1:
                raise ConfigError(f"{prefix}.k_factor", f"must be > 1, got {self.k_factor}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"solver.{sorted(extra)[0]}", "unknown field")
        return cls(**data)


@dataclass
class SolverTrace:
    objective: list[float] = field(default_factory=list)
    supports: list[tuple[int, ...]] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    rank_warnings: int = 0

    def is_monotone(self, slack: float = DESCENT_SLACK) -> bool:
        F = self.objective
        return all(b <= a + slack for a, b in zip(F, F[1:]))

    def to_dict(self) -> dict:
        return {
            "objective": [float(f) for f in self.objective],
            "support_sizes": [len(s) for s in self.supports],
            "iterations": self.iterations,
            "converged": self.converged,
            "rank_warnings": self.rank_warnings,
        }

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "F", "support_size"])
            for k, (f, s) in enumerate(zip(self.objective, self.supports)):
                w.writerow([k, repr(float(f)), len(s)])
        return path


def group_threshold(C: np.ndarray, a: float) -> np.ndarray:
    """Zero every row whose Euclidean norm is <= a; leave the rest untouched."""
    C = np.asarray(C, dtype=float)
    out = C.copy()
    norms = row_norms(C.reshape(C.shape[0], -1))
    out[norms <= a] = 0.0
    return out


def entrywise_threshold(C: np.ndarray, a: float) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    return np.where(np.abs(C) <= a, 0.0, C)


def gradient_step(problem: RegressionProblem, C) -> np.ndarray:
    """c_i + D_i^T (V_i - D_i c_i) for every source column i."""
    C = C.values if isinstance(C, CoefficientMatrix) else np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape != (problem.nbar, problem.m):
        raise StructuralError(f"C has shape {C.shape}, expected {(problem.nbar, problem.m)}")
    out = np.empty_like(C)
    for i, (D, V) in enumerate(zip(problem.dictionaries, problem.velocities)):
        out[:, i] = C[:, i] + D.T @ (V - D @ C[:, i])
    return out


def _restricted_lstsq(D: np.ndarray, V: np.ndarray, support: Sequence[int]):
    """Return (u, rank_deficient) with u supported on ``support``."""
    D = np.asarray(D, dtype=float)
    u = np.zeros(D.shape[1])
    S = np.asarray(sorted(int(k) for k in support), dtype=int)
    if S.size == 0:
        return u, False
    A = D[:, S]
    if A.shape[0] >= A.shape[1]:
        Q, R = np.linalg.qr(A)
        sv = np.linalg.svd(R, compute_uv=False)
        if sv[0] > 0 and sv[-1] / sv[0] >= RANK_RTOL:
            u[S] = solve_triangular(R, Q.T @ V, lower=False)
            return u, False
    u[S] = np.linalg.lstsq(A, V, rcond=RANK_RTOL)[0]
    return u, True


def restricted_least_squares(D, V, support) -> np.ndarray:
    """Least-squares fit of ``V`` using only the columns in ``support``.

    Solved through a QR factorization of the selected columns. If they are
    numerically rank deficient the minimum-norm solution is returned and a
    :class:`RankDeficiencyWarning` is emitted.
    """
    u, deficient = _restricted_lstsq(D, np.asarray(V, dtype=float).reshape(-1), support)
    if deficient:
        warnings.warn(
            f"restricted system on {len(support)} columns is rank deficient; "
            "using the minimum-norm solution",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    return u


def _top_rows(G: np.ndarray, count: int) -> tuple[int, ...]:
    norms = row_norms(G)
    # stable sort on -norm: equal norms keep the lower index first
    order = np.argsort(-norms, kind="stable")
    return tuple(sorted(int(k) for k in order[:count]))


def _penalty_count(C: np.ndarray, variant: str) -> int:
    if variant == "per-source-l0":
        return int(np.count_nonzero(C))
    return len(nonzero_rows(C))


def variant_objective(problem: RegressionProblem, C: np.ndarray, gamma: float, variant: str) -> float:
    return float(np.sum(residual_norms(problem, C))) + gamma * _penalty_count(C, variant)


def _refit(problem, supports, dictionaries=None, velocities=None):
    dictionaries = problem.dictionaries if dictionaries is None else dictionaries
    velocities = problem.velocities if velocities is None else velocities
    C = np.zeros((problem.nbar, problem.m))
    deficient = 0
    for i, (D, V) in enumerate(zip(dictionaries, velocities)):
        C[:, i], bad = _restricted_lstsq(D, V, supports[i])
        deficient += bad
    return C, deficient


def initial_guess(problem: RegressionProblem, init: str) -> np.ndarray:
    if init == "zero":
        return np.zeros((problem.nbar, problem.m))
    if init == "lstsq":
        full = tuple(range(problem.nbar))
        return _refit(problem, [full] * problem.m)[0]
    raise ConfigError("solver.init", f"must be one of {INITS}, got {init!r}")


def solve(
    problem: RegressionProblem, config: SolverConfig, C0=None
) -> tuple[CoefficientMatrix, SolverTrace]:
    """Run the thresholding iteration until the update stalls below ``config.tol``.

    The objective trace is recorded in the rescaled geometry. The returned
    coefficients are refitted on the unscaled dictionaries over the final
    support, so they are in physical units.
    """
    m, nbar = problem.m, problem.nbar
    a, gamma, variant = config.threshold, config.gamma, config.variant
    if C0 is None:
        C = initial_guess(problem, config.init)
    else:
        C = np.array(C0.values if isinstance(C0, CoefficientMatrix) else C0, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if C.shape != (nbar, m):
            raise StructuralError(f"C0 has shape {C.shape}, expected {(nbar, m)}")

    trace = SolverTrace()
    trace.objective.append(variant_objective(problem, C, gamma, variant))
    trace.supports.append(nonzero_rows(C))
    keep = math.ceil(config.k_factor * config.s) if variant == "ks-rows" else None

    def select(G, count=None):
        if variant == "group-l20":
            S = tuple(int(k) for k in np.flatnonzero(row_norms(G) > a))
            return [S] * m
        if variant == "per-source-l0":
            return [tuple(int(k) for k in np.flatnonzero(np.abs(G[:, i]) > a)) for i in range(m)]
        return [_top_rows(G, min(count, nbar))] * m

    for it in range(1, config.max_iter + 1):
        G = gradient_step(problem, C)
        supports = select(G, keep)
        C_new, bad = _refit(problem, supports)
        trace.rank_warnings += bad
        trace.objective.append(variant_objective(problem, C_new, gamma, variant))
        trace.supports.append(tuple(sorted(set().union(*supports))))
        trace.iterations = it
        change = float(np.max(np.abs(C_new - C)))
        C = C_new
        if change <= config.tol:
            trace.converged = True
            break

    if variant == "ks-rows":
        G = gradient_step(problem, C)
        supports = select(G, config.s)
        C, bad = _refit(problem, supports)
        trace.rank_warnings += bad
        trace.objective.append(variant_objective(problem, C, gamma, variant))
        trace.supports.append(supports[0])

    if config.check_descent and variant != "ks-rows" and __debug__:
        F = trace.objective
        for k in range(len(F) - 1):
            slack = DESCENT_SLACK + 1e-12 * abs(F[k])
            if F[k + 1] > F[k] + slack:
                raise AssertionError(
                    f"objective increased at iteration {k + 1}: {F[k]!r} -> {F[k + 1]!r}"
                )

    if trace.rank_warnings:
        warnings.warn(
            f"{trace.rank_warnings} rank-deficient restricted solves; minimum-norm solutions used",
            RankDeficiencyWarning,
            stacklevel=2,
        )

    final_supports = [tuple(int(k) for k in np.flatnonzero(C[:, i])) for i in range(m)]
    if variant != "per-source-l0":
        group = nonzero_rows(C)
        final_supports = [group] * m
    values, _ = _refit(
        problem, final_supports, problem.unscaled_dictionaries(), problem.unscaled_velocities()
    )
    if not any(final_supports):
        warnings.warn("all rows were thresholded away; returning the zero model", EmptySupportWarning, stacklevel=2)
    return CoefficientMatrix(values), trace
