"""Domain types shared across the package and the group-sparse objective."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .dictionary import DictionarySpec


class StructuralError(ValueError):
    """Inputs have inconsistent shapes or violate a structural precondition."""


def _frozen(a, dtype=float) -> np.ndarray:
    if isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable:
        return a
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SourceSeries:
    """One sampled trajectory: uniform times and an (l, n) state matrix."""

    dt: float
    times: np.ndarray
    states: np.ndarray
    source_id: int = 1

    def __post_init__(self):
        times = _frozen(self.times)
        states = _frozen(self.states)
        if states.ndim == 1:
            states = _frozen(states[:, None])
        if times.ndim != 1 or states.ndim != 2 or len(times) != len(states):
            raise StructuralError(
                f"times {times.shape} and states {states.shape} do not align"
            )
        if len(times) < 3:
            raise StructuralError("a series needs at least 3 samples")
        if not self.dt > 0:
            raise StructuralError(f"dt must be positive, got {self.dt}")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise StructuralError("times must be strictly increasing")
        # deviation from the uniform grid, relative to the covered span
        span = times[-1] - times[0]
        grid = times[0] + self.dt * np.arange(len(times))
        if np.max(np.abs(times - grid)) > 1e-12 * max(span, self.dt, abs(times[-1])):
            raise StructuralError("times are not uniformly spaced by dt")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, SourceSeries):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.source_id == other.source_id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Block-diagonal regression for one state component.

    ``dictionaries`` and ``velocities`` are stored already multiplied by
    ``scale_factor``; the unscaled blocks are recovered by dividing it out.
    """

    dictionaries: tuple
    velocities: tuple
    spec: "DictionarySpec"
    scale_factor: float = 1.0

    def __post_init__(self):
        dicts = tuple(_frozen(d) for d in self.dictionaries)
        vels = tuple(_frozen(v).reshape(-1) for v in self.velocities)
        if not dicts:
            raise StructuralError("a regression problem needs at least one source")
        if len(dicts) != len(vels):
            raise StructuralError(
                f"{len(dicts)} dictionaries but {len(vels)} velocity vectors"
            )
        nbar = dicts[0].shape[1]
        for i, (d, v) in enumerate(zip(dicts, vels)):
            if d.ndim != 2 or d.shape[1] != nbar:
                raise StructuralError(f"dictionary {i} has shape {d.shape}, expected (*, {nbar})")
            if d.shape[0] != v.shape[0]:
                raise StructuralError(
                    f"source {i}: dictionary has {d.shape[0]} rows, velocity {v.shape[0]}"
                )
        if self.spec is not None and self.spec.nbar != nbar:
            raise StructuralError(f"spec has {self.spec.nbar} terms, dictionaries {nbar}")
        if not self.scale_factor > 0:
            raise StructuralError("scale_factor must be positive")
        object.__setattr__(self, "dictionaries", dicts)
        object.__setattr__(self, "velocities", vels)

    @property
    def m(self) -> int:
        return len(self.dictionaries)

    @property
    def nbar(self) -> int:
        return self.dictionaries[0].shape[1]

    def unscaled_dictionaries(self) -> list[np.ndarray]:
        return [d / self.scale_factor for d in self.dictionaries]

    def unscaled_velocities(self) -> list[np.ndarray]:
        return [v / self.scale_factor for v in self.velocities]


def row_norms(values: np.ndarray) -> np.ndarray:
    """Euclidean row norms that neither underflow nor overflow."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    peak = np.max(np.abs(values), axis=1) if values.shape[1] else np.zeros(len(values))
    safe = np.where(peak > 0, peak, 1.0)
    return peak * np.linalg.norm(values / safe[:, None], axis=1)


def nonzero_rows(values: np.ndarray) -> tuple[int, ...]:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return tuple(int(k) for k in np.flatnonzero(np.any(values != 0, axis=1)))


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """(nbar, m) coefficients, one column per source; nonzero rows are the support."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise StructuralError(f"coefficients must be 2-D, got {values.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def support(self) -> tuple[int, ...]:
        return nonzero_rows(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column_support(self, i: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.values[:, i]))

    def __eq__(self, other):
        if not isinstance(other, CoefficientMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)


def l20_norm(C) -> int:
    """Number of rows with nonzero Euclidean norm."""
    values = C.values if isinstance(C, CoefficientMatrix) else np.asarray(C, dtype=float)
    return len(nonzero_rows(values))


def residual_norms(problem: RegressionProblem, C) -> np.ndarray:
    """Squared residual per source, in the problem's (scaled) geometry."""
    values = C.values if isinstance(C, CoefficientMatrix) else np.asarray(C, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape != (problem.nbar, problem.m):
        raise StructuralError(
            f"coefficients have shape {values.shape}, expected {(problem.nbar, problem.m)}"
        )
    return np.array(
        [
            float(np.sum((d @ values[:, i] - v) ** 2))
            for i, (d, v) in enumerate(zip(problem.dictionaries, problem.velocities))
        ]
    )


def objective(problem: RegressionProblem, C, gamma: float) -> float:
    """Sum of per-source squared residuals plus ``gamma`` times the row count."""
    if gamma < 0:
        raise StructuralError("gamma must be non-negative")
    return float(np.sum(residual_norms(problem, C))) + gamma * l20_norm(C)


@dataclass
class ComponentFit:
    """Identified equation for one state component."""

    component: int
    support: tuple[int, ...]
    coefficients: np.ndarray  # (nbar, m), physical units
    trace: "object | None" = None
    column_supports: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if not self.column_supports:
            self.column_supports = tuple(
                tuple(int(k) for k in np.flatnonzero(self.coefficients[:, i]))
                for i in range(self.coefficients.shape[1])
            )

    def restricted(self) -> np.ndarray:
        """Coefficients on the support only, shape (|S|, m)."""
        return self.coefficients[list(self.support), :]

    def expanded(self, restricted: np.ndarray) -> np.ndarray:
        full = np.zeros_like(self.coefficients)
        full[list(self.support), :] = restricted
        return full


@dataclass
class IdentifiedModel:
    """Recovered support and per-source coefficients for every component."""

    spec: "DictionarySpec"
    components: list[ComponentFit]
    variant: str = "group-l20"
    scale_factor: float = 1.0
    source_labels: Sequence[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.components[0].coefficients.shape[1] if self.components else 0

    def term_names(self, j: int) -> list[str]:
        from .dictionary import term_name

        return [term_name(self.spec.multi_indices[k]) for k in self.components[j].support]

    def support_multi_indices(self, j: int) -> list[tuple[int, ...]]:
        return [tuple(self.spec.multi_indices[k]) for k in self.components[j].support]

    def equation(self, j: int, source: int, digits: int = 4) -> str:
        """Readable right-hand side, e.g. ``dx2/dt = 28.0232*x1 - 1.0093*x2``."""
        from .dictionary import term_name

        fit = self.components[j]
        parts = []
        for k in fit.support:
            c = fit.coefficients[k, source]
            if c == 0:
                continue
            name = term_name(self.spec.multi_indices[k])
            mag = f"{abs(c):.{digits}f}"
            body = mag if name == "1" else f"{mag}*{name}"
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(("+ " if c > 0 else "- ") + body)
        rhs = " ".join(parts) if parts else "0"
        return f"dx{j + 1}/dt = {rhs}"

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "n": self.spec.n,
            "p": self.spec.p,
            "multi_indices": [list(e) for e in self.spec.multi_indices],
            "scale_factor": self.scale_factor,
            "sources": list(self.source_labels) or [str(i + 1) for i in range(self.m)],
            "components": [],
        }
        for j, fit in enumerate(self.components):
            comp = {
                "component": fit.component,
                "support": [int(k) for k in fit.support],
                "terms": self.term_names(j),
                "multi_indices": [list(e) for e in self.support_multi_indices(j)],
                "coefficients": [[float(x) for x in row] for row in fit.restricted()],
                "equations": [self.equation(j, i) for i in range(self.m)],
            }
            if fit.trace is not None:
                comp["trace"] = fit.trace.to_dict()
            out["components"].append(comp)
        return out
