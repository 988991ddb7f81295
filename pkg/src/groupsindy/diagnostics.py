"""Well-posedness checks for monomial dictionaries.

``full_rank_check`` and ``sparse_coercivity`` look at the smallest singular
value of a dictionary (or of its column subsets). ``degeneracy_warning``
looks for samples that sit close to a low-degree algebraic hypersurface,
which makes the dictionary nearly rank deficient at that degree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import RegressionProblem
from .dictionary import DictionarySpec, build_dictionary

RANK_RTOL = 1e-10
DEGENERACY_TOL = 0.03


def singular_values(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.size == 0:
        return np.zeros(0)
    return np.linalg.svd(D, compute_uv=False)


def full_rank_check(D: np.ndarray) -> tuple[float, bool]:
    """Return (sigma_min, full_rank) with a relative 1e-10 rank cutoff.

    With fewer rows than columns sigma_min is reported as 0.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    sv = singular_values(D)
    if D.shape[0] < D.shape[1] or sv.size == 0 or sv[0] == 0:
        return 0.0, False
    sigma_min = float(sv[-1])
    return sigma_min, bool(sigma_min / sv[0] > RANK_RTOL)


@dataclass
class CoercivityResult:
    delta: float
    s: int
    subsets_checked: int
    exhaustive: bool
    worst_subset: tuple[int, ...] = ()

    def __float__(self):
        return self.delta


def sparse_coercivity(
    D: np.ndarray, s: int, max_subsets: int = 100_000, seed: int = 0
) -> CoercivityResult:
    """Smallest sigma_min(D_S) over column subsets S of size ``s``.

    Exhaustive when there are at most ``max_subsets`` subsets; otherwise that
    many subsets are drawn uniformly at random and the result is only an
    upper estimate of the true minimum (``exhaustive=False``).
    """
    D = np.asarray(D, dtype=float)
    nbar = D.shape[1]
    if not 1 <= s <= nbar:
        raise ValueError(f"need 1 <= s <= {nbar}, got {s}")
    total = math.comb(nbar, s)
    if total <= max_subsets:
        subsets = itertools.combinations(range(nbar), s)
        exhaustive, count = True, total
    else:
        rng = np.random.default_rng(seed)
        subsets = (tuple(sorted(rng.choice(nbar, s, replace=False))) for _ in range(max_subsets))
        exhaustive, count = False, max_subsets
    best, worst = math.inf, ()
    for S in subsets:
        A = D[:, list(S)]
        smin = 0.0 if A.shape[0] < s else float(singular_values(A)[-1])
        if smin < best:
            best, worst = smin, tuple(int(k) for k in S)
    return CoercivityResult(best, s, count, exhaustive, worst)


def _standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def conditioning_by_degree(states: np.ndarray, spec: DictionarySpec) -> dict[int, float]:
    """sigma_min / sigma_max of the degree <= q sub-dictionary, for q = 1..p.

    Coordinates are standardized and columns normalized first, so the ratio
    measures how close the samples are to a degree-q algebraic relation
    rather than how badly the raw monomials are scaled.
    """
    Z = _standardize(np.asarray(states, dtype=float))
    D = build_dictionary(Z, spec)
    norms = np.linalg.norm(D, axis=0)
    norms[norms == 0] = 1.0
    D = D / norms
    out = {}
    for q in range(1, spec.p + 1):
        sv = singular_values(D[:, spec.degree_columns(q)])
        out[q] = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
        if D.shape[0] < len(spec.degree_columns(q)):
            out[q] = 0.0
    return out


@dataclass
class SourceDiagnostic:
    source: int
    sigma_min: float
    sigma_max: float
    ratio: float
    full_rank: bool
    by_degree: dict[int, float] = field(default_factory=dict)
    flags: list[dict] = field(default_factory=list)

    @property
    def flagged_degree(self) -> int | None:
        return min((f["degree"] for f in self.flags), default=None)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "ratio": self.ratio,
            "full_rank": self.full_rank,
            "flags": self.flags,
        }


def degeneracy_warning(problem: RegressionProblem, tolerance: float = DEGENERACY_TOL) -> list[SourceDiagnostic]:
    """Flag sources whose samples nearly satisfy a low-degree polynomial relation.

    For each degree q the standardized conditioning ratio r_q is turned into a
    per-degree rate r_q ** (1/q); generic data loses conditioning at a steady
    rate as q grows, while data hugging a degree-q surface collapses at q.
    A degree is flagged when its rate falls below ``tolerance``.
    """
    spec = problem.spec
    lin = [spec.index(tuple(int(d == k) for d in range(spec.n))) for k in range(spec.n)] if spec.p >= 1 else []
    report = []
    for i, D in enumerate(problem.unscaled_dictionaries()):
        sv = singular_values(D)
        smax = float(sv[0]) if sv.size else 0.0
        smin = float(sv[-1]) if sv.size and D.shape[0] >= D.shape[1] else 0.0
        ratio = smin / smax if smax > 0 else 0.0
        diag = SourceDiagnostic(i + 1, smin, smax, ratio, ratio > RANK_RTOL)
        if lin:
            diag.by_degree = conditioning_by_degree(D[:, lin], spec)
            for q, r in diag.by_degree.items():
                rate = r ** (1.0 / q)
                if rate < tolerance:
                    diag.flags.append({"degree": q, "ratio": r, "rate": rate})
        report.append(diag)
    return report


def diagnostics_to_dict(report: list[SourceDiagnostic], tolerance: float = DEGENERACY_TOL) -> dict:
    return {"tolerance": tolerance, "sources": [d.to_dict() for d in report]}
