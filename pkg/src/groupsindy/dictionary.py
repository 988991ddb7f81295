"""Monomial dictionaries: enumeration, evaluation, naming and spectral rescaling."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .core import StructuralError


@dataclass(frozen=True)
class DictionarySpec:
    """Ordered monomial exponents for ``n`` variables up to total degree ``p``."""

    n: int
    p: int
    multi_indices: tuple[tuple[int, ...], ...]

    @property
    def nbar(self) -> int:
        return len(self.multi_indices)

    def index(self, exponents: Sequence[int]) -> int:
        return self.multi_indices.index(tuple(int(e) for e in exponents))

    def degree_columns(self, q: int) -> list[int]:
        """Columns whose total degree is at most ``q``."""
        return [k for k, e in enumerate(self.multi_indices) if sum(e) <= q]

    def names(self) -> list[str]:
        return [term_name(e) for e in self.multi_indices]

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "multi_indices": [list(e) for e in self.multi_indices]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "DictionarySpec":
        mi = tuple(tuple(int(x) for x in e) for e in data["multi_indices"])
        spec = cls(int(data["n"]), int(data["p"]), mi)
        if any(len(e) != spec.n for e in mi):
            raise StructuralError("multi-index length does not match n")
        return spec

    @classmethod
    def from_json(cls, text: str) -> "DictionarySpec":
        return cls.from_dict(json.loads(text))


def enumerate_monomials(n: int, p: int) -> DictionarySpec:
    """All exponent vectors of total degree <= p.

    Ordered by total degree, then lexicographically with higher powers of
    earlier variables first, so for n = 3 the degree-2 block reads
    x1^2, x1*x2, x1*x3, x2^2, x2*x3, x3^2.
    """
    if n < 1 or p < 0:
        raise StructuralError(f"need n >= 1 and p >= 0, got n={n}, p={p}")
    out = []
    for q in range(p + 1):
        block = [e for e in itertools.product(range(q + 1), repeat=n) if sum(e) == q]
        block.sort(reverse=True)
        out.extend(block)
    return DictionarySpec(n, p, tuple(out))


def build_dictionary(states: np.ndarray, spec: DictionarySpec) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[1] != spec.n:
        raise StructuralError(f"states have {states.shape[1]} columns, spec expects {spec.n}")
    # powers[d][e] = x_d ** e, reused across monomials
    powers = [
        np.stack([states[:, d] ** e for e in range(spec.p + 1)], axis=1)
        for d in range(spec.n)
    ]
    D = np.ones((states.shape[0], spec.nbar))
    for k, exps in enumerate(spec.multi_indices):
        for d, e in enumerate(exps):
            if e:
                D[:, k] *= powers[d][:, e]
    return D


def spectral_norm(A: np.ndarray, rtol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of ``A`` by power iteration on A^T A."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return 0.0
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            # start vector in the null space; vanishingly unlikely
            return float(np.linalg.norm(A, 2))
        v = w / lam_new
        if abs(lam_new - lam) <= rtol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    else:
        return float(np.linalg.norm(A, 2))
    return float(np.sqrt(lam))


def rescale(dictionaries: Sequence[np.ndarray]) -> tuple[list[np.ndarray], float]:
    """Scale all blocks by one factor so the largest ||D_i^T D_i||_2 is 1."""
    norms = [spectral_norm(d) for d in dictionaries]
    top = max(norms, default=0.0)
    if top == 0.0:
        raise StructuralError("cannot rescale: every dictionary is zero")
    factor = 1.0 / top
    return [factor * np.asarray(d, dtype=float) for d in dictionaries], factor


def term_name(multi_index: Sequence[int]) -> str:
    parts = []
    for d, e in enumerate(multi_index):
        if e == 1:
            parts.append(f"x{d + 1}")
        elif e > 1:
            parts.append(f"x{d + 1}^{e}")
    return "*".join(parts) if parts else "1"


def expected_count(n: int, p: int) -> int:
    return comb(n + p, n)
