"""From sampled trajectories to an identified model."""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from .core import _frozen, ComponentFit, IdentifiedModel, RegressionProblem, SourceSeries, StructuralError
from .dictionary import DictionarySpec, build_dictionary, enumerate_monomials, rescale
from .differentiation import add_noise, central_difference
from .solver import SolverConfig, solve


def noise_seed(trial_seed: int, source_index: int) -> np.random.SeedSequence:
    """Independent noise stream per (trial, source) pair."""
    return np.random.SeedSequence([int(trial_seed), int(source_index)])


def prepare_sources(
    sources: Sequence[SourceSeries],
    sigmas: Sequence[float] | float | None = None,
    seed: int | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Central-difference every source and optionally add velocity noise."""
    if not sources:
        raise StructuralError("need at least one source")
    n = sources[0].n
    if any(s.n != n for s in sources):
        raise StructuralError("sources disagree on the state dimension")
    if sigmas is None:
        sigmas = [0.0] * len(sources)
    elif np.isscalar(sigmas):
        sigmas = [float(sigmas)] * len(sources)
    if len(sigmas) != len(sources):
        raise StructuralError(f"{len(sigmas)} noise levels for {len(sources)} sources")
    states, velocities = [], []
    for i, (src, sig) in enumerate(zip(sources, sigmas)):
        X, V = central_difference(src)
        if sig:
            V = add_noise(V, sig, noise_seed(seed or 0, i))
        states.append(X)
        velocities.append(V)
    return states, velocities


def build_problems(
    states: Sequence[np.ndarray], velocities: Sequence[np.ndarray], spec: DictionarySpec
) -> list[RegressionProblem]:
    """One rescaled regression problem per state component."""
    raw = [build_dictionary(X, spec) for X in states]
    scaled, factor = rescale(raw)
    scaled = tuple(_frozen(d) for d in scaled)
    return [
        RegressionProblem(
            scaled, tuple(factor * V[:, j] for V in velocities), spec, factor
        )
        for j in range(spec.n)
    ]


def identify_problems(
    problems: Sequence[RegressionProblem],
    config: SolverConfig,
    labels: Sequence[str] = (),
    quiet: bool = False,
) -> IdentifiedModel:
    fits = []
    with warnings.catch_warnings():
        if quiet:
            warnings.simplefilter("ignore")
        for j, prob in enumerate(problems):
            C, trace = solve(prob, config)
            fit = ComponentFit(j + 1, C.support, C.values, trace)
            if config.variant == "per-source-l0":
                fit.column_supports = tuple(C.column_support(i) for i in range(prob.m))
            fits.append(fit)
    return IdentifiedModel(
        problems[0].spec, fits, config.variant, problems[0].scale_factor, list(labels)
    )


def identify(
    sources: Sequence[SourceSeries],
    degree: int,
    config: SolverConfig,
    sigmas=None,
    seed: int | None = None,
    labels: Sequence[str] = (),
    quiet: bool = False,
) -> IdentifiedModel:
    """Difference, (optionally) perturb, build dictionaries, rescale and solve."""
    states, velocities = prepare_sources(sources, sigmas, seed)
    spec = enumerate_monomials(sources[0].n, degree)
    problems = build_problems(states, velocities, spec)
    return identify_problems(problems, config, labels, quiet)
