"""Velocity estimates from sampled states, and velocity noise injection."""

from __future__ import annotations

import numpy as np

from .core import SourceSeries, StructuralError


def central_difference(series: SourceSeries) -> tuple[np.ndarray, np.ndarray]:
    """Second-order central differences at interior samples.

    Returns ``(states_interior, velocities)``; both have ``len(series) - 2``
    rows and the two endpoints are dropped.
    """
    X = np.asarray(series.states, dtype=float)
    if X.shape[0] < 3:
        raise StructuralError("central differencing needs at least 3 samples")
    V = (X[2:] - X[:-2]) / (2.0 * series.dt)
    return X[1:-1].copy(), V


def add_noise(velocities: np.ndarray, sigma_noise: float, seed) -> np.ndarray:
    """Add Gaussian noise whose std per column is ``sigma_noise`` times the column RMS."""
    if sigma_noise < 0:
        raise StructuralError("sigma_noise must be non-negative")
    V = np.asarray(velocities, dtype=float)
    if sigma_noise == 0:
        return V.copy()
    rng = np.random.default_rng(seed)
    cols = V if V.ndim == 2 else V[:, None]
    rms = np.sqrt(np.mean(cols**2, axis=0))
    noisy = cols + sigma_noise * rms * rng.standard_normal(cols.shape)
    return noisy if V.ndim == 2 else noisy[:, 0]
