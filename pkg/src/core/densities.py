"""
Named background densities ρ(x) used by the experiments and tests.
"""
import math
from typing import Callable, Dict

import numpy as np

from src.core.errors import ValidationError
from src.core.geometry import QuadratureRule

# ── Configuration ──────────────────────────────────────────────
DENSITY_NAMES = ("uniform", "cosine", "bump")
DEFAULT_AMPLITUDE = 0.3
BUMP_WIDTH = 0.25

DensitySampler = Callable[[np.ndarray], np.ndarray]


def make_density(name: str, rho0: float = 1.0, amplitude: float = DEFAULT_AMPLITUDE) -> DensitySampler:
    """Sampler x ↦ ρ(x) for an (N, 3) array of points.

    uniform: ρ0
    cosine:  ρ0·(1 + A·cos(2πx₁)), one Fourier mode on the unit period cube
    bump:    ρ0·(1 + A·exp(−|x|²/w²))
    """
    if name not in DENSITY_NAMES:
        raise ValidationError("experiment_cli", "make_density", "density",
                              f"unknown density '{name}' (use {DENSITY_NAMES})")
    if rho0 <= 0:
        raise ValidationError("experiment_cli", "make_density", "rho0", f"must be positive, got {rho0}")

    def uniform(x):
        return np.full(np.reshape(x, (-1, 3)).shape[0], rho0)

    def cosine(x):
        x = np.reshape(x, (-1, 3))
        return rho0 * (1.0 + amplitude * np.cos(2.0 * math.pi * x[:, 0]))

    def bump(x):
        x = np.reshape(x, (-1, 3))
        return rho0 * (1.0 + amplitude * np.exp(-np.sum(x ** 2, axis=1) / BUMP_WIDTH ** 2))

    samplers: Dict[str, DensitySampler] = {"uniform": uniform, "cosine": cosine, "bump": bump}
    sampler = samplers[name]
    sampler.__name__ = f"rho_{name}"
    return sampler


def density_sup(sampler: DensitySampler, rule: QuadratureRule) -> float:
    """‖ρ‖_∞ sampled on the nodes of a rule."""
    return float(np.max(np.abs(sampler(rule.nodes))))
