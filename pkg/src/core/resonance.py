"""
Resonant inclusion model: frequency tuning, effective shift 𝒫², the resolvent
field W_m, the scattering weight α and the boundary coefficients β_m.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.core.elastic_kernels import ElasticBackground
from src.core.errors import NumericalError, ValidationError
from src.core.geometry import ClusterGeometry, QuadratureRule
from src.core.green import GreenFunction
from src.core.potentials import NewtonSpectrum, assemble_newtonian

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
GAP_FLOOR = 1e-12
COUPLING_FLOOR = 1e-12
BETA_FLOOR = 0.5
ALPHA_SWEEP = (0.04, 0.02, 0.01)


@dataclass(frozen=True)
class FrequencySetting:
    """Driving frequency tuned near the n0-th eigenvalue of N_D, D = aB."""
    n0: int
    c_n0: float
    h: float
    a: float
    rho_tilde1: float
    lambda_b: float
    omega0: float
    omega: float

    @property
    def rho1(self) -> float:
        return self.rho_tilde1 * self.a ** -2

    @property
    def lambda_d(self) -> float:
        return self.a ** 2 * self.lambda_b

    @property
    def contrast(self) -> float:
        """ω²ρ₁, the reciprocal of the resolvent shift."""
        return self.omega ** 2 * self.rho1

    def gap(self, lambda_b_n) -> np.ndarray:
        """1 − ω²ρ₁λ_n^D for eigenvalues λ_n^B of the reference shape."""
        return 1.0 - self.contrast * self.a ** 2 * np.asarray(lambda_b_n, dtype=float)

    def to_dict(self) -> Dict:
        return {
            "n0": self.n0,
            "c_n0": self.c_n0,
            "h": self.h,
            "a": self.a,
            "rho_tilde1": self.rho_tilde1,
            "rho1": self.rho1,
            "lambda_b": self.lambda_b,
            "lambda_d": self.lambda_d,
            "omega0": self.omega0,
            "omega": self.omega,
        }


@dataclass(frozen=True)
class TensorField:
    """3×3-valued field on a quadrature rule (the resolvent W_m)."""
    rule: QuadratureRule
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.rule.size, 3, 3):
            raise ValidationError("resonance_model", "TensorField", "values",
                                  f"expected shape {(self.rule.size, 3, 3)}, got {self.values.shape}")

    def integral(self) -> np.ndarray:
        return self.rule.integrate(self.values)

    def l2_norm(self) -> float:
        return math.sqrt(float(np.sum(self.rule.weights * np.sum(np.abs(self.values) ** 2, axis=(1, 2)))))

    def translated(self, rule: QuadratureRule) -> "TensorField":
        return TensorField(rule=rule, values=self.values)


@dataclass(frozen=True)
class EffectiveParams:
    p2: float
    alpha: float
    beta: np.ndarray

    def to_dict(self) -> Dict:
        beta = np.asarray(self.beta)
        dev = np.abs(beta - 1.0) if beta.size else np.zeros(1)
        return {
            "p2": self.p2,
            "alpha": self.alpha,
            "beta_stats": {
                "mean": [float(np.mean(beta.real)) if beta.size else 1.0,
                         float(np.mean(beta.imag)) if beta.size else 0.0],
                "max_dev": float(dev.max()),
            },
        }


def _check_n0(spectrum: NewtonSpectrum, n0: int, operation: str) -> None:
    if not 1 <= n0 <= len(spectrum.eigenvalues):
        raise ValidationError("resonance_model", operation, "n0",
                              f"mode index must lie in [1, {len(spectrum.eigenvalues)}], got {n0}")


def tune_frequency(spectrum: NewtonSpectrum, n0: int, c_n0: float, a: float, h: float,
                   rho_tilde1: float = 1.0) -> FrequencySetting:
    """ω² = ω₀²(1 − c_{n0}a^h) with ω₀² = 1/(ρ̃₁λ_{n0}^B)."""
    _check_n0(spectrum, n0, "tune_frequency")
    if not c_n0 < 0:
        raise ValidationError("resonance_model", "tune_frequency", "c_n0",
                              f"tuning constant must be negative, got {c_n0}")
    if not 1.0 / 3.0 < h < 1.0:
        raise ValidationError("resonance_model", "tune_frequency", "h", f"must satisfy 1/3 < h < 1, got {h}")
    if not a > 0:
        raise ValidationError("resonance_model", "tune_frequency", "a", f"must be positive, got {a}")
    if not rho_tilde1 > 0:
        raise ValidationError("resonance_model", "tune_frequency", "rho_tilde1",
                              f"must be positive, got {rho_tilde1}")
    lam = float(spectrum.eigenvalues[n0 - 1])
    if not lam > 0:
        raise ValidationError("resonance_model", "tune_frequency", "spectrum",
                              f"eigenvalue {n0} is not positive")

    omega0 = math.sqrt(1.0 / (rho_tilde1 * lam))
    omega = omega0 * math.sqrt(1.0 - c_n0 * a ** h)
    setting = FrequencySetting(n0=n0, c_n0=c_n0, h=h, a=a, rho_tilde1=rho_tilde1,
                               lambda_b=lam, omega0=omega0, omega=omega)
    logger.debug(f"Frequency tuned: omega0={omega0:.6g}, omega={omega:.6g}, a={a}")
    return setting


def spectral_gaps(setting: FrequencySetting, spectrum: NewtonSpectrum) -> np.ndarray:
    """Gaps 1 − ω²ρ₁λ_n^D for every computed mode."""
    return setting.gap(spectrum.eigenvalues)


def effective_p2(spectrum: NewtonSpectrum, n0: int, c_n0: float) -> float:
    """𝒫² = −s_{n0}/(λ_{n0}^B·c_{n0})."""
    _check_n0(spectrum, n0, "effective_p2")
    if not c_n0 < 0:
        raise ValidationError("resonance_model", "effective_p2", "c_n0",
                              f"tuning constant must be negative, got {c_n0}")
    coupling = spectrum.coupling(n0)
    if coupling <= COUPLING_FLOOR * spectrum.rule.measure:
        raise ValidationError("resonance_model", "effective_p2", "n0",
                              f"mode {n0} has zero coupling to constants; choose a coupled mode")
    return -coupling / (float(spectrum.eigenvalues[n0 - 1]) * c_n0)


def solve_w(rule_dm: QuadratureRule, setting: FrequencySetting, bg: ElasticBackground) -> TensorField:
    """Solve (ω²ρ₁)^{-1}W − N_D[W] = 𝕀 for the three constant right-hand sides."""
    newton = assemble_newtonian(rule_dm, bg)
    t = setting.contrast
    sym = newton.symmetrized().real
    eigenvalues = scipy.linalg.eigvalsh(sym)
    gaps = 1.0 - t * eigenvalues
    min_gap = float(np.min(np.abs(gaps)))
    if min_gap < GAP_FLOOR:
        raise NumericalError("resonance_model", "solve_w", "resolvent is numerically singular",
                             {"gap": min_gap})

    n = rule_dm.size
    system = np.eye(3 * n) / t - newton.matrix
    rhs = np.tile(np.eye(3), (n, 1))
    try:
        sol = scipy.linalg.solve(system, rhs)
    except scipy.linalg.LinAlgError as e:
        logger.error(f"Error solving for W: {e}")
        raise NumericalError("resonance_model", "solve_w", f"dense solve failed: {e}", {"gap": min_gap}) from e
    return TensorField(rule=rule_dm, values=sol.reshape(n, 3, 3))


def scattering_alpha(w_field: TensorField, rule_dm: Optional[QuadratureRule] = None) -> float:
    """α = ∫_{D_m} W_m dx reduced to a scalar by (1/3)·trace."""
    if rule_dm is not None and rule_dm.digest() != w_field.rule.digest():
        raise ValidationError("resonance_model", "scattering_alpha", "rule_dm",
                              "field was computed on a different rule")
    return float(np.trace(w_field.integral()).real / 3.0)


def alpha_sweep(spectrum: NewtonSpectrum, bg: ElasticBackground, n0: int, c_n0: float, h: float,
                a_list: Sequence[float] = ALPHA_SWEEP, rho_tilde1: float = 1.0) -> List[Dict]:
    """α(a) from W on a single tuned inclusion aB, one row per a.

    No cluster is built, so a may be far larger than any lattice admits.
    """
    p2 = effective_p2(spectrum, n0, c_n0)
    rows = []
    for a in a_list:
        setting = tune_frequency(spectrum, n0, c_n0, a, h, rho_tilde1)
        rule_d = spectrum.rule.transformed(scale=a, label=f"D(a={a})")
        alpha = scattering_alpha(solve_w(rule_d, setting, bg), rule_d)
        rows.append({"a": float(a), "omega": setting.omega, "P2": p2, "alpha": alpha,
                     "alpha_over_law": alpha / (-p2 * a ** (1.0 - h))})
        logger.debug(f"Alpha sweep a={a}: alpha={alpha:.6g}")
    return rows


def alpha_law_fit(a_values, alphas, p2: float, h: float) -> Dict[str, Optional[float]]:
    """Least squares α ≈ c₁a^{1−h} + c₂a; c₁ should approach −𝒫²."""
    a = np.asarray(a_values, dtype=float)
    if a.size < 2:
        return {"c_cell": None, "c_linear": None, "relative_to_p2": None}
    basis = np.stack([a ** (1.0 - h), a], axis=1)
    coeffs, *_ = np.linalg.lstsq(basis, np.asarray(alphas, dtype=float), rcond=None)
    return {
        "c_cell": float(coeffs[0]),
        "c_linear": float(coeffs[1]),
        "relative_to_p2": float(abs(coeffs[0] + p2) / p2),
    }


def beta_coefficients(cluster: ClusterGeometry, w_field: TensorField, green: GreenFunction,
                      workers: int = 1) -> np.ndarray:
    """β_m = 1 − (1/3)tr ∫_{D_m} W_m(x)R(x, z_m) dx.

    w_field lives on the inclusion rule centred at the origin; every D_m is
    its translate.
    """
    rules = [w_field.rule.transformed(shift=z, label=f"D_{j}") for j, z in enumerate(cluster.centers)]
    centers = cluster.centers
    if green.mode == "free_space":
        return np.ones(cluster.count, dtype=complex)

    def one(m: int) -> complex:
        rule = rules[m]
        rem = green.remainder(rule.nodes, centers)[:, m]
        integrand = np.einsum("ikl,ilj->ikj", w_field.values, rem)
        return 1.0 - np.trace(rule.integrate(integrand)) / 3.0

    # --- solve all sources once so that the workers only read the cache ---
    green.remainder(centers[:1], centers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            beta = np.array(list(pool.map(one, range(cluster.count))), dtype=complex)
    else:
        beta = np.array([one(m) for m in range(cluster.count)], dtype=complex)

    worst = float(np.min(np.abs(beta)))
    if worst <= BETA_FLOOR:
        raise NumericalError("resonance_model", "beta_coefficients",
                             "a coefficient beta_m is too small for the 1/beta scaling",
                             {"min_abs_beta": worst})
    return beta


def effective_parameters(spectrum: NewtonSpectrum, setting: FrequencySetting, bg: ElasticBackground,
                         cluster: ClusterGeometry, green: GreenFunction,
                         workers: int = 1) -> Tuple[EffectiveParams, TensorField]:
    """𝒫², α and β for one tuned cluster; W is solved once and reused for every D_m."""
    p2 = effective_p2(spectrum, setting.n0, setting.c_n0)
    rule_d = spectrum.rule.transformed(scale=setting.a, label=f"D(a={setting.a})")
    w_field = solve_w(rule_d, setting, bg)
    alpha = scattering_alpha(w_field)
    beta = beta_coefficients(cluster, w_field, green, workers)
    logger.info(f"Effective parameters: P2={p2:.6g}, alpha={alpha:.6g}, M={cluster.count}")
    return EffectiveParams(p2=p2, alpha=alpha, beta=beta), w_field


def spectral_projection(w_field: TensorField, spectrum: NewtonSpectrum) -> List[np.ndarray]:
    """⟨W columns, ẽ_n⟩ for each mode of a spectrum computed on the same rule."""
    if spectrum.rule.digest() != w_field.rule.digest():
        raise ValidationError("resonance_model", "spectral_projection", "spectrum",
                              "spectrum and field must share one rule")
    w = w_field.rule.weights
    return [np.einsum("i,ik,ikl->l", w, e, w_field.values) for e in spectrum.eigenvectors]
