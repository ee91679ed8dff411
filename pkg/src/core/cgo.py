"""
Complex geometrical optics (CGO) pairs and Fourier reconstruction of ρ.

Remark variant (exact solutions of (𝓛 − 𝒫²)u = 0), with s = |ξ|:
    ζ₁ = −(s/2)e₁ + i√(𝒫²/μ + s²/4)e₂     η₁ = i√(1 + 4𝒫²/(μs²))e₁ + e₂
    ζ₂ = −(s/2)e₁ − i√(𝒫²/μ + s²/4)e₂     η₂ = i√(1 + 4𝒫²/(μs²))e₁ − e₂

Theorem variant (parameter skeleton only), with t = √(𝒫^{4+2ι} + k_s²):
    ζ₁ = −(s/2)e₁ + i√(t² − k_s² + s²/4)e₂ + te₃     η₁ = e₁ + (s/2t)e₂
    ζ₂ = −(s/2)e₁ − i√(t² − k_s² + s²/4)e₂ − te₃     η₂ = e₁ − (s/2t)e₂

In both cases ζ₁ + ζ₂ = −ξ, so Q^f·Q^g = (η₁·η₂)e^{−iξ·x}.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.elastic_kernels import ElasticBackground
from src.core.errors import UnsupportedVariantError, ValidationError
from src.core.geometry import QuadratureRule

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
CGO_VARIANTS = ("remark", "theorem")
DEFAULT_LATTICE_CUT = 4
DEFAULT_PERIOD = 1.0

LatticeIndex = Tuple[int, int, int]


def orthonormal_basis(xi) -> np.ndarray:
    """Rows e₁ = ξ/|ξ|, e₂ = e₁ × ê normalized (ê the axis least aligned with e₁), e₃ = e₁ × e₂."""
    xi = np.asarray(xi, dtype=float).reshape(3)
    norm = np.linalg.norm(xi)
    if norm == 0:
        raise ValidationError("cgo_reconstruction", "make_cgo_pair", "xi", "ξ must be nonzero")
    e1 = xi / norm
    helper = np.eye(3)[int(np.argmin(np.abs(e1)))]
    e2 = np.cross(e1, helper)
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return np.stack([e1, e2, e3])


@dataclass(frozen=True)
class CgoPair:
    xi: np.ndarray
    basis: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    variant: str
    p2: float
    mu: float
    t: Optional[float] = None
    iota: Optional[float] = None
    k_s: float = 0.0

    @property
    def s(self) -> float:
        return float(np.linalg.norm(self.xi))

    @property
    def divisor(self) -> complex:
        """η₁·η₂, equal to −2 − 4𝒫²/(μ|ξ|²) for the remark variant."""
        return complex(np.dot(self.eta1, self.eta2))

    def invariants(self) -> Dict[str, float]:
        """Absolute residuals of the algebraic identities the pair must satisfy."""
        out = {"sum": float(np.max(np.abs(self.zeta1 + self.zeta2 + self.xi)))}
        if self.variant == "remark":
            target = -self.p2 / self.mu
            out["zeta1_sq"] = abs(np.dot(self.zeta1, self.zeta1) - target)
            out["zeta2_sq"] = abs(np.dot(self.zeta2, self.zeta2) - target)
            out["zeta1_eta1"] = abs(np.dot(self.zeta1, self.eta1))
            out["zeta2_eta2"] = abs(np.dot(self.zeta2, self.eta2))
            out["eta_product"] = abs(self.divisor - (-2.0 - 4.0 * self.p2 / (self.mu * self.s ** 2)))
        else:
            out["zeta1_sq"] = abs(np.dot(self.zeta1, self.zeta1) - self.k_s ** 2)
            out["zeta2_sq"] = abs(np.dot(self.zeta2, self.zeta2) - self.k_s ** 2)
            out["eta_product"] = abs(self.divisor - (1.0 - self.s ** 2 / (4.0 * self.t ** 2)))
        return out

    def to_dict(self) -> Dict:
        return {
            "xi": self.xi.tolist(),
            "variant": self.variant,
            "p2": self.p2,
            "t": self.t,
            "iota": self.iota,
            "divisor": [self.divisor.real, self.divisor.imag],
        }


def make_cgo_pair(xi, p2: float, bg: ElasticBackground, variant: str = "remark",
                  iota: Optional[float] = None, omega: float = 0.0) -> CgoPair:
    """Build (ζ₁, η₁, ζ₂, η₂) for a nonzero wave vector ξ."""
    if variant not in CGO_VARIANTS:
        raise ValidationError("cgo_reconstruction", "make_cgo_pair", "variant",
                              f"expected one of {CGO_VARIANTS}, got '{variant}'")
    if not p2 > 0:
        raise ValidationError("cgo_reconstruction", "make_cgo_pair", "p2", f"𝒫² must be positive, got {p2}")
    xi = np.asarray(xi, dtype=float).reshape(3)
    basis = orthonormal_basis(xi)
    e1, e2, e3 = basis
    s = float(np.linalg.norm(xi))
    mu = bg.mu

    if variant == "remark":
        imag = math.sqrt(p2 / mu + s ** 2 / 4.0)
        stretch = math.sqrt(1.0 + 4.0 * p2 / (mu * s ** 2))
        zeta1 = -0.5 * s * e1 + 1j * imag * e2
        zeta2 = -0.5 * s * e1 - 1j * imag * e2
        eta1 = 1j * stretch * e1 + e2
        eta2 = 1j * stretch * e1 - e2
        return CgoPair(xi=xi, basis=basis, zeta1=zeta1, zeta2=zeta2, eta1=eta1.astype(complex),
                       eta2=eta2.astype(complex), variant=variant, p2=p2, mu=mu)

    if iota is None or not iota > 0:
        raise ValidationError("cgo_reconstruction", "make_cgo_pair", "iota", f"ι must be positive, got {iota}")
    k_s = omega / bg.c_s
    t = math.sqrt(p2 ** (2.0 + iota) + k_s ** 2)
    if not t > k_s:
        raise ValidationError("cgo_reconstruction", "make_cgo_pair", "t", f"t = {t} must exceed k_s = {k_s}")
    imag = math.sqrt(t ** 2 - k_s ** 2 + s ** 2 / 4.0)
    zeta1 = -0.5 * s * e1 + 1j * imag * e2 + t * e3
    zeta2 = -0.5 * s * e1 - 1j * imag * e2 - t * e3
    eta1 = e1 + s / (2.0 * t) * e2
    eta2 = e1 - s / (2.0 * t) * e2
    return CgoPair(xi=xi, basis=basis, zeta1=zeta1, zeta2=zeta2, eta1=eta1.astype(complex),
                   eta2=eta2.astype(complex), variant=variant, p2=p2, mu=mu, t=t, iota=iota, k_s=k_s)


def _which(pair: CgoPair, which: int, operation: str):
    if pair.variant != "remark":
        raise UnsupportedVariantError("cgo_reconstruction", operation, "pair",
                                      "theorem-variant fields need the F-corrections, which are not solved")
    if which not in (1, 2):
        raise ValidationError("cgo_reconstruction", operation, "which", f"must be 1 or 2, got {which}")
    return (pair.zeta1, pair.eta1) if which == 1 else (pair.zeta2, pair.eta2)


def cgo_field(pair: CgoPair, which: int, x) -> np.ndarray:
    """η·e^{iζ·x} at points of shape (N, 3)."""
    zeta, eta = _which(pair, which, "cgo_field")
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    phase = np.exp(1j * (x @ zeta))
    return phase[:, None] * eta[None, :]


def cgo_traction(pair: CgoPair, which: int, x, normals, bg: ElasticBackground) -> np.ndarray:
    """∂_ν(ηe^{iζ·x}) = ie^{iζ·x}[λ(ζ·η)ν + μ((ζ·ν)η + (η·ν)ζ)]."""
    zeta, eta = _which(pair, which, "cgo_traction")
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    nu = np.asarray(normals, dtype=float).reshape(-1, 3)
    phase = np.exp(1j * (x @ zeta))
    bracket = (bg.lam * np.dot(zeta, eta) * nu
               + bg.mu * ((nu @ zeta)[:, None] * eta[None, :] + (nu @ eta)[:, None] * zeta[None, :]))
    return 1j * phase[:, None] * bracket


# ──────────────────────── FOURIER DATA ────────────────────────

def lattice_vector(index: Sequence[int], period: float = DEFAULT_PERIOD) -> np.ndarray:
    """ξ = (2π/L)·n."""
    return 2.0 * math.pi / period * np.asarray(index, dtype=float)


def fourier_lattice(lattice_cut: int, include_zero: bool = False) -> List[LatticeIndex]:
    """All n ∈ ℤ³ with |n|_∞ ≤ cut, in lexicographic order."""
    if lattice_cut < 1:
        raise ValidationError("cgo_reconstruction", "fourier_lattice", "lattice_cut",
                              f"must be at least 1, got {lattice_cut}")
    rng = range(-lattice_cut, lattice_cut + 1)
    return [n for n in itertools.product(rng, rng, rng) if include_zero or any(n)]


def fourier_datum_volume_oracle(pair: CgoPair, rho: Callable, rule_vol: QuadratureRule) -> complex:
    """∫_Ω ρ Q^f·Q^g dx by direct quadrature (divide by the pair's divisor for the Fourier datum)."""
    q1 = cgo_field(pair, 1, rule_vol.nodes)
    q2 = cgo_field(pair, 2, rule_vol.nodes)
    rho_values = np.asarray(rho(rule_vol.nodes), dtype=float).reshape(-1)
    return complex(np.sum(rule_vol.weights * rho_values * np.sum(q1 * q2, axis=1)))


def fourier_datum_boundary(pair: CgoPair, wqf_trace, rule_bdry: QuadratureRule, bg: ElasticBackground) -> complex:
    """∫_∂Ω 𝒲^{Q^f}·∂_ν(η₂e^{iζ₂·x}) dσ divided by η₁·η₂."""
    if pair.s == 0:
        raise ValidationError("cgo_reconstruction", "fourier_datum_boundary", "xi", "ξ must be nonzero")
    trace = np.asarray(wqf_trace)
    if trace.shape != (rule_bdry.size, 3):
        raise ValidationError("cgo_reconstruction", "fourier_datum_boundary", "wqf_trace",
                              f"expected shape {(rule_bdry.size, 3)}, got {trace.shape}")
    traction = cgo_traction(pair, 2, rule_bdry.nodes, rule_bdry.normals, bg)
    integral = complex(np.sum(rule_bdry.weights * np.sum(trace * traction, axis=1)))
    return integral / pair.divisor


def remainder_bound(p2: float, iota: float, xi, omega: float, bg: ElasticBackground) -> float:
    """𝒫²/√(t² − k_s² + |ξ|²/4) with t = √(𝒫^{4+2ι} + k_s²); of order 𝒫^{−ι}."""
    if not iota > 0:
        raise ValidationError("cgo_reconstruction", "remainder_bound", "iota", f"ι must be positive, got {iota}")
    k_s = omega / bg.c_s
    t2 = p2 ** (2.0 + iota) + k_s ** 2
    s2 = float(np.sum(np.asarray(xi, dtype=float) ** 2))
    return p2 / math.sqrt(t2 - k_s ** 2 + s2 / 4.0)


def synthesis_remainder(p2: float, iota: float, lattice_cut: int, omega: float, bg: ElasticBackground,
                        period: float = DEFAULT_PERIOD) -> float:
    """L^{−3}(Σ_ξ |Rest(ξ)|²)^{1/2} over the truncated lattice, the model error of the synthesis."""
    total = sum(remainder_bound(p2, iota, lattice_vector(n, period), omega, bg) ** 2
                for n in fourier_lattice(lattice_cut))
    return math.sqrt(total) / period ** 3


# ──────────────────────── RECONSTRUCTION ────────────────────────

@dataclass(frozen=True)
class FourierReconstruction:
    lattice_cut: int
    coeffs: Dict[LatticeIndex, complex]
    rule: QuadratureRule
    values: np.ndarray
    mean: Optional[float] = None
    relative_error: Optional[float] = None
    truncation_error_estimate: float = 0.0
    conjugate_asymmetry: float = 0.0
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "lattice_cut": self.lattice_cut,
            "mean": self.mean,
            "relative_error": self.relative_error,
            "truncation_error_estimate": self.truncation_error_estimate,
            "conjugate_asymmetry": self.conjugate_asymmetry,
            "coefficient_count": len(self.coeffs),
        }


def acquire_data(indices: Sequence[LatticeIndex], datum: Callable[[LatticeIndex], complex],
                 workers: int = 1) -> Dict[LatticeIndex, complex]:
    """Evaluate one datum per lattice index; the result keeps the index order."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(datum, indices))
    else:
        values = [datum(n) for n in indices]
    return dict(zip(indices, values))


def reconstruct_density(data: Dict[LatticeIndex, complex], lattice_cut: int, rule_vol: QuadratureRule,
                        period: float = DEFAULT_PERIOD, truth: Optional[Callable] = None) -> FourierReconstruction:
    """ρ − mean synthesized as L^{−3}Σ_{0<|n|_∞≤cut} datum(n)e^{iξ_n·x} on the volume rule.

    The ξ = 0 datum is never synthesized; with a known truth its mean is reported
    separately and the error is measured on ρ − mean.
    """
    indices = fourier_lattice(lattice_cut)
    missing = [n for n in indices if n not in data]
    if missing:
        shown = ", ".join(str(n) for n in missing[:8])
        more = f" and {len(missing) - 8} more" if len(missing) > 8 else ""
        raise ValidationError("cgo_reconstruction", "reconstruct_density", "data",
                              f"missing lattice entries: {shown}{more}")

    nodes = rule_vol.nodes
    synthesized = np.zeros(rule_vol.size, dtype=complex)
    for n in indices:
        synthesized += data[n] * np.exp(1j * (nodes @ lattice_vector(n, period)))
    synthesized /= period ** 3

    scale = max(max(abs(data[n]) for n in indices), 1e-300)
    asymmetry = max(abs(data[tuple(-k for k in n)] - np.conj(data[n])) for n in indices) / scale
    shell = [n for n in indices if max(abs(k) for k in n) == lattice_cut]
    inner = math.sqrt(sum(abs(data[n]) ** 2 for n in indices))
    outer = math.sqrt(sum(abs(data[n]) ** 2 for n in shell))
    truncation = outer / inner if inner > 0 else 0.0

    values = synthesized.real
    mean = relative_error = None
    if truth is not None:
        truth_values = np.asarray(truth(nodes), dtype=float).reshape(-1)
        mean = float(rule_vol.integrate(truth_values) / rule_vol.measure)
        centred = truth_values - mean
        denom = math.sqrt(float(rule_vol.integrate(centred ** 2)))
        diff = math.sqrt(float(rule_vol.integrate((values - centred) ** 2)))
        relative_error = diff / denom if denom > 0 else diff
    if float(np.max(np.abs(synthesized.imag))) > 1e-6 * max(float(np.max(np.abs(values))), 1e-300):
        logger.warning(f"Synthesized density has an imaginary part up to {np.max(np.abs(synthesized.imag)):.3e}")

    logger.info(f"Density reconstructed: cut={lattice_cut}, coefficients={len(indices)}, "
                f"relative error={relative_error}")
    return FourierReconstruction(lattice_cut=lattice_cut, coeffs={n: data[n] for n in indices}, rule=rule_vol,
                                 values=values, mean=mean, relative_error=relative_error,
                                 truncation_error_estimate=truncation, conjugate_asymmetry=float(asymmetry))
