"""
Fundamental tensors of the Lamé system.

All kernels share the radial structure Γ(d) = A(r)·I + B(r)·d dᵀ with
d = x − y and r = |d|, so the static Kelvin matrix, the Kupradze matrix and
the shifted (Yukawa-type) tensor are evaluated through one profile routine.
Points broadcast: x and y of shape (..., 3) give tensors of shape (..., 3, 3).
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from src.core.errors import SingularEvaluationError, ValidationError

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
COINCIDENCE_TOL = 1e-12      # relative to the point scale
SERIES_CAP = 60
SERIES_CUTOFF = 1e-16
SERIES_SWITCH = 0.5          # |k_s|·r below which the series replaces the closed form

FOUR_PI = 4.0 * math.pi
Wavenumbers = Tuple[complex, complex]


@dataclass(frozen=True)
class ElasticBackground:
    """Homogeneous isotropic background: Lamé moduli and mass density."""
    lam: float
    mu: float
    rho0: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("elastic_kernels", "ElasticBackground", "mu",
                                  f"shear modulus must be positive, got {self.mu}")
        if not 3.0 * self.lam + 2.0 * self.mu > 0:
            raise ValidationError("elastic_kernels", "ElasticBackground", "lambda",
                                  f"3*lambda + 2*mu must be positive, got {3.0 * self.lam + 2.0 * self.mu}")
        if not self.rho0 > 0:
            raise ValidationError("elastic_kernels", "ElasticBackground", "rho0",
                                  f"background density must be positive, got {self.rho0}")

    @property
    def c_p(self) -> float:
        return math.sqrt((self.lam + 2.0 * self.mu) / self.rho0)

    @property
    def c_s(self) -> float:
        return math.sqrt(self.mu / self.rho0)

    @property
    def gamma1(self) -> float:
        return 0.5 * (1.0 / self.mu + 1.0 / (2.0 * self.mu + self.lam))

    @property
    def gamma2(self) -> float:
        return 0.5 * (1.0 / self.mu - 1.0 / (2.0 * self.mu + self.lam))

    def wavenumbers(self, omega: float) -> Wavenumbers:
        """Return (k_p, k_s) = (ω/c_p, ω/c_s)."""
        if omega < 0:
            raise ValidationError("elastic_kernels", "wavenumbers", "omega",
                                  f"frequency must be non-negative, got {omega}")
        return complex(omega / self.c_p), complex(omega / self.c_s)

    def shifted_wavenumbers(self, p2: float) -> Wavenumbers:
        """Wavenumbers of the shifted operator 𝓛 − 𝒫²: k = i𝒫/√(modulus)."""
        if p2 < 0:
            raise ValidationError("elastic_kernels", "shifted_wavenumbers", "p2",
                                  f"shift must be non-negative, got {p2}")
        p = math.sqrt(p2)
        return 1j * p / math.sqrt(self.lam + 2.0 * self.mu), 1j * p / math.sqrt(self.mu)

    def to_dict(self):
        return {"lambda": self.lam, "mu": self.mu, "rho0": self.rho0}


# ──────────────────────── RADIAL PROFILES ────────────────────────

def _separation(x, y, operation: str):
    """Return d = x − y and r = |d|; reject numerically coincident points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    scale = np.maximum(1.0, np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(y, axis=-1)))
    if np.any(r < COINCIDENCE_TOL * scale):
        raise SingularEvaluationError("elastic_kernels", operation, "x, y",
                                      "evaluation point coincides with the source point")
    return d, r


def _series_coefficients(n: int, bg: ElasticBackground, k_p: complex, k_s: complex):
    """Coefficients a_n, b_n of the δ-branch and dyadic branch of the series."""
    c = (1j ** n) / ((n + 2) * math.factorial(n))
    ks_n = k_s ** n if n else 1.0
    kp_n = k_p ** n if n else 1.0
    a_n = c * ((n + 1) * ks_n / bg.mu + kp_n / (bg.lam + 2.0 * bg.mu))
    b_n = c * (n - 1) * (ks_n / bg.mu - kp_n / (bg.lam + 2.0 * bg.mu))
    return a_n, b_n


def _series_profile(r, bg, k_p, k_s, n_max: Optional[int] = None, derivative: bool = False):
    """Partial sums of the series form with Kahan-compensated accumulation.

    With n_max=None the sum stops once every new term is below SERIES_CUTOFF
    relative to the running sum (capped at SERIES_CAP).
    """
    r = np.asarray(r, dtype=float)
    sums = [np.zeros(r.shape, dtype=complex) for _ in range(4 if derivative else 2)]
    comps = [np.zeros(r.shape, dtype=complex) for _ in sums]
    last = SERIES_CAP if n_max is None else n_max

    for n in range(last + 1):
        a_n, b_n = _series_coefficients(n, bg, k_p, k_s)
        terms = [a_n * r ** (n - 1) / FOUR_PI, -b_n * r ** (n - 3) / FOUR_PI]
        if derivative:
            terms += [(n - 1) * a_n * r ** (n - 2) / FOUR_PI, -(n - 3) * b_n * r ** (n - 4) / FOUR_PI]

        for i, term in enumerate(terms):
            # --- Kahan step ---
            yv = term - comps[i]
            tv = sums[i] + yv
            comps[i] = (tv - sums[i]) - yv
            sums[i] = tv

        if n_max is None and n >= 2:
            small = all(np.all(np.abs(t) <= SERIES_CUTOFF * np.maximum(np.abs(s), 1e-300))
                        for t, s in zip(terms, sums))
            if small:
                break
    return tuple(sums)


def _phi_derivatives(r, k):
    """φ_k = e^{ikr}/(4πr) and its first three radial derivatives."""
    e = np.exp(1j * k * r) / FOUR_PI
    phi = e / r
    d1 = e * (1j * k / r - 1.0 / r ** 2)
    d2 = e * (-k ** 2 / r - 2j * k / r ** 2 + 2.0 / r ** 3)
    d3 = e * (-1j * k ** 3 / r + 3.0 * k ** 2 / r ** 2 + 6j * k / r ** 3 - 6.0 / r ** 4)
    return phi, d1, d2, d3


def _closed_profile(r, bg, k_p, k_s, derivative: bool = False):
    """A, B (and A', B') from Γ = φ_s I/μ + ∇∇ᵀ(φ_s − φ_p)/(μk_s²)."""
    s0, s1, s2, s3 = _phi_derivatives(r, k_s)
    _, p1, p2, p3 = _phi_derivatives(r, k_p)
    g1, g2, g3 = s1 - p1, s2 - p2, s3 - p3
    scale = 1.0 / (bg.mu * k_s ** 2)

    a = s0 / bg.mu + scale * g1 / r
    b = scale * (g2 - g1 / r) / r ** 2
    if not derivative:
        return a, b
    da = s1 / bg.mu + scale * (g2 / r - g1 / r ** 2)
    db = scale * ((g3 - g2 / r + g1 / r ** 2) / r ** 2 - 2.0 * (g2 - g1 / r) / r ** 3)
    return a, b, da, db


def kernel_profile(r, bg: ElasticBackground, wavenumbers: Wavenumbers = (0.0, 0.0),
                   derivative: bool = False):
    """Radial coefficients of the fundamental tensor at separations r.

    Args:
        r: array of positive separations
        bg: elastic background
        wavenumbers: (k_p, k_s), real for time-harmonic, imaginary for the shifted operator
        derivative: also return A'(r), B'(r)

    Returns:
        (A, B) or (A, B, A', B') as complex arrays shaped like r
    """
    k_p, k_s = (complex(k) for k in wavenumbers)
    r = np.asarray(r, dtype=float)

    if k_s == 0 and k_p == 0:
        a = bg.gamma1 / (FOUR_PI * r) + 0j
        b = bg.gamma2 / (FOUR_PI * r ** 3) + 0j
        if not derivative:
            return a, b
        return a, b, -bg.gamma1 / (FOUR_PI * r ** 2) + 0j, -3.0 * bg.gamma2 / (FOUR_PI * r ** 4) + 0j

    near = abs(k_s) * r < SERIES_SWITCH
    out = [np.zeros(r.shape, dtype=complex) for _ in range(4 if derivative else 2)]
    if np.any(near):
        for slot, val in zip(out, _series_profile(r[near], bg, k_p, k_s, derivative=derivative)):
            slot[near] = val
    if np.any(~near):
        for slot, val in zip(out, _closed_profile(r[~near], bg, k_p, k_s, derivative=derivative)):
            slot[~near] = val
    return tuple(out)


def _assemble(d, r, a, b):
    eye = np.eye(3)
    return a[..., None, None] * eye + b[..., None, None] * d[..., :, None] * d[..., None, :]


def _assemble_gradient(d, r, a, b, da, db):
    """∂/∂x_m of A(r)δ_kl + B(r)d_k d_l, indexed [..., k, l, m]."""
    eye = np.eye(3)
    dh = d / r[..., None]
    grad = (da[..., None, None, None] * eye[:, :, None] * dh[..., None, None, :]
            + db[..., None, None, None] * d[..., :, None, None] * d[..., None, :, None] * dh[..., None, None, :]
            + b[..., None, None, None] * (eye[:, None, :] * d[..., None, :, None]
                                          + eye[None, :, :] * d[..., :, None, None]))
    return grad


# ──────────────────────── TENSORS ────────────────────────

def kelvin_tensor(x, y, bg: ElasticBackground) -> np.ndarray:
    """Static Kelvin matrix Γ⁰(x, y) (real, symmetric)."""
    d, r = _separation(x, y, "kelvin_tensor")
    a = bg.gamma1 / (FOUR_PI * r)
    b = bg.gamma2 / (FOUR_PI * r ** 3)
    return _assemble(d, r, a, b)


def kupradze_tensor(x, y, bg: ElasticBackground, omega: float = 0.0,
                    wavenumbers: Optional[Wavenumbers] = None) -> np.ndarray:
    """Kupradze matrix Γ^ω(x, y); Kelvin at ω = 0.

    Complex wavenumbers may be passed directly through `wavenumbers`, which is
    how the shifted tensor Φ_{i𝒫} is obtained.
    """
    if wavenumbers is None:
        if omega < 0:
            raise ValidationError("elastic_kernels", "kupradze_tensor", "omega",
                                  f"frequency must be non-negative, got {omega}")
        if omega == 0:
            return kelvin_tensor(x, y, bg).astype(complex)
        wavenumbers = bg.wavenumbers(omega)
    d, r = _separation(x, y, "kupradze_tensor")
    a, b = kernel_profile(r, bg, wavenumbers)
    return _assemble(d, r, a, b)


def shifted_tensor(x, y, bg: ElasticBackground, p2: float) -> np.ndarray:
    """Full-space fundamental solution Φ_{i𝒫} of 𝓛 − 𝒫²."""
    return kupradze_tensor(x, y, bg, wavenumbers=bg.shifted_wavenumbers(p2))


def kupradze_series(x, y, bg: ElasticBackground, omega: float, n_max: int) -> np.ndarray:
    """Partial sum of the power series of Γ^ω in ω through n = n_max."""
    if n_max < 0:
        raise ValidationError("elastic_kernels", "kupradze_series", "n_max",
                              f"truncation index must be non-negative, got {n_max}")
    if omega < 0:
        raise ValidationError("elastic_kernels", "kupradze_series", "omega",
                              f"frequency must be non-negative, got {omega}")
    d, r = _separation(x, y, "kupradze_series")
    k_p, k_s = bg.wavenumbers(omega)
    a, b = _series_profile(r, bg, k_p, k_s, n_max=n_max)
    return _assemble(d, r, a, b)


def far_field_tensors(xhat, y, bg: ElasticBackground, omega: float):
    """Compressional and shear far-field factors (Γ_p^∞, Γ_s^∞)."""
    xhat = np.asarray(xhat, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(np.linalg.norm(xhat, axis=-1) - 1.0) > 1e-10):
        raise ValidationError("elastic_kernels", "far_field_tensors", "xhat",
                              "observation direction must be a unit vector")
    k_p, k_s = bg.wavenumbers(omega)
    proj = xhat[..., :, None] * xhat[..., None, :]
    phase = np.sum(xhat * y, axis=-1)
    gp = proj / (FOUR_PI * (bg.lam + 2.0 * bg.mu)) * np.exp(-1j * k_p * phase)[..., None, None]
    gs = (np.eye(3) - proj) / (FOUR_PI * bg.mu) * np.exp(-1j * k_s * phase)[..., None, None]
    return gp, gs


def kupradze_gradient(x, y, bg: ElasticBackground,
                      wavenumbers: Wavenumbers = (0.0, 0.0)) -> np.ndarray:
    """∂/∂x_m Γ_kl(x, y), indexed [..., k, l, m]."""
    d, r = _separation(x, y, "kupradze_gradient")
    a, b, da, db = kernel_profile(r, bg, wavenumbers, derivative=True)
    return _assemble_gradient(d, r, a, b, da, db)


def kelvin_gradient(x, y, bg: ElasticBackground) -> np.ndarray:
    """∂/∂y_m Γ⁰_kl(x, y), indexed [..., k, l, m]."""
    d, r = _separation(x, y, "kelvin_gradient")
    a = bg.gamma1 / (FOUR_PI * r)
    b = bg.gamma2 / (FOUR_PI * r ** 3)
    da = -bg.gamma1 / (FOUR_PI * r ** 2)
    db = -3.0 * bg.gamma2 / (FOUR_PI * r ** 4)
    return -_assemble_gradient(d, r, a, b, da, db).real


def traction_of_gradient(grad, nu, bg: ElasticBackground) -> np.ndarray:
    """Traction λ(∇·u)ν + μ(∇u + ∇uᵀ)ν applied to each column l.

    grad is indexed [..., k, l, m] = ∂_m u^{(l)}_k; nu broadcasts as [..., 3].
    """
    nu = np.asarray(nu, dtype=float)
    div = np.einsum("...jlj->...l", grad)
    sym = np.einsum("...klm,...m->...kl", grad, nu) + np.einsum("...mlk,...m->...kl", grad, nu)
    return bg.lam * nu[..., :, None] * div[..., None, :] + bg.mu * sym


def traction_kernel(x, y, nu, bg: ElasticBackground,
                    wavenumbers: Wavenumbers = (0.0, 0.0)) -> np.ndarray:
    """Traction at x (normal ν) of the field Γ(·, y)e_l, column l."""
    return traction_of_gradient(kupradze_gradient(x, y, bg, wavenumbers), nu, bg)


# ──────────────────────── PLANE WAVES & FD ORACLES ────────────────────────

def plane_wave(direction, polarization, bg: ElasticBackground, omega: float,
               kind: str = "p") -> Callable:
    """Compressional (kind='p', polarization ignored) or shear plane wave."""
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-10:
        raise ValidationError("elastic_kernels", "plane_wave", "direction", "must be a unit vector")
    k_p, k_s = bg.wavenumbers(omega)
    if kind == "p":
        amp, k = direction.astype(complex), k_p
    elif kind == "s":
        amp = np.asarray(polarization, dtype=complex)
        if abs(np.dot(amp, direction)) > 1e-10:
            raise ValidationError("elastic_kernels", "plane_wave", "polarization",
                                  "shear polarization must be orthogonal to the direction")
        k = k_s
    else:
        raise ValidationError("elastic_kernels", "plane_wave", "kind", f"unknown wave type '{kind}'")

    def field(x):
        x = np.asarray(x, dtype=float)
        return amp * np.exp(1j * k * (x @ direction))[..., None]

    return field


def _jacobian_fd(field, x, h):
    """Central-difference ∂_m u_k at points x, indexed [..., k, m]."""
    x = np.asarray(x, dtype=float)
    cols = []
    for m in range(3):
        e = np.zeros(3)
        e[m] = h
        cols.append((field(x + e) - field(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _hessian_fd(field, x, h):
    """Second differences ∂_i∂_j u_k, indexed [..., k, i, j]."""
    x = np.asarray(x, dtype=float)
    base = field(x)
    out = np.zeros(base.shape + (3, 3), dtype=complex)
    eye = np.eye(3) * h
    for i in range(3):
        out[..., i, i] = (field(x + eye[i]) - 2.0 * base + field(x - eye[i])) / h ** 2
        for j in range(i + 1, 3):
            val = (field(x + eye[i] + eye[j]) - field(x + eye[i] - eye[j])
                   - field(x - eye[i] + eye[j]) + field(x - eye[i] - eye[j])) / (4.0 * h ** 2)
            out[..., i, j] = val
            out[..., j, i] = val
    return out


def lame_residual_fd(field: Callable, x, bg: ElasticBackground, shift: float = 0.0,
                     h: float = 1e-3):
    """Finite-difference (𝓛 + shift)u at x together with the size of its parts.

    Returns (residual, scale) where scale = |μΔu| + |(λ+μ)∇∇·u| + |shift·u|
    pointwise, so residual/scale is a relative defect.
    """
    hess = _hessian_fd(field, x, h)
    lap = np.einsum("...kii->...k", hess)
    grad_div = np.einsum("...iik->...k", hess)
    u = field(np.asarray(x, dtype=float))
    parts = (bg.mu * lap, (bg.lam + bg.mu) * grad_div, shift * u)
    residual = parts[0] + parts[1] + parts[2]
    scale = sum(np.linalg.norm(p, axis=-1) for p in parts)
    return residual, scale


def traction_fd(field: Callable, x, nu, bg: ElasticBackground, h: float = 1e-5):
    """Finite-difference traction of a vector field at x with normal ν."""
    jac = _jacobian_fd(field, x, h)
    nu = np.asarray(nu, dtype=float)
    div = np.einsum("...ii->...", jac)
    strain_nu = 0.5 * (np.einsum("...km,...m->...k", jac, nu) + np.einsum("...mk,...m->...k", jac, nu))
    return bg.lam * div[..., None] * nu + 2.0 * bg.mu * strain_nu


def longitudinal_part(field: Callable, x, bg: ElasticBackground, omega: float, h: float = 1e-3):
    """u_p = −k_p^{-2}∇(∇·u) by finite differences; u_s = u − u_p."""
    k_p, _ = bg.wavenumbers(omega)
    if k_p == 0:
        raise ValidationError("elastic_kernels", "longitudinal_part", "omega",
                              "the split needs a positive frequency")
    hess = _hessian_fd(field, x, h)
    return -np.einsum("...iik->...k", hess) / k_p ** 2


if __name__ == "__main__":
    # --- Basic smoke test ---
    background = ElasticBackground(lam=1.0, mu=1.0)
    g0 = kelvin_tensor([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], background)
    print(f"✅ Kelvin (1,1) entry: {g0[0, 0]:.6f} (expected {1 / FOUR_PI:.6f})")
