"""
Dense discretizations of the elastic integral operators.

Every operator is a BlockOperator: a (3·N_target) × (3·N_source) matrix whose
3×3 blocks act on nodal vector values, node-major with the component as the
fast index. Quadrature weights of the source rule are folded into the blocks.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from src.core.elastic_kernels import (
    COINCIDENCE_TOL,
    ElasticBackground,
    Wavenumbers,
    kernel_profile,
    kupradze_tensor,
    traction_kernel,
)
from src.core.errors import NumericalError, ValidationError
from src.core.geometry import QuadratureRule

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
CHUNK_PAIRS = 120_000
DISC_GAUSS_POINTS = 16
CLUSTER_RTOL = 1e-2
_WORKERS = {"assembly": 1}

STATIC: Wavenumbers = (0.0, 0.0)


def configure_workers(count: int) -> None:
    """Threads used for block assembly (blocks are written disjointly)."""
    _WORKERS["assembly"] = max(1, int(count))


# ──────────────────────── BLOCK OPERATOR ────────────────────────

@dataclass(frozen=True)
class BlockOperator:
    """Dense matrix of 3×3 blocks between two quadrature spaces."""
    source_rule: QuadratureRule
    target_rule: QuadratureRule
    matrix: np.ndarray

    def __post_init__(self):
        expected = (3 * self.target_rule.size, 3 * self.source_rule.size)
        if self.matrix.shape != expected:
            raise ValidationError("potential_operators", "BlockOperator", "matrix",
                                  f"shape {self.matrix.shape} does not match {expected}")

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, values) -> np.ndarray:
        """Apply to nodal values of shape (N_source, 3)."""
        values = np.asarray(values)
        if values.shape != (self.source_rule.size, 3):
            raise ValidationError("potential_operators", "BlockOperator.apply", "values",
                                  f"expected shape {(self.source_rule.size, 3)}, got {values.shape}")
        return (self.matrix @ values.reshape(-1)).reshape(-1, 3)

    def blocks(self) -> np.ndarray:
        nt, ns = self.target_rule.size, self.source_rule.size
        return self.matrix.reshape(nt, 3, ns, 3).transpose(0, 2, 1, 3)

    def _sqrt_weights(self):
        return (np.sqrt(np.repeat(self.target_rule.weights, 3)),
                np.sqrt(np.repeat(self.source_rule.weights, 3)))

    def weighted_matrix(self) -> np.ndarray:
        """W_t^{1/2}·A·W_s^{-1/2}: the operator in orthonormal L² coordinates."""
        wt, ws = self._sqrt_weights()
        return wt[:, None] * self.matrix / ws[None, :]

    def symmetrized(self) -> np.ndarray:
        """Hermitian part of the weighted matrix (square operators only)."""
        if self.source_rule is not self.target_rule and self.source_rule.digest() != self.target_rule.digest():
            raise ValidationError("potential_operators", "symmetrized", "rules",
                                  "symmetrization needs identical source and target rules")
        m = self.weighted_matrix()
        return 0.5 * (m + m.conj().T)

    def asymmetry(self) -> float:
        m = self.weighted_matrix()
        return float(np.max(np.abs(m - m.conj().T)) / max(np.max(np.abs(m)), 1e-300))

    def norm(self) -> float:
        """Operator norm between the weighted L² spaces."""
        return float(scipy.linalg.svdvals(self.weighted_matrix())[0])


def blocks_to_matrix(blocks: np.ndarray) -> np.ndarray:
    nt, ns = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(3 * nt, 3 * ns)


def _pairwise(kernel: Callable, targets: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Evaluate kernel(x, y, rows) over all target/source pairs.

    Coincident pairs are evaluated at a shifted placeholder and zeroed, so the
    caller owns the diagonal.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    sources = np.asarray(sources, dtype=float).reshape(-1, 3)
    nt, ns = targets.shape[0], sources.shape[0]
    out = np.zeros((nt, ns, 3, 3), dtype=complex)
    scale = max(1.0, float(np.abs(targets).max(initial=0.0)), float(np.abs(sources).max(initial=0.0)))
    step = max(1, CHUNK_PAIRS // max(ns, 1))

    def work(start: int) -> None:
        stop = min(start + step, nt)
        x = np.broadcast_to(targets[start:stop, None, :], (stop - start, ns, 3))
        y = np.broadcast_to(sources[None, :, :], (stop - start, ns, 3)).copy()
        same = np.linalg.norm(x - y, axis=-1) < COINCIDENCE_TOL * scale
        y[same] += 1.0
        blocks = kernel(x, y, slice(start, stop))
        blocks[same] = 0.0
        out[start:stop] = blocks

    starts = range(0, nt, step)
    if _WORKERS["assembly"] > 1 and nt > step:
        with ThreadPoolExecutor(max_workers=_WORKERS["assembly"]) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return out


def coincident_mask(targets, sources) -> np.ndarray:
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    sources = np.asarray(sources, dtype=float).reshape(-1, 3)
    scale = max(1.0, float(np.abs(targets).max(initial=0.0)), float(np.abs(sources).max(initial=0.0)))
    d = np.linalg.norm(targets[:, None, :] - sources[None, :, :], axis=-1)
    return d < COINCIDENCE_TOL * scale


# ──────────────────────── SELF-INTERACTION ────────────────────────

def _ball_radial_integral(eps: np.ndarray, k: complex) -> np.ndarray:
    """Ψ(k) = ∫_{B_ε} e^{ik|x|}/(4π|x|) dx = ∫_0^ε r e^{ikr} dr."""
    eps = np.asarray(eps, dtype=float)
    t = k * eps
    small = np.abs(t) < 0.5
    out = np.empty(eps.shape, dtype=complex)
    if np.any(small):
        acc = np.zeros(int(np.sum(small)), dtype=complex)
        ts, es = t[small], eps[small]
        for n in range(30):
            acc += (1j * ts) ** n / (float(math.factorial(n)) * (n + 2))
        out[small] = es ** 2 * acc
    if np.any(~small):
        e = eps[~small]
        out[~small] = np.exp(1j * k * e) * (e / (1j * k) + 1.0 / k ** 2) - 1.0 / k ** 2
    return out


def volume_self_block(radius, bg: ElasticBackground, wavenumbers: Wavenumbers = STATIC) -> np.ndarray:
    """∫ of the fundamental tensor over balls of the given radii, shape (N, 3, 3).

    By isotropy the integral is (1/3)∫tr Γ·I with tr Γ = (2/μ)φ_{k_s} + φ_{k_p}/(λ+2μ).
    """
    k_p, k_s = (complex(k) for k in wavenumbers)
    radius = np.atleast_1d(np.asarray(radius, dtype=float))
    scalar = ((2.0 / bg.mu) * _ball_radial_integral(radius, k_s)
              + _ball_radial_integral(radius, k_p) / (bg.lam + 2.0 * bg.mu)) / 3.0
    return scalar[:, None, None] * np.eye(3)


def surface_self_block(radius, normals, bg: ElasticBackground,
                       wavenumbers: Wavenumbers = STATIC) -> np.ndarray:
    """∫ of the fundamental tensor over flat discs centred at the source node.

    The dyadic part integrates to π∫B r³dr·(I − ννᵀ) in the tangent plane.
    """
    radius = np.atleast_1d(np.asarray(radius, dtype=float))
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    t, w = np.polynomial.legendre.leggauss(DISC_GAUSS_POINTS)
    s = 0.5 * (t + 1.0)
    r = radius[:, None] * s[None, :]
    jac = 0.5 * radius[:, None] * w[None, :]
    a, b = kernel_profile(r.ravel(), bg, wavenumbers)
    a, b = a.reshape(r.shape), b.reshape(r.shape)
    iso = 2.0 * math.pi * np.sum(jac * a * r, axis=1)
    dyad = math.pi * np.sum(jac * b * r ** 3, axis=1)
    tangent = np.eye(3) - normals[:, :, None] * normals[:, None, :]
    return iso[:, None, None] * np.eye(3) + dyad[:, None, None] * tangent


# ──────────────────────── VOLUME OPERATORS ────────────────────────

def _fundamental_blocks(targets, sources, bg, wavenumbers):
    return _pairwise(lambda x, y, rows: kupradze_tensor(x, y, bg, wavenumbers=wavenumbers),
                     targets, sources)


def assemble_newtonian(rule: QuadratureRule, bg: ElasticBackground,
                       wavenumbers: Wavenumbers = STATIC) -> BlockOperator:
    """Newtonian potential on a volume rule; diagonal from the equivalent-ball integral."""
    if rule.is_boundary:
        raise ValidationError("potential_operators", "assemble_newtonian", "rule",
                              "a volume rule is required, got a boundary rule")
    blocks = _fundamental_blocks(rule.nodes, rule.nodes, bg, wavenumbers)
    blocks *= rule.weights[None, :, None, None]
    idx = np.arange(rule.size)
    blocks[idx, idx] = volume_self_block(rule.equivalent_radius(), bg, wavenumbers)
    matrix = blocks_to_matrix(blocks)
    if wavenumbers == STATIC or np.max(np.abs(matrix.imag)) == 0.0:
        matrix = matrix.real
    return BlockOperator(source_rule=rule, target_rule=rule, matrix=matrix)


def volume_potential_at(targets, rule: QuadratureRule, bg: ElasticBackground,
                        wavenumbers: Wavenumbers = STATIC) -> np.ndarray:
    """Blocks w_j·Γ(x, y_j) for arbitrary targets, shape (N_t, N_s, 3, 3).

    Targets within a node's equivalent ball use the cell-averaged self block.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    blocks = _fundamental_blocks(targets, rule.nodes, bg, wavenumbers)
    blocks *= rule.weights[None, :, None, None]
    eps = rule.equivalent_radius()
    dist = np.linalg.norm(targets[:, None, :] - rule.nodes[None, :, :], axis=-1)
    near = dist < eps[None, :]
    if np.any(near):
        self_blocks = volume_self_block(eps, bg, wavenumbers)
        ti, sj = np.nonzero(near)
        blocks[ti, sj] = self_blocks[sj]
    return blocks


@dataclass(frozen=True)
class NewtonSpectrum:
    """Leading eigenpairs of the symmetrized Newtonian operator on B."""
    rule: QuadratureRule
    eigenvalues: np.ndarray      # descending
    eigenvectors: np.ndarray     # (n, N, 3), orthonormal in weighted L²
    moments: np.ndarray          # (n, 3)

    @property
    def couplings(self) -> np.ndarray:
        return np.sum(np.abs(self.moments) ** 2, axis=1)

    def cluster(self, n0: int, rtol: float = CLUSTER_RTOL) -> np.ndarray:
        """0-based indices of eigenvalues within rtol of λ_{n0} (n0 is 1-based)."""
        lam = self.eigenvalues[n0 - 1]
        return np.nonzero(np.abs(self.eigenvalues - lam) <= rtol * lam)[0]

    def coupling(self, n0: int, rtol: float = CLUSTER_RTOL) -> float:
        """Isotropic coupling (1/3)·Σ_cluster |m_n|²."""
        return float(np.sum(self.couplings[self.cluster(n0, rtol)]) / 3.0)

    def to_dict(self):
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "couplings": self.couplings.tolist(),
            "moments": self.moments.tolist(),
        }


def newton_spectrum(rule_b: QuadratureRule, bg: ElasticBackground, n_count: int = 8) -> NewtonSpectrum:
    """Top n_count eigenpairs of N_B after conjugation by the sqrt-weight diagonal."""
    op = assemble_newtonian(rule_b, bg)
    dim = op.shape[0]
    if not 1 <= n_count <= dim:
        raise ValidationError("potential_operators", "newton_spectrum", "n_count",
                              f"must lie in [1, {dim}], got {n_count}")
    sym = op.symmetrized().real
    try:
        vals, vecs = scipy.linalg.eigh(sym, subset_by_index=[dim - n_count, dim - 1])
    except scipy.linalg.LinAlgError as e:
        logger.error(f"Error in Newton eigensolve: {e}")
        raise NumericalError("potential_operators", "newton_spectrum", "eigensolver did not converge",
                             {"dimension": dim, "requested": n_count}) from e

    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if np.any(vals <= 0):
        raise NumericalError("potential_operators", "newton_spectrum",
                             "non-positive eigenvalue among the requested pairs",
                             {"min_eigenvalue": float(vals.min())})

    sqrt_w = np.sqrt(np.repeat(rule_b.weights, 3))
    fields = (vecs / sqrt_w[:, None]).T.reshape(n_count, rule_b.size, 3)
    # --- fix the sign so that the moment's largest component is positive ---
    moments = np.einsum("i,nik->nk", rule_b.weights, fields)
    for n in range(n_count):
        lead = np.argmax(np.abs(moments[n]))
        if moments[n, lead] < 0:
            fields[n] *= -1.0
            moments[n] *= -1.0

    logger.info(f"Newton spectrum computed: {n_count} eigenpairs, lambda_1={vals[0]:.6g}")
    return NewtonSpectrum(rule=rule_b, eigenvalues=vals, eigenvectors=fields, moments=moments)


# ──────────────────────── LAYER POTENTIALS ────────────────────────

def assemble_layer(rule_bdry: QuadratureRule, rule_target: QuadratureRule, bg: ElasticBackground,
                   kind: str = "single", wavenumbers: Wavenumbers = STATIC,
                   on_surface: bool = False) -> BlockOperator:
    """Single or double layer from ∂Ω to the target nodes.

    Double layer kernel: T(x, y) = [traction at y (normal ν_y) of Γ(·, x)]ᵀ.
    With on_surface=True the single layer uses the equivalent-disc self block.
    """
    if not rule_bdry.is_boundary:
        raise ValidationError("potential_operators", "assemble_layer", "rule_bdry",
                              "boundary rule must carry normals")
    if kind == "single":
        blocks = _fundamental_blocks(rule_target.nodes, rule_bdry.nodes, bg, wavenumbers)
    elif kind == "double":
        if on_surface:
            raise ValidationError("potential_operators", "assemble_layer", "on_surface",
                                  "on-surface double layers go through neumann_poincare")
        normals = rule_bdry.normals

        def kernel(x, y, rows):
            return np.swapaxes(traction_kernel(y, x, normals[None, :, :], bg, wavenumbers), -1, -2)

        blocks = _pairwise(kernel, rule_target.nodes, rule_bdry.nodes)
    else:
        raise ValidationError("potential_operators", "assemble_layer", "kind",
                              f"unknown layer kind '{kind}'")

    blocks *= rule_bdry.weights[None, :, None, None]
    if on_surface:
        same = coincident_mask(rule_target.nodes, rule_bdry.nodes)
        ti, sj = np.nonzero(same)
        if ti.size:
            blocks[ti, sj] = surface_self_block(rule_bdry.equivalent_radius()[sj],
                                                rule_bdry.normals[sj], bg, wavenumbers)
    matrix = blocks_to_matrix(blocks)
    if wavenumbers == STATIC:
        matrix = matrix.real
    return BlockOperator(source_rule=rule_bdry, target_rule=rule_target, matrix=matrix)


def assemble_traction(rule_source: QuadratureRule, rule_bdry: QuadratureRule, bg: ElasticBackground,
                      wavenumbers: Wavenumbers = STATIC) -> BlockOperator:
    """Traction on ∂Ω of the potential Σ_j w_j Γ(·, y_j)φ_j with off-surface sources."""
    normals = rule_bdry.normals

    def kernel(x, y, rows):
        return traction_kernel(x, y, normals[rows][:, None, :], bg, wavenumbers)

    blocks = _pairwise(kernel, rule_bdry.nodes, rule_source.nodes)
    blocks *= rule_source.weights[None, :, None, None]
    matrix = blocks_to_matrix(blocks)
    if wavenumbers == STATIC:
        matrix = matrix.real
    return BlockOperator(source_rule=rule_source, target_rule=rule_bdry, matrix=matrix)


def neumann_poincare(rule_bdry: QuadratureRule, bg: ElasticBackground, p2: float = 0.0) -> BlockOperator:
    """On-surface traction-of-single-layer operator K^{i𝒫,*}.

    Principal value: the static kernel's diagonal follows from the rigid
    translation identity K[c] = −½c of the adjoint double layer; the shifted
    minus static kernel is bounded and gets a zero diagonal.
    """
    if not rule_bdry.is_boundary:
        raise ValidationError("potential_operators", "neumann_poincare", "rule_bdry",
                              "boundary rule must carry normals")
    if p2 < 0:
        raise ValidationError("potential_operators", "neumann_poincare", "p2", "shift must be non-negative")

    nodes, normals, w = rule_bdry.nodes, rule_bdry.normals, rule_bdry.weights

    def static_kernel(x, y, rows):
        return traction_kernel(x, y, normals[rows][:, None, :], bg, STATIC)

    tk = _pairwise(static_kernel, nodes, nodes).real
    blocks = tk * w[None, :, None, None]
    # --- K*_ii = −½I − Σ_j w_j·traction_kernel(y_j, y_i, ν_j) ---
    diag = -0.5 * np.eye(3) - np.einsum("j,jikl->ikl", w, tk)
    idx = np.arange(rule_bdry.size)
    blocks = blocks.astype(complex)
    blocks[idx, idx] = diag

    if p2 > 0:
        k = bg.shifted_wavenumbers(p2)

        def shifted_kernel(x, y, rows):
            nu = normals[rows][:, None, :]
            return traction_kernel(x, y, nu, bg, k) - traction_kernel(x, y, nu, bg, STATIC)

        diff = _pairwise(shifted_kernel, nodes, nodes)
        blocks += diff * w[None, :, None, None]

    matrix = blocks_to_matrix(blocks)
    if np.max(np.abs(matrix.imag)) < 1e-14 * max(np.max(np.abs(matrix.real)), 1.0):
        matrix = matrix.real
    return BlockOperator(source_rule=rule_bdry, target_rule=rule_bdry, matrix=matrix)


def interior_traction_factor(np_op: BlockOperator, operation: str = "interior_traction_factor"):
    """LU factors of ½I + K*, checked for singularity."""
    m = 0.5 * np.eye(np_op.shape[0]) + np_op.matrix
    try:
        lu = scipy.linalg.lu_factor(m, check_finite=True)
    except (ValueError, scipy.linalg.LinAlgError) as e:
        logger.error(f"Error factoring the traction operator: {e}")
        raise NumericalError("potential_operators", operation, "factorization failed") from e
    pivots = np.abs(np.diag(lu[0]))
    if pivots.min() <= 1e-13 * pivots.max():
        raise NumericalError("potential_operators", operation, "½I + K* is numerically singular",
                             {"pivot_ratio": float(pivots.min() / pivots.max())})
    return lu


# ──────────────────────── SHIFTED NEWTONIAN 𝒩^𝒫 ────────────────────────

@dataclass(frozen=True)
class ShiftedNewtonian:
    """𝒩^𝒫 on a volume rule together with its single layer SL^𝒫 and trace.

    volume:        𝒩^𝒫 (volume → volume)
    single_layer:  SL^𝒫 (boundary → volume), Q^f = SL^𝒫 f
    boundary_single_layer: SL^𝒫 (boundary → boundary nodes)
    """
    p2: float
    volume: BlockOperator
    single_layer: BlockOperator
    boundary_single_layer: BlockOperator

    def trace(self, values) -> np.ndarray:
        """γ𝒩^𝒫(φ) on ∂Ω, defined as the discrete adjoint of SL^𝒫.

        ∫_∂Ω f·γ𝒩^𝒫(φ) = ∫_Ω φ·SL^𝒫(f) holds exactly for the discrete pairings.
        """
        rule_v = self.single_layer.target_rule
        rule_b = self.single_layer.source_rule
        weighted = (np.asarray(values) * rule_v.weights[:, None]).reshape(-1)
        out = (self.single_layer.matrix.T @ weighted).reshape(-1, 3)
        return out / rule_b.weights[:, None]

    def trace_operator(self) -> BlockOperator:
        rule_v = self.single_layer.target_rule
        rule_b = self.single_layer.source_rule
        wv = np.repeat(rule_v.weights, 3)
        wb = np.repeat(rule_b.weights, 3)
        matrix = (self.single_layer.matrix * wv[:, None]).T / wb[:, None]
        return BlockOperator(source_rule=rule_v, target_rule=rule_b, matrix=matrix)


def assemble_np(rule_vol: QuadratureRule, rule_bdry: QuadratureRule, bg: ElasticBackground,
                p2: float) -> ShiftedNewtonian:
    """𝒩^𝒫 with kernel Γ_𝒫 = Φ_{i𝒫} − SL[(½I + K^{i𝒫,*})^{-1} ∂_νΦ_{i𝒫}(·, y)].

    The diagonal comes from the constant-reproduction identity 𝒩^𝒫 c = c/𝒫²
    (the rigid-translation eigenpair) and is then symmetrized, so constants
    are reproduced up to the quadrature error.
    """
    if not p2 > 0:
        raise ValidationError("potential_operators", "assemble_np", "p2", f"𝒫² must be positive, got {p2}")
    k = bg.shifted_wavenumbers(p2)
    try:
        free = assemble_newtonian(rule_vol, bg, k).matrix.real
        t_bv = assemble_traction(rule_vol, rule_bdry, bg, k).matrix.real
        s_vb = assemble_layer(rule_bdry, rule_vol, bg, "single", k).matrix.real
        s_bb = assemble_layer(rule_bdry, rule_bdry, bg, "single", k, on_surface=True).matrix.real
        lu = interior_traction_factor(neumann_poincare(rule_bdry, bg, p2), "assemble_np")
        correction = s_vb @ scipy.linalg.lu_solve(lu, t_bv)
        dirichlet = scipy.linalg.lu_solve(lu, np.eye(t_bv.shape[0]))
    except NumericalError:
        raise
    except Exception as e:
        logger.error(f"Error assembling the shifted Newtonian: {e}")
        raise NumericalError("potential_operators", "assemble_np", f"correction solve failed: {e}") from e

    matrix = free - correction
    n = rule_vol.size
    w3 = np.repeat(rule_vol.weights, 3)

    # --- weighted symmetrization: kernel K = A W^{-1} made symmetric ---
    kernel = matrix / w3[None, :]
    kernel = 0.5 * (kernel + kernel.T)
    blocks = kernel.reshape(n, 3, n, 3).transpose(0, 2, 1, 3).copy()
    idx = np.arange(n)
    blocks[idx, idx] = 0.0
    offsum = np.einsum("ijkl,j->ikl", blocks, rule_vol.weights)
    diag = np.eye(3) / p2 - offsum
    diag = 0.5 * (diag + np.swapaxes(diag, -1, -2))
    blocks = blocks * rule_vol.weights[None, :, None, None]
    blocks[idx, idx] = diag
    volume = BlockOperator(source_rule=rule_vol, target_rule=rule_vol, matrix=blocks_to_matrix(blocks))

    single = BlockOperator(source_rule=rule_bdry, target_rule=rule_vol, matrix=s_vb @ dirichlet)
    boundary_single = BlockOperator(source_rule=rule_bdry, target_rule=rule_bdry, matrix=s_bb @ dirichlet)
    logger.info(f"Shifted Newtonian assembled: P2={p2}, volume nodes={n}, boundary nodes={rule_bdry.size}")
    return ShiftedNewtonian(p2=p2, volume=volume, single_layer=single, boundary_single_layer=boundary_single)


# ──────────────────────── BOUNDARY NORMS ────────────────────────

def tangential_gradient(rule_bdry: QuadratureRule, neighbours: int = 8) -> np.ndarray:
    """Local least-squares tangential gradient as a (6N, 3N) matrix.

    Row block i holds the two tangential derivatives of the three components at
    node i, fitted from its nearest neighbours.
    """
    n = rule_bdry.size
    tree = cKDTree(rule_bdry.nodes)
    _, nbr = tree.query(rule_bdry.nodes, k=min(neighbours + 1, n))
    grad = np.zeros((n, 2, n))
    for i in range(n):
        nu = rule_bdry.normals[i]
        helper = np.eye(3)[np.argmin(np.abs(nu))]
        t1 = np.cross(nu, helper)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(nu, t1)
        offs = rule_bdry.nodes[nbr[i, 1:]] - rule_bdry.nodes[i]
        fit = np.linalg.pinv(np.stack([offs @ t1, offs @ t2], axis=1))
        grad[i][:, nbr[i, 1:]] += fit
        grad[i, :, i] -= fit.sum(axis=1)
    # --- the same fit acts on every component ---
    return np.einsum("itj,kl->itkjl", grad, np.eye(3)).reshape(6 * n, 3 * n)


def surface_norm(values, rule_bdry: QuadratureRule, neighbours: int = 8) -> float:
    """(‖u‖²_{L²(∂Ω)} + ‖∇_T u‖²_{L²(∂Ω)})^{1/2}, tangential gradient by local least squares."""
    values = np.asarray(values)
    if values.shape != (rule_bdry.size, 3):
        raise ValidationError("potential_operators", "surface_norm", "values",
                              f"expected shape {(rule_bdry.size, 3)}, got {values.shape}")
    grad = (tangential_gradient(rule_bdry, neighbours) @ values.reshape(-1)).reshape(rule_bdry.size, 6)
    grad_sq = np.sum(np.abs(grad) ** 2, axis=1)
    l2 = float(np.sum(rule_bdry.weights * np.sum(np.abs(values) ** 2, axis=1)))
    return math.sqrt(l2 + float(np.sum(rule_bdry.weights * grad_sq)))


def trace_norm(np_op: ShiftedNewtonian, neighbours: int = 8) -> float:
    """‖γ𝒩^𝒫‖ from L²(Ω) to H^{1/2}(∂Ω).

    The H^{1/2} Gram matrix is the midpoint interpolant W^{1/2}A^{1/2}W^{1/2}
    between the L² mass W and the H¹ Gram W^{1/2}AW^{1/2}.
    """
    trace = np_op.trace_operator()
    rule_b, rule_v = trace.target_rule, trace.source_rule
    wb = np.repeat(rule_b.weights, 3)
    wv = np.repeat(rule_v.weights, 3)
    grad = tangential_gradient(rule_b, neighbours)
    h1 = np.diag(wb) + grad.T @ (np.repeat(rule_b.weights, 6)[:, None] * grad)
    scaled = h1 / np.sqrt(np.outer(wb, wb))
    evals, evecs = scipy.linalg.eigh(0.5 * (scaled + scaled.T))
    quarter = (evecs * np.clip(evals, 0.0, None) ** 0.25) @ evecs.T
    weighted = quarter @ (np.sqrt(wb)[:, None] * trace.matrix / np.sqrt(wv)[None, :])
    return float(scipy.linalg.svdvals(weighted)[0])


def l2_norm(values, rule: QuadratureRule) -> float:
    values = np.asarray(values)
    return math.sqrt(float(np.sum(rule.weights * np.sum(np.abs(values) ** 2, axis=1))))


def _raw_rigid(points) -> np.ndarray:
    """Translations e_k and rotations e_k × x at the points, shape (3N, 6)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    eye = np.eye(3)
    cols = [np.tile(eye[k], (len(points), 1)) for k in range(3)]
    cols += [np.cross(eye[k], points) for k in range(3)]
    return np.stack([c.reshape(-1) for c in cols], axis=1)


@dataclass(frozen=True)
class RigidMotions:
    """Rigid displacements orthonormalized in L²(∂Ω); ψ(x) = raw(x)·transform."""
    transform: np.ndarray

    def evaluate(self, points) -> np.ndarray:
        """Matrix of shape (3N, 6) whose columns are ψ_r at the points."""
        return _raw_rigid(points) @ self.transform


def rigid_motions(rule_bdry: QuadratureRule) -> RigidMotions:
    sqrt_w = np.sqrt(np.repeat(rule_bdry.weights, 3))
    _, r = np.linalg.qr(_raw_rigid(rule_bdry.nodes) * sqrt_w[:, None])
    return RigidMotions(transform=scipy.linalg.solve_triangular(r, np.eye(6)))


def layer_potential_at(targets, rule_bdry: QuadratureRule, bg: ElasticBackground,
                       wavenumbers: Wavenumbers = STATIC) -> np.ndarray:
    """Single-layer blocks w_j·Γ(x, y_j) at arbitrary targets, shape (N_t, N_b, 3, 3).

    Targets that coincide with boundary nodes get the equivalent-disc self block.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    blocks = _fundamental_blocks(targets, rule_bdry.nodes, bg, wavenumbers)
    blocks *= rule_bdry.weights[None, :, None, None]
    ti, sj = np.nonzero(coincident_mask(targets, rule_bdry.nodes))
    if ti.size:
        blocks[ti, sj] = surface_self_block(rule_bdry.equivalent_radius()[sj],
                                            rule_bdry.normals[sj], bg, wavenumbers)
    return blocks
