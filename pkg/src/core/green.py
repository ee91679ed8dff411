"""
Neumann Green tensor of the background-plus-density problem on Ω.

Two evaluators share one interface:
    FreeSpaceGreen  - Γ = Γ⁰, the Kelvin matrix
    CorrectedGreen  - Γ = Γ⁰ + R, zero traction on ∂Ω

R(·, y) is represented as R = ω²𝒩[ρ(Γ⁰ + R)] + SL[φ] and solved on the
volume and boundary rules as one dense block system, factored once and reused
for every source y. With ω²ρ ≡ 0 the generalized Neumann function is used:
traction −Σ_r ψ_r(x)ψ_r(y)ᵀ over L²(∂Ω)-orthonormal rigid motions ψ_r, and
Γ(·, y) orthogonal to them on ∂Ω.
"""
import logging
from typing import Callable, Dict, Optional

import numpy as np
import scipy.linalg

from src.core.elastic_kernels import ElasticBackground, kelvin_tensor, traction_kernel
from src.core.errors import NumericalError, ValidationError
from src.core.geometry import BOUNDARY_TOL, Domain, QuadratureRule
from src.core.potentials import (
    BlockOperator,
    _pairwise,
    assemble_layer,
    assemble_newtonian,
    assemble_traction,
    blocks_to_matrix,
    layer_potential_at,
    neumann_poincare,
    rigid_motions,
    volume_self_block,
    volume_potential_at,
)

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
GREEN_MODES = ("free_space", "corrected")
RIGID_NULLITY = 6
CACHE_LIMIT = 8


def _blocks_from_matrix(matrix: np.ndarray, nt: int, ns: int) -> np.ndarray:
    return matrix.reshape(nt, 3, ns, 3).transpose(0, 2, 1, 3)


def _sample_density(density_field: Optional[Callable], rule: QuadratureRule) -> np.ndarray:
    if density_field is None:
        return np.zeros(rule.size)
    values = np.asarray(density_field(rule.nodes), dtype=float).reshape(-1)
    if values.shape != (rule.size,):
        raise ValidationError("potential_operators", "neumann_green", "density_field",
                              f"sampler returned {values.shape}, expected ({rule.size},)")
    return values


class GreenFunction:
    """Common interface of the Green tensor evaluators."""
    mode = ""

    def __init__(self, rule_bdry: QuadratureRule, bg: ElasticBackground, domain: Optional[Domain] = None):
        if not rule_bdry.is_boundary:
            raise ValidationError("potential_operators", "neumann_green", "rule_bdry",
                                  "boundary rule must carry normals")
        self.rule_bdry = rule_bdry
        self.bg = bg
        self.domain = domain

    def __repr__(self):
        return f"<{type(self).__name__}(mode='{self.mode}', boundary_nodes={self.rule_bdry.size})>"

    def __call__(self, x, y) -> np.ndarray:
        """Γ(x, y) for a single pair of points."""
        return self.evaluate(np.reshape(x, (1, 3)), np.reshape(y, (1, 3)))[0, 0]

    def evaluate(self, targets, sources) -> np.ndarray:
        """Γ over all target/source pairs, shape (N_t, N_s, 3, 3)."""
        targets = np.asarray(targets, dtype=float).reshape(-1, 3)
        sources = np.asarray(sources, dtype=float).reshape(-1, 3)
        free = kelvin_tensor(targets[:, None, :], sources[None, :, :], self.bg).astype(complex)
        return free + self.remainder(targets, sources)

    def interaction_blocks(self, points) -> np.ndarray:
        """Γ(z_m, z_j) for m ≠ j with a zero diagonal, shape (M, M, 3, 3)."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        free = _pairwise(lambda x, y, rows: kelvin_tensor(x, y, self.bg), points, points)
        rem = self.remainder(points, points)
        idx = np.arange(len(points))
        rem[idx, idx] = 0.0
        return free + rem

    def remainder(self, targets, sources) -> np.ndarray:
        raise NotImplementedError

    def single_layer(self, density, targets) -> np.ndarray:
        """∫_∂Ω Γ(x, y)g(y) dσ_y at the targets, shape (N_t, 3)."""
        raise NotImplementedError

    def volume_operator(self, rule: QuadratureRule) -> BlockOperator:
        """Nyström matrix of ∫_rule Γ(z, y)φ(y) dy with self-corrected diagonal."""
        raise NotImplementedError

    def _check_density(self, density) -> np.ndarray:
        density = np.asarray(density)
        if density.shape != (self.rule_bdry.size, 3):
            raise ValidationError("potential_operators", "single_layer", "density",
                                  f"expected shape {(self.rule_bdry.size, 3)}, got {density.shape}")
        return density


class FreeSpaceGreen(GreenFunction):
    """Γ = Γ⁰ with plain single layers."""
    mode = "free_space"

    def remainder(self, targets, sources) -> np.ndarray:
        return np.zeros((len(np.reshape(targets, (-1, 3))), len(np.reshape(sources, (-1, 3))), 3, 3),
                        dtype=complex)

    def single_layer(self, density, targets) -> np.ndarray:
        density = self._check_density(density)
        targets = np.asarray(targets, dtype=float).reshape(-1, 3)
        blocks = layer_potential_at(targets, self.rule_bdry, self.bg)
        return (blocks_to_matrix(blocks) @ density.reshape(-1)).reshape(-1, 3)

    def volume_operator(self, rule: QuadratureRule) -> BlockOperator:
        return assemble_newtonian(rule, self.bg)


class CorrectedGreen(GreenFunction):
    """Γ = Γ⁰ + R with R solved through the boundary–volume representation."""
    mode = "corrected"

    def __init__(self, rule_vol: QuadratureRule, rule_bdry: QuadratureRule, bg: ElasticBackground,
                 density_field: Optional[Callable] = None, omega: float = 0.0,
                 domain: Optional[Domain] = None):
        super().__init__(rule_bdry, bg, domain)
        if omega < 0:
            raise ValidationError("potential_operators", "neumann_green", "omega",
                                  f"frequency must be non-negative, got {omega}")
        self.rule_vol = rule_vol
        self.omega = omega
        self._coupling = omega ** 2
        self._rho = _sample_density(density_field, rule_vol)
        self.static = self._coupling == 0.0 or not np.any(self._rho)
        self._cache: Dict[bytes, Dict[str, np.ndarray]] = {}

        try:
            self._s_vb = assemble_layer(rule_bdry, rule_vol, bg, "single").matrix
            self._k_star = neumann_poincare(rule_bdry, bg).matrix
            traction_op = 0.5 * np.eye(self._k_star.shape[0]) + self._k_star
            if self.static:
                self._rigid = rigid_motions(rule_bdry)
                self._psi_b = self._rigid.evaluate(rule_bdry.nodes)
                # --- pseudo-inverse without the rigid-motion nullspace ---
                u, s, vt = scipy.linalg.svd(traction_op)
                keep = len(s) - RIGID_NULLITY
                self._pinv = (vt[:keep].T / s[:keep]) @ u[:, :keep].T
                self._conditioning = float(s[0] / s[keep - 1])
            else:
                self._a_vv = assemble_newtonian(rule_vol, bg).matrix
                self._t_bv = assemble_traction(rule_vol, rule_bdry, bg).matrix
                rho3 = np.repeat(self._rho, 3)
                c = self._coupling
                nv = self._a_vv.shape[0]
                system = np.block([
                    [np.eye(nv) - c * self._a_vv * rho3[None, :], -self._s_vb],
                    [c * self._t_bv * rho3[None, :], traction_op],
                ])
                self._lu = scipy.linalg.lu_factor(system)
                pivots = np.abs(np.diag(self._lu[0]))
                self._conditioning = float(pivots.max() / pivots.min())
        except scipy.linalg.LinAlgError as e:
            logger.error(f"Error factoring the Green system: {e}")
            raise NumericalError("potential_operators", "neumann_green", f"dense factorization failed: {e}") from e

        if self._conditioning > 1e12:
            logger.warning(f"Green system is ill-conditioned: pivot ratio {self._conditioning:.3e}")
        logger.info(f"Corrected Green tensor ready: static={self.static}, "
                    f"volume nodes={rule_vol.size}, boundary nodes={rule_bdry.size}")

    # ── source solves ──────────────────────────────────────────

    def _check_sources(self, sources: np.ndarray) -> None:
        if self.domain is not None:
            dist = self.domain.boundary_distance(sources)
        else:
            dist = np.min(np.linalg.norm(sources[:, None, :] - self.rule_bdry.nodes[None, :, :], axis=-1), axis=1)
        if np.any(np.abs(dist) < BOUNDARY_TOL):
            raise ValidationError("potential_operators", "neumann_green", "y",
                                  "source point lies on the boundary")

    def _free_at_volume(self, sources: np.ndarray) -> np.ndarray:
        """Γ⁰(z_i, y) as a (3N_v, 3N_s) matrix, cell-averaged inside a node's ball."""
        nodes = self.rule_vol.nodes
        eps = self.rule_vol.equivalent_radius()
        dist = np.linalg.norm(nodes[:, None, :] - sources[None, :, :], axis=-1)
        near = dist < eps[:, None]
        blocks = _pairwise(lambda x, y, rows: kelvin_tensor(x, y, self.bg), nodes, sources).real
        if np.any(near):
            averages = volume_self_block(eps, self.bg) / self.rule_vol.weights[:, None, None]
            ti, sj = np.nonzero(near)
            blocks[ti, sj] = averages[ti].real
        return blocks_to_matrix(blocks)

    def _free_traction(self, sources: np.ndarray) -> np.ndarray:
        normals = self.rule_bdry.normals
        blocks = _pairwise(lambda x, y, rows: traction_kernel(x, y, normals[rows][:, None, :], self.bg),
                           self.rule_bdry.nodes, sources).real
        return blocks_to_matrix(blocks)

    def _solve_sources(self, sources: np.ndarray) -> Dict[str, np.ndarray]:
        key = sources.tobytes()
        if key in self._cache:
            return self._cache[key]
        self._check_sources(sources)

        t0 = self._free_traction(sources)
        if self.static:
            psi_y = self._rigid.evaluate(sources)
            phi = self._pinv @ (-t0 - self._psi_b @ psi_y.T)
            on_surface = blocks_to_matrix(layer_potential_at(self.rule_bdry.nodes, self.rule_bdry, self.bg)).real
            free_b = blocks_to_matrix(kelvin_tensor(self.rule_bdry.nodes[:, None, :], sources[None, :, :], self.bg))
            total_b = free_b + on_surface @ phi
            w3 = np.repeat(self.rule_bdry.weights, 3)
            rigid = self._psi_b.T @ (w3[:, None] * total_b)
            solved = {"phi": phi, "rigid": rigid}
        else:
            g0 = self._free_at_volume(sources)
            rho3 = np.repeat(self._rho, 3)
            c = self._coupling
            rhs = np.vstack([
                c * self._a_vv @ (rho3[:, None] * g0),
                -t0 - c * self._t_bv @ (rho3[:, None] * g0),
            ])
            try:
                sol = scipy.linalg.lu_solve(self._lu, rhs)
            except (ValueError, scipy.linalg.LinAlgError) as e:
                logger.error(f"Error solving for the Green remainder: {e}")
                raise NumericalError("potential_operators", "neumann_green", f"source solve failed: {e}") from e
            nv = g0.shape[0]
            solved = {"volume": sol[:nv], "phi": sol[nv:], "free_volume": g0}

        if len(self._cache) >= CACHE_LIMIT:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = solved
        return solved

    # ── evaluation ──────────────────────────────────────────────

    def remainder(self, targets, sources) -> np.ndarray:
        """R(x, y) over all target/source pairs, shape (N_t, N_s, 3, 3)."""
        targets = np.asarray(targets, dtype=float).reshape(-1, 3)
        sources = np.asarray(sources, dtype=float).reshape(-1, 3)
        solved = self._solve_sources(sources)
        layer = blocks_to_matrix(layer_potential_at(targets, self.rule_bdry, self.bg))
        values = layer @ solved["phi"]
        if self.static:
            values = values - self._rigid.evaluate(targets) @ solved["rigid"]
        else:
            rho3 = np.repeat(self._rho, 3)
            vol = blocks_to_matrix(volume_potential_at(targets, self.rule_vol, self.bg))
            values = values + self._coupling * vol @ (rho3[:, None] * (solved["free_volume"] + solved["volume"]))
        return _blocks_from_matrix(values, len(targets), len(sources)).astype(complex)

    def traction_residual(self, sources) -> np.ndarray:
        """Per-source ‖discrete traction of Γ(·, y) − target traction‖ / ‖traction of Γ⁰(·, y)‖.

        The target traction is zero, or −Σψ_r ψ_r(y)ᵀ for the generalized
        Neumann function.
        """
        sources = np.asarray(sources, dtype=float).reshape(-1, 3)
        solved = self._solve_sources(sources)
        t0 = self._free_traction(sources)
        traction_op = 0.5 * np.eye(self._k_star.shape[0]) + self._k_star
        total = t0 + traction_op @ solved["phi"]
        if self.static:
            total = total + self._psi_b @ self._rigid.evaluate(sources).T
        else:
            rho3 = np.repeat(self._rho, 3)
            total = total + self._coupling * self._t_bv @ (rho3[:, None] * (solved["free_volume"] + solved["volume"]))
        ns = len(sources)
        num = np.sqrt(np.sum(np.abs(total.reshape(-1, ns, 3)) ** 2, axis=(0, 2)))
        den = np.sqrt(np.sum(np.abs(t0.reshape(-1, ns, 3)) ** 2, axis=(0, 2)))
        return num / den

    def single_layer(self, density, targets) -> np.ndarray:
        """Displacement of the Neumann problem with traction g, evaluated at the targets."""
        density = self._check_density(density).astype(complex)
        targets = np.asarray(targets, dtype=float).reshape(-1, 3)
        g = density.reshape(-1)
        layer = blocks_to_matrix(layer_potential_at(targets, self.rule_bdry, self.bg))
        if self.static:
            w3 = np.repeat(self.rule_bdry.weights, 3)
            projected = g - self._psi_b @ (self._psi_b.T @ (w3 * g))
            phi = self._pinv @ projected
            on_surface = blocks_to_matrix(layer_potential_at(self.rule_bdry.nodes, self.rule_bdry, self.bg)).real
            rigid = self._psi_b.T @ (w3 * (on_surface @ phi))
            values = layer @ phi - self._rigid.evaluate(targets) @ rigid
        else:
            nv = 3 * self.rule_vol.size
            rhs = np.concatenate([np.zeros(nv, dtype=complex), g])
            sol = scipy.linalg.lu_solve(self._lu, rhs)
            rho3 = np.repeat(self._rho, 3)
            vol = blocks_to_matrix(volume_potential_at(targets, self.rule_vol, self.bg))
            values = layer @ sol[nv:] + self._coupling * vol @ (rho3 * sol[:nv])
        return values.reshape(-1, 3)

    def volume_operator(self, rule: QuadratureRule) -> BlockOperator:
        free = assemble_newtonian(rule, self.bg).matrix
        rem = self.remainder(rule.nodes, rule.nodes) * rule.weights[None, :, None, None]
        return BlockOperator(source_rule=rule, target_rule=rule, matrix=free + blocks_to_matrix(rem))


def neumann_green(rule_vol: QuadratureRule, rule_bdry: QuadratureRule, bg: ElasticBackground,
                  density_field: Optional[Callable] = None, omega: float = 0.0,
                  mode: str = "corrected", domain: Optional[Domain] = None) -> GreenFunction:
    """Build the Green tensor evaluator for the selected mode."""
    if mode not in GREEN_MODES:
        raise ValidationError("potential_operators", "neumann_green", "mode",
                              f"expected one of {GREEN_MODES}, got '{mode}'")
    if mode == "free_space":
        return FreeSpaceGreen(rule_bdry, bg, domain)
    return CorrectedGreen(rule_vol, rule_bdry, bg, density_field, omega, domain)
