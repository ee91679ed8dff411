"""
Cluster geometry and quadrature rules.

Ω is the unit ball (radius 1) or the unit cube ([-1/2, 1/2]³); the reference
inclusion B is a unit ball or unit cube centred at the origin.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.core.errors import EmptyClusterError, ValidationError

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────
SUPPORTED_SHAPES = ("ball", "cube")
BOUNDARY_TOL = 1e-10
DEFAULT_KAPPA_FACTOR = 0.5
DEFAULT_CELL_SUBDIVISION = 2


# ──────────────────────── DOMAINS ────────────────────────

@dataclass(frozen=True)
class Domain:
    """Unit ball (size = radius) or unit cube (size = edge) centred at the origin."""
    kind: str = "ball"
    size: float = 1.0

    def __post_init__(self):
        if self.kind not in SUPPORTED_SHAPES:
            raise ValidationError("geometry_quadrature", "Domain", "kind",
                                  f"unsupported domain shape '{self.kind}' (use {SUPPORTED_SHAPES})")
        if self.size <= 0:
            raise ValidationError("geometry_quadrature", "Domain", "size", "must be positive")

    @property
    def volume(self) -> float:
        if self.kind == "ball":
            return 4.0 / 3.0 * math.pi * self.size ** 3
        return self.size ** 3

    @property
    def area(self) -> float:
        if self.kind == "ball":
            return 4.0 * math.pi * self.size ** 2
        return 6.0 * self.size ** 2

    @property
    def half_extent(self) -> float:
        return self.size if self.kind == "ball" else 0.5 * self.size

    def boundary_distance(self, points) -> np.ndarray:
        """Signed distance to ∂Ω, positive inside."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "ball":
            return self.size - np.linalg.norm(p, axis=1)
        # --- inside distance for the cube; outside points get a negative value ---
        return np.min(0.5 * self.size - np.abs(p), axis=1)

    def contains(self, points, clearance: float = 0.0) -> np.ndarray:
        return self.boundary_distance(points) > clearance + BOUNDARY_TOL

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "size": self.size}


# ──────────────────────── QUADRATURE RULES ────────────────────────

@dataclass(frozen=True)
class QuadratureRule:
    """Nodes, positive weights and (boundary rules only) outward normals."""
    nodes: np.ndarray
    weights: np.ndarray
    normals: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 3)
        weights = np.ascontiguousarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ValidationError("geometry_quadrature", "QuadratureRule", "weights",
                                  "one weight per node is required")
        if np.any(weights <= 0):
            raise ValidationError("geometry_quadrature", "QuadratureRule", "weights",
                                  "all weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.normals is not None:
            object.__setattr__(self, "normals",
                               np.ascontiguousarray(self.normals, dtype=float).reshape(-1, 3))

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def measure(self) -> float:
        return float(math.fsum(self.weights))

    @property
    def is_boundary(self) -> bool:
        return self.normals is not None

    def equivalent_radius(self) -> np.ndarray:
        """Radius of the ball (volume) or disc (boundary) with each node's weight."""
        if self.is_boundary:
            return np.sqrt(self.weights / math.pi)
        return np.cbrt(3.0 * self.weights / (4.0 * math.pi))

    def transformed(self, scale: float = 1.0, shift=(0.0, 0.0, 0.0), label: str = "") -> "QuadratureRule":
        """Copy of the rule on the dilated and translated carrier."""
        power = 2 if self.is_boundary else 3
        return QuadratureRule(
            nodes=self.nodes * scale + np.asarray(shift, dtype=float),
            weights=self.weights * scale ** power,
            normals=self.normals,
            label=label or self.label,
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.nodes.astype("<f8").tobytes())
        h.update(self.weights.astype("<f8").tobytes())
        if self.normals is not None:
            h.update(self.normals.astype("<f8").tobytes())
        return h.hexdigest()[:16]

    def integrate(self, values) -> np.ndarray:
        """Σ w_i·values_i over the leading (node) axis."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def concatenate_rules(rules: Sequence[QuadratureRule], label: str = "") -> QuadratureRule:
    if not rules:
        raise ValidationError("geometry_quadrature", "concatenate_rules", "rules", "nothing to concatenate")
    normals = None
    if all(r.is_boundary for r in rules):
        normals = np.vstack([r.normals for r in rules])
    return QuadratureRule(
        nodes=np.vstack([r.nodes for r in rules]),
        weights=np.concatenate([r.weights for r in rules]),
        normals=normals,
        label=label,
    )


def _sphere_directions(order: int):
    """Gauss–Legendre in cos θ × 2·order uniform azimuths; weights sum to 4π."""
    t, wt = np.polynomial.legendre.leggauss(order)
    n_phi = 2 * order
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    st = np.sqrt(1.0 - t ** 2)
    dirs = np.stack([
        np.outer(st, np.cos(phi)).ravel(),
        np.outer(st, np.sin(phi)).ravel(),
        np.repeat(t, n_phi),
    ], axis=1)
    weights = np.repeat(wt, n_phi) * (2.0 * math.pi / n_phi)
    return dirs, weights


def _ball_rule(resolution: int, radius: float = 1.0) -> QuadratureRule:
    """Midpoint shells in r (exact shell volumes) × sphere product rule."""
    dirs, ang_w = _sphere_directions(resolution)
    edges = np.linspace(0.0, radius, resolution + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    shell = (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
    nodes = (mids[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weights = (shell[:, None] * ang_w[None, :]).ravel()
    return QuadratureRule(nodes=nodes, weights=weights, label=f"ball(r={radius},n={resolution})")


def _cube_rule(resolution: int, edge: float = 1.0) -> QuadratureRule:
    """Tensor midpoint rule on [-edge/2, edge/2]³."""
    pts = (np.arange(resolution) + 0.5) / resolution * edge - 0.5 * edge
    grid = np.stack(np.meshgrid(pts, pts, pts, indexing="ij"), axis=-1).reshape(-1, 3)
    weights = np.full(grid.shape[0], (edge / resolution) ** 3)
    return QuadratureRule(nodes=grid, weights=weights, label=f"cube(L={edge},n={resolution})")


def inclusion_quadrature(shape_b: str, resolution: int) -> QuadratureRule:
    """Volume rule on the reference inclusion B (unit ball or unit cube)."""
    if resolution < 2:
        raise ValidationError("geometry_quadrature", "inclusion_quadrature", "resolution",
                              f"must be at least 2, got {resolution}")
    if shape_b == "ball":
        return _ball_rule(resolution)
    if shape_b == "cube":
        return _cube_rule(resolution)
    raise ValidationError("geometry_quadrature", "inclusion_quadrature", "shape_b",
                          f"unsupported reference shape '{shape_b}'")


def volume_quadrature(domain: Domain, resolution: int) -> QuadratureRule:
    """Volume rule covering Ω."""
    if resolution < 2:
        raise ValidationError("geometry_quadrature", "volume_quadrature", "resolution",
                              f"must be at least 2, got {resolution}")
    if domain.kind == "ball":
        return _ball_rule(resolution, domain.size)
    return _cube_rule(resolution, domain.size)


def boundary_quadrature(domain: Domain, order: int) -> QuadratureRule:
    """Sphere product rule or per-face midpoint rules on ∂Ω, with outward normals."""
    if order < 2:
        raise ValidationError("geometry_quadrature", "boundary_quadrature", "order",
                              f"must be at least 2, got {order}")
    if domain.kind == "ball":
        dirs, w = _sphere_directions(order)
        return QuadratureRule(nodes=dirs * domain.size, weights=w * domain.size ** 2,
                              normals=dirs, label=f"sphere(r={domain.size},q={order})")
    if domain.kind == "cube":
        half = 0.5 * domain.size
        pts = (np.arange(order) + 0.5) / order * domain.size - half
        u, v = (a.ravel() for a in np.meshgrid(pts, pts, indexing="ij"))
        nodes, normals = [], []
        for axis in range(3):
            others = [i for i in range(3) if i != axis]
            for sign in (-1.0, 1.0):
                face = np.zeros((u.size, 3))
                face[:, axis] = sign * half
                face[:, others[0]] = u
                face[:, others[1]] = v
                nrm = np.zeros((u.size, 3))
                nrm[:, axis] = sign
                nodes.append(face)
                normals.append(nrm)
        nodes = np.vstack(nodes)
        weights = np.full(nodes.shape[0], (domain.size / order) ** 2)
        return QuadratureRule(nodes=nodes, weights=weights, normals=np.vstack(normals),
                              label=f"cube-surface(L={domain.size},q={order})")
    raise ValidationError("geometry_quadrature", "boundary_quadrature", "domain",
                          f"unsupported domain shape '{domain.kind}'")


# ──────────────────────── MEAN-VALUE FORMULAS ────────────────────────

def spherical_mean(field: Callable, center, r: float, order: int = 24) -> np.ndarray:
    """(1/|∂B_r|)∫_{∂B_r(center)} field dσ with the sphere product rule."""
    if r <= 0:
        raise ValidationError("geometry_quadrature", "spherical_mean", "r", "radius must be positive")
    dirs, w = _sphere_directions(order)
    values = np.asarray(field(np.asarray(center, dtype=float) + r * dirs))
    return np.tensordot(w, values, axes=(0, 0)) / (4.0 * math.pi)


def mean_value_factor(k: complex, r: float) -> complex:
    """4π(sin kr − kr cos kr), by its Taylor series when kr is small."""
    t = k * r
    if abs(t) < 1e-2:
        # --- sin t − t cos t = t³/3 − t⁵/30 + t⁷/840 ---
        return 4.0 * math.pi * (t ** 3 / 3.0 - t ** 5 / 30.0 + t ** 7 / 840.0)
    return 4.0 * math.pi * (np.sin(t) - t * np.cos(t))


def ball_mean_inversion(field: Callable, center, r: float, k: complex, resolution: int = 12) -> np.ndarray:
    """Recover u(z) = k³/(4π(sin kr − kr cos kr))·∫_{B_r(z)} u for a single-wave-type field."""
    if r <= 0:
        raise ValidationError("geometry_quadrature", "ball_mean_inversion", "r", "radius must be positive")
    rule = _ball_rule(resolution).transformed(scale=r, shift=center)
    integral = rule.integrate(field(rule.nodes))
    return k ** 3 / mean_value_factor(k, r) * integral


# ──────────────────────── CLUSTER GEOMETRY ────────────────────────

@dataclass(frozen=True)
class ClusterGeometry:
    """Periodic cluster D = ∪(z_j + aB) on a cubic lattice inside Ω."""
    domain: Domain
    h: float
    a: float
    centers: np.ndarray
    cell_edge: float
    kappa: float
    shape_b: str = "ball"
    metadata: Dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def cell_volume(self) -> float:
        return self.cell_edge ** 3

    @property
    def spacing(self) -> float:
        """Minimal centre distance d (equals the cell edge on the lattice)."""
        if self.count < 2:
            return self.cell_edge
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())

    @property
    def inclusion_radius(self) -> float:
        """Radius of the smallest ball about z_j containing D_j."""
        return self.a * (1.0 if self.shape_b == "ball" else math.sqrt(3.0) / 2.0)

    @property
    def count_ratio(self) -> float:
        """M / (|Ω|·a^{h−1}); of order one under the scaling law."""
        return self.count / (self.domain.volume * self.a ** (self.h - 1.0))

    def inclusion_distances(self) -> np.ndarray:
        """dist(D_j, ∂Ω) bounded below through the enclosing ball of D_j."""
        return self.domain.boundary_distance(self.centers) - self.inclusion_radius

    def to_dict(self) -> Dict:
        return {
            "domain": self.domain.to_dict(),
            "h": self.h,
            "a": self.a,
            "centers": self.centers.tolist(),
            "shape_B": self.shape_b,
            "cell_edge": self.cell_edge,
            "kappa": self.kappa,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ClusterGeometry":
        return cls(
            domain=Domain(**data["domain"]),
            h=float(data["h"]),
            a=float(data["a"]),
            centers=np.asarray(data["centers"], dtype=float).reshape(-1, 3),
            cell_edge=float(data["cell_edge"]),
            kappa=float(data["kappa"]),
            shape_b=data.get("shape_B", "ball"),
        )

    def to_json(self) -> str:
        # --- repr of Python floats round-trips exactly ---
        return json.dumps(self.to_dict(), sort_keys=True)


def build_cluster(domain: Domain, h: float, a: float, shape_b: str = "ball",
                  kappa_factor: float = DEFAULT_KAPPA_FACTOR) -> ClusterGeometry:
    """Lattice of cells of volume |Ω|·a^{1−h}, clipped to Ω with clearance κ.

    Cells tile the bounding box of Ω symmetrically; a cell is kept when its
    closed box stays at distance ≥ κ = kappa_factor·edge from ∂Ω.
    """
    if not (1.0 / 3.0 < h < 1.0):
        raise ValidationError("geometry_quadrature", "build_cluster", "h",
                              f"must satisfy 1/3 < h < 1, got {h}")
    if a <= 0:
        raise ValidationError("geometry_quadrature", "build_cluster", "a", "must be positive")
    if shape_b not in SUPPORTED_SHAPES:
        raise ValidationError("geometry_quadrature", "build_cluster", "shape_b",
                              f"unsupported reference shape '{shape_b}'")

    edge = (domain.volume * a ** (1.0 - h)) ** (1.0 / 3.0)
    kappa = kappa_factor * edge
    box = 2.0 * domain.half_extent
    n = int(math.floor(box / edge + 1e-9))
    radius_b = a * (1.0 if shape_b == "ball" else math.sqrt(3.0) / 2.0)
    if radius_b >= 0.5 * edge:
        raise ValidationError("geometry_quadrature", "build_cluster", "a",
                              f"inclusion of size {a} does not fit its cell of edge {edge:.4g}")
    if n == 0:
        raise EmptyClusterError("geometry_quadrature", "build_cluster", "a",
                                f"cell edge {edge:.4g} exceeds the domain")

    offset = 0.5 * (box - n * edge)
    axis = -domain.half_extent + offset + (np.arange(n) + 0.5) * edge
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)

    half = 0.5 * edge
    if domain.kind == "cube":
        margin = 0.5 * domain.size - (np.max(np.abs(grid), axis=1) + half)
    else:
        far_corner = np.linalg.norm(np.abs(grid) + half, axis=1)
        margin = domain.size - far_corner
    keep = margin >= kappa - 1e-12
    centers = grid[keep]

    if centers.shape[0] == 0:
        raise EmptyClusterError("geometry_quadrature", "build_cluster", "a",
                                f"no cell of edge {edge:.4g} clears the boundary collar κ={kappa:.4g}")

    cluster = ClusterGeometry(domain=domain, h=h, a=a, centers=centers, cell_edge=edge,
                              kappa=kappa, shape_b=shape_b)
    logger.info(f"Cluster built: M={cluster.count}, edge={edge:.4g}, kappa={kappa:.4g}, "
                f"count ratio={cluster.count_ratio:.3g}")
    return cluster


def inclusion_rules(cluster: ClusterGeometry, rule_b: QuadratureRule) -> List[QuadratureRule]:
    """Scaled copies z_j + a·(rule on B), one per inclusion."""
    return [rule_b.transformed(scale=cluster.a, shift=z, label=f"D_{j}")
            for j, z in enumerate(cluster.centers)]


def cluster_support_rule(cluster: ClusterGeometry, subdivision: int = DEFAULT_CELL_SUBDIVISION) -> QuadratureRule:
    """Midpoint rule on the union of the cluster cells, s³ subcells per cell.

    The cells are the lattice boxes of edge ℓ about each z_j, so the rule covers
    exactly the region the inclusions homogenize.
    """
    if subdivision < 1:
        raise ValidationError("geometry_quadrature", "cluster_support_rule", "subdivision",
                              f"must be at least 1, got {subdivision}")
    cell = _cube_rule(subdivision, cluster.cell_edge)
    nodes = (cluster.centers[:, None, :] + cell.nodes[None, :, :]).reshape(-1, 3)
    weights = np.tile(cell.weights, cluster.count)
    return QuadratureRule(nodes=nodes, weights=weights,
                          label=f"support(M={cluster.count},s={subdivision})")


def distance_sums(cluster: ClusterGeometry, k: float) -> Dict[str, float]:
    """Reciprocal-power sums over centre separations and boundary distances."""
    if cluster.count < 2:
        pair_sum = 0.0
    else:
        diff = cluster.centers[:, None, :] - cluster.centers[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        pair_sum = float(np.max(np.sum(dist ** (-k), axis=1)))
    boundary = cluster.inclusion_distances()
    return {
        "pair_sum": pair_sum,
        "boundary_sum": float(np.sum(boundary ** (-k))),
        "spacing": cluster.spacing,
        "count": cluster.count,
    }


if __name__ == "__main__":
    # --- Basic smoke test ---
    rule = inclusion_quadrature("ball", 8)
    print(f"✅ Ball rule: {rule.size} nodes, volume {rule.measure:.6f} (exact {4 * math.pi / 3:.6f})")
    cl = build_cluster(Domain("cube", 1.0), 0.5, (1.0 / 5.0) ** 6)
    print(f"📊 Cluster: M={cl.count}, d={cl.spacing:.4f}")
