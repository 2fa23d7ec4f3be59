"""Dense collocation solver for the coupled single-layer system in R^3.

Piecewise-constant densities on triangle meshes, collocated at centroids.
The unknowns are a density on the unit-scale hole mesh and one on the outer
mesh; the system couples them through the signed rescaling of the hole.
Field evaluation uses the layer representation; ``direct_solve`` assembles
the same Dirichlet problem on the physically scaled hole mesh with no
rescaling factors, as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from .annulus import coupling_sign
from .mesh import GeometryPair, TriMesh, point_to_triangles_distance, scale_signed

DIM = 3  # collocation path is three-dimensional only

NEAR_FIELD_FACTOR = 3.0
NEAR_FIELD_MAX_DEPTH = 4
SOLVE_RESIDUAL_RTOL = 1e-10
EVAL_CLEARANCE_FACTOR = 2.0

_KERNEL_SCALE = -1.0 / (4.0 * pi)

# Degree-5 symmetric 7-point rule on the reference triangle (weights sum to 1).
_A_MINUS = (6.0 - sqrt(15.0)) / 21.0
_A_PLUS = (6.0 + sqrt(15.0)) / 21.0
_W_MINUS = (155.0 - sqrt(15.0)) / 1200.0
_W_PLUS = (155.0 + sqrt(15.0)) / 1200.0
_TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [1 - 2 * _A_MINUS, _A_MINUS, _A_MINUS],
        [_A_MINUS, 1 - 2 * _A_MINUS, _A_MINUS],
        [_A_MINUS, _A_MINUS, 1 - 2 * _A_MINUS],
        [1 - 2 * _A_PLUS, _A_PLUS, _A_PLUS],
        [_A_PLUS, 1 - 2 * _A_PLUS, _A_PLUS],
        [_A_PLUS, _A_PLUS, 1 - 2 * _A_PLUS],
    ]
)
_TRI_W = np.array([9.0 / 40.0, _W_MINUS, _W_MINUS, _W_MINUS, _W_PLUS, _W_PLUS, _W_PLUS])


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    """Singular system or residual beyond tolerance."""


class EvaluationTooCloseError(ValueError):
    """Evaluation point closer to a surface than the accuracy guard allows."""


@dataclass(frozen=True)
class CartesianDataFamily:
    """Boundary data as space polynomials with polynomial-in-eps coefficients.

    Each term is (exponents, coeffs): exponents is a 3-tuple of monomial
    powers, coeffs the ascending eps-polynomial of that monomial.  ``inner``
    is evaluated in the rescaled variable (points of the unit-scale hole
    mesh), ``outer`` at physical points of the outer surface.
    """

    inner: tuple = ()
    outer: tuple = ()

    @staticmethod
    def _eval(terms, points: np.ndarray, eps: float) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(points))
        for exponents, coeffs in terms:
            coeff = float(np.polynomial.polynomial.polyval(eps, np.asarray(coeffs, float)))
            mono = np.ones(len(points))
            for axis, power in enumerate(exponents):
                if power:
                    mono = mono * points[:, axis] ** power
            out += coeff * mono
        return out

    def eval_inner(self, points, eps: float) -> np.ndarray:
        return self._eval(self.inner, points, eps)

    def eval_outer(self, points, eps: float) -> np.ndarray:
        return self._eval(self.outer, points, eps)


@dataclass(frozen=True)
class DensityPair:
    mu_inner: np.ndarray
    mu_outer: np.ndarray
    cond: float = np.nan
    residual: float = np.nan


def _triangle_quad(corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # corners (T,3,3) -> quadrature points (T,7,3) and weights*areas (T,7)
    pts = np.einsum("qb,tbc->tqc", _TRI_BARY, corners)
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    return pts, _TRI_W[None, :] * areas[:, None]


def _kernel_sums(targets: np.ndarray, pts: np.ndarray, wts: np.ndarray,
                 chunk_bytes: int = 1 << 27) -> np.ndarray:
    # sum_q wts[t,q] * S3(|x_p - pts[t,q]|) for all (p, t), chunked over p
    n_t = pts.shape[0]
    out = np.empty((len(targets), n_t))
    rows = max(1, int(chunk_bytes // max(n_t * pts.shape[1] * 3 * 8, 1)))
    flat_pts = pts.reshape(-1, 3)
    flat_w = wts.reshape(-1)
    # Targets may coincide with quadrature nodes (own-triangle centroids);
    # those entries come out infinite here and are replaced by the analytic
    # or subdivided values in single_layer_matrix.
    with np.errstate(divide="ignore"):
        for start in range(0, len(targets), rows):
            block = targets[start : start + rows]
            diff = block[:, None, :] - flat_pts[None, :, :]
            r = np.sqrt(np.einsum("ptc,ptc->pt", diff, diff))
            contrib = (flat_w[None, :] / r).reshape(len(block), n_t, -1).sum(axis=2)
            out[start : start + rows] = _KERNEL_SCALE * contrib
    return out


def _split4(corners: np.ndarray) -> np.ndarray:
    # one level of midpoint subdivision: (m,3,3) -> (4m,3,3)
    v0, v1, v2 = corners[:, 0], corners[:, 1], corners[:, 2]
    m01, m12, m20 = 0.5 * (v0 + v1), 0.5 * (v1 + v2), 0.5 * (v2 + v0)
    children = np.stack(
        [
            np.stack([v0, m01, m20], axis=1),
            np.stack([m01, v1, m12], axis=1),
            np.stack([m20, m12, v2], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ],
        axis=1,
    )
    return children.reshape(-1, 3, 3)


def _integrate_near(points: np.ndarray, corners: np.ndarray,
                    near_factor: float, max_depth: int) -> np.ndarray:
    """Single-layer integrals for target/triangle pairs flagged as near.

    Each triangle is recursively quartered while the target sits closer than
    near_factor times the current piece's diameter, down to max_depth levels.
    """
    values = np.zeros(len(points))
    idx = np.arange(len(points))
    pts = points
    tris = corners
    for depth in range(max_depth + 1):
        if len(idx) == 0:
            break
        edges = tris - np.roll(tris, -1, axis=1)
        diam = np.linalg.norm(edges, axis=2).max(axis=1)
        cent = tris.mean(axis=1)
        dist = np.linalg.norm(pts - cent, axis=1)
        leaf = (dist >= near_factor * diam) | (depth == max_depth)
        if np.any(leaf):
            qp, qw = _triangle_quad(tris[leaf])
            diff = pts[leaf][:, None, :] - qp
            r = np.sqrt(np.einsum("mqc,mqc->mq", diff, diff))
            np.add.at(values, idx[leaf], _KERNEL_SCALE * np.einsum("mq,mq->m", qw, 1.0 / r))
        keep = ~leaf
        idx = np.repeat(idx[keep], 4)
        pts = np.repeat(pts[keep], 4, axis=0)
        tris = _split4(tris[keep])
    return values


def _self_integrals(mesh: TriMesh) -> np.ndarray:
    """Analytic integral of the kernel over each flat triangle from its centroid.

    For a point in the triangle plane, the integral of 1/r over the triangle
    splits into one fan sub-triangle per edge, each with the closed form
    h * log((t2 + l2)/(t1 + l1)) in edge-aligned coordinates.
    """
    corners = mesh.corner_array()
    c = mesh.centroids
    total = np.zeros(len(corners))
    for i in range(3):
        a = corners[:, i]
        b = corners[:, (i + 1) % 3]
        u = b - a
        u = u / np.linalg.norm(u, axis=1)[:, None]
        t1 = np.einsum("ij,ij->i", a - c, u)
        t2 = np.einsum("ij,ij->i", b - c, u)
        perp = (a - c) - t1[:, None] * u
        h = np.linalg.norm(perp, axis=1)
        l1 = np.linalg.norm(a - c, axis=1)
        l2 = np.linalg.norm(b - c, axis=1)
        total += h * np.log((t2 + l2) / (t1 + l1))
    return _KERNEL_SCALE * total


def single_layer_matrix(targets, mesh: TriMesh, *, self_mesh: bool = False,
                        near_factor: float = NEAR_FIELD_FACTOR,
                        max_depth: int = NEAR_FIELD_MAX_DEPTH) -> np.ndarray:
    """Matrix of single-layer integrals over mesh triangles at target points.

    Entry (p, t) approximates the integral of the free-space kernel over
    triangle t against a unit density, evaluated at target p.  Entries whose
    target lies within near_factor triangle diameters are recomputed with
    recursive subdivision; with self_mesh=True the targets are the mesh's own
    centroids and the diagonal uses the analytic in-plane formula.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    corners = mesh.corner_array()
    pts, wts = _triangle_quad(corners)
    matrix = _kernel_sums(targets, pts, wts)

    dist = np.linalg.norm(
        targets[:, None, :] - mesh.centroids[None, :, :], axis=2
    )
    near = dist < near_factor * mesh.diameters[None, :]
    if self_mesh:
        diag = np.arange(len(targets))
        near[diag, diag] = False
    p_idx, t_idx = np.nonzero(near)
    if len(p_idx):
        matrix[p_idx, t_idx] = _integrate_near(
            targets[p_idx], corners[t_idx], near_factor, max_depth
        )
    if self_mesh:
        matrix[diag, diag] = _self_integrals(mesh)
    if not np.all(np.isfinite(matrix)):
        raise AssemblyError("non-finite single-layer entries (target on a source triangle?)")
    return matrix


@dataclass(frozen=True)
class AssembledSystem:
    """Dense block system for the coupled densities at one eps.

    matrix = [[sign * V_ii, K_io], [eps^(n-2) * K_oi, V_oo]] where V blocks
    are the on-surface single layers, K_io samples the outer layer at the
    rescaled inner collocation points, and K_oi is the unit-scale inner layer
    seen from the outer surface.
    """

    pair: GeometryPair
    eps: float
    sign: float
    matrix: np.ndarray
    rhs: np.ndarray
    n_inner: int

    def split(self, solution: np.ndarray) -> DensityPair:
        return DensityPair(solution[: self.n_inner], solution[self.n_inner :])

    def inner_trace(self, densities: DensityPair, sign: float | None = None) -> np.ndarray:
        """Boundary values of the layer representation at inner collocation points.

        The physical trace carries the true coupling sign regardless of the
        sign used at assembly; pass ``sign`` to inspect mismatched assemblies.
        """
        if sign is None:
            sign = coupling_sign(self.eps, DIM)
        v_ii = self.matrix[: self.n_inner, : self.n_inner] / self.sign
        k_io = self.matrix[: self.n_inner, self.n_inner :]
        return sign * (v_ii @ densities.mu_inner) + k_io @ densities.mu_outer

    def inner_residual(self, densities: DensityPair, sign: float | None = None) -> float:
        trace = self.inner_trace(densities, sign)
        return float(np.max(np.abs(trace - self.rhs[: self.n_inner])))


def assemble(pair: GeometryPair, data: CartesianDataFamily, eps: float,
             sign: float | None = None) -> AssembledSystem:
    """Assemble the coupled collocation system at eps != 0.

    ``sign`` overrides the coupling sign in the inner self block (diagnostic
    use); the default follows the sign rule for n = 3, i.e. sgn(eps).
    """
    if eps == 0:
        raise AssemblyError("eps = 0 is not a perforated geometry")
    pair.require_admissible(eps)
    sign_true = coupling_sign(eps, DIM)
    sign_asm = sign_true if sign is None else float(sign)
    inner, outer = pair.inner, pair.outer
    hole = scale_signed(inner, eps)

    v_ii = single_layer_matrix(inner.centroids, inner, self_mesh=True)
    v_oo = single_layer_matrix(outer.centroids, outer, self_mesh=True)
    k_io = single_layer_matrix(hole.centroids, outer)
    # Integral over the unit-scale inner surface of the kernel at x - eps*y
    # equals eps^-2 times the integral over the physically scaled hole.
    k_oi = single_layer_matrix(outer.centroids, hole) / eps**2

    n_i = inner.n_triangles
    n_o = outer.n_triangles
    matrix = np.empty((n_i + n_o, n_i + n_o))
    matrix[:n_i, :n_i] = sign_asm * v_ii
    matrix[:n_i, n_i:] = k_io
    matrix[n_i:, :n_i] = eps ** (DIM - 2) * k_oi
    matrix[n_i:, n_i:] = v_oo
    rhs = np.concatenate(
        [data.eval_inner(inner.centroids, eps), data.eval_outer(outer.centroids, eps)]
    )
    return AssembledSystem(pair, eps, sign_asm, matrix, rhs, n_i)


def solve(system: AssembledSystem) -> DensityPair:
    """Dense LU solve with a 1-norm condition estimate and residual check."""
    a = system.matrix
    anorm = np.linalg.norm(a, 1)
    lu, piv = lu_factor(a)
    gecon = get_lapack_funcs(("gecon",), (a,))[0]
    rcond, _ = gecon(lu, anorm, norm="1")
    if rcond < 1e-14:
        raise SolverError(
            f"system is singular to working precision (rcond={rcond:.2e}); "
            "check admissibility and the coupling sign"
        )
    x = lu_solve((lu, piv), system.rhs)
    scale = max(float(np.max(np.abs(system.rhs))), 1e-300)
    residual = float(np.max(np.abs(a @ x - system.rhs))) / scale
    if residual > SOLVE_RESIDUAL_RTOL:
        raise SolverError(f"solve residual {residual:.2e} exceeds {SOLVE_RESIDUAL_RTOL:.0e}")
    pairdens = system.split(x)
    return DensityPair(pairdens.mu_inner, pairdens.mu_outer, 1.0 / rcond, residual)


def _clearance_guard(points: np.ndarray, meshes: tuple[TriMesh, ...],
                     clearance_factor: float) -> None:
    for p in points:
        for m in meshes:
            d = point_to_triangles_distance(p, m.corner_array())
            nearest = int(np.argmin(d))
            limit = clearance_factor * m.diameters[nearest]
            if d[nearest] <= limit:
                raise EvaluationTooCloseError(
                    f"point {p.tolist()} is {d[nearest]:.4g} from a surface; "
                    f"accuracy guard requires > {limit:.4g} "
                    f"({clearance_factor:g} local triangle diameters)"
                )


def eval_field(pair: GeometryPair, densities: DensityPair, eps: float, points,
               frame: str = "macroscopic",
               clearance_factor: float = EVAL_CLEARANCE_FACTOR) -> np.ndarray:
    """Evaluate the layer representation at interior points.

    Microscopic points q are mapped to physical points eps*q first.  Points
    must be inside the perforated domain with distance to both surfaces above
    clearance_factor local triangle diameters (set 0 to disable the guard).
    """
    if frame not in ("macroscopic", "microscopic"):
        raise ValueError(f"unknown frame {frame!r}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if frame == "microscopic":
        pts = eps * pts
    hole = scale_signed(pair.inner, eps)
    for p in pts:
        if not pair.outer.contains(p):
            raise ValueError(f"point {p.tolist()} is outside the outer surface")
        if hole.contains(p):
            raise ValueError(f"point {p.tolist()} is inside the hole")
    if clearance_factor > 0:
        _clearance_guard(pts, (hole, pair.outer), clearance_factor)
    inner_part = single_layer_matrix(pts, hole) @ densities.mu_inner / eps ** (4 - DIM)
    outer_part = single_layer_matrix(pts, pair.outer) @ densities.mu_outer
    values = inner_part + outer_part
    return values if np.asarray(points).ndim > 1 else float(values[0])


@dataclass(frozen=True)
class DirectSolution:
    """Plain two-surface solve on the physically scaled hole mesh.

    No rescaling factors and no coupling sign appear: the single layers live
    on the hole mesh scale_signed(inner, eps) and on the outer mesh.  Serves
    as an independent assembly of the same Dirichlet problem.
    """

    hole: TriMesh
    outer: TriMesh
    sigma_hole: np.ndarray
    sigma_outer: np.ndarray
    cond: float
    residual: float

    def eval(self, points, clearance_factor: float = EVAL_CLEARANCE_FACTOR) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if clearance_factor > 0:
            _clearance_guard(pts, (self.hole, self.outer), clearance_factor)
        values = (
            single_layer_matrix(pts, self.hole) @ self.sigma_hole
            + single_layer_matrix(pts, self.outer) @ self.sigma_outer
        )
        return values if np.asarray(points).ndim > 1 else float(values[0])


def direct_solve(pair: GeometryPair, data: CartesianDataFamily, eps: float) -> DirectSolution:
    if eps == 0:
        raise AssemblyError("eps = 0 is not a perforated geometry")
    pair.require_admissible(eps)
    hole = scale_signed(pair.inner, eps)
    outer = pair.outer
    v_hh = single_layer_matrix(hole.centroids, hole, self_mesh=True)
    v_ho = single_layer_matrix(hole.centroids, outer)
    v_oh = single_layer_matrix(outer.centroids, hole)
    v_oo = single_layer_matrix(outer.centroids, outer, self_mesh=True)
    n_h = hole.n_triangles
    matrix = np.block([[v_hh, v_ho], [v_oh, v_oo]])
    # The hole datum is prescribed in the rescaled variable: value at hole
    # point x is the inner datum at x/eps, which is the unit-mesh centroid.
    rhs = np.concatenate(
        [data.eval_inner(pair.inner.centroids, eps), data.eval_outer(outer.centroids, eps)]
    )
    anorm = np.linalg.norm(matrix, 1)
    lu, piv = lu_factor(matrix)
    gecon = get_lapack_funcs(("gecon",), (matrix,))[0]
    rcond, _ = gecon(lu, anorm, norm="1")
    if rcond < 1e-14:
        raise SolverError(f"direct system singular to working precision (rcond={rcond:.2e})")
    x = lu_solve((lu, piv), rhs)
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    residual = float(np.max(np.abs(matrix @ x - rhs))) / scale
    if residual > SOLVE_RESIDUAL_RTOL:
        raise SolverError(f"direct solve residual {residual:.2e}")
    return DirectSolution(hole, outer, x[:n_h], x[n_h:], 1.0 / rcond, residual)
