"""Triangulated closed surfaces for the n = 3 collocation solver.

Generators (icosphere, ellipsoid), a strict ASCII OFF loader/writer, signed
scaling (point reflection for negative scales), and admissibility checks for
a hole mesh inside an outer mesh.  Meshes are validated on construction:
closed, consistently outward-oriented, no degenerate triangles.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    """Malformed OFF file."""


class NotClosedError(MeshError):
    """Surface has boundary or non-manifold edges."""


class OrientationError(MeshError):
    """Triangle winding is inconsistent or inward (signed volume <= 0)."""


class DegenerateTriangleError(MeshError):
    """A triangle has (near) zero area."""


class AdmissibilityError(MeshError):
    """Scaled hole too close to (or outside) the outer surface."""


_DEGENERATE_REL_AREA = 1e-14


class TriMesh:
    """Closed, outward-oriented triangle mesh with per-triangle geometry.

    Derived arrays (centroids, unit normals, areas, diameters) are computed
    once; all arrays are frozen read-only after construction.
    """

    def __init__(self, vertices, triangles):
        v = np.array(vertices, dtype=float)
        t = np.array(triangles, dtype=int)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must be (T, 3), got {t.shape}")
        if t.min(initial=0) < 0 or t.max(initial=-1) >= len(v):
            raise MeshError("triangle indices out of range")
        self.vertices = v
        self.triangles = t
        corners = v[t]  # (T, 3, 3)
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        cross = np.cross(e1, e2)
        two_areas = np.linalg.norm(cross, axis=1)
        bbox = v.max(axis=0) - v.min(axis=0)
        scale = max(float(np.max(bbox)), 1e-300)
        if np.any(two_areas <= 2.0 * _DEGENERATE_REL_AREA * scale**2):
            bad = int(np.argmin(two_areas))
            raise DegenerateTriangleError(
                f"triangle {bad} has area {two_areas[bad] / 2:.3e} "
                f"(below {_DEGENERATE_REL_AREA:.0e} * bbox_scale^2)"
            )
        self.areas = two_areas / 2.0
        self.normals = cross / two_areas[:, None]
        self.centroids = corners.mean(axis=1)
        edges = corners - np.roll(corners, -1, axis=1)
        self.diameters = np.linalg.norm(edges, axis=2).max(axis=1)
        self._check_closed()
        self.signed_volume = float(
            np.einsum("ij,ij->", corners[:, 0], cross) / 6.0
        )
        if self.signed_volume <= 0:
            raise OrientationError(
                f"signed volume {self.signed_volume:.3e} <= 0: winding is inward"
            )
        for arr in (self.vertices, self.triangles, self.areas, self.normals,
                    self.centroids, self.diameters):
            arr.setflags(write=False)

    def _check_closed(self):
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        keys = directed[:, 0].astype(np.int64) * len(self.vertices) + directed[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            raise OrientationError(
                "a directed edge appears twice: adjacent triangles wound inconsistently"
            )
        rev = directed[:, 1].astype(np.int64) * len(self.vertices) + directed[:, 0]
        if not np.array_equal(np.sort(keys), np.sort(rev)):
            raise NotClosedError("surface is not closed (unmatched edges found)")

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def mean_edge_length(self) -> float:
        corners = self.vertices[self.triangles]
        edges = corners - np.roll(corners, -1, axis=1)
        return float(np.linalg.norm(edges, axis=2).mean())

    def corner_array(self) -> np.ndarray:
        """Triangle corner coordinates, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def contains(self, point) -> bool:
        """Point-in-volume test by summed solid angle (~4*pi inside)."""
        return abs(solid_angle_sum(self, point)) > 2.0 * np.pi

    def stats(self) -> dict:
        return {
            "vertices": int(len(self.vertices)),
            "triangles": int(self.n_triangles),
            "area": self.total_area,
            "signed_volume": self.signed_volume,
            "mean_edge_length": self.mean_edge_length,
            "max_diameter": float(self.diameters.max()),
        }


def solid_angle_sum(mesh: TriMesh, point) -> float:
    """Total signed solid angle of the surface seen from a point.

    Returns ~4*pi for interior points and ~0 for exterior points (outward
    orientation), by the van Oosterom-Strackee triangle formula.
    """
    p = np.asarray(point, dtype=float)
    a, b, c = (mesh.corner_array()[:, i] - p for i in range(3))
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(c, axis=1)
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    denom = (
        la * lb * lc
        + np.einsum("ij,ij->i", a, b) * lc
        + np.einsum("ij,ij->i", b, c) * la
        + np.einsum("ij,ij->i", c, a) * lb
    )
    return float(np.sum(2.0 * np.arctan2(det, denom)))


# Icosahedron with unit circumradius after normalization.
_PHI = (1.0 + sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=int,
)

MAX_SUBDIVISIONS = 6


def icosphere(radius: float = 1.0, subdivisions: int = 0) -> TriMesh:
    """Subdivided icosahedron projected to the radius-r sphere (20*4^s triangles)."""
    if radius <= 0:
        raise MeshError(f"radius must be positive, got {radius}")
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise MeshError(
            f"subdivisions must be in [0, {MAX_SUBDIVISIONS}], got {subdivisions}"
        )
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES.tolist()
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            idx = midpoint_cache.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        new_faces = []
        for i, j, k in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [[i, a, c], [a, j, b], [c, b, k], [a, b, c]]
        faces = new_faces
    return TriMesh(np.array(verts) * radius, np.array(faces))


def ellipsoid(a: float, b: float, c: float, subdivisions: int = 0) -> TriMesh:
    """Icosphere mapped by diag(a, b, c); normals recomputed from the geometry."""
    if min(a, b, c) <= 0:
        raise MeshError(f"semi-axes must be positive, got ({a}, {b}, {c})")
    base = icosphere(1.0, subdivisions)
    return TriMesh(base.vertices * np.array([a, b, c]), base.triangles)


def scale_signed(mesh: TriMesh, eps: float) -> TriMesh:
    """Map vertices by x -> eps*x; flip winding when eps < 0 to keep normals outward."""
    if eps == 0:
        raise MeshError("eps = 0 collapses the mesh")
    triangles = mesh.triangles if eps > 0 else mesh.triangles[:, [0, 2, 1]]
    return TriMesh(mesh.vertices * eps, triangles)


def save_off(mesh: TriMesh, path) -> None:
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
        for v in mesh.vertices:
            f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            f.write(f"3 {int(t[0])} {int(t[1])} {int(t[2])}\n")


def load_off(path) -> TriMesh:
    """Strict ASCII OFF reader: header, counts, vertices, triangular faces."""
    with open(path) as f:
        tokens = f.read().split()
    pos = 0

    def take(count: int) -> list[str]:
        nonlocal pos
        if pos + count > len(tokens):
            raise MeshFormatError("unexpected end of OFF file")
        out = tokens[pos : pos + count]
        pos += count
        return out

    if take(1)[0] != "OFF":
        raise MeshFormatError("missing OFF header")
    try:
        n_v, n_f, _ = (int(x) for x in take(3))
        verts = np.array([[float(x) for x in take(3)] for _ in range(n_v)])
        faces = []
        for _ in range(n_f):
            arity = int(take(1)[0])
            if arity != 3:
                raise MeshFormatError(f"only triangular faces supported, got arity {arity}")
            faces.append([int(x) for x in take(3)])
    except ValueError as exc:
        raise MeshFormatError(f"bad token in OFF file: {exc}") from None
    if pos != len(tokens):
        raise MeshFormatError("trailing tokens after face list")
    return TriMesh(verts, np.array(faces, dtype=int))


def points_to_triangles_distance(points, corners: np.ndarray,
                                 chunk: int = 256) -> np.ndarray:
    """Exact distances from points (P, 3) to triangles (T, 3, 3), shape (P, T).

    Projects onto each triangle plane; where the projection's barycentric
    coordinates leave the triangle, the nearest edge segment wins.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = corners[:, 0]
    ab = corners[:, 1] - a
    ac = corners[:, 2] - a
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    denom = d00 * d11 - d01 * d01
    out = np.empty((len(points), len(corners)))
    for start in range(0, len(points), chunk):
        p = points[start : start + chunk]  # (m, 3)
        ap = p[:, None, :] - a[None, :, :]  # (m, T, 3)
        d20 = np.einsum("mtc,tc->mt", ap, ab)
        d21 = np.einsum("mtc,tc->mt", ap, ac)
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        inside = (v >= 0) & (w >= 0) & (v + w <= 1)
        proj = a[None] + v[..., None] * ab[None] + w[..., None] * ac[None]
        best = np.where(
            inside, np.linalg.norm(p[:, None, :] - proj, axis=2), np.inf
        )
        for s0, d_edge in ((corners[:, 0], ab),
                           (corners[:, 1], corners[:, 2] - corners[:, 1]),
                           (corners[:, 2], corners[:, 0] - corners[:, 2])):
            ps = p[:, None, :] - s0[None, :, :]
            t = np.einsum("mtc,tc->mt", ps, d_edge) / np.maximum(
                np.einsum("ij,ij->i", d_edge, d_edge), 1e-300
            )
            t = np.clip(t, 0.0, 1.0)
            closest = s0[None] + t[..., None] * d_edge[None]
            best = np.minimum(
                best, np.linalg.norm(p[:, None, :] - closest, axis=2)
            )
        out[start : start + chunk] = best
    return out


def point_to_triangles_distance(point, corners: np.ndarray) -> np.ndarray:
    """Exact distances from one point to each triangle, shape (T,)."""
    return points_to_triangles_distance(np.asarray(point, dtype=float)[None, :], corners)[0]


def point_to_mesh_distance(point, mesh: TriMesh) -> float:
    return float(point_to_triangles_distance(point, mesh.corner_array()).min())


def mesh_to_mesh_distance(mesh_a: TriMesh, mesh_b: TriMesh) -> float:
    """Minimum surface-to-surface distance, sampled at vertices and centroids."""
    best = np.inf
    for src, dst in ((mesh_a, mesh_b), (mesh_b, mesh_a)):
        corners = dst.corner_array()
        samples = np.vstack([src.vertices, src.centroids])
        d = points_to_triangles_distance(samples, corners).min()
        best = min(best, float(d))
    return best


DEFAULT_CLEARANCE_FRACTION = 0.02


@dataclass(frozen=True)
class ClearanceReport:
    eps: float
    clearance: float
    clearance_min: float

    @property
    def ok(self) -> bool:
        return self.clearance >= self.clearance_min


class GeometryPair:
    """Unit-scale hole mesh and outer mesh, both containing the origin.

    ``clearance_min`` defaults to 2% of the outer bounding radius; nearly
    touching surfaces make the coupling blocks ill-conditioned, so they are
    refused rather than degraded.
    """

    def __init__(self, inner: TriMesh, outer: TriMesh, clearance_min: float | None = None):
        if not inner.contains((0.0, 0.0, 0.0)):
            raise MeshError("origin is not inside the inner mesh")
        if not outer.contains((0.0, 0.0, 0.0)):
            raise MeshError("origin is not inside the outer mesh")
        self.inner = inner
        self.outer = outer
        self.clearance_min = (
            DEFAULT_CLEARANCE_FRACTION * outer.bounding_radius()
            if clearance_min is None
            else float(clearance_min)
        )
        self._eps_max: float | None = None

    def admissibility(self, eps: float) -> ClearanceReport:
        if eps == 0:
            raise MeshError("eps = 0 has no hole; nothing to check")
        hole = scale_signed(self.inner, eps)
        if not all(self.outer.contains(v) for v in hole.vertices[:: max(1, len(hole.vertices) // 64)]):
            return ClearanceReport(eps, -np.inf, self.clearance_min)
        return ClearanceReport(eps, mesh_to_mesh_distance(hole, self.outer), self.clearance_min)

    @property
    def eps_max(self) -> float:
        """sup{|eps| : clearance(eps) >= clearance_min}, found by bisection."""
        if self._eps_max is None:
            lo, hi = 0.0, self.outer.bounding_radius() / max(
                self.inner.bounding_radius(), 1e-300
            )
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                if self.admissibility(mid).ok:
                    lo = mid
                else:
                    hi = mid
            self._eps_max = lo
        return self._eps_max

    def require_admissible(self, eps: float) -> None:
        report = self.admissibility(eps)
        if not report.ok:
            raise AdmissibilityError(
                f"clearance {report.clearance:.4g} at eps={eps:g} is below "
                f"clearance_min={self.clearance_min:.4g}"
            )
