"""Flat-element surface meshes, the medium voxel grid, and ray primitives.

All coordinates are SI meters. Element vertices are ordered counter-clockwise
when viewed from the side the unit normal points to, and enclosure meshes
orient every normal toward the enclosed medium, so the cosine between a normal
and a ray to a visible interior point is nonnegative.

Points are plain numpy arrays of shape (3,), float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GeometryError",
    "DegenerateElement",
    "NonPlanar",
    "OutsideGrid",
    "MeshError",
    "SurfaceElement",
    "Segment",
    "VoxelSpan",
    "VoxelGrid",
    "SurfaceMesh",
    "ElementArrays",
    "QuadPatch",
    "TriPatch",
    "FULL_QUAD_PATCH",
    "FULL_TRI_PATCH",
    "as_point",
    "build_element",
    "ray_intersect_element",
    "segment_element_hits",
    "traverse_voxels",
    "subdivide4",
    "split_patch",
    "patch_vertices",
    "patch_subelement",
    "full_patch",
    "point_in_mesh",
    "mesh_diameter",
    "load_mesh",
    "write_mesh_file",
]

# Tolerances, relative to the element diameter unless stated otherwise.
PLANARITY_RTOL = 1e-9       # max vertex deviation from the quad plane
ENDPOINT_RTOL = 1e-10       # open-segment exclusion zone at each endpoint
EDGE_INCLUSION_RTOL = 1e-10  # edge touches count as hits, inclusive margin (x diameter^2)
_SPAN_MERGE_TOL = 1e-14     # voxel breakpoints closer than this (in segment fraction) merge
_AREA_RTOL = 1e-10          # area below this fraction of diameter^2 is degenerate

# Fixed skew direction for parity ray casts; avoids grazing axis-aligned faces.
_PARITY_DIRECTION = np.array([0.21873409, 0.52028170, 0.82541901])
_PARITY_DIRECTION = _PARITY_DIRECTION / np.linalg.norm(_PARITY_DIRECTION)


class GeometryError(ValueError):
    """Base class for geometry construction and query failures."""


class DegenerateElement(GeometryError):
    """Element with vanishing area, repeated vertices, or a reflex corner."""


class NonPlanar(GeometryError):
    """Quad vertices deviate from a common plane beyond tolerance."""


class OutsideGrid(GeometryError):
    """Segment does not intersect the voxel grid box."""


class MeshError(GeometryError):
    """Mesh-level consistency failure (closure, orientation, file format)."""


def as_point(p) -> np.ndarray:
    """Coerce to a finite float64 3-vector."""
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"point has non-finite components: {a}")
    return a


def cross3(a, b) -> np.ndarray:
    """Cross product over the last axis.

    Component formulas avoid the axis bookkeeping of np.cross, which
    dominates profiles when called on many small batches.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


@dataclass(frozen=True)
class SurfaceElement:
    """Flat triangle or planar quad with precomputed metric data.

    vertices : (m, 3) array, m in {3, 4}, counter-clockwise seen from the
        normal side.
    normal : unit vector by the right-hand rule on the vertex order; enclosure
        meshes point it into the medium.
    centroid : vertex mean (equals the bilinear-map center for quads).
    diameter : max pairwise vertex distance.
    emissivity : in (0, 1].
    """

    vertices: np.ndarray
    normal: np.ndarray
    centroid: np.ndarray
    area: float
    diameter: float
    emissivity: float

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def is_quad(self) -> bool:
        return self.vertices.shape[0] == 4


def build_element(vertices, emissivity: float = 1.0) -> SurfaceElement:
    """Construct a SurfaceElement from 3 or 4 vertices.

    Raises DegenerateElement for vanishing area or reflex corners and
    NonPlanar when quad vertices leave their plane by more than
    PLANARITY_RTOL times the diameter.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[0] not in (3, 4) or v.shape[1] != 3:
        raise GeometryError(f"expected (3|4, 3) vertex array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise GeometryError("vertices contain non-finite components")
    if not 0.0 < emissivity <= 1.0:
        raise GeometryError(f"emissivity must be in (0, 1], got {emissivity}")

    diffs = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(-1)).max())
    if diameter <= 0.0:
        raise DegenerateElement("all vertices coincide")

    if v.shape[0] == 3:
        cross = cross3(v[1] - v[0], v[2] - v[0])
        area = 0.5 * float(np.linalg.norm(cross))
    else:
        # Diagonal cross product: exact vector area for planar quads.
        cross = 0.5 * cross3(v[2] - v[0], v[3] - v[1])
        area = float(np.linalg.norm(cross))
    if area < _AREA_RTOL * diameter * diameter:
        raise DegenerateElement(f"area {area:g} below tolerance for diameter {diameter:g}")
    normal = cross / np.linalg.norm(cross)

    centroid = v.mean(axis=0)

    if v.shape[0] == 4:
        dev = np.abs((v - centroid) @ normal).max()
        if dev > PLANARITY_RTOL * diameter:
            raise NonPlanar(f"quad deviates from its plane by {dev:g} (diameter {diameter:g})")
        # Convexity: all corner turns must agree with the normal.
        edges = np.roll(v, -1, axis=0) - v
        turns = cross3(edges, np.roll(edges, -1, axis=0)) @ normal
        if np.any(turns <= 0.0):
            raise DegenerateElement("quad has a reflex or collapsed corner")

    return SurfaceElement(
        vertices=v,
        normal=normal,
        centroid=centroid,
        area=area,
        diameter=diameter,
        emissivity=float(emissivity),
    )


@dataclass(frozen=True)
class Segment:
    """Directed straight segment; arclength s runs from start to end."""

    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start", as_point(self.start))
        object.__setattr__(self, "end", as_point(self.end))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def direction(self) -> np.ndarray:
        d = self.end - self.start
        n = np.linalg.norm(d)
        if n == 0.0:
            raise GeometryError("zero-length segment has no direction")
        return d / n


@dataclass
class ElementArrays:
    """Structure-of-arrays view of an element list for vectorized queries.

    Triangles pad the fourth vertex slot with a repeat of their last vertex;
    the degenerate edge drops out of edge tests.
    """

    vertices: np.ndarray      # (E, 4, 3)
    n_vertices: np.ndarray    # (E,)
    normals: np.ndarray       # (E, 3)
    centroids: np.ndarray     # (E, 3)
    areas: np.ndarray         # (E,)
    diameters: np.ndarray     # (E,)
    plane_offsets: np.ndarray  # (E,)  normal . vertex0
    emissivities: np.ndarray  # (E,)
    circumradii: np.ndarray   # (E,)  max vertex distance from the centroid

    @classmethod
    def from_elements(cls, elements) -> "ElementArrays":
        n = len(elements)
        verts = np.empty((n, 4, 3))
        nv = np.empty(n, dtype=int)
        normals = np.empty((n, 3))
        cents = np.empty((n, 3))
        areas = np.empty(n)
        diams = np.empty(n)
        eps = np.empty(n)
        for i, e in enumerate(elements):
            m = e.n_vertices
            verts[i, :m] = e.vertices
            if m == 3:
                verts[i, 3] = e.vertices[2]
            nv[i] = m
            normals[i] = e.normal
            cents[i] = e.centroid
            areas[i] = e.area
            diams[i] = e.diameter
            eps[i] = e.emissivity
        offs = np.einsum("ij,ij->i", normals, verts[:, 0])
        crad = np.sqrt(((verts - cents[:, None, :]) ** 2).sum(-1)).max(axis=1)
        return cls(verts, nv, normals, cents, areas, diams, offs, eps, crad)

    def __len__(self) -> int:
        return self.vertices.shape[0]


def segment_element_hits(starts, ends, arrays: ElementArrays, indices=None) -> np.ndarray:
    """Open-segment intersection mask, shape (S, E).

    Segment i runs starts[i] -> ends[i]; column j refers to element
    indices[j] (all elements when indices is None). Crossings of an element
    interior or edge count as hits; touches within ENDPOINT_RTOL times the
    element diameter of either endpoint do not. Symmetric under segment
    reversal.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    if indices is None:
        verts = arrays.vertices
        normals = arrays.normals
        offs = arrays.plane_offsets
        diams = arrays.diameters
    else:
        idx = np.asarray(indices, dtype=int)
        verts = arrays.vertices[idx]
        normals = arrays.normals[idx]
        offs = arrays.plane_offsets[idx]
        diams = arrays.diameters[idx]
    if verts.shape[0] == 0:
        return np.zeros((starts.shape[0], 0), dtype=bool)

    d = ends - starts                               # (S, 3)
    length = np.linalg.norm(d, axis=1)              # (S,)
    denom = d @ normals.T                           # (S, E)
    num = offs[None, :] - starts @ normals.T        # (S, E)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    # Parallel segments never hit, coincident-plane ones included.
    ok = np.abs(denom) > 1e-14 * np.maximum(length[:, None], 1.0)
    ok &= np.isfinite(t)
    t = np.where(ok, t, 0.0)
    margin = ENDPOINT_RTOL * diams[None, :]
    s = t * length[:, None]
    ok &= (s > margin) & (s < length[:, None] - margin)

    pts = starts[:, None, :] + t[..., None] * d[:, None, :]   # (S, E, 3)
    tol_in = EDGE_INCLUSION_RTOL * diams * diams
    inside = np.ones_like(ok)
    for i in range(4):
        a = verts[:, i]
        b = verts[:, (i + 1) % 4]
        # (edge x w) . n == w . (n x edge); the right side keeps the cross
        # product on the small per-element arrays.
        en = cross3(normals, b - a)                            # (E, 3)
        side = np.einsum("sek,ek->se", pts - a[None, :, :], en)
        inside &= side >= -tol_in[None, :]
    return ok & inside


def ray_intersect_element(seg: Segment, element: SurfaceElement) -> tuple[bool, float]:
    """Test one open segment against one element.

    Returns (hit, s) with s the arclength of the crossing from seg.start;
    s is nan when there is no hit.
    """
    arrays = ElementArrays.from_elements([element])
    hit = bool(segment_element_hits(seg.start[None, :], seg.end[None, :], arrays)[0, 0])
    if not hit:
        return False, math.nan
    d = seg.end - seg.start
    denom = float(d @ element.normal)
    t = float((element.vertices[0] - seg.start) @ element.normal) / denom
    return True, t * seg.length


# ---------------------------------------------------------------------------
# Subdivision and intrinsic patches


def subdivide4(element: SurfaceElement) -> list[SurfaceElement]:
    """Split into four children that partition the parent exactly.

    Quads split at the bilinear-map midlines, triangles at edge midpoints.
    Children keep the parent orientation and emissivity.
    """
    v = element.vertices
    eps = element.emissivity
    if element.is_quad:
        m01 = 0.5 * (v[0] + v[1])
        m12 = 0.5 * (v[1] + v[2])
        m23 = 0.5 * (v[2] + v[3])
        m30 = 0.5 * (v[3] + v[0])
        c = 0.25 * (v[0] + v[1] + v[2] + v[3])
        corner_sets = [
            [v[0], m01, c, m30],
            [m01, v[1], m12, c],
            [c, m12, v[2], m23],
            [m30, c, m23, v[3]],
        ]
    else:
        m01 = 0.5 * (v[0] + v[1])
        m12 = 0.5 * (v[1] + v[2])
        m20 = 0.5 * (v[2] + v[0])
        corner_sets = [
            [v[0], m01, m20],
            [m01, v[1], m12],
            [m20, m12, v[2]],
            [m01, m12, m20],
        ]
    return [build_element(np.array(cs), eps) for cs in corner_sets]


@dataclass(frozen=True)
class QuadPatch:
    """Axis-aligned rectangle in a quad's intrinsic (xi, eta) square."""

    xi0: float
    xi1: float
    eta0: float
    eta1: float


@dataclass(frozen=True)
class TriPatch:
    """Sub-triangle given by three barycentric corner triples of the root."""

    corners: tuple[tuple[float, float, float], ...]


FULL_QUAD_PATCH = QuadPatch(-1.0, 1.0, -1.0, 1.0)
FULL_TRI_PATCH = TriPatch(((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)))


def full_patch(element: SurfaceElement):
    return FULL_QUAD_PATCH if element.is_quad else FULL_TRI_PATCH


def split_patch(patch, at=None):
    """Children of a patch, by default in the same order as subdivide4.

    `at` directs the split toward a point: for quads, root intrinsic
    (xi, eta) where the cut lands (clamped into the patch with a margin so
    no child degenerates); for triangles, a root barycentric triple that
    becomes the fan apex when it sits comfortably inside the patch.
    Kept separate from the midpoint split so nearly singular quadrature can
    park the peak on child corners, where Gauss rules behave.
    """
    if isinstance(patch, QuadPatch):
        margin = 0.05
        if at is None:
            xm = 0.5 * (patch.xi0 + patch.xi1)
            em = 0.5 * (patch.eta0 + patch.eta1)
        else:
            dx = patch.xi1 - patch.xi0
            de = patch.eta1 - patch.eta0
            xm = float(np.clip(at[0], patch.xi0 + margin * dx, patch.xi1 - margin * dx))
            em = float(np.clip(at[1], patch.eta0 + margin * de, patch.eta1 - margin * de))
        return [
            QuadPatch(patch.xi0, xm, patch.eta0, em),
            QuadPatch(xm, patch.xi1, patch.eta0, em),
            QuadPatch(xm, patch.xi1, em, patch.eta1),
            QuadPatch(patch.xi0, xm, em, patch.eta1),
        ]
    c = np.asarray(patch.corners)
    mk = lambda *rows: TriPatch(tuple(tuple(r) for r in rows))
    if at is not None:
        # Patch-local barycentric coordinates of the apex candidate.
        try:
            local = np.linalg.solve(c.T, np.asarray(at, dtype=float))
        except np.linalg.LinAlgError:
            local = None
        if local is not None and np.all(local >= 0.08):
            apex = tuple(np.asarray(at, dtype=float))
            return [mk(apex, c[0], c[1]), mk(apex, c[1], c[2]), mk(apex, c[2], c[0])]
    m01 = 0.5 * (c[0] + c[1])
    m12 = 0.5 * (c[1] + c[2])
    m20 = 0.5 * (c[2] + c[0])
    return [mk(c[0], m01, m20), mk(m01, c[1], m12), mk(m20, m12, c[2]), mk(m01, m12, m20)]


def bilinear_points(verts4: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Map intrinsic (xi, eta) in [-1, 1]^2 to physical points, (n, 3)."""
    xi = uv[:, 0][:, None]
    eta = uv[:, 1][:, None]
    return 0.25 * (
        (1 - xi) * (1 - eta) * verts4[0]
        + (1 + xi) * (1 - eta) * verts4[1]
        + (1 + xi) * (1 + eta) * verts4[2]
        + (1 - xi) * (1 + eta) * verts4[3]
    )


def bilinear_jacobian(verts4: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Surface Jacobian |x_xi cross x_eta| at intrinsic points, (n,)."""
    xi = uv[:, 0][:, None]
    eta = uv[:, 1][:, None]
    dxi = 0.25 * (
        -(1 - eta) * verts4[0] + (1 - eta) * verts4[1] + (1 + eta) * verts4[2] - (1 + eta) * verts4[3]
    )
    deta = 0.25 * (
        -(1 - xi) * verts4[0] - (1 + xi) * verts4[1] + (1 + xi) * verts4[2] + (1 - xi) * verts4[3]
    )
    return np.linalg.norm(np.cross(dxi, deta), axis=1)


def quad_patch_to_root(patch: QuadPatch, uv: np.ndarray) -> np.ndarray:
    """Affine map from patch unit square [-1, 1]^2 to root intrinsic coords."""
    out = np.empty_like(uv)
    out[:, 0] = patch.xi0 + 0.5 * (uv[:, 0] + 1.0) * (patch.xi1 - patch.xi0)
    out[:, 1] = patch.eta0 + 0.5 * (uv[:, 1] + 1.0) * (patch.eta1 - patch.eta0)
    return out


def tri_patch_to_root(patch: TriPatch, bary: np.ndarray) -> np.ndarray:
    """Map patch barycentric coords to root barycentric coords."""
    return bary @ np.asarray(patch.corners)


def patch_vertices(element: SurfaceElement, patch) -> np.ndarray:
    """Physical corner points of a patch, in element orientation."""
    if element.is_quad:
        uv = np.array(
            [
                [patch.xi0, patch.eta0],
                [patch.xi1, patch.eta0],
                [patch.xi1, patch.eta1],
                [patch.xi0, patch.eta1],
            ]
        )
        return bilinear_points(element.vertices, uv)
    return np.asarray(patch.corners) @ element.vertices


def patch_subelement(element: SurfaceElement, patch) -> SurfaceElement:
    """Geometric element spanned by a patch, inheriting emissivity."""
    return build_element(patch_vertices(element, patch), element.emissivity)


# ---------------------------------------------------------------------------
# Voxel grid


@dataclass(frozen=True)
class VoxelSpan:
    """One traversed cell: index triple plus entry and exit arclengths."""

    cell: tuple[int, int, int]
    s_enter: float
    s_exit: float


class VoxelGrid:
    """Axis-aligned box of cuboid cells with per-cell medium temperature.

    Cell data is stored flat in x-fastest order:
    flat = ix + nx * (iy + ny * iz).
    """

    def __init__(self, origin, spacing, dims, temperatures=None, incident_energy=None):
        self.origin = as_point(origin)
        spacing = np.asarray(spacing, dtype=float)
        if spacing.shape == ():
            spacing = np.full(3, float(spacing))
        if spacing.shape != (3,) or not np.all(spacing > 0):
            raise GeometryError(f"spacing must be three positive values, got {spacing}")
        self.spacing = spacing
        dims = np.asarray(dims, dtype=int)
        if dims.shape != (3,) or not np.all(dims >= 1):
            raise GeometryError(f"dims must be three positive integers, got {dims}")
        self.dims = dims
        n = int(dims.prod())
        if temperatures is None:
            temperatures = np.zeros(n)
        temperatures = np.asarray(temperatures, dtype=float).reshape(-1)
        if temperatures.shape != (n,):
            raise GeometryError(f"expected {n} cell temperatures, got {temperatures.shape}")
        if np.any(temperatures < 0) or not np.all(np.isfinite(temperatures)):
            raise GeometryError("cell temperatures must be finite and nonnegative")
        self.temperatures = temperatures
        self.incident_energy = incident_energy
        self._centers = None

    @property
    def n_cells(self) -> int:
        return int(self.dims.prod())

    @property
    def cell_volume(self) -> float:
        return float(self.spacing.prod())

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.origin, self.origin + self.spacing * self.dims

    def flat_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, _ = self.dims
        return int(ix + nx * (iy + ny * iz))

    def cell_centers(self) -> np.ndarray:
        """(n_cells, 3) centers in flat (x-fastest) order."""
        if self._centers is None:
            nx, ny, nz = self.dims
            cx = self.origin[0] + (np.arange(nx) + 0.5) * self.spacing[0]
            cy = self.origin[1] + (np.arange(ny) + 0.5) * self.spacing[1]
            cz = self.origin[2] + (np.arange(nz) + 0.5) * self.spacing[2]
            zz, yy, xx = np.meshgrid(cz, cy, cx, indexing="ij")
            self._centers = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        return self._centers


def traverse_voxels(seg: Segment, grid: VoxelGrid) -> list[VoxelSpan]:
    """Decompose a segment into per-cell spans.

    The segment is clipped to the grid box first; OutsideGrid is raised when
    nothing remains. Spans are sorted, disjoint, and telescope to the clipped
    length. A point on a shared cell face belongs to the higher-index cell,
    clamped at the outer boundary.
    """
    start = seg.start
    d = seg.end - seg.start
    length = float(np.linalg.norm(d))
    if length <= 0.0:
        raise GeometryError("cannot traverse a zero-length segment")
    lo, hi = grid.box()
    scale = float(np.max(hi - lo))

    t0, t1 = 0.0, 1.0
    for a in range(3):
        if d[a] != 0.0:
            with np.errstate(over="ignore"):
                ta = (lo[a] - start[a]) / d[a]
                tb = (hi[a] - start[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
        elif start[a] < lo[a] - 1e-12 * scale or start[a] > hi[a] + 1e-12 * scale:
            raise OutsideGrid("segment lies outside the grid slab")
    if t1 - t0 <= _SPAN_MERGE_TOL:
        raise OutsideGrid("segment does not cross the grid box")

    cuts = [np.array([t0, t1])]
    for a in range(3):
        if d[a] == 0.0 or grid.dims[a] < 2:
            continue
        planes = lo[a] + np.arange(1, grid.dims[a]) * grid.spacing[a]
        ta = (planes - start[a]) / d[a]
        cuts.append(ta[(ta > t0) & (ta < t1)])
    breaks = np.sort(np.concatenate(cuts))

    kept = [breaks[0]]
    for b in breaks[1:]:
        if b - kept[-1] > _SPAN_MERGE_TOL:
            kept.append(b)
    # The final breakpoint must sit exactly at the clip end.
    if kept[-1] != t1:
        if len(kept) > 1:
            kept[-1] = t1
        else:
            kept.append(t1)

    spans = []
    for ta, tb in zip(kept[:-1], kept[1:]):
        mid = start + (0.5 * (ta + tb)) * d
        cell = tuple(
            int(np.clip(math.floor((mid[a] - lo[a]) / grid.spacing[a]), 0, grid.dims[a] - 1))
            for a in range(3)
        )
        spans.append(VoxelSpan(cell=cell, s_enter=ta * length, s_exit=tb * length))
    return spans


# ---------------------------------------------------------------------------
# Surface mesh


class SurfaceMesh:
    """Indexed element mesh with per-node temperature.

    Enclosure meshes must be closed, consistently oriented with normals into
    the medium; set check_closed=False for open test scenes.
    """

    def __init__(self, nodes, element_nodes, emissivities=None, node_temperatures=None,
                 check_closed: bool = True):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise MeshError(f"expected (N, 3) node array, got {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("nodes contain non-finite coordinates")
        self.nodes = nodes
        self.element_nodes = tuple(tuple(int(i) for i in en) for en in element_nodes)
        n_el = len(self.element_nodes)
        if emissivities is None:
            emissivities = [1.0] * n_el
        elif np.isscalar(emissivities):
            emissivities = [float(emissivities)] * n_el
        if len(emissivities) != n_el:
            raise MeshError("one emissivity per element required")
        self.elements = [
            build_element(nodes[list(en)], eps)
            for en, eps in zip(self.element_nodes, emissivities)
        ]
        if node_temperatures is None:
            node_temperatures = np.zeros(nodes.shape[0])
        node_temperatures = np.asarray(node_temperatures, dtype=float).reshape(-1)
        if node_temperatures.shape[0] != nodes.shape[0]:
            raise MeshError("one temperature per node required")
        if np.any(node_temperatures < 0) or not np.all(np.isfinite(node_temperatures)):
            raise MeshError("node temperatures must be finite and nonnegative")
        self.node_temperatures = node_temperatures
        self._arrays = None
        if check_closed:
            self._check_closed_oriented()

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def arrays(self) -> ElementArrays:
        if self._arrays is None:
            self._arrays = ElementArrays.from_elements(self.elements)
        return self._arrays

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.nodes.min(axis=0), self.nodes.max(axis=0)

    def with_emissivities(self, emissivities) -> "SurfaceMesh":
        """Same geometry and temperatures, different wall emissivities."""
        return SurfaceMesh(
            self.nodes, self.element_nodes, emissivities, self.node_temperatures
        )

    def _check_closed_oriented(self):
        edges: dict[tuple[int, int], int] = {}
        for en in self.element_nodes:
            m = len(en)
            for i in range(m):
                e = (en[i], en[(i + 1) % m])
                edges[e] = edges.get(e, 0) + 1
        problems = []
        for (a, b), cnt in edges.items():
            if cnt != 1:
                problems.append(f"directed edge {a}->{b} used {cnt} times")
            elif edges.get((b, a), 0) != 1:
                problems.append(f"edge {a}-{b} not shared by an opposite-order neighbor")
        if problems:
            raise MeshError("mesh is not a closed oriented surface: " + "; ".join(problems[:5]))
        arr = self.arrays()
        signed = float(np.einsum("i,ij,ij->", arr.areas, arr.centroids, arr.normals) / 3.0)
        if signed >= 0.0:
            raise MeshError("element normals must point into the enclosed medium")

    def diameter(self) -> float:
        return mesh_diameter(self)


def mesh_diameter(mesh: SurfaceMesh) -> float:
    """Max pairwise node distance; for polyhedral enclosures this is the
    domain diameter."""
    pts = mesh.nodes
    best = 0.0
    step = 512
    for i in range(0, pts.shape[0], step):
        chunk = pts[i : i + step]
        d2 = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def points_in_mesh(mesh: SurfaceMesh, points) -> np.ndarray:
    """Parity ray cast along a fixed skew direction, batched over points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    reach = mesh_diameter(mesh) * 2.0 + 1.0
    far = pts + _PARITY_DIRECTION[None, :] * reach
    hits = segment_element_hits(pts, far, mesh.arrays())
    return hits.sum(axis=1) % 2 == 1


def point_in_mesh(mesh: SurfaceMesh, point) -> bool:
    """Parity ray cast for a single point."""
    return bool(points_in_mesh(mesh, as_point(point)[None, :])[0])


# ---------------------------------------------------------------------------
# Mesh file format

_MESH_KEYS = {"nodes", "elements", "grid"}
_GRID_KEYS = {"origin", "spacing", "dims", "T"}


def load_mesh(path) -> tuple[SurfaceMesh, VoxelGrid]:
    """Read a mesh-plus-grid JSON file.

    The file stores one temperature per element; node temperatures are the
    mean over incident elements, which is exact for uniform walls. The grid
    box must contain the mesh bounding box.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    missing = _MESH_KEYS - set(data)
    if missing:
        raise MeshError(f"mesh file missing keys: {sorted(missing)}")

    nodes = np.asarray(data["nodes"], dtype=float)
    records = data["elements"]
    element_nodes = []
    emissivities = []
    temp_sum = np.zeros(nodes.shape[0])
    temp_cnt = np.zeros(nodes.shape[0])
    for rec in records:
        try:
            en = [int(i) for i in rec["nodes"]]
            eps = float(rec["epsilon"])
            temp = float(rec["T"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"bad element record {rec!r}: {exc}") from exc
        if min(en) < 0 or max(en) >= nodes.shape[0]:
            raise MeshError(f"element node index out of range in {rec!r}")
        element_nodes.append(en)
        emissivities.append(eps)
        for i in en:
            temp_sum[i] += temp
            temp_cnt[i] += 1
    if np.any(temp_cnt == 0):
        raise MeshError("mesh has nodes not referenced by any element")
    node_temps = temp_sum / temp_cnt

    mesh = SurfaceMesh(nodes, element_nodes, emissivities, node_temps, check_closed=True)

    g = data["grid"]
    missing = _GRID_KEYS - set(g)
    if missing:
        raise MeshError(f"grid record missing keys: {sorted(missing)}")
    grid = VoxelGrid(g["origin"], g["spacing"], g["dims"], np.asarray(g["T"], dtype=float))
    lo, hi = grid.box()
    mlo, mhi = mesh.bounding_box()
    tol = 1e-9 * max(1.0, float(np.max(hi - lo)))
    if np.any(mlo < lo - tol) or np.any(mhi > hi + tol):
        raise MeshError("grid box does not contain the mesh bounding box")
    return mesh, grid


def write_mesh_file(path, nodes, elements, grid: dict) -> None:
    """Write the JSON mesh format.

    elements: iterable of {"nodes": [...], "epsilon": e, "T": t} records.
    grid: {"origin", "spacing", "dims", "T"} with T flat in x-fastest order.
    """
    payload = {
        "nodes": [[float(c) for c in row] for row in np.asarray(nodes, dtype=float)],
        "elements": [
            {
                "nodes": [int(i) for i in rec["nodes"]],
                "epsilon": float(rec["epsilon"]),
                "T": float(rec["T"]),
            }
            for rec in elements
        ],
        "grid": {
            "origin": [float(c) for c in grid["origin"]],
            "spacing": [
                float(c)
                for c in np.broadcast_to(np.asarray(grid["spacing"], dtype=float).reshape(-1), (3,))
            ],
            "dims": [int(c) for c in grid["dims"]],
            "T": [float(c) for c in np.asarray(grid["T"], dtype=float).reshape(-1)],
        },
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")
