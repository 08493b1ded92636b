"""Line-of-sight classification between collocation points and wall elements.

Occlusion handling runs in three stages. First, a facing test keeps only
elements that can exchange radiation with the source point at all. Second,
each surviving pair gets a list of potential blockers, built with a
conservative cylinder cull around the sight line and a view-window vertex
test (the open pyramid spanned by the point and the element, the sharp core
of the circular view cone) plus center and corner ray casts; a pair whose
view is provably covered is rejected outright. Third, pairs with a nonempty
blocker list are subdivided quadtree-style until each piece is either fully
visible, fully covered, or small enough to classify by a single centroid
ray.

The subdivision converges to the exact shadow boundary as the minimum
sub-element area goes to zero; the default budget resolves fractions to
about one percent of the element area. The screens probe occluders through
their vertices, the center sight line, and the corner sight lines, which is
exhaustive for compact occluders; a long thin occluder that slices a view
window while keeping every vertex outside it and dodging all probe rays can
escape listing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ritesolver.geometry import (
    EDGE_INCLUSION_RTOL,
    ElementArrays,
    SurfaceElement,
    SurfaceMesh,
    as_point,
    cross3,
    full_patch,
    segment_element_hits,
    split_patch,
    subdivide4,
)

__all__ = [
    "EARLY_BLOCKED",
    "ActiveList",
    "BlockingList",
    "Classification",
    "SubElement",
    "SubdivisionBudget",
    "VisibilityReport",
    "build_active_list",
    "build_blocking_list",
    "chi_point",
    "classify_visibility",
    "facing_test",
    "screen_active_set",
]

# A candidate vertex counts as inside the view window only when it lies
# strictly nearer than the element plane along its sight ray, by this
# relative margin; vertices in the plane (shared corners of wall neighbors
# on a convex enclosure) stay out.
_PYRAMID_TAU_MARGIN = 1e-9
# Two elements count as coplanar when their normals are parallel to this
# tolerance and their centroid offset along the normal stays below it times
# the larger diameter.
_COPLANAR_RTOL = 1e-9


class _EarlyBlockedType:
    """Sentinel: the whole element is provably hidden, no list needed."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EarlyBlocked"


EARLY_BLOCKED = _EarlyBlockedType()


class Classification(enum.Enum):
    FULLY_VISIBLE = "fully_visible"
    PARTIALLY_VISIBLE = "partially_visible"
    FULLY_BLOCKED = "fully_blocked"


@dataclass(frozen=True)
class SubdivisionBudget:
    """Stop rules for the quadtree stage.

    min_area is an absolute floor in m^2; when None it defaults to
    min_area_fraction of the element under classification. Subdivision also
    stops at max_depth levels below the original element.
    """

    min_area: float | None = None
    max_depth: int = 8
    min_area_fraction: float = 1e-4

    def __post_init__(self):
        if self.min_area is not None and self.min_area <= 0:
            raise ValueError(f"min_area must be positive, got {self.min_area}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be at least 1, got {self.max_depth}")
        if self.min_area_fraction <= 0:
            raise ValueError(
                f"min_area_fraction must be positive, got {self.min_area_fraction}"
            )

    def resolve_min_area(self, element: SurfaceElement) -> float:
        if self.min_area is not None:
            return self.min_area
        return self.min_area_fraction * element.area


@dataclass(frozen=True)
class ActiveList:
    """Elements passing the facing test for one source point."""

    point: np.ndarray
    normal: np.ndarray | None
    indices: tuple[int, ...]


@dataclass(frozen=True)
class BlockingList:
    """Potential occluders for one (point, active element) pair."""

    point: np.ndarray
    active_index: int
    blockers: tuple[int, ...]


@dataclass(frozen=True)
class SubElement:
    """A fully visible piece of an element, with its intrinsic patch."""

    element: SurfaceElement
    patch: object

    @property
    def area(self) -> float:
        return self.element.area


@dataclass(frozen=True)
class VisibilityReport:
    classification: Classification
    visible: tuple[SubElement, ...] = field(default=())
    fraction: float = 0.0
    depth_reached: int = 0


def facing_test(p, n_p, element: SurfaceElement) -> bool:
    """Mutual orientation test with strict positivity.

    With inward normals, the element centroid must lie in front of the
    source plane (when a source normal exists) and the source point in front
    of the element plane. Tangent configurations carry zero kernel weight
    and are classified not facing.
    """
    p = as_point(p)
    to_c = element.centroid - p
    d2 = float(element.normal @ (-to_c))
    if d2 <= 0.0:
        return False
    if n_p is None:
        return True
    return float(as_point(n_p) @ to_c) > 0.0


def build_active_list(p, n_p, mesh: SurfaceMesh, source_element: int | None = None) -> ActiveList:
    """All elements mutually facing the point, excluding the one it sits on.

    The facing test is necessary but not sufficient: on non-convex meshes
    listed elements may still turn out blocked.
    """
    p = as_point(p)
    arr = mesh.arrays()
    to_c = arr.centroids - p
    d2 = -np.einsum("ij,ij->i", arr.normals, to_c)
    mask = d2 > 0.0
    if n_p is not None:
        n_p = as_point(n_p)
        mask &= to_c @ n_p > 0.0
    if source_element is not None:
        mask[source_element] = False
    return ActiveList(point=p, normal=n_p, indices=tuple(int(i) for i in np.nonzero(mask)[0]))


def _circumradius(element: SurfaceElement) -> float:
    d = element.vertices - element.centroid
    return float(np.sqrt((d * d).sum(axis=1).max()))


def _window_vertex_block(p, normals, gaps, verts, tols, cand_verts) -> np.ndarray:
    """Vertex-in-view-window mask for a block of nodes, shape (A, E).

    The view window of a node is the open pyramid of sight rays from p
    through the node interior. A candidate vertex lies inside it exactly
    when its ray from p crosses the node plane strictly beyond the vertex
    (parameter above one) at a point strictly interior to the node; both
    strictness margins keep plane-sharing neighbors and rim grazes out, so
    a convex enclosure yields no vertex captures at all.

    normals (A, 3) and verts (A, 4, 3) describe the nodes, triangles padded
    by a repeated vertex; gaps (A,) holds normal . (centroid - p), tols (A,)
    the interior margins; cand_verts is (E, 4, 3).
    """
    rv = cand_verts - p                                 # (E, 4, 3)
    denom = np.einsum("aj,evj->aev", normals, rv)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = gaps[:, None, None] / denom
    valid = np.isfinite(tau) & (tau > 1.0 + _PYRAMID_TAU_MARGIN)
    tau = np.where(valid, tau, 0.0)
    land = p + tau[..., None] * rv[None]                # (A, E, 4, 3)
    inside = valid
    for i in range(4):
        a = verts[:, i]
        b = verts[:, (i + 1) % 4]
        edge = b - a                                    # (A, 3)
        degenerate = (np.einsum("aj,aj->a", edge, edge) == 0.0)[:, None, None]
        # (edge x w) . n == w . (n x edge), keeping the cross product small.
        en = cross3(normals, edge)                      # (A, 3)
        side = np.einsum("aevj,aj->aev", land - a[:, None, None, :], en)
        inside = inside & (degenerate | (side > tols[:, None, None]))
    return inside.any(axis=2)


def _window_vertex_mask(p, node: SurfaceElement, cand_verts) -> np.ndarray:
    """Candidate-vertex window captures for a single node, shape (m,)."""
    verts = node.vertices
    if verts.shape[0] == 3:
        verts = np.vstack([verts, verts[2:3]])
    gap = np.array([float(node.normal @ (node.centroid - p))])
    tol = np.array([EDGE_INCLUSION_RTOL * node.diameter**2])
    return _window_vertex_block(p, node.normal[None, :], gap, verts[None], tol, cand_verts)[0]


def _corner_ray_hits(p, corners, pool, arrays: ElementArrays) -> np.ndarray:
    """Corner sight-ray hit matrix, shape (corners, pool).

    A candidate can only cut the segment p -> corner when that line passes
    within the candidate circumradius of its centroid; the exact open
    segment test runs on those near pairs alone.
    """
    k = corners.shape[0]
    hits = np.zeros((k, pool.size), dtype=bool)
    d = corners - p                                     # (k, 3)
    length = np.linalg.norm(d, axis=1)
    dhat = d / length[:, None]
    rel = arrays.centroids[pool] - p                    # (m, 3)
    t = dhat @ rel.T                                    # (k, m)
    perp2 = np.einsum("mj,mj->m", rel, rel)[None, :] - t**2
    # Padded slightly: a ray grazing a candidate exactly at its rim sits at
    # perp == reach up to roundoff, and the exact segment test downstream is
    # rim-inclusive, so the cull must not tip such pairs out.
    reach = arrays.circumradii[pool][None, :] * (1.0 + 1e-9)
    near = (perp2 <= reach**2) & (t >= -reach) & (t <= length[:, None] + reach)
    for i in range(k):
        cols = np.nonzero(near[i])[0]
        if cols.size:
            hits[i, cols] = segment_element_hits(
                p[None, :], corners[i][None, :], arrays, indices=pool[cols]
            )[0]
    return hits


def _screen(
    p,
    node: SurfaceElement,
    candidates: np.ndarray,
    arrays: ElementArrays,
    center_shortcut: bool = True,
):
    """Cylinder cull, view-window vertex test, and ray casts for one node.

    Returns (kept_candidates, early_blocked). kept_candidates is an index
    array sorted ascending. With center_shortcut (the top-level rule), a
    candidate that cuts the center sight line without reaching a vertex
    into the view window is taken as covering the whole window and blocks
    the node outright. Below the top level that shortcut is off: such a
    candidate merely joins the list, and only the union rule (every
    corner ray hidden behind some listed blocker) blocks the node.
    """
    if candidates.size == 0:
        return candidates, False
    axis = node.centroid - p
    h = float(np.linalg.norm(axis))
    axhat = axis / h

    # Cylinder window around the sight line, padded with the circumradii so
    # that no candidate able to reach any later probe is dropped.
    rel = arrays.centroids[candidates] - p
    tax = rel @ axhat
    rad2 = np.einsum("ij,ij->i", rel, rel) - tax**2
    reach = arrays.circumradii[candidates]
    r_cyl = _circumradius(node) + reach
    pool = candidates[(tax >= -reach) & (tax <= h + reach) & (rad2 <= r_cyl**2)]
    if pool.size == 0:
        return pool, False

    window_add = _window_vertex_mask(p, node, arrays.vertices[pool])

    rest = pool[~window_add]
    center_add = np.zeros(pool.size, dtype=bool)
    if rest.size:
        center_hit = segment_element_hits(
            p[None, :], node.centroid[None, :], arrays, indices=rest
        )[0]
        if center_hit.any():
            if center_shortcut:
                return pool, True
            center_add[~window_add] = center_hit

    # Corner rays pick up occluders that intrude without covering the center.
    ray_hits = _corner_ray_hits(p, node.vertices, pool, arrays)
    kept_mask = window_add | center_add | ray_hits.any(axis=0)
    kept = pool[kept_mask]
    if kept.size:
        # Union rule: every corner hidden behind some listed blocker.
        if ray_hits[:, kept_mask].any(axis=1).all():
            return kept, True
    return kept, False


def _candidate_pool(
    p,
    active_index: int,
    mesh: SurfaceMesh,
    source_element: int | None,
) -> np.ndarray:
    """Step-one exclusions: self, the element under p, coplanar elements."""
    arr = mesh.arrays()
    n = len(arr)
    mask = np.ones(n, dtype=bool)
    mask[active_index] = False
    if source_element is not None:
        mask[source_element] = False
    n_a = arr.normals[active_index]
    c_a = arr.centroids[active_index]
    parallel = np.linalg.norm(cross3(arr.normals, n_a), axis=1) <= _COPLANAR_RTOL
    offset = np.abs((arr.centroids - c_a) @ n_a)
    scale = np.maximum(arr.diameters, arr.diameters[active_index])
    mask &= ~(parallel & (offset <= _COPLANAR_RTOL * scale))
    return np.nonzero(mask)[0]


def build_blocking_list(
    p,
    active_index: int,
    mesh: SurfaceMesh,
    source_element: int | None = None,
    use_culls: bool = True,
):
    """Potential occluders of one active element, or EARLY_BLOCKED.

    With use_culls=False the geometric screens are skipped and every
    candidate surviving the basic exclusions is listed; classification
    downstream is unchanged because classify_visibility re-screens its root.
    """
    p = as_point(p)
    pool = _candidate_pool(p, active_index, mesh, source_element)
    if not use_culls:
        return BlockingList(point=p, active_index=active_index, blockers=tuple(pool))
    kept, early = _screen(p, mesh.elements[active_index], pool, mesh.arrays())
    if early:
        return EARLY_BLOCKED
    return BlockingList(point=p, active_index=active_index, blockers=tuple(int(i) for i in kept))


def screen_active_set(
    p,
    active_indices,
    mesh: SurfaceMesh,
    source_element: int | None = None,
    use_culls: bool = True,
    pair_chunk: int = 1 << 18,
):
    """Blocking-list outcomes for the whole active set of one source point.

    Returns a list parallel to active_indices whose entries are either
    EARLY_BLOCKED or the tuple of kept blocker indices, matching what
    build_blocking_list yields pair by pair; the batch form shares the
    cylinder, window, and ray-cast work across all actives, and the vertex
    window runs only over (active, candidate) pairs inside the cylinder.
    pair_chunk bounds the memory of that sweep.
    """
    p = as_point(p)
    arr = mesh.arrays()
    act = np.asarray(active_indices, dtype=int)
    if act.size == 0:
        return []

    keep = np.ones((act.size, len(arr)), dtype=bool)
    keep[np.arange(act.size), act] = False
    if source_element is not None:
        keep[:, source_element] = False
    n_a = arr.normals[act]                              # (A, 3)
    parallel = (
        np.linalg.norm(cross3(n_a[:, None, :], arr.normals[None, :, :]), axis=-1)
        <= _COPLANAR_RTOL
    )
    offset = np.abs(
        np.einsum("aj,ej->ae", n_a, arr.centroids)
        - np.einsum("aj,aj->a", n_a, arr.centroids[act])[:, None]
    )
    scale = np.maximum(arr.diameters[None, :], arr.diameters[act][:, None])
    keep &= ~(parallel & (offset <= _COPLANAR_RTOL * scale))
    if not use_culls:
        return [tuple(int(i) for i in np.nonzero(row)[0]) for row in keep]

    cents = arr.centroids[act]
    axis = cents - p                                    # (A, 3)
    h = np.linalg.norm(axis, axis=1)
    axhat = axis / h[:, None]

    rel = arr.centroids - p                             # (E, 3)
    tax = axhat @ rel.T                                 # (A, E)
    rad2 = np.einsum("ej,ej->e", rel, rel)[None, :] - tax**2
    reach = arr.circumradii[None, :]
    r_cyl = arr.circumradii[act][:, None] + reach
    pool = keep & (tax >= -reach) & (tax <= h[:, None] + reach) & (rad2 <= r_cyl**2)

    gaps = np.einsum("aj,aj->a", n_a, axis)
    averts = arr.vertices[act]
    tols = EDGE_INCLUSION_RTOL * arr.diameters[act] ** 2
    window = np.zeros_like(pool)
    rows_idx, cols_idx = np.nonzero(pool)
    for lo in range(0, rows_idx.size, pair_chunk):
        rows = rows_idx[lo : lo + pair_chunk]
        cols = cols_idx[lo : lo + pair_chunk]
        nr = n_a[rows]                                  # (P, 3)
        rv = arr.vertices[cols] - p                     # (P, 4, 3)
        denom = np.einsum("pj,pvj->pv", nr, rv)
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = gaps[rows][:, None] / denom
        valid = np.isfinite(tau) & (tau > 1.0 + _PYRAMID_TAU_MARGIN)
        tau = np.where(valid, tau, 0.0)
        land = p + tau[..., None] * rv                  # (P, 4, 3)
        pverts = averts[rows]
        ptols = tols[rows][:, None]
        inside = valid
        for i in range(4):
            a = pverts[:, i]
            b = pverts[:, (i + 1) % 4]
            edge = b - a
            degenerate = (np.einsum("pj,pj->p", edge, edge) == 0.0)[:, None]
            en = cross3(nr, edge)                       # (P, 3)
            side = np.einsum("pvj,pj->pv", land - a[:, None, :], en)
            inside = inside & (degenerate | (side > ptols))
        window[rows, cols] = inside.any(axis=1)

    # Only columns pooled by some active can matter to any later probe.
    cols_any = np.nonzero(pool.any(axis=0))[0]
    colpos = np.full(len(arr), -1, dtype=int)
    colpos[cols_any] = np.arange(cols_any.size)

    early = np.zeros(act.size, dtype=bool)
    if cols_any.size:
        chits = np.zeros_like(pool)
        chits[:, cols_any] = segment_element_hits(
            np.broadcast_to(p, cents.shape), cents, arr, indices=cols_any
        )
        early = (chits & pool & ~window).any(axis=1)

    # Corner rays: every corner of a root active is a mesh node, so one
    # dense cast from p to the nodes in play serves all actives at once.
    alive = [row for row in range(act.size) if not early[row] and pool[row].any()]
    pos: dict[int, int] = {}
    nhits = None
    if alive:
        need = sorted({n for row in alive for n in mesh.element_nodes[int(act[row])]})
        pos = {n: s for s, n in enumerate(need)}
        ends = mesh.nodes[need]
        nhits = segment_element_hits(
            np.broadcast_to(p, ends.shape), ends, arr, indices=cols_any
        )                                               # (S, |cols|)

    results = []
    for row, k in enumerate(act):
        if early[row]:
            results.append(EARLY_BLOCKED)
            continue
        pool_i = np.nonzero(pool[row])[0]
        if pool_i.size == 0:
            results.append(())
            continue
        corner_rows = [pos[n] for n in mesh.element_nodes[int(k)]]
        ray_hits = nhits[np.ix_(corner_rows, colpos[pool_i])]
        kept_mask = window[row][pool_i] | ray_hits.any(axis=0)
        kept = pool_i[kept_mask]
        if kept.size and ray_hits[:, kept_mask].any(axis=1).all():
            results.append(EARLY_BLOCKED)
            continue
        results.append(tuple(int(i) for i in kept))
    return results


def classify_visibility(
    p,
    blockers: BlockingList,
    mesh: SurfaceMesh,
    budget: SubdivisionBudget | None = None,
) -> VisibilityReport:
    """Quadtree classification of the visible part of an active element.

    Every node, the root included, is re-screened against its inherited
    candidate list; an empty list makes the node fully visible, a covered
    view makes it fully blocked, anything else subdivides until the area or
    depth budget runs out and the residual leaf is classified by its
    centroid ray.
    """
    p = as_point(p)
    budget = budget if budget is not None else SubdivisionBudget()
    element = mesh.elements[blockers.active_index]
    min_area = budget.resolve_min_area(element)
    arrays = mesh.arrays()

    root_candidates = np.asarray(blockers.blockers, dtype=int)
    kept, early = _screen(p, element, root_candidates, arrays)
    if early:
        return VisibilityReport(Classification.FULLY_BLOCKED, (), 0.0, 0)
    if kept.size == 0:
        return VisibilityReport(Classification.FULLY_VISIBLE, (), 1.0, 0)

    visible: list[SubElement] = []
    visible_area = 0.0
    depth_reached = 0
    stack = [(element, full_patch(element), kept, 0)]
    while stack:
        node, patch, cands, depth = stack.pop()
        depth_reached = max(depth_reached, depth)
        if depth > 0:
            cands, early = _screen(p, node, cands, arrays, center_shortcut=False)
            if early:
                continue
            if cands.size == 0:
                visible_area += node.area
                visible.append(SubElement(node, patch))
                continue
        if depth < budget.max_depth and node.area >= min_area:
            for child, child_patch in zip(subdivide4(node), split_patch(patch)):
                stack.append((child, child_patch, cands, depth + 1))
            continue
        hit = segment_element_hits(
            p[None, :], node.centroid[None, :], arrays, indices=cands
        ).any()
        if not hit:
            visible_area += node.area
            visible.append(SubElement(node, patch))

    fraction = min(visible_area / element.area, 1.0)
    if visible_area == 0.0:
        return VisibilityReport(Classification.FULLY_BLOCKED, (), 0.0, depth_reached)
    return VisibilityReport(
        Classification.PARTIALLY_VISIBLE, tuple(visible), fraction, depth_reached
    )


def chi_point(p, r, mesh: SurfaceMesh) -> int:
    """Unobstructed-sight indicator between two points, endpoint-exclusive."""
    p = as_point(p)
    r = as_point(r)
    hits = segment_element_hits(p[None, :], r[None, :], mesh.arrays())
    return 0 if bool(hits.any()) else 1
