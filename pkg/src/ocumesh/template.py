"""Procedural eyeball template meshes with semantic vertex regions.

The template is an open UV sphere of unit radius in a canonical frame:
eyeball center at the origin and the optical axis pointing along -z
(toward the camera).  Vertex 0 is the anterior apex (pupil center),
followed by ``stacks - 1`` rings of ``sectors`` vertices ordered from the
apex toward the open posterior pole.  The missing posterior cap leaves a
single boundary loop of ``sectors`` vertices, which is never observed in
images.  For the default 32 x 16 resolution this yields 481 vertices and
928 triangles.

Left and right templates are exact mirror images across the x = 0 plane
with triangle winding flipped, so both are consistently outward oriented.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

REGION_NAMES = ("iris", "iris_border", "cornea", "sclera", "apex")


@dataclass
class EyeballTemplate:
    """Canonical rigid eyeball mesh for one side.

    Arrays are set read-only after construction; templates are immutable
    values and safe to share across threads.
    """

    side: str
    vertices: np.ndarray  # (N_v, 3) float64, unit radius
    triangles: np.ndarray  # (N_t, 3) int32, consistently wound
    region_labels: dict[str, np.ndarray]  # region name -> sorted vertex indices
    optical_axis: np.ndarray  # unit 3-vector, canonical gaze direction
    sectors: int
    stacks: int
    edge_vertex_pairs: np.ndarray = field(init=False)  # (3*N_t, 2), triangle order

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        tri = self.triangles
        # Per-triangle edges (v0 v1, v1 v2, v2 v0), one row per edge slot.
        pairs = np.stack(
            [
                np.stack([tri[:, 0], tri[:, 1]], axis=1),
                np.stack([tri[:, 1], tri[:, 2]], axis=1),
                np.stack([tri[:, 2], tri[:, 0]], axis=1),
            ],
            axis=1,
        ).reshape(-1, 2)
        self.edge_vertex_pairs = np.ascontiguousarray(pairs, dtype=np.int32)
        for arr in (self.vertices, self.triangles, self.edge_vertex_pairs):
            arr.setflags(write=False)
        for key in self.region_labels:
            idx = np.ascontiguousarray(np.sort(self.region_labels[key]), dtype=np.int32)
            idx.setflags(write=False)
            self.region_labels[key] = idx

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def topology_key(self) -> tuple:
        digest = hashlib.sha1(self.triangles.tobytes()).hexdigest()
        return (self.n_vertices, self.n_triangles, digest)

    @property
    def unit_edge_lengths(self) -> np.ndarray:
        """Edge lengths of the canonical template itself, cached."""
        cached = getattr(self, "_unit_edge_lengths", None)
        if cached is None:
            cached = self.edge_lengths_of(self.vertices)
            cached.setflags(write=False)
            self._unit_edge_lengths = cached
        return cached

    def edge_lengths_of(self, vertices: np.ndarray) -> np.ndarray:
        """Edge-length vector (3*N_t,) of a posed copy of this topology."""
        a = vertices[self.edge_vertex_pairs[:, 0]]
        b = vertices[self.edge_vertex_pairs[:, 1]]
        return np.linalg.norm(a - b, axis=1)


@dataclass
class MeshValidationReport:
    """Pure-data summary of a template's structural health."""

    vertex_count: int
    triangle_count: int
    boundary_loops: list[list[int]]
    max_radius_deviation: float
    is_mirror_consistent: bool


def _ring_indices(sectors: int, ring: int) -> np.ndarray:
    start = 1 + (ring - 1) * sectors
    return np.arange(start, start + sectors, dtype=np.int32)


def _build_regions(sectors: int, stacks: int) -> dict[str, np.ndarray]:
    # Iris spans polar angles up to ~22.5 degrees (1/8 of the meridian),
    # the cornea the next ring, the sclera everything behind it.  The
    # split is not load bearing; algorithms address regions by name.
    n_rings = stacks - 1
    k_iris = max(1, min(n_rings, round(stacks / 8)))
    k_cornea_end = min(n_rings, k_iris + 1)

    def rings(lo, hi):
        if hi < lo:
            return np.empty(0, dtype=np.int32)
        return np.concatenate([_ring_indices(sectors, k) for k in range(lo, hi + 1)])

    apex = np.array([0], dtype=np.int32)
    iris = np.concatenate([apex, rings(1, k_iris)])
    iris_border = _ring_indices(sectors, k_iris)
    cornea = rings(k_iris, k_cornea_end)
    sclera = rings(k_cornea_end + 1, n_rings)
    return {
        "iris": iris,
        "iris_border": iris_border,
        "cornea": cornea,
        "sclera": sclera,
        "apex": apex,
    }


def build_template(sectors: int = 32, stacks: int = 16, side: str = "left") -> EyeballTemplate:
    """Generate the open UV-sphere template.

    Vertex count is ``(stacks - 1) * sectors + 1`` and triangle count
    ``sectors + 2 * sectors * (stacks - 2)``; the default (32, 16) gives
    481 vertices and 928 triangles with one 32-vertex boundary loop at the
    open posterior pole.  Construction is deterministic: identical inputs
    produce bit-identical meshes.
    """
    if not isinstance(sectors, (int, np.integer)) or sectors < 3:
        raise ParameterError(f"sectors must be an int >= 3, got {sectors!r}")
    if not isinstance(stacks, (int, np.integer)) or stacks < 2:
        raise ParameterError(f"stacks must be an int >= 2, got {stacks!r}")
    if side not in ("left", "right"):
        raise ParameterError(f"side must be 'left' or 'right', got {side!r}")

    verts = [np.array([0.0, 0.0, -1.0])]
    for k in range(1, stacks):
        theta = np.pi * k / stacks
        st, ct = np.sin(theta), np.cos(theta)
        for j in range(sectors):
            phi = 2.0 * np.pi * j / sectors
            verts.append(np.array([st * np.cos(phi), st * np.sin(phi), -ct]))
    vertices = np.array(verts)

    def vid(ring, j):
        return 1 + (ring - 1) * sectors + (j % sectors)

    tris = []
    for j in range(sectors):
        # Anterior cap, wound so the face normal points outward.
        tris.append((0, vid(1, j + 1), vid(1, j)))
    for k in range(1, stacks - 1):
        for j in range(sectors):
            a, b = vid(k, j), vid(k, j + 1)
            c, d = vid(k + 1, j), vid(k + 1, j + 1)
            tris.append((a, b, d))
            tris.append((a, d, c))
    triangles = np.array(tris, dtype=np.int32)

    if side == "right":
        vertices = vertices.copy()
        vertices[:, 0] *= -1.0
        triangles = triangles[:, [0, 2, 1]].copy()

    return EyeballTemplate(
        side=side,
        vertices=vertices,
        triangles=triangles,
        region_labels=_build_regions(sectors, stacks),
        optical_axis=np.array([0.0, 0.0, -1.0]),
        sectors=sectors,
        stacks=stacks,
    )


def default_templates() -> dict[str, EyeballTemplate]:
    return {"left": build_template(side="left"), "right": build_template(side="right")}


def region_indices(t: EyeballTemplate, region: str) -> np.ndarray:
    """Sorted vertex indices of a named region; apex is always {0}."""
    if region not in REGION_NAMES:
        raise ParameterError(f"unknown region {region!r}, expected one of {REGION_NAMES}")
    return t.region_labels[region].copy()


def boundary_loops(triangles: np.ndarray, n_vertices: int) -> list[list[int]]:
    """Vertex cycles of edges referenced by exactly one triangle."""
    counts: dict[tuple[int, int], int] = {}
    directed: dict[tuple[int, int], tuple[int, int]] = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
            directed[key] = (int(a), int(b))
    border = [directed[k] for k, c in counts.items() if c == 1]
    succ: dict[int, list[int]] = {}
    for a, b in border:
        succ.setdefault(a, []).append(b)

    loops = []
    unused = {pair for pair in border}
    while unused:
        start_edge = min(unused)
        unused.discard(start_edge)
        loop = [start_edge[0]]
        cur = start_edge[1]
        while cur != loop[0]:
            loop.append(cur)
            nxt = None
            for cand in succ.get(cur, []):
                if (cur, cand) in unused:
                    nxt = cand
                    break
            if nxt is None:
                break  # open chain; report what we walked
            unused.discard((cur, nxt))
            cur = nxt
        loops.append(loop)
    loops.sort(key=lambda lp: (len(lp), lp))
    return loops


def _mirror_consistent(t: EyeballTemplate, tol: float = 1e-9) -> bool:
    """True when negating x maps the vertex set bijectively onto itself and
    the boundary vertices onto boundary vertices.

    The quad-split diagonals of the triangulation are chiral, so the
    triangle set itself is not mirror invariant; the index-level pairing
    between the left and right templates (same indices, flipped winding)
    is a cross-template property checked against both sides instead.
    """
    V = t.vertices
    W = V.copy()
    W[:, 0] *= -1.0
    d2 = ((W[:, None, :] - V[None, :, :]) ** 2).sum(axis=2)
    perm = np.argmin(d2, axis=1)
    if np.max(np.sqrt(d2[np.arange(len(V)), perm])) > tol:
        return False
    if len(np.unique(perm)) != len(V):
        return False
    boundary = {v for loop in boundary_loops(t.triangles, t.n_vertices) for v in loop}
    return {int(perm[v]) for v in boundary} == boundary


def validate(t: EyeballTemplate) -> MeshValidationReport:
    """Structural report computed by direct mesh traversal; never raises."""
    radii = np.linalg.norm(t.vertices, axis=1)
    return MeshValidationReport(
        vertex_count=t.n_vertices,
        triangle_count=t.n_triangles,
        boundary_loops=boundary_loops(t.triangles, t.n_vertices),
        max_radius_deviation=float(np.max(np.abs(radii - 1.0))),
        is_mirror_consistent=_mirror_consistent(t),
    )
