"""Planar graphs with a rotation system, their duals, and edge surgery.

Half-edge ``h`` of edge ``e`` runs ``edges[e, 0] -> edges[e, 1]`` when
``h == 2 * e`` and the reverse way when ``h == 2 * e + 1``, so the twin of
``h`` is ``h ^ 1``.  Each vertex stores its outgoing half-edges in
counter-clockwise order.  The face to the left of ``h`` continues with the
half-edge that follows ``twin(h)`` clockwise around the head of ``h``, so
bounded faces are traversed counter-clockwise and the outer face clockwise.

Positions are only used to build rotations in the lattice constructors and
to pick the outer face; everything downstream reads the rotation system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs or unsupported graph operations."""


@dataclass(frozen=True)
class SiteGraph:
    """Height-model view of a graph: free sites plus one pinned ground site.

    Sites ``0 .. n-1`` are free; index ``n`` is the ground, which carries
    the fixed boundary value.  ``edges`` may contain the ground and may
    repeat pairs (parallel edges simply add their energies).
    """

    n: int
    edges: np.ndarray
    coupling: np.ndarray
    pos: np.ndarray
    labels: np.ndarray

    @property
    def ground(self) -> int:
        return self.n

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Per free site, a list of ``(neighbor, edge)`` pairs."""
        nb: list[list[tuple[int, int]]] = [[] for _ in range(self.n + 1)]
        for k, (a, b) in enumerate(self.edges):
            nb[a].append((int(b), k))
            nb[b].append((int(a), k))
        return nb[: self.n]

    def laplacian(self) -> np.ndarray:
        """Dirichlet Laplacian ``-Delta`` on free sites, weighted by coupling."""
        m = np.zeros((self.n, self.n))
        for (a, b), j in zip(self.edges, self.coupling):
            if a == b:
                continue
            for s, t in ((a, b), (b, a)):
                if s < self.n:
                    m[s, s] += j
                    if t < self.n:
                        m[s, t] -= j
        return m


@dataclass
class PlanarGraph:
    pos: np.ndarray
    edges: np.ndarray
    coupling: np.ndarray
    boundary: np.ndarray
    rotation: list[list[int]]
    mediating: np.ndarray = None
    kind: str = "generic"
    outer_hint: int | None = None
    _faces: list[list[int]] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 2)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.coupling = np.asarray(self.coupling, dtype=float).reshape(-1)
        self.boundary = np.asarray(self.boundary, dtype=bool).reshape(-1)
        if self.mediating is None:
            self.mediating = np.zeros(self.n_vertices, dtype=bool)
        self.mediating = np.asarray(self.mediating, dtype=bool)
        self.rotation = [list(map(int, r)) for r in self.rotation]
        self._build()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_geometry(cls, pos, edges, coupling=None, boundary=None, **kw) -> "PlanarGraph":
        """Build the rotation system by sorting outgoing edges by angle.

        If ``boundary`` is None, the vertices on the outer face are used.
        """
        pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if coupling is None:
            coupling = np.ones(len(edges))
        rotation = _rotation_from_geometry(pos, edges)
        bnd = np.zeros(len(pos), dtype=bool) if boundary is None else boundary
        g = cls(pos, edges, coupling, bnd, rotation, **kw)
        if boundary is None:
            g.boundary = g.outer_vertices_mask()
        return g

    def _build(self) -> None:
        V, E = self.n_vertices, self.n_edges
        if np.any(self.edges < 0) or np.any(self.edges >= max(V, 1)):
            raise GraphError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise GraphError("self-loops are not supported")
        if len(self.coupling) != E:
            raise GraphError("one coupling per edge is required")
        if np.any(~(self.coupling > 0)):
            raise GraphError("couplings must be positive")
        if len(self.rotation) != V or len(self.boundary) != V:
            raise GraphError("rotation and boundary need one entry per vertex")
        origin = np.empty(2 * E, dtype=np.int64)
        origin[0::2] = self.edges[:, 0]
        origin[1::2] = self.edges[:, 1]
        self.origin = origin
        rot_next = np.full(2 * E, -1, dtype=np.int64)
        rot_prev = np.full(2 * E, -1, dtype=np.int64)
        seen = np.zeros(2 * E, dtype=bool)
        for v, rot in enumerate(self.rotation):
            for i, h in enumerate(rot):
                if not 0 <= h < 2 * E or origin[h] != v or seen[h]:
                    raise GraphError(f"rotation at vertex {v} is not a permutation of its half-edges")
                seen[h] = True
                rot_next[h] = rot[(i + 1) % len(rot)]
                rot_prev[rot[(i + 1) % len(rot)]] = h
        if not seen.all():
            raise GraphError("some half-edges are missing from the rotation system")
        self.rot_next = rot_next
        self.rot_prev = rot_prev
        self.face_next = rot_prev[np.arange(2 * E) ^ 1] if E else rot_next
        self._faces = None

    # -- basic accessors ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.pos)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def twin(self, h: int) -> int:
        return h ^ 1

    def head(self, h: int) -> int:
        return int(self.origin[h ^ 1])

    def degree(self) -> np.ndarray:
        return np.array([len(r) for r in self.rotation], dtype=np.int64)

    def half_edge(self, u: int, v: int) -> int:
        """Half-edge from ``u`` to ``v`` (the first one if there are parallels)."""
        for h in self.rotation[u]:
            if self.head(h) == v:
                return h
        raise GraphError(f"no edge {u}->{v}")

    # -- faces ----------------------------------------------------------------

    @property
    def faces(self) -> list[list[int]]:
        """Half-edge cycles, one per face, each with the face on its left."""
        if self._faces is None:
            self._trace_faces()
        return self._faces

    def _trace_faces(self) -> None:
        E2 = 2 * self.n_edges
        face_of = np.full(E2, -1, dtype=np.int64)
        faces: list[list[int]] = []
        for start in range(E2):
            if face_of[start] >= 0:
                continue
            cyc = []
            h = start
            while face_of[h] < 0:
                face_of[h] = len(faces)
                cyc.append(h)
                h = int(self.face_next[h])
            faces.append(cyc)
        if not faces:
            faces = [[]]
        self._faces = faces
        self.face_of = face_of
        if self.outer_hint is not None and E2:
            self.outer_face = int(face_of[self.outer_hint])
        else:
            areas = [self._signed_area(c) for c in faces]
            self.outer_face = int(np.argmin(areas))

    def _signed_area(self, cycle: list[int]) -> float:
        if not cycle:
            return -math.inf
        p = self.pos[self.origin[cycle]]
        q = np.roll(p, -1, axis=0)
        return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def left_face(self, h: int) -> int:
        self.faces
        return int(self.face_of[h])

    def right_face(self, h: int) -> int:
        return self.left_face(h ^ 1)

    def face_vertices(self, f: int) -> list[int]:
        return [int(self.origin[h]) for h in self.faces[f]]

    def outer_vertices_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        self.faces
        if self.n_edges == 0:
            mask[:] = True
            return mask
        mask[self.face_vertices(self.outer_face)] = True
        return mask

    def n_components(self) -> int:
        parent = list(range(self.n_vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for u, v in self.edges:
            parent[find(int(u))] = find(int(v))
        return len({find(v) for v in range(self.n_vertices)})

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def check(self) -> None:
        """Validate the invariants; raises :class:`GraphError` on failure."""
        E2 = 2 * self.n_edges
        h = np.arange(E2)
        if E2 and not np.array_equal((h ^ 1) ^ 1, h):
            raise GraphError("twin is not an involution")
        if E2 and not np.array_equal(np.sort(self.rot_next), h):
            raise GraphError("rotation is not a permutation")
        if np.any(self.coupling <= 0):
            raise GraphError("couplings must be positive")
        if self.n_components() == 1 and self.euler_characteristic() != 2:
            raise GraphError("rotation system is not planar (V - E + F != 2)")

    # -- height-model view ----------------------------------------------------

    def sites(self) -> SiteGraph:
        """Free sites are the non-boundary vertices; boundary vertices are ground."""
        free = np.flatnonzero(~self.boundary)
        order = free[np.lexsort((self.pos[free, 0], self.pos[free, 1]))]
        idx = np.full(self.n_vertices, len(order), dtype=np.int64)
        idx[order] = np.arange(len(order))
        keep = ~(self.boundary[self.edges[:, 0]] & self.boundary[self.edges[:, 1]])
        return SiteGraph(
            n=len(order),
            edges=idx[self.edges[keep]],
            coupling=self.coupling[keep].copy(),
            pos=self.pos[order].copy(),
            labels=order,
        )

    def site_index(self, v: int) -> int:
        s = self.sites()
        hit = np.flatnonzero(s.labels == v)
        if len(hit) == 0:
            raise GraphError(f"vertex {v} is a boundary vertex")
        return int(hit[0])

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "outer_hint": self.outer_hint,
            "vertices": [
                {"id": i, "x": float(p[0]), "y": float(p[1]), "boundary": bool(b), "mediating": bool(m)}
                for i, (p, b, m) in enumerate(zip(self.pos, self.boundary, self.mediating))
            ],
            "edges": [
                {"id": k, "u": int(u), "v": int(v), "coupling": float(c)}
                for k, ((u, v), c) in enumerate(zip(self.edges, self.coupling))
            ],
            "rotation": self.rotation,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PlanarGraph":
        doc = json.loads(text)
        vs = sorted(doc["vertices"], key=lambda d: d["id"])
        es = sorted(doc["edges"], key=lambda d: d["id"])
        return cls(
            pos=[(d["x"], d["y"]) for d in vs],
            edges=[(d["u"], d["v"]) for d in es],
            coupling=[d["coupling"] for d in es],
            boundary=[d["boundary"] for d in vs],
            mediating=[d.get("mediating", False) for d in vs],
            rotation=doc["rotation"],
            kind=doc.get("kind", "generic"),
            outer_hint=doc.get("outer_hint"),
        )

    def same_as(self, other: "PlanarGraph") -> bool:
        return (
            np.array_equal(self.pos, other.pos)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.coupling, other.coupling)
            and np.array_equal(self.boundary, other.boundary)
            and np.array_equal(self.mediating, other.mediating)
            and self.rotation == other.rotation
        )


def _rotation_from_geometry(pos: np.ndarray, edges: np.ndarray) -> list[list[int]]:
    out: list[list[tuple[float, int]]] = [[] for _ in range(len(pos))]
    for e, (u, v) in enumerate(edges):
        for h, a, b in ((2 * e, u, v), (2 * e + 1, v, u)):
            d = pos[b] - pos[a]
            out[a].append((math.atan2(d[1], d[0]), h))
    rot = []
    for v, lst in enumerate(out):
        lst.sort()
        angles = [a for a, _ in lst]
        if any(abs(angles[i + 1] - angles[i]) < 1e-12 for i in range(len(angles) - 1)):
            raise GraphError(f"coincident edge directions at vertex {v}; pass an explicit rotation")
        rot.append([h for _, h in lst])
    return rot


# -- lattice constructors -------------------------------------------------------


def build_square_lattice(L: int, coupling: float = 1.0) -> PlanarGraph:
    """The box ``[-L, L]^2`` of the square lattice, outer ring as boundary."""
    return build_periodic_lattice("square", L, coupling)


def build_periodic_lattice(kind: str, L: int, coupling: float = 1.0) -> PlanarGraph:
    """Finite patch of the square, triangular or hexagonal lattice.

    Vertices are indexed in raster order (rows bottom to top).
    """
    if L < 0:
        raise GraphError("L must be non-negative")
    n = 2 * L + 1
    ij = [(i, j) for j in range(-L, L + 1) for i in range(-L, L + 1)]
    vid = {p: k for k, p in enumerate(ij)}
    edges = []
    if kind == "square":
        pos = np.array(ij, dtype=float)
        steps = [(1, 0), (0, 1)]
        for st in steps:
            for p in ij:
                q = (p[0] + st[0], p[1] + st[1])
                if q in vid:
                    edges.append((vid[p], vid[q]))
    elif kind == "triangular":
        pos = np.array([(a + 0.5 * b, b * math.sqrt(3) / 2) for a, b in ij])
        for st in [(1, 0), (0, 1), (-1, 1)]:
            for p in ij:
                q = (p[0] + st[0], p[1] + st[1])
                if q in vid:
                    edges.append((vid[p], vid[q]))
    elif kind == "hexagonal":
        # brick-wall drawing of the honeycomb
        pos = np.array(ij, dtype=float)
        for p in ij:
            q = (p[0] + 1, p[1])
            if q in vid:
                edges.append((vid[p], vid[q]))
        for p in ij:
            q = (p[0], p[1] + 1)
            if q in vid and (p[0] + p[1]) % 2 == 0:
                edges.append((vid[p], vid[q]))
        pos, edges = _prune_pendants(pos, edges)
    else:
        raise GraphError(f"unknown lattice kind {kind!r}")
    if n == 1:
        return PlanarGraph(pos, np.zeros((0, 2)), [], [True], [[]], kind=kind)
    g = PlanarGraph.from_geometry(pos, edges, np.full(len(edges), float(coupling)), kind=kind)
    g.check()
    return g


def _prune_pendants(pos: np.ndarray, edges: list[tuple[int, int]]):
    """Drop degree-one vertices repeatedly so that no edge is a bridge."""
    alive = np.ones(len(pos), dtype=bool)
    edges = list(edges)
    while True:
        deg = np.zeros(len(pos), dtype=int)
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1
        leaves = alive & (deg <= 1)
        if not leaves.any() or alive.sum() <= 2:
            break
        alive &= ~leaves
        edges = [(u, v) for u, v in edges if alive[u] and alive[v]]
    idx = np.cumsum(alive) - 1
    return pos[alive], [(int(idx[u]), int(idx[v])) for u, v in edges]


# -- duality ---------------------------------------------------------------------


@dataclass
class DualGraph:
    """Faces of a connected planar graph as height sites.

    ``graph`` is the dual embedding.  Dual vertex ``i < n_sites`` is the
    bounded face ``face_ids[i]``; dual vertex ``n_sites`` is the boundary class
    (the unbounded face).  Dual edge ``e`` crosses primal edge ``e`` and runs
    from the face on the right of half-edge ``2e`` to the face on its left.
    """

    primal: PlanarGraph
    graph: PlanarGraph
    face_ids: np.ndarray
    n_sites: int

    @property
    def ground(self) -> int:
        return self.n_sites

    @property
    def edges(self) -> np.ndarray:
        return self.graph.edges

    @property
    def coupling(self) -> np.ndarray:
        return self.graph.coupling

    def primal_edge(self, dual_edge: int) -> int:
        return dual_edge

    def site_of_face(self, f: int) -> int:
        hit = np.flatnonzero(self.face_ids == f)
        if len(hit) == 0:
            raise GraphError(f"face {f} is not a dual vertex")
        return int(hit[0])

    def site_at(self, x: float, y: float) -> int:
        """Free site whose face centroid is closest to ``(x, y)``."""
        d = np.hypot(self.graph.pos[: self.n_sites, 0] - x, self.graph.pos[: self.n_sites, 1] - y)
        return int(np.argmin(d))

    def sites(self) -> SiteGraph:
        return SiteGraph(
            n=self.n_sites,
            edges=self.graph.edges.copy(),
            coupling=self.graph.coupling.copy(),
            pos=self.graph.pos[: self.n_sites].copy(),
            labels=self.face_ids[: self.n_sites].copy(),
        )

    def interior_adjacency(self) -> set[tuple[int, int]]:
        out = set()
        for a, b in self.graph.edges:
            if a < self.n_sites and b < self.n_sites:
                out.add((min(a, b), max(a, b)))
        return out


def dual(g: PlanarGraph | DualGraph) -> DualGraph:
    if isinstance(g, DualGraph):
        g = g.graph
    if g.n_edges == 0 or g.n_components() != 1:
        raise GraphError("dual requires a connected graph with at least one edge")
    faces = g.faces
    outer = g.outer_face
    if any(g.left_face(2 * e) == g.right_face(2 * e) for e in range(g.n_edges)):
        raise GraphError("dual requires a bridgeless graph")
    bounded = [f for f in range(len(faces)) if f != outer]
    cent = np.array([g.pos[g.face_vertices(f)].mean(axis=0) for f in bounded]).reshape(-1, 2)
    order = np.lexsort((cent[:, 0], cent[:, 1])) if len(bounded) else np.zeros(0, dtype=int)
    face_ids = np.array([bounded[k] for k in order] + [outer], dtype=np.int64)
    new_of = np.empty(len(faces), dtype=np.int64)
    new_of[face_ids] = np.arange(len(faces))
    E = g.n_edges
    dual_edges = np.empty((E, 2), dtype=np.int64)
    for e in range(E):
        dual_edges[e, 0] = new_of[g.right_face(2 * e)]
        dual_edges[e, 1] = new_of[g.left_face(2 * e)]
    rotation = [[h ^ 1 for h in faces[f]] for f in face_ids]
    lo, hi = g.pos.min(axis=0), g.pos.max(axis=0)
    far = np.array([[(lo[0] + hi[0]) / 2, hi[1] + 10.0 * (1.0 + hi[1] - lo[1])]])
    pos = np.vstack([cent[order], far])
    boundary = np.zeros(len(faces), dtype=bool)
    boundary[-1] = True
    # the dual face around a primal vertex v lies to the left of any dual
    # half-edge with the same index as a primal half-edge leaving v
    v0 = int(np.flatnonzero(g.boundary)[0]) if g.boundary.any() else 0
    hint = g.rotation[v0][0]
    dg_graph = PlanarGraph(pos, dual_edges, g.coupling.copy(), boundary, rotation, kind=f"dual-{g.kind}", outer_hint=hint)
    return DualGraph(primal=g, graph=dg_graph, face_ids=face_ids, n_sites=len(faces) - 1)


# -- surgery ---------------------------------------------------------------------


def subdivide_edges(g: PlanarGraph, split) -> PlanarGraph:
    """Replace every edge by a path whose couplings are ``coupling * split``.

    The first factor sits next to ``edges[e, 0]``.  New vertices are flagged
    as mediating and never as boundary.
    """
    split = [float(s) for s in split]
    if not split or any(not s > 0 for s in split):
        raise GraphError("split must be a non-empty list of positive factors")
    k = len(split)
    if k == 1:
        return PlanarGraph(
            g.pos.copy(), g.edges.copy(), g.coupling * split[0], g.boundary.copy(),
            [list(r) for r in g.rotation], g.mediating.copy(), g.kind, g.outer_hint,
        )
    V, E = g.n_vertices, g.n_edges
    pos = [tuple(p) for p in g.pos]
    boundary = list(g.boundary)
    mediating = list(g.mediating)
    edges: list[tuple[int, int]] = []
    coup: list[float] = []
    # new half-edge standing in for the old half-edge at each endpoint
    replace = {}
    rotation_new: list[list[int]] = [None] * V
    extra_rot: list[list[int]] = []
    for e in range(E):
        u, v = map(int, g.edges[e])
        chain = [u]
        for i in range(1, k):
            t = i / k
            pos.append(tuple((1 - t) * g.pos[u] + t * g.pos[v]))
            boundary.append(False)
            mediating.append(True)
            chain.append(V + len(extra_rot))
            extra_rot.append([])
        chain.append(v)
        first = len(edges)
        for i in range(k):
            edges.append((chain[i], chain[i + 1]))
            coup.append(g.coupling[e] * split[i])
        last = len(edges) - 1
        replace[2 * e] = 2 * first
        replace[2 * e + 1] = 2 * last + 1
        for i in range(1, k):
            w = chain[i] - V
            extra_rot[w] = [2 * (first + i - 1) + 1, 2 * (first + i)]
    for v in range(V):
        rotation_new[v] = [replace[h] for h in g.rotation[v]]
    hint = None if g.outer_hint is None else replace[g.outer_hint]
    out = PlanarGraph(
        np.array(pos), np.array(edges), np.array(coup), np.array(boundary),
        rotation_new + extra_rot, np.array(mediating), g.kind + "-subdivided", hint,
    )
    return out


@dataclass
class MergeRecord:
    """How a degree-reduced graph was obtained from a subdivided one.

    ``vertex_map[i]`` is the reduced vertex holding subdivided vertex ``i``
    (or -1 if it was dropped).  ``groups`` lists the subdivided vertices that
    were forced to share one value.
    """

    subdivided: PlanarGraph
    groups: list[tuple[int, ...]]
    vertex_map: np.ndarray
    dropped_edges: list[int]
    split: list[float]


def _quotient(g: PlanarGraph, groups: list[tuple[int, ...]], drop_edges=(), group_pos=None) -> tuple[PlanarGraph, np.ndarray]:
    """Identify each group of vertices; parallel edges merge by adding couplings.

    Merged vertices sit at ``group_pos`` if given, else at the centroid.
    """
    drop = set(int(e) for e in drop_edges)
    keep_v = np.ones(g.n_vertices, dtype=bool)
    rep = np.arange(g.n_vertices)
    for grp in groups:
        for v in grp:
            rep[v] = grp[0]
    used = set()
    for e in range(g.n_edges):
        if e not in drop:
            used.update((int(rep[g.edges[e, 0]]), int(rep[g.edges[e, 1]])))
    for v in range(g.n_vertices):
        if rep[v] == v and v not in used and g.n_edges:
            keep_v[v] = False
    reps = [v for v in range(g.n_vertices) if rep[v] == v and keep_v[v]]
    new_id = {v: i for i, v in enumerate(reps)}
    members: dict[int, list[int]] = {v: [] for v in reps}
    for v in range(g.n_vertices):
        if rep[v] in members:
            members[int(rep[v])].append(v)
    vmap = np.array([new_id.get(int(rep[v]), -1) for v in range(g.n_vertices)], dtype=np.int64)
    placed = {}
    if group_pos is not None:
        for grp, p in zip(groups, group_pos):
            placed[grp[0]] = np.asarray(p, dtype=float)
    pos = np.array([placed[v] if v in placed else g.pos[members[v]].mean(axis=0) for v in reps])
    boundary = np.array([g.boundary[members[v]].any() for v in reps])
    mediating = np.array([g.mediating[members[v]].all() for v in reps])
    acc: dict[tuple[int, int], float] = {}
    for e in range(g.n_edges):
        if e in drop:
            continue
        a, b = int(vmap[g.edges[e, 0]]), int(vmap[g.edges[e, 1]])
        if a == b:
            raise GraphError("merge would create a self-loop")
        key = (a, b) if a < b else (b, a)
        acc[key] = acc.get(key, 0.0) + float(g.coupling[e])
    edges = list(acc.keys())
    out = PlanarGraph.from_geometry(pos, edges, [acc[k] for k in edges], boundary, mediating=mediating, kind=g.kind)
    out.check()
    return out, vmap


def degree_reduce(g: PlanarGraph) -> tuple[PlanarGraph, MergeRecord]:
    """Subdivide edges and merge mediating vertices until max degree is 3.

    For the square lattice each edge is split with factors (3/2, 3) and the
    east and north mid-edge vertices of every site are merged, giving a
    honeycomb with all couplings tripled.  On the top row and right column
    the mid-edge vertex has no partner; it sits between two boundary sites
    and is made a boundary site itself.  Other graphs use ``r = 2 * ceil(log2 d)``
    equal parts and a balanced binary tree of merges at each vertex.
    """
    deg = g.degree()
    dmax = int(deg.max()) if len(deg) else 0
    if dmax <= 3:
        rec = MergeRecord(g, [], np.arange(g.n_vertices), [], [1.0])
        return g, rec
    if g.kind == "square":
        return _reduce_square(g)
    ell = math.ceil(math.log2(dmax))
    r = 2 * ell
    split = [float(r)] * r
    sub = subdivide_edges(g, split)
    E = g.n_edges
    k = r
    # vertex at distance i (1..r-1) from edges[e,0] along edge e
    V = g.n_vertices

    def along(e: int, v: int, level: int) -> int:
        i = level if int(g.edges[e, 0]) == v else k - level
        return V + e * (k - 1) + (i - 1)

    groups: list[tuple[int, ...]] = []
    group_pos: list[np.ndarray] = []
    for v in range(V):
        if deg[v] <= 3:
            continue
        star = [h // 2 for h in g.rotation[v]]
        # unwrapped counter-clockwise edge directions, used to place merged sites
        ang = []
        for h in g.rotation[v]:
            d = g.pos[g.head(h)] - g.pos[v]
            a = math.atan2(d[1], d[0])
            while ang and a <= ang[-1]:
                a += 2 * math.pi
            ang.append(a)
        angle_of = dict(zip(star, ang))
        reach = float(np.mean([np.hypot(*(g.pos[g.head(h)] - g.pos[v])) for h in g.rotation[v]]))

        def grow(block: list[int], level: int) -> None:
            # the level-th vertices along the edges of ``block`` become one site
            if level >= ell or len(block) <= 1:
                return
            groups.append(tuple(along(e, v, level) for e in block))
            mid = 0.5 * (angle_of[block[0]] + angle_of[block[-1]])
            rad = reach * level / k
            group_pos.append(g.pos[v] + rad * np.array([math.cos(mid), math.sin(mid)]))
            half = (len(block) + 1) // 2
            grow(block[:half], level + 1)
            grow(block[half:], level + 1)

        half = (len(star) + 1) // 2
        grow(star[:half], 1)
        grow(star[half:], 1)
    red, vmap = _quotient(sub, groups, group_pos=group_pos)
    red.kind = f"{g.kind}-reduced"
    return red, MergeRecord(sub, groups, vmap, [], split)


def _reduce_square(g: PlanarGraph) -> tuple[PlanarGraph, MergeRecord]:
    split = [1.5, 3.0]
    sub = subdivide_edges(g, split)
    V = g.n_vertices
    east: dict[int, int] = {}
    north: dict[int, int] = {}
    for e, (u, v) in enumerate(g.edges):
        d = g.pos[v] - g.pos[u]
        mid = V + e
        if abs(d[1]) < 1e-12:
            east[int(u)] = (mid, e)
        else:
            north[int(u)] = (mid, e)
    groups = []
    for v in range(V):
        pe, pn = east.get(v), north.get(v)
        if pe and pn:
            groups.append((pe[0], pn[0]))
            continue
        for p in (pe, pn):
            if p is None:
                continue
            a, b = g.edges[p[1]]
            # an unpaired mid-edge site is only allowed between two boundary sites
            if not (g.boundary[a] and g.boundary[b]):
                raise GraphError("square reduction expects a box with a boundary ring")
            # pinning it only changes the measure by a constant factor
            sub.boundary[p[0]] = True
            sub.mediating[p[0]] = False
    red, vmap = _quotient(sub, groups)
    red.kind = "square-reduced"
    return red, MergeRecord(sub, groups, vmap, [], split)
