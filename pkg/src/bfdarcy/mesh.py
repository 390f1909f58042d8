"""Conforming triangulations of two stacked rectangles and their interface.

The geometry is a Brinkman-Forchheimer rectangle sitting on top of a Darcy
rectangle.  Both share exactly one horizontal side, the interface.  Meshes
are plain triangle soups with a consistent global edge orientation on top,
so that Raviart-Thomas fluxes and edge bubbles mean the same thing from
both sides of every edge.

Edge orientation convention: the intrinsic normal of an interior edge
points from the lower-index to the higher-index incident triangle, and the
normal of a boundary edge points out of its only triangle.  The per
triangle sign ``tri_edge_signs[t, i]`` is +1 when the intrinsic normal of
the edge opposite local vertex ``i`` coincides with the outward normal of
``t`` and -1 otherwise.
"""

from dataclasses import dataclass, field

import numpy as np

# Tags understood by the mesh file format.  The B rectangle's bottom side
# is always the interface, so it never carries a boundary tag of its own.
SUBDOMAIN_TAGS = ("B", "D")
BOUNDARY_TAGS = (
    "GB_LEFT",
    "GB_TOP",
    "GB_RIGHT",
    "GD_LEFT",
    "GD_BOTTOM",
    "GD_RIGHT",
    "SIGMA",
)
GAMMA_B_TAGS = ("GB_LEFT", "GB_TOP", "GB_RIGHT")
GAMMA_D_TAGS = ("GD_LEFT", "GD_BOTTOM", "GD_RIGHT")

FORMAT_HEADER = "bfdarcy-mesh v1"


class MeshFormatError(ValueError):
    """Raised for files that do not parse as the mesh format."""


class MeshConformityError(ValueError):
    """Raised for meshes that parse but violate conformity requirements."""


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the two-subdomain geometry.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array
        Vertex indices, counterclockwise.
    subdomain : (nt,) str array
        'B' or 'D' per triangle.
    edges : (ne, 2) int array
        Vertex pairs, lower index first.
    edge_tris : (ne, 2) int array
        Incident triangles in increasing index order; -1 marks the
        missing neighbor of a boundary edge.
    tri_edges : (nt, 3) int array
        Global index of the edge opposite each local vertex.
    tri_edge_signs : (nt, 3) int array
        +1 where the global edge normal is outward for the triangle.
    edge_tags : (ne,) str array
        Boundary/interface tag, '' for untagged interior edges.
    h_B, h_D, h_Sigma : float
        Longest edge touching each region.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    edge_tags: np.ndarray
    h_B: float
    h_D: float
    h_Sigma: float
    areas: np.ndarray = field(repr=False, default=None)
    edge_lengths: np.ndarray = field(repr=False, default=None)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    def edges_with_tag(self, tag):
        """Return the indices of edges carrying the given tag."""
        return np.flatnonzero(self.edge_tags == tag)

    def outward_normals(self):
        """Unit normals of all edges in the global orientation, (ne, 2)."""
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        # The edge (lo, hi) as stored has no preferred direction, so fix
        # the sign against the outward normal of the first incident
        # triangle, which defines the global orientation.
        first = self.edge_tris[:, 0]
        centroid = self.vertices[self.triangles[first]].mean(axis=1)
        mid = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        flip = np.sum(n * (mid - centroid), axis=1) < 0.0
        n[flip] *= -1.0
        return n


@dataclass(frozen=True)
class InterfaceData:
    """Ordered interface edges, their doubled-grid pairing and multiplier nodes.

    Interface edges are sorted by increasing x and paired left to right
    into macro edges; multiplier hat functions live on the macro grid.
    """

    edge_ids: np.ndarray      # (ns,) edge indices, left to right
    edge_verts: np.ndarray    # (ns, 2) vertex ids, left endpoint first
    x_left: np.ndarray        # (ns,)
    x_right: np.ndarray       # (ns,)
    tri_B: np.ndarray         # (ns,) incident Brinkman triangle
    tri_D: np.ndarray         # (ns,) incident Darcy triangle
    y: float                  # interface height
    nodes_x: np.ndarray       # (n_macro + 1,) multiplier node abscissae
    normal: np.ndarray        # unit normal pointing out of the B region

    @property
    def num_edges(self):
        return self.edge_ids.shape[0]

    @property
    def num_macro_edges(self):
        return self.nodes_x.shape[0] - 1

    @property
    def num_nodes(self):
        return self.nodes_x.shape[0]

    def hat_values(self, x, node):
        """Evaluate the multiplier hat of a node at abscissae ``x``."""
        nodes = self.nodes_x
        x = np.asarray(x, dtype=float)
        val = np.zeros(x.shape)
        if node > 0:
            a, b = nodes[node - 1], nodes[node]
            val = np.where((x >= a) & (x <= b), (x - a) / (b - a), val)
        if node < len(nodes) - 1:
            a, b = nodes[node], nodes[node + 1]
            val = np.where((x >= a) & (x <= b), (b - x) / (b - a), val)
        return val


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _build_topology(vertices, triangles, subdomain, tag_of_pair):
    """Assemble the Mesh dataclass from a triangle soup and an edge-tag map."""
    nt = triangles.shape[0]
    # Edge opposite local vertex i connects the other two vertices.
    raw = triangles[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
    lo = np.sort(raw, axis=1)
    edges, tri_edges_flat = np.unique(lo, axis=0, return_inverse=True)
    tri_edges = tri_edges_flat.reshape(nt, 3)

    ne = edges.shape[0]
    counts = np.bincount(tri_edges_flat, minlength=ne)
    if counts.max() > 2:
        bad = int(np.argmax(counts))
        raise MeshConformityError(
            f"edge {edges[bad, 0]}-{edges[bad, 1]} is shared by {counts.max()} triangles"
        )

    edge_tris = np.full((ne, 2), -1, dtype=int)
    order = np.argsort(tri_edges_flat, kind="stable")
    tri_of = np.repeat(np.arange(nt), 3)[order]
    eid = tri_edges_flat[order]
    first = np.searchsorted(eid, np.arange(ne), side="left")
    edge_tris[:, 0] = tri_of[first]
    two = counts == 2
    edge_tris[two, 1] = tri_of[first[two] + 1]

    # Orientation sign: +1 for the first (lower-index) incident triangle.
    tri_edge_signs = np.where(edge_tris[tri_edges, 0] == np.arange(nt)[:, None], 1, -1)

    edge_tags = np.full(ne, "", dtype="<U9")
    if tag_of_pair:
        keys = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
        for pair, tag in tag_of_pair.items():
            idx = keys.get(pair)
            if idx is None:
                raise MeshFormatError(f"tagged edge {pair[0]}-{pair[1]} is not an edge of any triangle")
            edge_tags[idx] = tag

    areas = _signed_areas(vertices, triangles)
    lengths = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)

    is_b_tri = subdomain == "B"
    edge_touches_b = np.zeros(ne, dtype=bool)
    edge_touches_d = np.zeros(ne, dtype=bool)
    for k in range(2):
        t = edge_tris[:, k]
        valid = t >= 0
        edge_touches_b[valid] |= is_b_tri[t[valid]]
        edge_touches_d[valid] |= ~is_b_tri[t[valid]]

    h_B = float(lengths[edge_touches_b].max()) if edge_touches_b.any() else 0.0
    h_D = float(lengths[edge_touches_d].max()) if edge_touches_d.any() else 0.0
    sig = edge_tags == "SIGMA"
    h_Sigma = float(lengths[sig].max()) if sig.any() else 0.0

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        subdomain=subdomain,
        edges=edges,
        edge_tris=edge_tris,
        tri_edges=tri_edges,
        tri_edge_signs=tri_edge_signs,
        edge_tags=edge_tags,
        h_B=h_B,
        h_D=h_D,
        h_Sigma=h_Sigma,
        areas=areas,
        edge_lengths=lengths,
    )


def generate_stacked_rect(rect_B, rect_D, nx, ny_B, ny_D, pattern="right"):
    """Triangulate two stacked rectangles sharing one horizontal side.

    Parameters
    ----------
    rect_B, rect_D : (x0, x1, y0, y1)
        The Brinkman rectangle must sit exactly on top of the Darcy one:
        same x extent and ``rect_B.y0 == rect_D.y1``.
    nx : int
        Number of interface subdivisions; must be even so the doubled
        multiplier grid exists.
    ny_B, ny_D : int
        Vertical cell counts of the two bands.
    pattern : str
        'right' splits every cell along the bottom-left/top-right
        diagonal; 'crisscross' adds cell centers and splits into four.

    Returns
    -------
    Mesh
    """
    xb0, xb1, yb0, yb1 = map(float, rect_B)
    xd0, xd1, yd0, yd1 = map(float, rect_D)
    if not (xb0 == xd0 and xb1 == xd1):
        raise ValueError("rectangles must have the same x extent")
    if yb0 != yd1:
        raise ValueError("B rectangle must sit exactly on top of the D rectangle")
    if not (xb1 > xb0 and yb1 > yb0 and yd1 > yd0):
        raise ValueError("degenerate rectangle")
    nx, ny_B, ny_D = int(nx), int(ny_B), int(ny_D)
    if nx < 2 or nx % 2 != 0:
        raise ValueError(f"interface edge count must be even and >= 2, got nx={nx}")
    if ny_B < 1 or ny_D < 1:
        raise ValueError("ny_B and ny_D must be >= 1")
    if pattern not in ("right", "crisscross"):
        raise ValueError(f"unknown pattern {pattern!r}; use 'right' or 'crisscross'")

    x = np.linspace(xd0, xd1, nx + 1)
    y = np.concatenate([np.linspace(yd0, yd1, ny_D + 1), np.linspace(yb0, yb1, ny_B + 1)[1:]])
    ny = ny_D + ny_B
    X, Y = np.meshgrid(x, y)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        # column i, row j of the grid
        return j * (nx + 1) + i

    tris_b, tris_d = [], []
    centers = []
    ncorner = vertices.shape[0]
    for j in range(ny):
        region = tris_d if j < ny_D else tris_b
        for i in range(nx):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            if pattern == "right":
                region.append((a, b, c))
                region.append((a, c, d))
            else:
                m = ncorner + len(centers)
                centers.append(0.25 * (vertices[a] + vertices[b] + vertices[c] + vertices[d]))
                region.append((a, b, m))
                region.append((b, c, m))
                region.append((c, d, m))
                region.append((d, a, m))
    if centers:
        vertices = np.vstack([vertices, np.array(centers)])

    # B triangles first, so interface edge normals point out of B.
    triangles = np.array(tris_b + tris_d, dtype=int)
    subdomain = np.array(["B"] * len(tris_b) + ["D"] * len(tris_d))

    tags = {}

    def tag_pair(a, b, tag):
        key = (min(a, b), max(a, b))
        tags[key] = tag

    for j in range(ny):
        band_b = j >= ny_D
        left = "GB_LEFT" if band_b else "GD_LEFT"
        right = "GB_RIGHT" if band_b else "GD_RIGHT"
        tag_pair(vid(0, j), vid(0, j + 1), left)
        tag_pair(vid(nx, j), vid(nx, j + 1), right)
    for i in range(nx):
        tag_pair(vid(i, 0), vid(i + 1, 0), "GD_BOTTOM")
        tag_pair(vid(i, ny), vid(i + 1, ny), "GB_TOP")
        tag_pair(vid(i, ny_D), vid(i + 1, ny_D), "SIGMA")

    return _build_topology(vertices, triangles, subdomain, tags)


def build_interface(mesh):
    """Order the interface edges, pair them into macro edges, locate nodes.

    Returns
    -------
    InterfaceData
    """
    sig = mesh.edges_with_tag("SIGMA")
    if sig.size == 0:
        raise MeshConformityError("mesh has no interface edges tagged SIGMA")
    if sig.size % 2 != 0:
        raise MeshConformityError(f"interface edge count must be even, got {sig.size}")

    pts = mesh.vertices
    ev = mesh.edges[sig]
    ys = pts[ev, 1]
    scale = max(mesh.h_B, mesh.h_D, 1.0)
    if np.abs(ys - ys[0, 0]).max() > 1e-12 * scale:
        raise MeshConformityError("interface is not a straight horizontal segment")
    y_if = float(ys[0, 0])

    mid_x = pts[ev, 0].mean(axis=1)
    order = np.argsort(mid_x)
    sig = sig[order]
    ev = ev[order]

    # Left endpoint first within each edge.
    flip = pts[ev[:, 0], 0] > pts[ev[:, 1], 0]
    ev[flip] = ev[flip][:, ::-1]
    x_left = pts[ev[:, 0], 0]
    x_right = pts[ev[:, 1], 0]
    if not np.allclose(x_right[:-1], x_left[1:], rtol=0.0, atol=1e-12 * scale):
        raise MeshConformityError("interface edges do not form a contiguous segment")

    tris = mesh.edge_tris[sig]
    is_b = mesh.subdomain[tris] == "B"
    if not np.all(is_b.sum(axis=1) == 1):
        raise MeshConformityError("non-matching interface: each SIGMA edge needs one B and one D triangle")
    tri_B = np.where(is_b[:, 0], tris[:, 0], tris[:, 1])
    tri_D = np.where(is_b[:, 0], tris[:, 1], tris[:, 0])

    # Outward normal of the B region; B must lie above the interface.
    cent_b = pts[mesh.triangles[tri_B]].mean(axis=1)
    if not np.all(cent_b[:, 1] > y_if):
        raise MeshConformityError("B region must lie above the interface")
    normal = np.array([0.0, -1.0])

    nodes_x = np.concatenate([x_left[0::2], x_right[-1:]])

    return InterfaceData(
        edge_ids=sig,
        edge_verts=ev,
        x_left=x_left,
        x_right=x_right,
        tri_B=tri_B,
        tri_D=tri_D,
        y=y_if,
        nodes_x=nodes_x,
        normal=normal,
    )


def save_mesh(mesh, path):
    """Write a mesh in the ASCII v1 format (round-trip exact)."""
    tagged = np.flatnonzero(mesh.edge_tags != "")
    lines = [FORMAT_HEADER]
    lines.append(f"{mesh.num_vertices} {mesh.num_triangles} {tagged.size}")
    for vx, vy in mesh.vertices:
        lines.append(f"{vx:.17g} {vy:.17g}")
    for (i, j, k), tag in zip(mesh.triangles, mesh.subdomain):
        lines.append(f"{i} {j} {k} {tag}")
    for e in tagged:
        i, j = mesh.edges[e]
        lines.append(f"{i} {j} {mesh.edge_tags[e]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a mesh in the ASCII v1 format and validate conformity.

    Raises
    ------
    MeshFormatError
        For files that do not parse: bad header, wrong counts, bad
        indices or unknown tags.
    MeshConformityError
        For meshes that parse but are not valid: clockwise triangles
        ("negative area"), interface edges without one triangle on each
        side ("non-matching interface"), or over-shared edges.
    """
    with open(path) as fh:
        raw = [ln.strip() for ln in fh]
    lines = [ln for ln in raw if ln]
    if not lines or lines[0] != FORMAT_HEADER:
        raise MeshFormatError(f"not a {FORMAT_HEADER!r} file: bad header")
    try:
        nv, nt, ne = (int(tok) for tok in lines[1].split())
    except (ValueError, IndexError) as exc:
        raise MeshFormatError("count line must hold three integers: NV NT NE") from exc
    if len(lines) != 2 + nv + nt + ne:
        raise MeshFormatError(
            f"expected {2 + nv + nt + ne} lines for NV={nv} NT={nt} NE={ne}, got {len(lines)}"
        )

    try:
        vertices = np.array(
            [[float(t) for t in ln.split()] for ln in lines[2 : 2 + nv]], dtype=float
        ).reshape(nv, 2)
    except ValueError as exc:
        raise MeshFormatError("vertex lines must hold two floats: x y") from exc

    triangles = np.empty((nt, 3), dtype=int)
    subdomain = np.empty(nt, dtype="<U1")
    for r, ln in enumerate(lines[2 + nv : 2 + nv + nt]):
        tok = ln.split()
        if len(tok) != 4 or tok[3] not in SUBDOMAIN_TAGS:
            raise MeshFormatError(f"triangle line {r}: expected 'i j k B|D', got {ln!r}")
        try:
            triangles[r] = [int(tok[0]), int(tok[1]), int(tok[2])]
        except ValueError as exc:
            raise MeshFormatError(f"triangle line {r}: bad vertex index in {ln!r}") from exc
        subdomain[r] = tok[3]
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        raise MeshFormatError("triangle vertex index out of range")

    tags = {}
    for r, ln in enumerate(lines[2 + nv + nt :]):
        tok = ln.split()
        if len(tok) != 3 or tok[2] not in BOUNDARY_TAGS:
            raise MeshFormatError(f"edge line {r}: expected 'i j TAG', got {ln!r}")
        try:
            i, j = int(tok[0]), int(tok[1])
        except ValueError as exc:
            raise MeshFormatError(f"edge line {r}: bad vertex index in {ln!r}") from exc
        if not (0 <= i < nv and 0 <= j < nv) or i == j:
            raise MeshFormatError(f"edge line {r}: vertex index out of range")
        tags[(min(i, j), max(i, j))] = tok[2]

    areas = _signed_areas(vertices, triangles)
    if np.any(areas <= 0.0):
        bad = int(np.flatnonzero(areas <= 0.0)[0])
        raise MeshConformityError(
            f"negative area in triangle {bad}; vertices must be counterclockwise"
        )

    mesh = _build_topology(vertices, triangles, subdomain, tags)
    _validate_conformity(mesh)
    return mesh


def _validate_conformity(mesh):
    boundary = mesh.edge_tris[:, 1] == -1
    untagged_boundary = boundary & (mesh.edge_tags == "")
    sig = mesh.edge_tags == "SIGMA"

    if np.any(sig & boundary):
        e = int(np.flatnonzero(sig & boundary)[0])
        i, j = mesh.edges[e]
        raise MeshConformityError(
            f"non-matching interface: SIGMA edge {i}-{j} borders only one triangle"
        )
    if sig.any():
        tris = mesh.edge_tris[np.flatnonzero(sig)]
        is_b = mesh.subdomain[tris] == "B"
        if not np.all(is_b.sum(axis=1) == 1):
            raise MeshConformityError(
                "non-matching interface: a SIGMA edge needs one B and one D triangle"
            )
    else:
        raise MeshConformityError("mesh has no interface edges tagged SIGMA")
    if int(sig.sum()) % 2 != 0:
        raise MeshConformityError(f"interface edge count must be even, got {int(sig.sum())}")
    if untagged_boundary.any():
        e = int(np.flatnonzero(untagged_boundary)[0])
        i, j = mesh.edges[e]
        raise MeshConformityError(
            f"boundary edge {i}-{j} carries no tag (non-matching interface or missing tag)"
        )
    interior_tagged = ~boundary & (mesh.edge_tags != "") & ~sig
    if interior_tagged.any():
        e = int(np.flatnonzero(interior_tagged)[0])
        i, j = mesh.edges[e]
        raise MeshConformityError(
            f"interior edge {i}-{j} carries boundary tag {mesh.edge_tags[e]}"
        )
