"""Weak forms, degrees of freedom and sparse assembly of the coupled system.

The unknown vector is laid out as [u_B | u_D | p | lambda | gauge] where
u_B holds Bernardi-Raugel coefficients, u_D Raviart-Thomas fluxes, p one
constant per triangle (both regions), lambda the interface multiplier
nodes, and gauge an optional scalar that pins the pressure mean when no
natural boundary condition does.

The nonlinear operator on the velocity pair is

    [a(u), v] = mu (grad u_B, grad v_B) + (K_B^-1 u_B, v_B)
                + F (|u_B|^(p-2) u_B, v_B) + (K_D^-1 u_D, v_D)

and its Gateaux derivative at w adds the rank-one Forchheimer coupling
F (p-2) (|w|^(p-4) (w . u) w, v).  The linearized step solves for the new
iterate directly, with the correction F (p-2) (|w|^(p-2) w, v) on the
right-hand side.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import elements as el
from .mesh import GAMMA_B_TAGS, GAMMA_D_TAGS, build_interface

# Penalty variant of the pressure gauge: eliminating the bordered scalar
# with this diagonal reproduces an added 1e-8 * (p,1)(q,1) exactly.
PRESSURE_PENALTY = 1.0e-8

# Below this speed the Forchheimer weights |w|^(p-2) and |w|^(p-4) are
# continuously extended by zero; for p < 4 the latter is singular at 0.
SPEED_FLOOR = 1.0e-12


def zero_vector(pts, normals=None):
    return np.zeros((len(pts), 2))


def zero_scalar(pts, normals=None):
    return np.zeros(len(pts))


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity, Forchheimer law and permeabilities.

    ``K_B`` and ``K_D`` accept a positive scalar, a symmetric positive
    definite 2x2 array, or a callable mapping (n, 2) points to (n, 2, 2)
    tensors.  ``power`` is the Forchheimer exponent p in [3, 4].
    """

    mu: float = 1.0
    forchheimer: float = 0.0
    power: float = 3.0
    K_B: object = 1.0
    K_D: object = 1.0

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"viscosity must be positive, got mu={self.mu}")
        if self.forchheimer < 0.0:
            raise ValueError(f"Forchheimer coefficient must be >= 0, got {self.forchheimer}")
        if not 3.0 <= self.power <= 4.0:
            raise ValueError(f"exponent out of range [3,4]: p={self.power}")


def tensor_field(K, pts):
    """Evaluate a permeability specification as (n, 2, 2) tensors."""
    if callable(K):
        T = np.asarray(K(pts), dtype=float)
        if T.shape != (len(pts), 2, 2):
            raise ValueError("permeability callable must return (n, 2, 2) tensors")
        return T
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        K = float(K) * np.eye(2)
    if K.shape != (2, 2):
        raise ValueError("permeability must be a scalar, a 2x2 array, or a callable")
    return np.broadcast_to(K, (len(pts), 2, 2))


def inverse_tensor_field(K, pts):
    T = tensor_field(K, pts)
    det = T[:, 0, 0] * T[:, 1, 1] - T[:, 0, 1] * T[:, 1, 0]
    inv = np.empty((len(pts), 2, 2))
    inv[:, 0, 0] = T[:, 1, 1]
    inv[:, 1, 1] = T[:, 0, 0]
    inv[:, 0, 1] = -T[:, 0, 1]
    inv[:, 1, 0] = -T[:, 1, 0]
    return inv / det[:, None, None]


def check_permeabilities(params, mesh, degree=6):
    """Verify both permeability tensors are SPD at all quadrature points."""
    rule = el.quad_rule(degree)
    for name, K, region in (("K_B", params.K_B, "B"), ("K_D", params.K_D, "D")):
        tris = mesh.triangles[mesh.subdomain == region]
        pts = el.physical_points(mesh.vertices[tris], rule.bary).reshape(-1, 2)
        T = tensor_field(K, pts)
        asym = np.abs(T - T.transpose(0, 2, 1)).max()
        if asym > 1e-12 * (1.0 + np.abs(T).max()):
            raise ValueError(f"{name} must be symmetric (asymmetry {asym:g})")
        lam_min = np.linalg.eigvalsh(T).min()
        if lam_min <= 0.0:
            raise ValueError(f"{name} must be positive definite (min eigenvalue {lam_min:g})")


@dataclass(frozen=True)
class ProblemData:
    """Sources and boundary data of one filtration problem.

    Callable conventions (all vectorized over an (n, 2) point array):
    sources ``f_B``/``f_D`` return (n, 2), ``g_D`` returns (n,).
    ``velocity_bc`` maps each Brinkman boundary tag to ("dirichlet", g)
    with g(pts) -> (n, 2) or ("traction", t) with t(pts, normals) ->
    (n, 2); ``darcy_bc`` maps each Darcy tag to ("flux", q) with
    q(pts, normals) -> (n,) or ("pressure", pbar) with pbar(pts) -> (n,).
    ``interface_traction``, if given, adds <t, v_B> on the interface to
    the right-hand side (manufactured problems need it to compensate the
    normal-stress mismatch of the chosen exact fields).
    """

    f_B: object = zero_vector
    f_D: object = zero_vector
    g_D: object = zero_scalar
    velocity_bc: dict = None
    darcy_bc: dict = None
    interface_traction: object = None

    def __post_init__(self):
        vbc = dict(self.velocity_bc) if self.velocity_bc else {}
        dbc = dict(self.darcy_bc) if self.darcy_bc else {}
        for tag in GAMMA_B_TAGS:
            vbc.setdefault(tag, ("dirichlet", zero_vector))
        for tag in GAMMA_D_TAGS:
            dbc.setdefault(tag, ("flux", zero_scalar))
        for tag, (kind, _) in vbc.items():
            if tag not in GAMMA_B_TAGS:
                raise ValueError(f"unknown velocity boundary tag {tag!r}")
            if kind not in ("dirichlet", "traction"):
                raise ValueError(f"velocity BC kind must be dirichlet|traction, got {kind!r}")
        for tag, (kind, _) in dbc.items():
            if tag not in GAMMA_D_TAGS:
                raise ValueError(f"unknown Darcy boundary tag {tag!r}")
            if kind not in ("flux", "pressure"):
                raise ValueError(f"Darcy BC kind must be flux|pressure, got {kind!r}")
        object.__setattr__(self, "velocity_bc", vbc)
        object.__setattr__(self, "darcy_bc", dbc)

    @property
    def gauge_pressure(self):
        """True when only essential conditions are given, so the pressure
        is defined up to a constant and needs the mean-zero gauge."""
        essential = all(k == "dirichlet" for k, _ in self.velocity_bc.values()) and all(
            k == "flux" for k, _ in self.darcy_bc.values()
        )
        return essential

    @property
    def bc_mode(self):
        return "standard" if self.gauge_pressure else "mixed"


@dataclass(frozen=True)
class DofMap:
    """Global numbering [u_B | u_D | p | lambda | gauge] plus constraints.

    ``constrained`` lists essential DOFs (Dirichlet vertex/bubble values
    on the Brinkman boundary, prescribed fluxes on the Darcy boundary) in
    increasing order with their values; they stay in the system and are
    eliminated symmetrically by ``apply_constraints``.
    """

    br: el.BRSpace
    rt: el.RT0Space
    n_uB: int
    n_uD: int
    n_p: int
    n_lam: int
    off_uD: int
    off_p: int
    off_lam: int
    gauge_dof: int
    n_total: int
    constrained: np.ndarray
    constrained_values: np.ndarray

    @property
    def n_fields(self):
        return self.n_uB + self.n_uD + self.n_p + self.n_lam

    @property
    def n_free(self):
        return self.n_fields - self.constrained.size

    def split(self, x):
        """Views of a solution vector: (u_B, u_D, p, lam)."""
        return (
            x[: self.n_uB],
            x[self.off_uD : self.off_uD + self.n_uD],
            x[self.off_p : self.off_p + self.n_p],
            x[self.off_lam : self.off_lam + self.n_lam],
        )


def _edge_points(mesh, eids, npts):
    t, w = el.edge_rule(npts)
    a = mesh.vertices[mesh.edges[eids, 0]]
    b = mesh.vertices[mesh.edges[eids, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    wts = mesh.edge_lengths[eids][:, None] * w[None, :]
    return pts, wts


def build_dofmap(mesh, interface, data):
    """Number the unknowns and collect essential constraints from data."""
    br = el.br_space(mesh)
    rt = el.rt0_space(mesh)
    n_uB, n_uD = br.n_dofs, rt.n_dofs
    n_p = mesh.num_triangles
    n_lam = interface.num_nodes
    off_uD = n_uB
    off_p = off_uD + n_uD
    off_lam = off_p + n_p
    gauge_dof = off_lam + n_lam if data.gauge_pressure else -1
    n_total = off_lam + n_lam + (1 if data.gauge_pressure else 0)

    values = {}

    def prescribe(dof, value):
        if dof in values and abs(values[dof] - value) > 1e-12 * (1.0 + abs(value)):
            raise ValueError(
                f"conflicting prescriptions on shared DOF {dof}: {values[dof]!r} vs {value!r}"
            )
        values[dof] = value

    normals = mesh.outward_normals()
    nvB = br.vertex_ids.size

    for tag, (kind, fn) in data.velocity_bc.items():
        if kind != "dirichlet":
            continue
        eids = mesh.edges_with_tag(tag)
        if eids.size == 0:
            continue
        verts = np.unique(mesh.edges[eids])
        vals = np.asarray(fn(mesh.vertices[verts]))
        vl = br.vertex_local[verts]
        for k in range(verts.size):
            prescribe(2 * vl[k], float(vals[k, 0]))
            prescribe(2 * vl[k] + 1, float(vals[k, 1]))
        pts, wts = _edge_points(mesh, eids, 4)
        gv = np.asarray(fn(pts.reshape(-1, 2))).reshape(pts.shape)
        flux = np.einsum("eq,eqd,ed->e", wts, gv, normals[eids])
        ebub = 2 * nvB + br.edge_local[eids]
        for k in range(eids.size):
            prescribe(int(ebub[k]), float(flux[k]))

    for tag, (kind, fn) in data.darcy_bc.items():
        if kind != "flux":
            continue
        eids = mesh.edges_with_tag(tag)
        if eids.size == 0:
            continue
        pts, wts = _edge_points(mesh, eids, 4)
        nrm = np.repeat(normals[eids][:, None, :], pts.shape[1], axis=1)
        qv = np.asarray(fn(pts.reshape(-1, 2), nrm.reshape(-1, 2))).reshape(wts.shape)
        flux = np.einsum("eq,eq->e", wts, qv)
        dofs = off_uD + rt.edge_local[eids]
        for k in range(eids.size):
            prescribe(int(dofs[k]), float(flux[k]))

    if values:
        constrained = np.array(sorted(values), dtype=int)
        constrained_values = np.array([values[d] for d in constrained])
    else:
        constrained = np.empty(0, dtype=int)
        constrained_values = np.empty(0)

    return DofMap(
        br=br,
        rt=rt,
        n_uB=n_uB,
        n_uD=n_uD,
        n_p=n_p,
        n_lam=n_lam,
        off_uD=off_uD,
        off_p=off_p,
        off_lam=off_lam,
        gauge_dof=gauge_dof,
        n_total=n_total,
        constrained=constrained,
        constrained_values=constrained_values,
    )


class Workspace:
    """Per-mesh cache of quadrature points and basis tables.

    Building these tables once per solve keeps the Newton loop down to
    re-weighting existing arrays.
    """

    def __init__(self, mesh, interface, dofmap, degree=6, edge_points=4):
        self.mesh = mesh
        self.interface = interface
        self.dofmap = dofmap
        self.degree = degree
        self.edge_points = edge_points
        rule = el.quad_rule(degree)
        self.rule = rule

        br, rt = dofmap.br, dofmap.rt
        tb = br.tri_ids
        self.verts_B = mesh.vertices[mesh.triangles[tb]]
        self.signs_B = mesh.tri_edge_signs[tb]
        self.area_B = mesh.areas[tb]
        self.qpts_B = el.physical_points(self.verts_B, rule.bary)
        self.wq_B = 2.0 * self.area_B[:, None] * rule.weights[None, :]
        self.phi, self.gphi = el.br_basis(self.verts_B, self.signs_B, rule.bary)
        self.div_phi = self.gphi[..., 0, 0] + self.gphi[..., 1, 1]

        td = rt.tri_ids
        self.verts_D = mesh.vertices[mesh.triangles[td]]
        self.signs_D = mesh.tri_edge_signs[td]
        self.area_D = mesh.areas[td]
        self.qpts_D = el.physical_points(self.verts_D, rule.bary)
        self.wq_D = 2.0 * self.area_D[:, None] * rule.weights[None, :]
        self.psi, self.div_psi = el.rt0_basis(self.verts_D, self.signs_D, self.qpts_D)

        self.p_dof_B = dofmap.off_p + tb
        self.p_dof_D = dofmap.off_p + td

        self._build_interface_tables()
        self._kinv_B = None
        self._kinv_D = None

    def _build_interface_tables(self):
        iface, mesh, dof = self.interface, self.mesh, self.dofmap
        ns = iface.num_edges
        t, w = el.edge_rule(self.edge_points)
        nqe = t.size
        eids = iface.edge_ids
        a = mesh.vertices[iface.edge_verts[:, 0]]
        b = mesh.vertices[iface.edge_verts[:, 1]]
        self.spts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        self.swts = mesh.edge_lengths[eids][:, None] * w[None, :]

        # Brinkman traces: barycentric coordinates of the edge points in
        # the incident B triangle, then the nine basis functions there.
        tri_b = mesh.triangles[iface.tri_B]
        locL = np.argmax(tri_b == iface.edge_verts[:, :1], axis=1)
        locR = np.argmax(tri_b == iface.edge_verts[:, 1:2], axis=1)
        bary = np.zeros((ns, nqe, 3))
        bary[np.arange(ns)[:, None], np.arange(nqe)[None, :], locL[:, None]] = 1.0 - t[None, :]
        bary[np.arange(ns)[:, None], np.arange(nqe)[None, :], locR[:, None]] = t[None, :]
        self.sphi, _ = el.br_basis(
            mesh.vertices[tri_b], mesh.tri_edge_signs[iface.tri_B], bary
        )
        self.sl2g_B = dof.br.l2g[_index_of(dof.br.tri_ids, iface.tri_B)]

        self.spsi, _ = el.rt0_basis(
            mesh.vertices[mesh.triangles[iface.tri_D]],
            mesh.tri_edge_signs[iface.tri_D],
            self.spts,
        )
        self.sl2g_D = dof.off_uD + dof.rt.l2g[_index_of(dof.rt.tri_ids, iface.tri_D)]

        # Multiplier hats: each interface edge lies in macro edge k // 2
        # and sees exactly the two hats of that macro edge's ends.
        macro = np.arange(ns) // 2
        xl = iface.nodes_x[macro]
        xr = iface.nodes_x[macro + 1]
        frac = (self.spts[..., 0] - xl[:, None]) / (xr - xl)[:, None]
        self.shat = np.stack([1.0 - frac, frac], axis=2)  # (ns, nqe, 2)
        self.snodes = dof.off_lam + np.stack([macro, macro + 1], axis=1)

    def kinv_B(self, params):
        if self._kinv_B is None:
            self._kinv_B = inverse_tensor_field(
                params.K_B, self.qpts_B.reshape(-1, 2)
            ).reshape(self.qpts_B.shape[0], self.qpts_B.shape[1], 2, 2)
        return self._kinv_B

    def kinv_D(self, params):
        if self._kinv_D is None:
            self._kinv_D = inverse_tensor_field(
                params.K_D, self.qpts_D.reshape(-1, 2)
            ).reshape(self.qpts_D.shape[0], self.qpts_D.shape[1], 2, 2)
        return self._kinv_D


def _index_of(sorted_ids, query):
    pos = np.searchsorted(sorted_ids, query)
    return pos


class SparseSystem:
    """COO triplet accumulator with a dense right-hand side."""

    def __init__(self, n):
        self.n = n
        self.rhs = np.zeros(n)
        self._rows = []
        self._cols = []
        self._vals = []

    def add(self, rows, cols, vals):
        self._rows.append(np.asarray(rows).ravel())
        self._cols.append(np.asarray(cols).ravel())
        self._vals.append(np.asarray(vals, dtype=float).ravel())

    def add_rhs(self, dofs, vals):
        np.add.at(self.rhs, np.asarray(dofs).ravel(), np.asarray(vals, dtype=float).ravel())

    @property
    def triplets(self):
        if self._rows:
            return (
                np.concatenate(self._rows),
                np.concatenate(self._cols),
                np.concatenate(self._vals),
            )
        return np.empty(0, int), np.empty(0, int), np.empty(0)

    def to_csr(self):
        rows, cols, vals = self.triplets
        A = sp.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        return A


def _forchheimer_weights(w_uB, params, ws):
    """Speed-dependent weights |w|^(p-2), |w|^(p-4) and w at quadrature points."""
    cw = w_uB[ws.dofmap.br.l2g]
    wfield = np.einsum("ma,maqd->mqd", cw, ws.phi)
    speed = np.linalg.norm(wfield, axis=2)
    small = speed < SPEED_FLOOR
    safe = np.where(small, 1.0, speed)
    s_p2 = np.where(small, 0.0, safe ** (params.power - 2.0))
    s_p4 = np.where(small, 0.0, safe ** (params.power - 4.0))
    return wfield, s_p2, s_p4


def _velocity_linear_local(params, ws):
    stiff = params.mu * np.einsum("maqij,mbqij,mq->mab", ws.gphi, ws.gphi, ws.wq_B)
    mass_B = np.einsum(
        "mqij,maqj,mbqi,mq->mab", ws.kinv_B(params), ws.phi, ws.phi, ws.wq_B
    )
    mass_D = np.einsum(
        "mqij,maqj,mbqi,mq->mab", ws.kinv_D(params), ws.psi, ws.psi, ws.wq_D
    )
    return stiff + mass_B, mass_D


def _forchheimer_local(w_uB, params, ws, derivative=True):
    F, p = params.forchheimer, params.power
    wfield, s_p2, s_p4 = _forchheimer_weights(w_uB, params, ws)
    loc = F * np.einsum("mq,maqd,mbqd,mq->mab", s_p2, ws.phi, ws.phi, ws.wq_B)
    if derivative:
        dots = np.einsum("mqd,maqd->maq", wfield, ws.phi)
        loc += F * (p - 2.0) * np.einsum("mq,maq,mbq,mq->mab", s_p4, dots, dots, ws.wq_B)
    return loc


def _scatter_square(system, l2g, local):
    rows = np.broadcast_to(l2g[:, :, None], local.shape)
    cols = np.broadcast_to(l2g[:, None, :], local.shape)
    system.add(rows, cols, local)


def assemble_da(w, params, mesh, interface=None, dofmap=None, workspace=None, data=None):
    """Triplets of the Gateaux derivative Da(w) on the velocity blocks.

    ``w`` is a full solution vector (only its u_B block matters).
    Returns (rows, cols, vals).
    """
    ws = _ensure_workspace(mesh, interface, dofmap, workspace, data)
    system = SparseSystem(ws.dofmap.n_total)
    loc_B, loc_D = _velocity_linear_local(params, ws)
    if params.forchheimer > 0.0:
        loc_B = loc_B + _forchheimer_local(w[: ws.dofmap.n_uB], params, ws)
    _scatter_square(system, ws.dofmap.br.l2g, loc_B)
    _scatter_square(system, ws.dofmap.off_uD + ws.dofmap.rt.l2g, loc_D)
    return system.triplets


def assemble_b(mesh, interface=None, dofmap=None, workspace=None, data=None):
    """Triplets of the velocity/(pressure, multiplier) coupling, both sides.

    Contains -(q, div v_B) - (q, div v_D) on the pressure rows,
    <v_B . n - v_D . n, xi> on the multiplier rows, and the transposes on
    the velocity rows.
    """
    ws = _ensure_workspace(mesh, interface, dofmap, workspace, data)
    system = SparseSystem(ws.dofmap.n_total)
    _add_b_triplets(system, ws)
    return system.triplets


def _add_b_triplets(system, ws):
    dof = ws.dofmap
    ent_B = -np.einsum("maq,mq->ma", ws.div_phi, ws.wq_B)
    rows = np.broadcast_to(ws.p_dof_B[:, None], ent_B.shape)
    system.add(rows, dof.br.l2g, ent_B)
    system.add(dof.br.l2g, rows, ent_B)

    ent_D = -ws.div_psi * ws.area_D[:, None]
    rows = np.broadcast_to(ws.p_dof_D[:, None], ent_D.shape)
    system.add(rows, dof.off_uD + dof.rt.l2g, ent_D)
    system.add(dof.off_uD + dof.rt.l2g, rows, ent_D)

    n = ws.interface.normal
    tr_B = np.einsum("maqd,d->maq", ws.sphi, n)
    ent = np.einsum("maq,mqj,mq->maj", tr_B, ws.shat, ws.swts)  # (ns, 9, 2)
    rows = np.broadcast_to(ws.snodes[:, None, :], ent.shape)
    cols = np.broadcast_to(ws.sl2g_B[:, :, None], ent.shape)
    system.add(rows, cols, ent)
    system.add(cols, rows, ent)

    tr_D = np.einsum("maqd,d->maq", ws.spsi, n)
    ent = -np.einsum("maq,mqj,mq->maj", tr_D, ws.shat, ws.swts)  # (ns, 3, 2)
    rows = np.broadcast_to(ws.snodes[:, None, :], ent.shape)
    cols = np.broadcast_to(ws.sl2g_D[:, :, None], ent.shape)
    system.add(rows, cols, ent)
    system.add(cols, rows, ent)


def assemble_rhs(data, params, mesh, interface=None, dofmap=None, workspace=None, w=None):
    """Right-hand side vector: loads, boundary and interface data.

    With ``w`` given, the Newton correction F (p-2) (|w|^(p-2) w, v_B) is
    included; without it the vector is the plain load functional.
    """
    ws = _ensure_workspace(mesh, interface, dofmap, workspace, data)
    dof = ws.dofmap
    rhs = np.zeros(dof.n_total)

    fB = np.asarray(data.f_B(ws.qpts_B.reshape(-1, 2))).reshape(ws.qpts_B.shape)
    np.add.at(
        rhs, dof.br.l2g, np.einsum("mqd,maqd,mq->ma", fB, ws.phi, ws.wq_B)
    )
    fD = np.asarray(data.f_D(ws.qpts_D.reshape(-1, 2))).reshape(ws.qpts_D.shape)
    np.add.at(
        rhs, dof.off_uD + dof.rt.l2g, np.einsum("mqd,maqd,mq->ma", fD, ws.psi, ws.wq_D)
    )
    gD = np.asarray(data.g_D(ws.qpts_D.reshape(-1, 2))).reshape(ws.wq_D.shape)
    np.add.at(rhs, ws.p_dof_D, -np.einsum("mq,mq->m", gD, ws.wq_D))

    if data.interface_traction is not None:
        tv = np.asarray(data.interface_traction(ws.spts.reshape(-1, 2))).reshape(ws.spts.shape)
        np.add.at(
            rhs, ws.sl2g_B, np.einsum("mqd,maqd,mq->ma", tv, ws.sphi, ws.swts)
        )

    _add_natural_bc(rhs, data, ws)

    if w is not None and params.forchheimer > 0.0:
        wfield, s_p2, _ = _forchheimer_weights(w[: dof.n_uB], params, ws)
        corr = params.forchheimer * (params.power - 2.0) * np.einsum(
            "mq,mqd,maqd,mq->ma", s_p2, wfield, ws.phi, ws.wq_B
        )
        np.add.at(rhs, dof.br.l2g, corr)
    return rhs


def _add_natural_bc(rhs, data, ws):
    mesh, dof = ws.mesh, ws.dofmap
    normals = mesh.outward_normals()
    for tag, (kind, fn) in data.velocity_bc.items():
        if kind != "traction":
            continue
        eids = mesh.edges_with_tag(tag)
        if eids.size == 0:
            continue
        pts, wts = _edge_points(mesh, eids, ws.edge_points)
        tri = mesh.edge_tris[eids, 0]
        bary = _edge_bary(mesh, eids, tri, ws.edge_points)
        phi, _ = el.br_basis(
            mesh.vertices[mesh.triangles[tri]], mesh.tri_edge_signs[tri], bary
        )
        nrm = np.repeat(normals[eids][:, None, :], pts.shape[1], axis=1)
        tv = np.asarray(fn(pts.reshape(-1, 2), nrm.reshape(-1, 2))).reshape(pts.shape)
        l2g = dof.br.l2g[_index_of(dof.br.tri_ids, tri)]
        np.add.at(rhs, l2g, np.einsum("mqd,maqd,mq->ma", tv, phi, wts))

    for tag, (kind, fn) in data.darcy_bc.items():
        if kind != "pressure":
            continue
        eids = mesh.edges_with_tag(tag)
        if eids.size == 0:
            continue
        pts, wts = _edge_points(mesh, eids, ws.edge_points)
        tri = mesh.edge_tris[eids, 0]
        psi, _ = el.rt0_basis(
            mesh.vertices[mesh.triangles[tri]], mesh.tri_edge_signs[tri], pts
        )
        pv = np.asarray(fn(pts.reshape(-1, 2))).reshape(wts.shape)
        tr = np.einsum("maqd,mqd->maq", psi, np.repeat(normals[eids][:, None, :], pts.shape[1], axis=1))
        l2g = dof.off_uD + dof.rt.l2g[_index_of(dof.rt.tri_ids, tri)]
        np.add.at(rhs, l2g, -np.einsum("mq,maq,mq->ma", pv, tr, wts))


def _edge_bary(mesh, eids, tri, npts):
    t, _ = el.edge_rule(npts)
    tverts = mesh.triangles[tri]
    v0 = mesh.edges[eids, 0]
    v1 = mesh.edges[eids, 1]
    loc0 = np.argmax(tverts == v0[:, None], axis=1)
    loc1 = np.argmax(tverts == v1[:, None], axis=1)
    ns, nqe = eids.size, t.size
    bary = np.zeros((ns, nqe, 3))
    bary[np.arange(ns)[:, None], np.arange(nqe)[None, :], loc0[:, None]] = 1.0 - t[None, :]
    bary[np.arange(ns)[:, None], np.arange(nqe)[None, :], loc1[:, None]] = t[None, :]
    return bary


def assemble_a_nonlinear(u, params, mesh, interface=None, dofmap=None, workspace=None, data=None):
    """Action [a(u), v] for every velocity test function, as a full vector.

    Entries outside the velocity blocks are zero.
    """
    ws = _ensure_workspace(mesh, interface, dofmap, workspace, data)
    dof = ws.dofmap
    out = np.zeros(dof.n_total)

    cu = u[: dof.n_uB][dof.br.l2g]
    ufield = np.einsum("ma,maqd->mqd", cu, ws.phi)
    ugrad = np.einsum("ma,maqij->mqij", cu, ws.gphi)
    ent = params.mu * np.einsum("mqij,maqij,mq->ma", ugrad, ws.gphi, ws.wq_B)
    ent += np.einsum(
        "mqij,mqj,maqi,mq->ma", ws.kinv_B(params), ufield, ws.phi, ws.wq_B
    )
    if params.forchheimer > 0.0:
        speed = np.linalg.norm(ufield, axis=2)
        small = speed < SPEED_FLOOR
        s_p2 = np.where(small, 0.0, np.where(small, 1.0, speed) ** (params.power - 2.0))
        ent += params.forchheimer * np.einsum(
            "mq,mqd,maqd,mq->ma", s_p2, ufield, ws.phi, ws.wq_B
        )
    np.add.at(out, dof.br.l2g, ent)

    cd = u[dof.off_uD : dof.off_uD + dof.n_uD][dof.rt.l2g]
    dfield = np.einsum("ma,maqd->mqd", cd, ws.psi)
    ent = np.einsum("mqij,mqj,maqi,mq->ma", ws.kinv_D(params), dfield, ws.psi, ws.wq_D)
    np.add.at(out, dof.off_uD + dof.rt.l2g, ent)
    return out


def _ensure_workspace(mesh, interface, dofmap, workspace, data):
    if workspace is not None:
        return workspace
    if interface is None:
        interface = build_interface(mesh)
    if dofmap is None:
        if data is None:
            data = ProblemData()
        dofmap = build_dofmap(mesh, interface, data)
    return Workspace(mesh, interface, dofmap)


def assemble_system(w, params, data, mesh, interface=None, dofmap=None, workspace=None):
    """Full linearized saddle system at iterate ``w`` (before constraints)."""
    ws = _ensure_workspace(mesh, interface, dofmap, workspace, data)
    system = SparseSystem(ws.dofmap.n_total)
    rows, cols, vals = assemble_da(w, params, mesh, workspace=ws)
    system.add(rows, cols, vals)
    _add_b_triplets(system, ws)
    system.rhs[:] = assemble_rhs(data, params, mesh, workspace=ws, w=w)
    return system


def apply_constraints(system, dofmap, pressure_mode="constraint", mesh=None):
    """Impose the pressure gauge and eliminate essential DOFs symmetrically.

    In gauge mode the bordered scalar couples to every pressure DOF with
    the triangle area; 'constraint' keeps the bordered row exact,
    'penalty' puts -PRESSURE_PENALTY on its diagonal, the sparse
    equivalent of adding the strong penalty (p, 1)(q, 1)/PRESSURE_PENALTY,
    so the pressure mean still vanishes to solver accuracy.

    Returns (A, rhs) with constrained rows/columns replaced by the
    identity and their values moved to the right-hand side.
    """
    if pressure_mode not in ("constraint", "penalty"):
        raise ValueError(f"pressure mode must be constraint|penalty, got {pressure_mode!r}")
    if dofmap.gauge_dof >= 0:
        if mesh is None:
            raise ValueError("gauge mode needs the mesh for triangle areas")
        p_dofs = dofmap.off_p + np.arange(dofmap.n_p)
        g = np.full(dofmap.n_p, dofmap.gauge_dof)
        system.add(g, p_dofs, mesh.areas)
        system.add(p_dofs, g, mesh.areas)
        if pressure_mode == "penalty":
            system.add([dofmap.gauge_dof], [dofmap.gauge_dof], [-PRESSURE_PENALTY])

    A = system.to_csr()
    b = system.rhs.copy()
    c = dofmap.constrained
    if c.size:
        xc = np.zeros(dofmap.n_total)
        xc[c] = dofmap.constrained_values
        b -= A @ xc
        keep = np.ones(dofmap.n_total)
        keep[c] = 0.0
        Dk = sp.diags(keep)
        A = (Dk @ A @ Dk).tocsr()
        A = A + sp.diags(1.0 - keep)
        b[c] = dofmap.constrained_values
    return A.tocsr(), b
