"""Finite-difference assembly of the transformed Laplacian on I x omega.

Unknowns sit on the tensor lattice (interior s-nodes) x (transverse
unknowns), ordered s-major: index = i * N_t + j.  Every boundary is
Dirichlet.  The stiffness is built as D^T diag(w) D over edge differences,
so it is symmetric by construction; the weight is a lumped diagonal.

Both K and W carry the quadrature factor ds * cell, so sum(W * psi**2) is
the discrete L2 norm in the chosen measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..crosssec import CrossEigs, cross_eigs
from ..curve import ArcGrid
from ..mollify import MollifierSchedule, steklov
from ..tube import InadmissibleGeometry, TubeSpec, rotated_curvature

__all__ = ["TubeGrid", "GridOperator", "assemble_3d"]


@dataclass(frozen=True)
class TubeGrid:
    """Longitudinal lattice (with its two Dirichlet end nodes) times a transverse lattice."""

    long: ArcGrid
    cross: CrossEigs

    @property
    def n_s(self) -> int:
        return self.long.n - 2

    @property
    def n_t(self) -> int:
        return self.cross.grid.n

    @property
    def N_t(self) -> int:
        return self.cross.grid.size

    @property
    def size(self) -> int:
        return self.n_s * self.N_t

    @property
    def ds(self) -> float:
        return self.long.ds

    @property
    def s(self) -> np.ndarray:
        """Interior s-nodes."""
        return self.long.nodes[1:-1]

    @property
    def s_mid(self) -> np.ndarray:
        """Midpoints of all n_s + 1 longitudinal edges."""
        return self.long.midpoints

    @property
    def quad(self) -> float:
        return self.ds * self.cross.grid.cell

    @classmethod
    def build(cls, interval, section, n_s: int, n_t: int, cross: CrossEigs | None = None,
              allow_coarse: bool = False) -> "TubeGrid":
        if n_s < 2:
            raise ValueError("need at least 2 interior longitudinal nodes")
        if cross is None:
            cross = cross_eigs(section, n_t, refine=False, allow_coarse=allow_coarse)
        elif cross.grid.n != n_t or cross.grid.section != section:
            raise ValueError("supplied cross-section data do not match the requested lattice")
        return cls(ArcGrid(float(interval[0]), float(interval[1]), n_s + 2), cross)

    def describe(self) -> dict:
        return {"n_s": self.n_s, "n_t": self.n_t, "N_t": self.N_t, "unknowns": self.size,
                "ds": self.ds, "cell": self.cross.grid.cell}


@dataclass(frozen=True)
class GridOperator:
    """Stiffness K and lumped weight W of a weighted quadratic form."""

    dim: str
    stiffness: sp.csr_matrix
    weight: np.ndarray
    grid: TubeGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in ("1d", "2d-strip", "3d"):
            raise ValueError(f"unknown dimension tag {self.dim!r}")
        if self.stiffness.shape != (self.weight.size, self.weight.size):
            raise ValueError("stiffness and weight sizes differ")


def _difference_ops(n: int, ds: float):
    """Edge difference and edge average of n interior nodes (n + 1 edges, zero ends)."""
    e = np.arange(n)
    diff = sp.csr_matrix(
        (np.concatenate([np.full(n, 1.0 / ds), np.full(n, -1.0 / ds)]),
         (np.concatenate([e, e + 1]), np.concatenate([e, e]))),
        shape=(n + 1, n),
    )
    avg = abs(diff) * (0.5 * ds)
    return diff, avg


def _central(n: int, ds: float) -> sp.csr_matrix:
    off = np.full(n - 1, 0.5 / ds)
    return sp.diags([-off, off], [-1, 1], shape=(n, n), format="csr")


def _h(spec: TubeSpec, s, t, delta=None, derivative=False):
    q1, q2 = rotated_curvature(spec, s, delta, derivative)
    inner = np.outer(q1, t[:, 0]) + np.outer(q2, t[:, 1])
    return -spec.eps * inner if derivative else 1.0 - spec.eps * inner


def _check_positive(name, arr, s, t, eps):
    if np.min(arr) <= 0:
        i, j = np.unravel_index(np.argmin(arr), arr.shape)
        raise InadmissibleGeometry(
            f"{name} = {arr[i, j]:.4g} <= 0 at s = {s[i]:.6g}, t = {tuple(np.round(t[j], 6))} "
            f"(eps = {eps:g})"
        )


def _longitudinal(grid: TubeGrid, theta_dot_mid: np.ndarray) -> sp.csr_matrix:
    """(d_s + theta' d_alpha) on edges: rows (edge, angular row), s-major."""
    tg = grid.cross.grid
    n, R, N = grid.n_s, tg.angular.shape[0], tg.size
    diff, avg = _difference_ops(n, grid.ds)
    embed = sp.eye(R, N, format="csr")
    D = sp.kron(diff, embed, format="csr")
    if np.any(theta_dot_mid) and tg.section.dim == 2:
        twist = sp.diags(np.repeat(theta_dot_mid, R))
        D = D + twist @ sp.kron(avg, tg.angular, format="csr")
    return D.tocsr()


def assemble_3d(spec: TubeSpec, grid: TubeGrid, mode: str = "direct",
                schedule: MollifierSchedule | None = None) -> GridOperator:
    """Assemble the transformed form on the tube lattice.

    direct
        K from the metric form with longitudinal coefficient eps^2 / h,
        transverse coefficient h and weight eps^2 h (= sqrt det G).
    mollified
        K term by term from the mollified form: longitudinal 1/(h h_eps),
        transverse eps^-2 h / h_eps, the three potential terms built from
        k . k_eps, |k_eps|^2 and (D h_eps)^2, the symmetrized mixed term
        and weight h / h_eps.  The -E1 eps^-2 h / h_eps mass term equals
        -E1 eps^-2 W and is applied after flattening by ``renormalize``.
    """
    if mode not in ("direct", "mollified"):
        raise ValueError(f"mode must be 'direct' or 'mollified', got {mode!r}")
    if mode == "mollified" and schedule is None:
        raise ValueError("mollified assembly needs a mollifier schedule")
    if grid.cross.grid.section != spec.section:
        raise ValueError("grid section differs from the tube section")
    tg = grid.cross.grid
    eps = spec.eps
    s, s_mid = grid.s, grid.s_mid
    n, N = grid.n_s, tg.size
    quad = grid.quad

    h_mid = _h(spec, s_mid, tg.angular_coords)
    h_edge = _h(spec, s, tg.edge_coords)
    h_node = _h(spec, s, tg.coords)
    for name, arr, ss, tt in (("h", h_mid, s_mid, tg.angular_coords),
                              ("h", h_edge, s, tg.edge_coords),
                              ("h", h_node, s, tg.coords)):
        _check_positive(name, arr, ss, tt, eps)

    td_mid = spec.theta_dot.closed(s_mid)
    D = _longitudinal(grid, td_mid)
    T = sp.kron(sp.eye(n), tg.grad, format="csr")
    ang_w = np.tile(tg.angular_weight, n + 1)
    meta = {"mode": mode, "eps": eps, "E1_disc": grid.cross.E1, "E2_disc": grid.cross.E2,
            **grid.describe()}

    if mode == "direct":
        wL = (eps**2 / h_mid).ravel() * ang_w * quad
        wT = h_edge.ravel() * quad
        K = D.T @ sp.diags(wL) @ D + T.T @ sp.diags(wT) @ T
        W = (eps**2 * h_node).ravel() * quad
    else:
        delta = schedule.delta(eps)
        meta.update(delta=delta, schedule=schedule.to_dict())
        he_mid = _h(spec, s_mid, tg.angular_coords, delta)
        he_edge = _h(spec, s, tg.edge_coords, delta)
        he_node = _h(spec, s, tg.coords, delta)
        for arr, ss, tt in ((he_mid, s_mid, tg.angular_coords), (he_edge, s, tg.edge_coords),
                            (he_node, s, tg.coords)):
            _check_positive("h_eps", arr, ss, tt, eps)
        wL = (1.0 / (h_mid * he_mid)).ravel() * ang_w * quad
        wT = (h_edge / he_edge).ravel() * (quad / eps**2)
        K = D.T @ sp.diags(wL) @ D + T.T @ sp.diags(wT) @ T

        k1, k2 = spec.k1.closed(s), spec.k2.closed(s)
        m1, m2 = steklov(spec.k1, delta, at=s), steklov(spec.k2, delta, at=s)
        kk = (k1 * m1 + k2 * m2)[:, None]
        mm = (m1**2 + m2**2)[:, None]
        Dhe = _h(spec, s, tg.coords, delta, derivative=True)
        V = (0.5 * kk / he_node**2
             - 0.75 * h_node * mm / he_node**3
             + Dhe**2 / (4 * h_node * he_node**3))
        K = K + sp.diags(V.ravel() * quad)

        # mixed term -c Re(conj(psi) D psi), c = D h_eps / (h h_eps^2), node-centred D
        c = (Dhe / (h_node * he_node**2)).ravel() * quad
        Dn = sp.kron(_central(n, grid.ds), sp.eye(N), format="csr")
        td = spec.theta_dot.closed(s)
        if np.any(td) and tg.section.dim == 2:
            Dn = Dn + sp.diags(np.repeat(td, N)) @ sp.kron(sp.eye(n), tg.dalpha, format="csr")
        B = sp.diags(c) @ Dn
        K = K - 0.5 * (B + B.T)
        W = (h_node / he_node).ravel() * quad

    K = K.tocsr()
    K = (0.5 * (K + K.T)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    dim = "2d-strip" if spec.section.dim == 1 else "3d"
    return GridOperator(dim, K, W, grid, meta)
