"""Flattened operators on plain l2: the tube operator, H_eff and the tensor sum H0."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..curve import ArcGrid
from .assemble import GridOperator, TubeGrid

__all__ = ["FlatOperator", "flatten", "renormalize", "assemble_heff", "assemble_h0",
           "heff_for", "h0_for", "dirichlet_stencil"]


@dataclass(frozen=True)
class FlatOperator:
    """Symmetric sparse A on plain l2; ``renorm`` is what was already subtracted."""

    A: sp.csr_matrix
    renorm: float = 0.0
    dim: str = "3d"
    grid: TubeGrid | ArcGrid | None = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.A.shape[0]


def _symmetric(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A = (0.5 * (A + A.T)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def flatten(op: GridOperator) -> FlatOperator:
    """A = W^-1/2 K W^-1/2 (the lumped weight makes this the exact square-root unitary)."""
    w = np.asarray(op.weight, dtype=float)
    if not np.all(w > 0):
        raise ValueError(f"weight must be positive; minimum is {w.min():.4g}")
    scale = sp.diags(1.0 / np.sqrt(w))
    return FlatOperator(_symmetric(scale @ op.stiffness @ scale), 0.0, op.dim, op.grid,
                        dict(op.meta))


def renormalize(op: FlatOperator, eps: float, E1_disc: float) -> FlatOperator:
    """Subtract eps^-2 E1_disc from the diagonal."""
    shift = E1_disc / eps**2
    A = (op.A - shift * sp.eye(op.size, format="csr")).tocsr()
    return FlatOperator(_symmetric(A), op.renorm + shift, op.dim, op.grid, dict(op.meta))


def dirichlet_stencil(n: int, ds: float) -> sp.csr_matrix:
    """Three-point -d^2/ds^2 on n interior nodes with zero ends."""
    main = np.full(n, 2.0 / ds**2)
    off = np.full(n - 1, -1.0 / ds**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def assemble_heff(kappa, theta_dot, C_omega: float, grid: ArcGrid,
                  dim: str = "3d-effective") -> FlatOperator:
    """-d^2/ds^2 - kappa^2/4 + C_omega theta'^2 on the interior nodes of ``grid``.

    ``kappa`` and ``theta_dot`` hold values at those interior nodes.  The
    strip variant ignores the twist.
    """
    if dim not in ("3d-effective", "2d-strip"):
        raise ValueError(f"unknown effective dimension {dim!r}")
    n = grid.n - 2
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), (n,))
    pot = -0.25 * kappa**2
    if dim == "3d-effective":
        td = np.broadcast_to(np.asarray(theta_dot, dtype=float), (n,))
        pot = pot + C_omega * td**2
    A = dirichlet_stencil(n, grid.ds) + sp.diags(pot)
    return FlatOperator(_symmetric(A), 0.0, "1d", grid, {"C_omega": C_omega, "dim": dim})


def heff_for(spec, grid: TubeGrid) -> FlatOperator:
    """H_eff of a tube on the longitudinal lattice of ``grid``."""
    s = grid.s
    kappa = np.hypot(spec.k1.closed(s), spec.k2.closed(s))
    dim = "2d-strip" if spec.section.dim == 1 else "3d-effective"
    return assemble_heff(kappa, spec.theta_dot.closed(s), grid.cross.C_omega, grid.long, dim)


def assemble_h0(heff: FlatOperator, grid: TubeGrid, eps: float) -> FlatOperator:
    """1 (x) eps^-2 (K_t - E1_disc) + H_eff (x) 1, s-major like the tube operator."""
    tg = grid.cross.grid
    if heff.size != grid.n_s:
        raise ValueError("H_eff and tube lattice disagree on the number of s-nodes")
    Kt = tg.laplacian() - grid.cross.E1 * sp.eye(tg.size)
    A = sp.kron(heff.A, sp.eye(tg.size)) + sp.kron(sp.eye(grid.n_s), Kt / eps**2)
    return FlatOperator(_symmetric(A), grid.cross.E1 / eps**2, "3d", grid, {"eps": eps})


def h0_for(spec, grid: TubeGrid) -> FlatOperator:
    return assemble_h0(heff_for(spec, grid), grid, spec.eps)
