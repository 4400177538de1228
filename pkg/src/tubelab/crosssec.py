"""Dirichlet ground data of a tube cross-section.

A cross-section is a bounded open set in the transverse (t1, t2) plane,
possibly shifted away from the curve by an origin offset.  It is
discretized by the five-point stencil on a uniform lattice covering its
bounding box: lattice nodes strictly inside the shape are unknowns, all
others carry the Dirichlet value zero.  The same lattice, gradient and
angular-derivative matrices are reused by the tube assembly, which keeps
the transverse part of the straight-tube problem exactly separable.

A one-dimensional ``interval`` section serves the planar strip.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import label
from scipy.sparse.linalg import eigsh

__all__ = [
    "CrossSection",
    "TransverseGrid",
    "CrossEigs",
    "cross_eigs",
    "angular_coupling",
    "geometry_constants",
    "parse_shape",
    "MIN_NODES",
]

MIN_NODES = 16
SHAPES = ("rectangle", "disc", "annulus", "ellipse", "mask", "interval")


@dataclass(frozen=True)
class CrossSection:
    """A shape with its parameters and an origin offset.

    ``params``:
        rectangle (width, height), disc (radius,), annulus (r_inner, r_outer),
        ellipse (semi_axis_1, semi_axis_2), interval (half_width,),
        mask: (bitmap, (x0, x1, y0, y1)) with bitmap[row=y, col=x].
    """

    shape: str
    params: tuple
    offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        off = tuple(float(v) for v in self.offset)
        if len(off) != 2 or not np.all(np.isfinite(off)):
            raise ValueError("offset must be two finite numbers")
        object.__setattr__(self, "offset", off)
        if self.shape == "mask":
            bitmap, extent = self.params
            bitmap = np.array(bitmap, dtype=bool)
            extent = tuple(float(v) for v in extent)
            if bitmap.ndim != 2 or not bitmap.any():
                raise ValueError("mask must be a nonempty 2D boolean array")
            if extent[1] <= extent[0] or extent[3] <= extent[2]:
                raise ValueError("mask extent must be (x0, x1, y0, y1) with x1>x0, y1>y0")
            _, ncomp = label(bitmap)
            if ncomp != 1:
                raise ValueError(f"mask is not connected ({ncomp} components)")
            bitmap.setflags(write=False)
            object.__setattr__(self, "params", (bitmap, extent))
            return
        p = tuple(float(v) for v in self.params)
        need = {"rectangle": 2, "disc": 1, "annulus": 2, "ellipse": 2, "interval": 1}[self.shape]
        if len(p) != need or not all(np.isfinite(p)) or min(p) <= 0:
            raise ValueError(f"{self.shape} needs {need} positive parameters, got {self.params}")
        if self.shape == "annulus" and p[0] >= p[1]:
            raise ValueError("annulus needs r_inner < r_outer")
        object.__setattr__(self, "params", p)

    @property
    def dim(self) -> int:
        return 1 if self.shape == "interval" else 2

    @classmethod
    def rectangle(cls, width, height, offset=(0.0, 0.0)):
        return cls("rectangle", (width, height), offset)

    @classmethod
    def disc(cls, radius=1.0, offset=(0.0, 0.0)):
        return cls("disc", (radius,), offset)

    @classmethod
    def annulus(cls, r_inner, r_outer, offset=(0.0, 0.0)):
        return cls("annulus", (r_inner, r_outer), offset)

    @classmethod
    def ellipse(cls, a, b, offset=(0.0, 0.0)):
        return cls("ellipse", (a, b), offset)

    @classmethod
    def interval(cls, half_width=1.0, offset=0.0):
        return cls("interval", (half_width,), (offset, 0.0))

    @classmethod
    def mask(cls, bitmap, extent, offset=(0.0, 0.0)):
        return cls("mask", (bitmap, extent), offset)

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(x0, x1, y0, y1) in shape-local coordinates (before the offset)."""
        s, p = self.shape, self.params
        if s == "rectangle":
            return (-p[0] / 2, p[0] / 2, -p[1] / 2, p[1] / 2)
        if s in ("disc", "annulus"):
            r = p[-1]
            return (-r, r, -r, r)
        if s == "ellipse":
            return (-p[0], p[0], -p[1], p[1])
        if s == "interval":
            return (-p[0], p[0], 0.0, 0.0)
        return p[1]

    def contains(self, x, y) -> np.ndarray:
        """Strict interior test in shape-local coordinates."""
        x, y = np.asarray(x, float), np.asarray(y, float)
        s, p = self.shape, self.params
        if s == "rectangle":
            return (np.abs(x) < p[0] / 2) & (np.abs(y) < p[1] / 2)
        if s == "disc":
            return x * x + y * y < p[0] ** 2
        if s == "annulus":
            r2 = x * x + y * y
            return (r2 > p[0] ** 2) & (r2 < p[1] ** 2)
        if s == "ellipse":
            return (x / p[0]) ** 2 + (y / p[1]) ** 2 < 1
        if s == "interval":
            return np.abs(x) < p[0]
        bitmap, (x0, x1, y0, y1) = p
        ny, nx = bitmap.shape
        inside = (x > x0) & (x < x1) & (y > y0) & (y < y1)
        ix = np.clip(((x - x0) / (x1 - x0) * nx).astype(int), 0, nx - 1)
        iy = np.clip(((y - y0) / (y1 - y0) * ny).astype(int), 0, ny - 1)
        return inside & bitmap[iy, ix]

    def area(self) -> float:
        s, p = self.shape, self.params
        if s == "rectangle":
            return p[0] * p[1]
        if s == "disc":
            return np.pi * p[0] ** 2
        if s == "annulus":
            return np.pi * (p[1] ** 2 - p[0] ** 2)
        if s == "ellipse":
            return np.pi * p[0] * p[1]
        if s == "interval":
            return 2 * p[0]
        bitmap, (x0, x1, y0, y1) = p
        return bitmap.mean() * (x1 - x0) * (y1 - y0)

    def to_dict(self) -> dict:
        if self.shape == "mask":
            bitmap, extent = self.params
            return {"shape": "mask", "bitmap": bitmap.astype(int).tolist(),
                    "extent": list(extent), "offset": list(self.offset)}
        return {"shape": self.shape, "params": list(self.params), "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "CrossSection":
        off = tuple(d.get("offset", (0.0, 0.0)))
        if d["shape"] == "mask":
            return cls.mask(np.array(d["bitmap"], bool), d["extent"], off)
        return cls(d["shape"], tuple(d["params"]), off)


def parse_shape(text: str) -> CrossSection:
    """Parse ``kind:p1,p2[@ox,oy]``, e.g. ``rectangle:2,1``, ``disc:1@0.1,0``.

    ``rectangle:2x1`` is accepted as well; masks are read from ``mask:file.npy:x0,x1,y0,y1``.
    """
    body, _, off = text.partition("@")
    offset = tuple(float(v) for v in off.split(",")) if off else (0.0, 0.0)
    kind, _, rest = body.partition(":")
    kind = kind.strip().lower()
    if kind == "mask":
        path, _, ext = rest.rpartition(":")
        return CrossSection.mask(np.load(path), tuple(float(v) for v in ext.split(",")), offset)
    params = tuple(float(v) for v in rest.replace("x", ",").split(",") if v)
    if kind == "interval" and len(offset) == 1:
        offset = (offset[0], 0.0)
    return CrossSection(kind, params, offset)


@dataclass(frozen=True)
class TransverseGrid:
    """Lattice unknowns of a section and the difference operators on them.

    ``coords`` are the absolute transverse coordinates (offset applied) of
    the unknowns.  ``grad`` maps node values to edge differences over all
    lattice edges touching at least one unknown (Dirichlet neighbours are
    zero); ``edge_coords`` are the edge midpoints.  ``cell`` is the area
    (or length) carried by one node, so that sum(u**2) * cell is the
    discrete L2 norm.  ``dalpha`` is the skew centered discretization of
    t2 d/dt1 - t1 d/dt2 with zero extension.

    Angular derivatives do not vanish on the boundary, so integrals of
    their squares also need the ring of Dirichlet lattice nodes next to the
    unknowns.  ``angular`` stacks ``dalpha`` on top of rows evaluating the
    derivative on that ring by one-sided second-order differences, and
    ``angular_weight`` holds the trapezoid weights (1 inside, 1/2 on the
    ring) and ``angular_coords`` the positions of all those rows.
    """

    section: CrossSection
    n: int
    spacing: tuple
    coords: np.ndarray
    grad: sp.csr_matrix
    edge_coords: np.ndarray
    dalpha: sp.csr_matrix
    angular: sp.csr_matrix
    angular_weight: np.ndarray
    angular_coords: np.ndarray
    lattice_index: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def laplacian(self) -> sp.csr_matrix:
        """The five-point (three-point in 1D) Dirichlet negative Laplacian."""
        return (self.grad.T @ self.grad).tocsr()

    @classmethod
    def build(cls, section: CrossSection, n: int) -> "TransverseGrid":
        if n < 2:
            raise ValueError("need at least 2 interior lattice nodes per axis")
        x0, x1, y0, y1 = section.bounding_box()
        hx = (x1 - x0) / (n + 1)
        xs = x0 + hx * np.arange(1, n + 1)
        if section.dim == 1:
            ys, hy, ny = np.array([0.0]), 1.0, 1
        else:
            hy = (y1 - y0) / (n + 1)
            ys = y0 + hy * np.arange(1, n + 1)
            ny = n
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        inside = section.contains(X, Y) if section.dim == 2 else section.contains(X, 0 * X)
        if section.dim == 2:
            _, ncomp = label(inside)
            if ncomp != 1:
                raise ValueError(
                    f"section resolves to {ncomp} disconnected lattice components at n={n}"
                )
        if not inside.any():
            raise ValueError("no lattice node falls inside the section; refine the grid")
        index = -np.ones(inside.shape, dtype=int)
        index[inside] = np.arange(inside.sum())
        N = int(inside.sum())
        ox, oy = section.offset
        coords = np.column_stack([X[inside] + ox, Y[inside] + oy])
        if section.dim == 1:
            coords[:, 1] = 0.0

        rows, cols, vals, mids = [], [], [], []
        n_edges = 0
        pad = np.pad(index, 1, constant_values=-1)
        axes = [(1, 0, hx)] if section.dim == 1 else [(1, 0, hx), (0, 1, hy)]
        for dx, dy, h in axes:
            # edge between lattice (i, j) and (i+dx, j+dy), padded lattice included
            a = pad[: pad.shape[0] - dx, : pad.shape[1] - dy]
            b = pad[dx:, dy:]
            keep = (a >= 0) | (b >= 0)
            ia, ib = a[keep], b[keep]
            gi, gj = np.nonzero(keep)
            ne = ia.size
            e = n_edges + np.arange(ne)
            for idx, sign in ((ib, 1.0), (ia, -1.0)):
                ok = idx >= 0
                rows.append(e[ok])
                cols.append(idx[ok])
                vals.append(np.full(ok.sum(), sign / h))
            # midpoint: padded index g corresponds to lattice coordinate x0 + hx * g
            mx = x0 + hx * (gi + 0.5 * dx) + ox
            my = (y0 + hy * (gj + 0.5 * dy) + oy) if section.dim == 2 else 0.0 * gi
            mids.append(np.column_stack([mx, my]))
            n_edges += ne
        grad = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_edges, N),
        )

        if section.dim == 1:
            dalpha = sp.csr_matrix((N, N))
            angular, weight, acoords = dalpha, np.ones(N), coords
        else:
            dalpha = _angular_matrix(index, coords, hx, hy)
            ring, ring_coords = _angular_ring(index, hx, hy, x0 + ox, y0 + oy)
            angular = sp.vstack([dalpha, ring]).tocsr()
            weight = np.concatenate([np.ones(N), np.full(ring.shape[0], 0.5)])
            acoords = np.vstack([coords, ring_coords])
        index.setflags(write=False)
        return cls(section, n, (hx, hy) if section.dim == 2 else (hx,), coords, grad,
                   np.vstack(mids), dalpha, angular, weight, acoords, index)


def _angular_matrix(index: np.ndarray, coords: np.ndarray, hx: float, hy: float) -> sp.csr_matrix:
    """Centered t2 d1 - t1 d2 with zero extension; exactly skew-symmetric."""
    nx, ny = index.shape
    rows, cols, vals = [], [], []
    pad = np.pad(index, 1, constant_values=-1)
    centre = pad[1:-1, 1:-1]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = pad[1 + di : 1 + di + nx, 1 + dj : 1 + dj + ny]
        ok = (centre >= 0) & (nb >= 0)
        r, c = centre[ok], nb[ok]
        if di:
            v = di * coords[r, 1] / (2 * hx)
        else:
            v = -dj * coords[r, 0] / (2 * hy)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    N = coords.shape[0]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


def _angular_ring(index: np.ndarray, hx: float, hy: float, xb: float, yb: float) -> sp.csr_matrix:
    """t2 d1 - t1 d2 on Dirichlet lattice nodes 4-adjacent to an unknown.

    The node value is zero, so a derivative towards unknowns is the
    one-sided (4 u_1 - u_2) / 2h; with unknowns on both sides it is centered.
    ``xb, yb`` are the absolute coordinates of padded lattice position (0, 0).
    """
    p2 = np.pad(index, 3, constant_values=-1)
    P = p2[2:-2, 2:-2]
    ring = np.argwhere(P < 0)
    gi, gj = ring[:, 0], ring[:, 1]
    # positions in the wider padding, so two steps outward stay in range
    a, b = gi + 2, gj + 2

    def near(di, dj, k):
        return p2[a + k * di, b + k * dj]

    adjacent = (near(1, 0, 1) >= 0) | (near(-1, 0, 1) >= 0) | (near(0, 1, 1) >= 0) | (near(0, -1, 1) >= 0)
    gi, gj, a, b = gi[adjacent], gj[adjacent], a[adjacent], b[adjacent]
    t1 = xb + hx * gi
    t2 = yb + hy * gj
    rows, cols, vals = [], [], []
    r = np.arange(gi.size)

    def axis_terms(di, dj, h, factor):
        fwd, fwd2 = p2[a + di, b + dj], p2[a + 2 * di, b + 2 * dj]
        bwd, bwd2 = p2[a - di, b - dj], p2[a - 2 * di, b - 2 * dj]
        both = (fwd >= 0) & (bwd >= 0)
        only_f = (fwd >= 0) & (bwd < 0)
        only_b = (bwd >= 0) & (fwd < 0)
        terms = [
            (both, fwd, 1.0), (both, bwd, -1.0),
            (only_f, fwd, 4.0), (only_f & (fwd2 >= 0), fwd2, -1.0),
            (only_b, bwd, -4.0), (only_b & (bwd2 >= 0), bwd2, 1.0),
        ]
        for mask, col, c in terms:
            rows.append(r[mask])
            cols.append(col[mask])
            vals.append(c * factor[mask] / (2 * h))

    axis_terms(1, 0, hx, t2)
    axis_terms(0, 1, hy, -t1)
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(gi.size, int(index.max()) + 1),
    )
    return mat, np.column_stack([t1, t2])


@dataclass(frozen=True)
class CrossEigs:
    E1: float
    E2: float
    J1: np.ndarray
    C_omega: float
    a: float
    circular: bool
    grid: TransverseGrid
    extrapolated: dict | None = None

    def summary(self) -> dict:
        return {
            "E1": self.E1,
            "E2": self.E2,
            "C_omega": self.C_omega,
            "a": self.a,
            "circular": self.circular,
            "grid": {"n": self.grid.n, "unknowns": self.grid.size,
                     "spacing": list(self.grid.spacing)},
            "extrapolated": self.extrapolated,
        }


def _lowest_two(L: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    N = L.shape[0]
    if N <= 400:
        w, v = np.linalg.eigh(L.toarray())
        return w[:2], v[:, :2]
    v0 = np.ones(N)
    w, v = eigsh(L.tocsc(), k=2, sigma=0.0, which="LM", v0=v0, tol=1e-13)
    order = np.argsort(w)
    return w[order], v[:, order]


def _solve_level(section: CrossSection, n: int):
    grid = TransverseGrid.build(section, n)
    if grid.size < 2:
        raise ValueError("section has fewer than two lattice unknowns")
    w, v = _lowest_two(grid.laplacian())
    J = v[:, 0]
    J = J * np.sign(J[np.argmax(np.abs(J))])
    J = np.abs(J) / np.sqrt(np.sum(J**2) * grid.cell)
    return grid, float(w[0]), float(w[1]), J


def geometry_constants(section: CrossSection) -> tuple[float, bool]:
    """Radius a = sup |t| over the section and the circular flag.

    Parametric shapes are handled in closed form (the offset ellipse by a
    dense boundary scan).  Masks scan their pixel corners; their circular
    flag is the rotation heuristic of :func:`_mask_is_circular`.
    """
    s, p = section.shape, section.params
    ox, oy = section.offset
    c = np.hypot(ox, oy)
    if s == "rectangle":
        a = np.hypot(p[0] / 2 + abs(ox), p[1] / 2 + abs(oy))
    elif s in ("disc", "annulus"):
        a = c + p[-1]
    elif s == "ellipse":
        phi = np.linspace(0, 2 * np.pi, 200001)
        a = float(np.max(np.hypot(p[0] * np.cos(phi) + ox, p[1] * np.sin(phi) + oy)))
    elif s == "interval":
        a = p[0] + abs(ox)
    else:
        a = _mask_radius(p[0], p[1], (ox, oy))
    circular = bool(s in ("disc", "annulus") and c == 0.0)
    if s == "mask":
        circular = _mask_is_circular(section)
    return float(a), circular


def _mask_radius(bitmap, extent, offset) -> float:
    x0, x1, y0, y1 = extent
    ny, nx = bitmap.shape
    iy, ix = np.nonzero(bitmap)
    best = 0.0
    for cx in (ix, ix + 1):
        for cy in (iy, iy + 1):
            x = x0 + (x1 - x0) * cx / nx + offset[0]
            y = y0 + (y1 - y0) * cy / ny + offset[1]
            best = max(best, float(np.max(np.hypot(x, y))))
    return best


def _mask_is_circular(section: CrossSection) -> bool:
    """Heuristic: the mask maps onto itself under rotations about the origin.

    Pixel centres are rotated by a few angles and looked up again.  A
    rotation-invariant set only disagrees on staircase pixels, so the
    mismatch must stay below half the fraction of boundary pixels.
    """
    bitmap, (x0, x1, y0, y1) = section.params
    ny, nx = bitmap.shape
    xc = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx + section.offset[0]
    yc = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny + section.offset[1]
    X, Y = np.meshgrid(xc, yc, indexing="xy")
    pts = X[bitmap], Y[bitmap]
    inner = bitmap.copy()
    inner[1:, :] &= bitmap[:-1, :]
    inner[:-1, :] &= bitmap[1:, :]
    inner[:, 1:] &= bitmap[:, :-1]
    inner[:, :-1] &= bitmap[:, 1:]
    inner[[0, -1], :] = False
    inner[:, [0, -1]] = False
    boundary_fraction = 1.0 - inner.sum() / bitmap.sum()
    ox, oy = section.offset
    for phi in (np.pi / 7, np.pi / 4, np.pi / 3, np.pi / 2):
        c, s = np.cos(phi), np.sin(phi)
        xr = c * pts[0] - s * pts[1]
        yr = s * pts[0] + c * pts[1]
        hit = section.contains(xr - ox, yr - oy)
        if 1.0 - hit.mean() > 0.5 * boundary_fraction:
            return False
    return True


def angular_coupling(eigs: CrossEigs, section: CrossSection | None = None) -> float:
    """Squared L2 norm of the angular derivative of the ground state.

    Trapezoid rule over the unknowns and the boundary ring; exactly 0 for
    circular sections.
    """
    if eigs.circular:
        return 0.0
    g = eigs.grid
    return float(np.sum(g.angular_weight * (g.angular @ eigs.J1) ** 2) * g.cell)


def cross_eigs(section: CrossSection, n: int = 32, refine: bool = True,
               allow_coarse: bool = False) -> CrossEigs:
    """Ground data of the Dirichlet Laplacian on ``section``.

    Parameters
    ----------
    n : interior lattice nodes per axis (at least MIN_NODES unless
        ``allow_coarse``).
    refine : also solve on the lattice with n' = 2n + 1 (half spacing) and
        report Richardson extrapolations (4 E_fine - E_coarse) / 3.  The
        returned E1, E2, J1 always belong to the n-lattice, since the tube
        assembly must use that same stencil.
    """
    if n < MIN_NODES and not allow_coarse:
        raise ValueError(f"need at least {MIN_NODES} interior nodes per axis, got {n}")
    if section.area() <= 0:
        raise ValueError("degenerate section")
    a, circular = geometry_constants(section)
    grid, E1, E2, J = _solve_level(section, n)
    if not E2 > E1:
        raise ValueError(f"no spectral gap on the lattice: E1={E1}, E2={E2}")
    extrap = None
    if refine:
        _, f1, f2, _ = _solve_level(section, 2 * n + 1)
        extrap = {"E1": (4 * f1 - E1) / 3, "E2": (4 * f2 - E2) / 3, "fine_n": 2 * n + 1}
    eigs = CrossEigs(E1, E2, J, 0.0, a, circular, grid, extrap)
    C = angular_coupling(eigs)
    return CrossEigs(E1, E2, J, C, a, circular, grid, extrap)
