"""Steady incompressible laminar flow through a post array.

The solver marches the incompressible Navier-Stokes equations in pseudo
time with an incremental pressure-correction (fractional-step) scheme on a
uniform staggered (MAC) grid. Posts are a stair-step solid mask. Viscous
terms are implicit and convection explicit, so the two Helmholtz operators
and the pressure Poisson operator are factorised once per solve.

Grid layout, with ``h`` the cell size:

* ``p``, ``solid``: cell centres, shape ``(nx, ny)``
* ``u``: vertical faces at ``x = i h``, shape ``(nx + 1, ny)``
* ``v``: horizontal faces at ``y = j h``, shape ``(nx, ny + 1)`` with side
  walls or ``(nx, ny)`` when the lateral direction is periodic.

Velocities are SI (m/s); lengths on the public surface are micrometres.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, OutOfDomainError, ParseError, SolverError
from .geometry import PostArray
from ._kernels import interp_velocity

log = logging.getLogger(__name__)

UM = 1e-6


@dataclass(frozen=True)
class FluidProperties:
    density: float = 1000.0
    viscosity: float = 1e-3
    body_force: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.density <= 0 or self.viscosity <= 0:
            raise ConfigurationError("fluid density and viscosity must be positive")

    @property
    def kinematic_viscosity(self) -> float:
        return self.viscosity / self.density


@dataclass(frozen=True)
class SolverConfig:
    """Flow-solve settings.

    ``tolerance`` bounds both the steady residual (time derivative scaled by
    the viscous term, ``|du/dt| G^2 / (nu U)``) and the normalised divergence.
    ``diffusion_number`` sets the pseudo-time step as ``nu dt / h^2``.
    ``balance_lateral_flux`` adds a uniform lateral body force inside the
    array so the net lateral flux vanishes, as side walls would enforce.
    """

    reynolds: float = 1.0
    cells_per_gap: int = 12
    tolerance: float = 1e-6
    max_iterations: int = 5000
    diffusion_number: float = 3.0
    balance_lateral_flux: bool = True
    balance_tolerance: float = 1e-4
    max_balance_solves: int = 5

    def __post_init__(self):
        if self.reynolds < 0:
            raise ConfigurationError("Reynolds number must be non-negative")
        if self.tolerance <= 0:
            raise ConfigurationError("tolerance must be positive")
        if self.cells_per_gap < 8:
            raise ConfigurationError(
                f"cells_per_gap must be >= 8 to resolve the gap, got {self.cells_per_gap}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")


def inlet_velocity_from_reynolds(reynolds: float, fluid: FluidProperties, gap_um: float) -> float:
    """Mean inlet speed U = Re mu / (rho G), with the gap as length scale."""
    if reynolds < 0:
        raise ConfigurationError("Reynolds number must be non-negative")
    if gap_um <= 0:
        raise ConfigurationError("gap must be positive")
    return reynolds * fluid.viscosity / (fluid.density * gap_um * UM)


@dataclass
class FlowField:
    """Discrete velocity/pressure solution; treat as read-only once built."""

    h_um: float
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    solid: np.ndarray
    periodic_y: bool
    inlet_velocity: float
    length_scale_um: float
    lateral_accel: float = 0.0
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        nx, ny = self.solid.shape
        nyv = ny if self.periodic_y else ny + 1
        if self.u.shape != (nx + 1, ny) or self.v.shape != (nx, nyv) or self.p.shape != (nx, ny):
            raise ConfigurationError("inconsistent staggered array shapes")

    @property
    def nx(self) -> int:
        return self.solid.shape[0]

    @property
    def ny(self) -> int:
        return self.solid.shape[1]

    @property
    def width_um(self) -> float:
        return self.nx * self.h_um

    @property
    def height_um(self) -> float:
        return self.ny * self.h_um

    @classmethod
    def from_functions(cls, nx, ny, h_um, ufunc, vfunc, solid=None, periodic_y=False,
                       inlet_velocity=1.0, length_scale_um=None):
        """Sample analytic velocity functions (of x, y in micrometres) onto the grid."""
        xu = np.arange(nx + 1) * h_um
        yu = (np.arange(ny) + 0.5) * h_um
        nyv = ny if periodic_y else ny + 1
        xv = (np.arange(nx) + 0.5) * h_um
        yv = np.arange(nyv) * h_um
        XU, YU = np.meshgrid(xu, yu, indexing="ij")
        XV, YV = np.meshgrid(xv, yv, indexing="ij")
        u = np.broadcast_to(np.asarray(ufunc(XU, YU), dtype=float), XU.shape).copy()
        v = np.broadcast_to(np.asarray(vfunc(XV, YV), dtype=float), XV.shape).copy()
        if solid is None:
            solid = np.zeros((nx, ny), dtype=bool)
        return cls(h_um=h_um, u=u, v=v, p=np.zeros((nx, ny)), solid=solid,
                   periodic_y=periodic_y, inlet_velocity=inlet_velocity,
                   length_scale_um=length_scale_um or ny * h_um)


def sample_velocity(flow: FlowField, point) -> np.ndarray:
    """Bilinear velocity (m/s) at a point given in micrometres; zero inside solids."""
    x, y = float(point[0]), float(point[1])
    if not 0.0 <= x <= flow.width_um:
        raise OutOfDomainError(f"x = {x} um outside [0, {flow.width_um}]")
    if not flow.periodic_y and not 0.0 <= y <= flow.height_um:
        raise OutOfDomainError(f"y = {y} um outside [0, {flow.height_um}]")
    ux, uy = interp_velocity(x * UM, y * UM, flow.u, flow.v, flow.solid,
                             flow.h_um * UM, flow.periodic_y)
    return np.array([ux, uy])


def divergence(flow: FlowField) -> np.ndarray:
    """Discrete divergence per cell in 1/s; solid cells report zero."""
    h = flow.h_um * UM
    u, v = flow.u, flow.v
    if flow.periodic_y:
        dv = np.roll(v, -1, axis=1) - v
    else:
        dv = v[:, 1:] - v[:, :-1]
    div = (u[1:, :] - u[:-1, :] + dv) / h
    div[flow.solid] = 0.0
    return div


def divergence_norm(flow: FlowField) -> float:
    """L-infinity divergence over fluid cells, normalised by U/G."""
    div = divergence(flow)
    scale = flow.inlet_velocity / (flow.length_scale_um * UM)
    if scale == 0.0:
        return float(np.abs(div).max(initial=0.0))
    return float(np.abs(div).max(initial=0.0) / scale)


def mean_lateral_velocity(flow: FlowField, x0_um: float, x1_um: float) -> float:
    """Mean of v over the faces whose centres lie in [x0, x1]; proportional to net lateral flux."""
    xc = (np.arange(flow.nx) + 0.5) * flow.h_um
    sel = (xc >= x0_um) & (xc <= x1_um)
    if not sel.any():
        return 0.0
    return float(flow.v[sel].mean())


def flow_rate_profile(flow: FlowField) -> np.ndarray:
    """Volumetric flux per unit depth (m^2/s) through every vertical face column."""
    return flow.u.sum(axis=1) * flow.h_um * UM


FIELD_CSV_HEADER = ["x_um", "y_um", "u_mps", "v_mps", "p_pa", "solid"]


def cell_centre_velocity(flow: FlowField):
    """Face velocities averaged onto cell centres, as (u, v) arrays of shape (nx, ny)."""
    uc = 0.5 * (flow.u[1:, :] + flow.u[:-1, :])
    if flow.periodic_y:
        vc = 0.5 * (flow.v + np.roll(flow.v, -1, axis=1))
    else:
        vc = 0.5 * (flow.v[:, 1:] + flow.v[:, :-1])
    return uc, vc


def speed_magnitude(flow: FlowField) -> np.ndarray:
    uc, vc = cell_centre_velocity(flow)
    return np.hypot(uc, vc)


def write_field_csv(flow: FlowField, path) -> None:
    """One row per cell centre: x_um,y_um,u_mps,v_mps,p_pa,solid."""
    uc, vc = cell_centre_velocity(flow)
    xc = (np.arange(flow.nx) + 0.5) * flow.h_um
    yc = (np.arange(flow.ny) + 0.5) * flow.h_um
    with open(path, "w") as fh:
        fh.write(",".join(FIELD_CSV_HEADER) + "\n")
        for i in range(flow.nx):
            for j in range(flow.ny):
                vals = (xc[i], yc[j], uc[i, j], vc[i, j], flow.p[i, j])
                fh.write(",".join(repr(float(v)) for v in vals)
                         + f",{int(flow.solid[i, j])}\n")


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`: (h_um, speed, solid) on the cell grid."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != FIELD_CSV_HEADER:
            raise ParseError(f"expected header {','.join(FIELD_CSV_HEADER)}", line=1)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise ParseError(f"expected 6 fields, got {len(parts)}", line=lineno)
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise ParseError("non-numeric field", line=lineno) from None
    if not rows:
        raise ParseError("no data rows", line=2)
    a = np.array(rows)
    xs, ys = np.unique(a[:, 0]), np.unique(a[:, 1])
    if len(xs) * len(ys) != len(a):
        raise ParseError("rows do not form a complete grid", line=len(a) + 1)
    h = float(xs[1] - xs[0]) if len(xs) > 1 else float(2 * xs[0])
    speed = np.hypot(a[:, 2], a[:, 3]).reshape(len(xs), len(ys))
    solid = a[:, 5].reshape(len(xs), len(ys)) > 0
    return h, speed, solid


# --------------------------------------------------------------------------
# grid construction


def rasterize(array: PostArray, h_um: float, nx: int, ny: int) -> np.ndarray:
    """Solid mask: cells whose centre lies inside a post."""
    solid = np.zeros((nx, ny), dtype=bool)
    xc = (np.arange(nx) + 0.5) * h_um
    yc = (np.arange(ny) + 0.5) * h_um
    height = ny * h_um
    r = array.radius_um
    for cx, cy in array.centers:
        i0 = max(int((cx - r) / h_um) - 1, 0)
        i1 = min(int((cx + r) / h_um) + 2, nx)
        if i0 >= i1:
            continue
        dx = xc[i0:i1, None] - cx
        dy = yc[None, :] - cy
        if array.periodic_y:
            dy = dy - height * np.round(dy / height)
        solid[i0:i1, :] |= dx * dx + dy * dy < r * r
    return solid


def _connected_to_outlet(fluid: np.ndarray, periodic: bool) -> np.ndarray:
    labels, n = ndimage.label(fluid)
    if n == 0:
        return fluid
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    if periodic:
        for a, b in zip(labels[:, 0], labels[:, -1]):
            if a and b:
                parent[find(a)] = find(b)
    roots = np.array([find(k) for k in range(n + 1)])
    keep = set(roots[labels[-1, :][labels[-1, :] > 0]].tolist())
    keep_mask = np.isin(roots[labels], list(keep)) & fluid
    return keep_mask


@dataclass
class _Grid:
    nx: int
    ny: int
    h: float  # metres
    periodic: bool
    solid: np.ndarray
    u_fixed: np.ndarray
    u_val: np.ndarray
    v_fixed: np.ndarray
    v_val: np.ndarray
    cell_index: np.ndarray
    n_cells: int


def _build_grid(solid: np.ndarray, h: float, periodic: bool, inlet: float) -> _Grid:
    nx, ny = solid.shape
    fluid = _connected_to_outlet(~solid, periodic)
    solid = ~fluid

    u_fixed = np.zeros((nx + 1, ny), dtype=bool)
    u_val = np.zeros((nx + 1, ny))
    u_fixed[0, :] = True
    u_val[0, :] = np.where(solid[0, :], 0.0, inlet)
    u_fixed[1:nx, :] = solid[:-1, :] | solid[1:, :]
    u_fixed[nx, :] = solid[nx - 1, :]

    if periodic:
        v_fixed = solid | np.roll(solid, 1, axis=1)
    else:
        v_fixed = np.zeros((nx, ny + 1), dtype=bool)
        v_fixed[:, 0] = True
        v_fixed[:, ny] = True
        v_fixed[:, 1:ny] = solid[:, :-1] | solid[:, 1:]
    v_val = np.zeros(v_fixed.shape)

    cell_index = -np.ones((nx, ny), dtype=np.int64)
    cell_index[fluid] = np.arange(int(fluid.sum()))
    return _Grid(nx, ny, h, periodic, solid, u_fixed, u_val, v_fixed, v_val,
                 cell_index, int(fluid.sum()))


def _index(fixed: np.ndarray) -> np.ndarray:
    idx = -np.ones(fixed.shape, dtype=np.int64)
    idx[~fixed] = np.arange(int((~fixed).sum()))
    return idx


def _helmholtz(fixed, val, dt, nu, h, periodic, normal_axis, low_ghost):
    """Assemble (I/dt - nu Lap) over the unknown faces of one velocity component.

    Along ``normal_axis`` fixed neighbours sit on the face itself (Dirichlet
    at distance h); tangential fixed neighbours are mirrored about a wall
    half a cell away. A missing high neighbour along x is the outlet
    (zero gradient); a missing low neighbour along x is the inlet, mirrored
    when ``low_ghost`` is set.
    """
    idx = _index(fixed)
    n = int((~fixed).sum())
    c = nu / (h * h)
    diag = np.full(fixed.shape, 1.0 / dt)
    rhs = np.zeros(fixed.shape)
    rows, cols, vals = [], [], []
    unknown = ~fixed
    shape = fixed.shape

    for axis in (0, 1):
        for step in (-1, 1):
            normal = axis == normal_axis
            coords = np.indices(shape)[axis] + step
            wrap = axis == 1 and periodic
            if wrap:
                coords = np.mod(coords, shape[1])
            inside = (coords >= 0) & (coords < shape[axis])
            safe = np.clip(coords, 0, shape[axis] - 1)
            if axis == 0:
                nb_fixed = fixed[safe, np.arange(shape[1])[None, :]]
                nb_val = val[safe, np.arange(shape[1])[None, :]]
                nb_idx = idx[safe, np.arange(shape[1])[None, :]]
            else:
                nb_fixed = fixed[np.arange(shape[0])[:, None], safe]
                nb_val = val[np.arange(shape[0])[:, None], safe]
                nb_idx = idx[np.arange(shape[0])[:, None], safe]

            m_unknown = unknown & inside & ~nb_fixed
            m_fixed = unknown & inside & nb_fixed
            m_out = unknown & ~inside

            diag[m_unknown] += c
            rows.append(idx[m_unknown])
            cols.append(nb_idx[m_unknown])
            vals.append(np.full(int(m_unknown.sum()), -c))

            if normal:
                diag[m_fixed] += c
                rhs[m_fixed] += c * nb_val[m_fixed]
            else:
                diag[m_fixed] += 2.0 * c
            if axis == 0:
                if step == -1 and low_ghost:
                    diag[m_out] += 2.0 * c
            else:
                # side walls (non-periodic only): mirror for tangential, face value for normal
                diag[m_out] += c if normal else 2.0 * c

    rows.append(idx[unknown])
    cols.append(idx[unknown])
    vals.append(diag[unknown])
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return A, rhs[unknown], idx


def _poisson(grid: _Grid):
    """SPD operator -D G over fluid cells; outlet faces carry p = 0."""
    nx, ny, h = grid.nx, grid.ny, grid.h
    ci = grid.cell_index
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.n_cells)
    w = 1.0 / (h * h)

    def edges(a, b):
        nonlocal diag
        np.add.at(diag, a, w)
        np.add.at(diag, b, w)
        rows.extend([a, b])
        cols.extend([b, a])
        vals.extend([np.full(a.size, -w), np.full(a.size, -w)])

    mu_free = ~grid.u_fixed[1:nx, :]
    left = ci[:-1, :][mu_free]
    right = ci[1:, :][mu_free]
    edges(left, right)

    if grid.periodic:
        mv = ~grid.v_fixed
        below = np.roll(ci, 1, axis=1)[mv]
        above = ci[mv]
    else:
        mv = ~grid.v_fixed[:, 1:ny]
        below = ci[:, :-1][mv]
        above = ci[:, 1:][mv]
    edges(below, above)

    out = ~grid.u_fixed[nx, :]
    np.add.at(diag, ci[nx - 1, :][out], 2.0 * w)

    rows.append(np.arange(grid.n_cells))
    cols.append(np.arange(grid.n_cells))
    vals.append(diag)
    M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.n_cells, grid.n_cells))
    return M


def _convection(u, v, h, periodic, inlet):
    """Advective terms (u . grad) u on u-faces and v-faces, central differences."""
    nx = v.shape[0]
    ny = u.shape[1]
    if periodic:
        upad = np.concatenate([u[:, -1:], u, u[:, :1]], axis=1)
        vc = 0.5 * (v + np.roll(v, -1, axis=1))
    else:
        upad = np.concatenate([-u[:, :1], u, -u[:, -1:]], axis=1)
        vc = 0.5 * (v[:, :-1] + v[:, 1:])
    dudy = (upad[:, 2:] - upad[:, :-2]) / (2 * h)
    dudx = np.empty_like(u)
    dudx[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    dudx[0] = (u[1] - u[0]) / h
    dudx[-1] = (u[-1] - u[-2]) / h
    vbar = np.empty_like(u)
    vbar[1:-1] = 0.5 * (vc[:-1] + vc[1:])
    vbar[0] = vc[0]
    vbar[-1] = vc[-1]
    conv_u = u * dudx + vbar * dudy

    uc = 0.5 * (u[:-1] + u[1:])
    vpad_x = np.concatenate([-v[:1], v, v[-1:]], axis=0)
    dvdx = (vpad_x[2:] - vpad_x[:-2]) / (2 * h)
    if periodic:
        ubar = 0.5 * (uc + np.roll(uc, 1, axis=1))
        dvdy = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * h)
    else:
        ubar = np.empty_like(v)
        ubar[:, 1:-1] = 0.5 * (uc[:, :-1] + uc[:, 1:])
        ubar[:, 0] = uc[:, 0]
        ubar[:, -1] = uc[:, -1]
        dvdy = np.zeros_like(v)
        dvdy[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * h)
    conv_v = ubar * dvdx + v * dvdy
    return conv_u, conv_v


class _Marcher:
    """Pseudo-time pressure-correction iteration for one geometry and forcing."""

    def __init__(self, grid: _Grid, nu: float, dt: float, inlet: float):
        self.g = grid
        self.nu = nu
        self.dt = dt
        self.inlet = inlet
        h = grid.h
        self.Au, self.bu, self.iu = _helmholtz(grid.u_fixed, grid.u_val, dt, nu, h,
                                               grid.periodic, normal_axis=0, low_ghost=False)
        self.Av, self.bv, self.iv = _helmholtz(grid.v_fixed, grid.v_val, dt, nu, h,
                                               grid.periodic, normal_axis=1, low_ghost=True)
        self.lu_u = splu(self.Au)
        self.lu_v = splu(self.Av)
        self.lu_p = splu(_poisson(grid))
        self.fu = ~grid.u_fixed
        self.fv = ~grid.v_fixed

    def initial(self):
        g = self.g
        u = np.where(g.u_fixed, g.u_val, self.inlet)
        u[:, :] = np.where(g.u_fixed, g.u_val, u)
        v = np.zeros(g.v_fixed.shape)
        P = np.zeros((g.nx, g.ny))
        return u, v, P

    def _grad_p(self, P):
        g = self.g
        h = g.h
        gu = np.zeros((g.nx + 1, g.ny))
        gu[1:g.nx] = (P[1:] - P[:-1]) / h
        gu[g.nx] = -2.0 * P[g.nx - 1] / h
        if g.periodic:
            gv = (P - np.roll(P, 1, axis=1)) / h
        else:
            gv = np.zeros((g.nx, g.ny + 1))
            gv[:, 1:g.ny] = (P[:, 1:] - P[:, :-1]) / h
        return gu, gv

    def step(self, u, v, P, accel_v):
        g, dt = self.g, self.dt
        cu, cv = _convection(u, v, g.h, g.periodic, self.inlet)
        gu, gv = self._grad_p(P)
        ru = u / dt - cu - gu
        rv = v / dt - cv - gv + accel_v
        us = u.copy()
        vs = v.copy()
        us[self.fu] = self.lu_u.solve(ru[self.fu] + self.bu)
        vs[self.fv] = self.lu_v.solve(rv[self.fv] + self.bv)

        div = self._div(us, vs)
        ci = g.cell_index
        phi_vec = self.lu_p.solve(-div[ci >= 0] / dt)
        phi = np.zeros((g.nx, g.ny))
        phi[ci >= 0] = phi_vec
        gpu, gpv = self._grad_p(phi)
        us[self.fu] -= dt * gpu[self.fu]
        vs[self.fv] -= dt * gpv[self.fv]
        return us, vs, P + phi

    def _div(self, u, v):
        h = self.g.h
        if self.g.periodic:
            dv = np.roll(v, -1, axis=1) - v
        else:
            dv = v[:, 1:] - v[:, :-1]
        return (u[1:] - u[:-1] + dv) / h

    def _pack(self, u, v, P):
        return np.concatenate([u[self.fu], v[self.fv], P[self.g.cell_index >= 0]])

    def _unpack(self, x, like):
        u, v, P = (a.copy() for a in like)
        nu_, nv_ = int(self.fu.sum()), int(self.fv.sum())
        u[self.fu] = x[:nu_]
        v[self.fv] = x[nu_:nu_ + nv_]
        P[self.g.cell_index >= 0] = x[nu_ + nv_:]
        return u, v, P

    def run(self, u, v, P, accel_v, tol, max_iter, res_scale, memory=10):
        """Iterate to steady state with Anderson acceleration of the step map.

        Mixing only forms affine combinations of projected iterates, so the
        result stays discretely divergence-free.
        """
        like = (u, v, P)
        n_vel = int(self.fu.sum()) + int(self.fv.sum())
        x = self._pack(u, v, P)
        dF = np.empty((memory, n_vel))
        dG = np.empty((memory, x.size))
        stored = 0
        f_prev = g_prev = None
        residual = math.inf
        for it in range(1, max_iter + 1):
            g = self._pack(*self.step(*self._unpack(x, like), accel_v))
            f = g - x
            fv = f[:n_vel]
            residual = np.abs(fv).max(initial=0.0) / self.dt * res_scale
            if residual <= tol:
                return (*self._unpack(g, like), it, residual, True)
            if memory > 0 and f_prev is not None:
                slot = stored % memory
                np.subtract(fv, f_prev, out=dF[slot])
                np.subtract(g, g_prev, out=dG[slot])
                stored += 1
            f_prev, g_prev = fv.copy(), g
            k = min(stored, memory)
            if k:
                F = dF[:k]
                gram = F @ F.T
                gram[np.diag_indices(k)] *= 1.0 + 1e-10
                gamma = np.linalg.lstsq(gram, F @ fv, rcond=None)[0]
                x = g - gamma @ dG[:k]
            else:
                x = g
        return (*self._unpack(g, like), max_iter, residual, False)


def _grid_dims(array: PostArray, h_um: float):
    ny = max(int(round(array.height_um / h_um)), 1)
    h_um = array.height_um / ny
    nx = max(int(round(array.width_um / h_um)), 2)
    return nx, ny, h_um


def solve_steady_flow(array: PostArray, fluid: FluidProperties, config: SolverConfig,
                      length_scale_um: float | None = None) -> FlowField:
    """Steady flow with uniform inlet velocity, p = 0 outlet and no-slip solids.

    The inlet speed follows from ``config.reynolds`` with the design gap
    (or ``length_scale_um`` for post-free channels) as the length scale.
    """
    t0 = time.perf_counter()
    if length_scale_um is None:
        if array.design is None:
            raise ConfigurationError("length_scale_um is required for arrays without a design")
        length_scale_um = array.design.gap_um
    nx, ny, h_um = _grid_dims(array, length_scale_um / config.cells_per_gap)
    h = h_um * UM
    G = length_scale_um * UM
    nu = fluid.kinematic_viscosity
    U = inlet_velocity_from_reynolds(config.reynolds, fluid, length_scale_um)

    solid = rasterize(array, h_um, nx, ny)
    if U == 0.0:
        grid = _build_grid(solid, h, array.periodic_y, 0.0)
        nyv = ny if array.periodic_y else ny + 1
        return FlowField(h_um=h_um, u=np.zeros((nx + 1, ny)), v=np.zeros((nx, nyv)),
                         p=np.zeros((nx, ny)), solid=grid.solid, periodic_y=array.periodic_y,
                         inlet_velocity=0.0, length_scale_um=length_scale_um,
                         report={"iterations": 0, "residual": 0.0, "converged": True})

    grid = _build_grid(solid, h, array.periodic_y, U)
    # pseudo step: nu dt / h^2 of a few balances the projection splitting error against
    # diffusion speed; explicit central convection needs dt < 2 nu / u_max^2 on top
    dt = min(config.diffusion_number * h * h / nu, 0.1 * nu / (U * U))
    marcher = _Marcher(grid, nu, dt, U)
    res_scale = G * G / (nu * U)

    balance = config.balance_lateral_flux and array.periodic_y and array.design is not None
    accel_mask = np.zeros(grid.v_fixed.shape)
    if balance:
        d = array.design
        xc = (np.arange(nx) + 0.5) * h_um
        accel_mask[(xc >= d.array_start_um) & (xc <= d.array_end_um), :] = 1.0

    def lateral_mean(v):
        sel = accel_mask[:, 0] > 0
        return float(v[sel].mean()) / U

    u, v, P = marcher.initial()
    total_iter = 0
    accel = 0.0
    history = []
    u, v, P, it, res, ok = marcher.run(u, v, P, 0.0 * accel_mask, config.tolerance,
                                       config.max_iterations, res_scale)
    total_iter += it
    if not ok:
        raise SolverError(f"flow solve did not converge in {it} iterations "
                          f"(residual {res:.3e})", residual=res, iterations=it)
    if balance:
        # lateral flux responds (almost) linearly to the lateral forcing: secant iteration
        a0, m0 = 0.0, lateral_mean(v)
        history.append((a0, m0))
        a1 = -m0 * U * nu / (G * G) * 50.0
        state = (u, v, P)
        for _ in range(config.max_balance_solves):
            if abs(m0) <= config.balance_tolerance:
                break
            u, v, P, it, res, ok = marcher.run(*state, a1 * accel_mask, config.tolerance,
                                               config.max_iterations, res_scale)
            total_iter += it
            if not ok:
                raise SolverError(f"balanced flow solve did not converge (residual {res:.3e})",
                                  residual=res, iterations=it)
            m1 = lateral_mean(v)
            history.append((a1, m1))
            state = (u, v, P)
            if m1 == m0:
                a0, m0 = a1, m1
                break
            a0, m0, a1 = a1, m1, a1 - m1 * (a1 - a0) / (m1 - m0)
        accel = a0
        u, v, P = state
        if abs(m0) > config.balance_tolerance:
            log.warning("lateral flux balance stopped at %.2e", m0)

    flow = FlowField(
        h_um=h_um, u=u, v=v, p=P * fluid.density, solid=grid.solid,
        periodic_y=array.periodic_y, inlet_velocity=U, length_scale_um=length_scale_um,
        lateral_accel=accel,
        report={
            "iterations": total_iter,
            "residual": res,
            "converged": True,
            "pseudo_dt_s": dt,
            "grid": [nx, ny],
            "lateral_balance": [list(map(float, hm)) for hm in history],
            "seconds": time.perf_counter() - t0,
        },
    )
    dn = divergence_norm(flow)
    flow.report["divergence_norm"] = dn
    if dn > max(config.tolerance, 1e-9):
        raise SolverError(f"divergence {dn:.3e} exceeds tolerance", residual=dn)
    return flow
