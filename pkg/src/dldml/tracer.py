"""Lagrangian tracing of a single particle through a solved post array.

Particles feel Schiller-Naumann drag and a near-wall lift, collide sterically
with posts (the centre may not come closer than one radius to a post
surface), and are labelled by how far they drift laterally relative to the
array tilt.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, IntegrationFault, OutOfDomainError
from .flowfield import UM, FlowField, FluidProperties
from .geometry import DldDesign, PostArray, build_post_array

BUMPED_THRESHOLD = 0.75
ZIGZAG_THRESHOLD = 0.25


class ModeLabel(str, enum.Enum):
    ZIGZAG = "zigzag"
    BUMPED = "bumped"
    INCONCLUSIVE = "inconclusive"

    @property
    def index(self) -> int:
        return {"zigzag": 0, "bumped": 1, "inconclusive": 2}[self.value]


@dataclass(frozen=True)
class ParticleState:
    position: tuple  # micrometres
    velocity: tuple  # m/s
    diameter_um: float
    density: float = 1050.0

    def __post_init__(self):
        if self.diameter_um <= 0:
            raise ConfigurationError("particle diameter must be positive")

    @property
    def mass(self) -> float:
        d = self.diameter_um * UM
        return self.density * math.pi * d**3 / 6.0


@dataclass(frozen=True)
class TracerConfig:
    dt: float = 1e-6
    particle_density: float = 1050.0
    lift_coefficient: float = 0.5
    fluid: FluidProperties = field(default_factory=FluidProperties)
    target_samples: int = 10_000
    max_time: float | None = None
    release_x_um: float | None = None
    release_y_um: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.lift_coefficient < 0:
            raise ConfigurationError("lift coefficient must be non-negative")


@dataclass
class Trajectory:
    case_id: str
    n: int
    g_um: float
    dp_um: float
    size_um: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mode: ModeLabel = ModeLabel.INCONCLUSIVE
    migration_ratio: float = float("nan")
    complete: bool = True
    min_clearance_um: float = float("inf")

    def __len__(self):
        return len(self.t)


def case_id(n: int, size_um: float) -> str:
    return f"N{n:02d}_d{size_um:07.4f}"


# --------------------------------------------------------------------------
# force laws


def particle_relaxation_time(d_um: float, rho_p: float, mu: float, re_p: float = 0.0) -> float:
    """Schiller-Naumann relaxation time [rho_p d^2 / (18 mu)] / (1 + 0.15 Re_p^0.687)."""
    if d_um <= 0 or rho_p <= 0 or mu <= 0:
        raise ConfigurationError("diameter, density and viscosity must be positive")
    if re_p < 0:
        raise ConfigurationError("particle Reynolds number must be non-negative")
    return K.relaxation_time(d_um * UM, rho_p, mu, re_p)


def particle_reynolds(state: ParticleState, u, fluid: FluidProperties) -> float:
    slip = np.asarray(u, dtype=float) - np.asarray(state.velocity, dtype=float)
    return fluid.density * float(np.hypot(*slip)) * state.diameter_um * UM / fluid.viscosity


def drag_force(state: ParticleState, u, tau: float) -> np.ndarray:
    if tau <= 0:
        raise ConfigurationError("relaxation time must be positive")
    slip = np.asarray(u, dtype=float) - np.asarray(state.velocity, dtype=float)
    return state.mass * slip / tau


def lift_force(state: ParticleState, rho_f: float, c_l: float, wall_distance_um: float,
               wall_normal) -> np.ndarray:
    """C_L rho_f |v|^2 d^2 / 2 along the outward normal, within one diameter of a wall."""
    if c_l < 0:
        raise ConfigurationError("lift coefficient must be non-negative")
    if wall_distance_um >= state.diameter_um:
        return np.zeros(2)
    speed2 = float(np.dot(state.velocity, state.velocity))
    d = state.diameter_um * UM
    n = np.asarray(wall_normal, dtype=float)
    n = n / np.linalg.norm(n)
    return c_l * rho_f * speed2 * d * d / 2.0 * n


# --------------------------------------------------------------------------
# geometry plumbing for the compiled kernels


@dataclass(frozen=True)
class _PostTable:
    post_x: np.ndarray
    post_y: np.ndarray
    row_start: np.ndarray
    row_x0: float
    pitch: float
    radius: float
    periodic: bool
    height: float
    walls: bool


def _post_table(array: PostArray | None, height_um: float, periodic: bool) -> _PostTable:
    if array is None or array.n_posts == 0:
        return _PostTable(np.zeros(0), np.zeros(0), np.zeros(1, dtype=np.int64), 0.0, 1.0,
                          0.0, periodic, height_um * UM, not periodic)
    order = np.argsort(array.rows, kind="stable")
    n_rows = int(array.rows.max()) + 1
    counts = np.bincount(array.rows, minlength=n_rows)
    row_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    pitch = array.design.pitch_um if array.design is not None else (
        float(np.diff(array.row_x).mean()) if n_rows > 1 else 1.0)
    return _PostTable(
        post_x=np.ascontiguousarray(array.centers[order, 0] * UM),
        post_y=np.ascontiguousarray(array.centers[order, 1] * UM),
        row_start=row_start,
        row_x0=float(array.row_x[0]) * UM,
        pitch=pitch * UM,
        radius=array.radius_um * UM,
        periodic=array.periodic_y,
        height=height_um * UM,
        walls=not array.periodic_y,
    )


def _run_kernel(state: ParticleState, flow: FlowField, table: _PostTable, c_l: float,
                fluid: FluidProperties, dt: float, max_steps: int, x_stop_um: float,
                stride: int, collide: bool = True):
    out = K.integrate(
        state.position[0] * UM, state.position[1] * UM,
        float(state.velocity[0]), float(state.velocity[1]),
        state.diameter_um * UM, state.density, fluid.density, fluid.viscosity, c_l,
        flow.u, flow.v, flow.solid, flow.h_um * UM, flow.periodic_y, table.walls,
        table.post_x, table.post_y, table.row_start, table.row_x0, table.pitch, table.radius,
        dt, max_steps, x_stop_um * UM, stride, collide,
    )
    if out[7] == K.STATUS_FAULT:
        raise IntegrationFault(f"particle d={state.diameter_um} um left the domain")
    return out


def advance(state: ParticleState, flow: FlowField, dt: float, array: PostArray | None = None,
            config: TracerConfig | None = None) -> ParticleState:
    """Advance one step under drag, plus lift near the posts of ``array`` if given.

    Drag is integrated exactly for a frozen fluid velocity, so large steps
    relative to the relaxation time stay stable. Collisions are not
    resolved here; see :func:`resolve_steric_collision`.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    cfg = config or TracerConfig()
    x, y = state.position
    if not 0.0 <= x <= flow.width_um or (not flow.periodic_y and not 0.0 <= y <= flow.height_um):
        raise OutOfDomainError(f"particle at ({x}, {y}) um is outside the flow domain")
    table = _post_table(array, flow.height_um, flow.periodic_y)
    c_l = cfg.lift_coefficient if array is not None else 0.0
    out = _run_kernel(state, flow, table, c_l, cfg.fluid, dt, 1, math.inf, 1, collide=False)
    _, _, _, x, y, vx, vy, _, _, _ = out
    return replace(state, position=(x / UM, y / UM), velocity=(vx, vy))


def resolve_steric_collision(state: ParticleState, array: PostArray) -> ParticleState:
    """Push a penetrating centre back onto the imaginary wall one radius off the post.

    The inward normal velocity is removed and the tangential part kept
    (zero restitution). Side walls in wall mode are handled the same way.
    """
    table = _post_table(array, array.height_um, array.periodic_y)
    x, y, vx, vy = K.resolve_collision(
        state.position[0] * UM, state.position[1] * UM,
        float(state.velocity[0]), float(state.velocity[1]),
        state.diameter_um * UM / 2.0, table.post_x, table.post_y, table.row_start,
        table.row_x0, table.pitch, table.radius, table.periodic, table.height, table.walls)
    return replace(state, position=(x / UM, y / UM), velocity=(vx, vy))


def steric_clearance(array: PostArray, x_um, y_um, d_um: float) -> np.ndarray:
    """Distance from each centre to the nearest imaginary wall (negative = overlap)."""
    x = np.asarray(x_um, dtype=float)[:, None]
    y = np.asarray(y_um, dtype=float)[:, None]
    if array.n_posts == 0:
        return np.full(x.shape[0], np.inf)
    dx = x - array.centers[None, :, 0]
    dy = y - array.centers[None, :, 1]
    if array.periodic_y:
        H = array.height_um
        dy = dy - H * np.round(dy / H)
    dist = np.sqrt(dx * dx + dy * dy).min(axis=1)
    return dist - (array.radius_um + d_um / 2.0)


# --------------------------------------------------------------------------
# tracing and labelling


def default_release(design: DldDesign, array: PostArray | None = None):
    """Release point halfway through the inlet margin, inside the first flow lane.

    The lateral position sits half a row shift above the centre of the
    lowest row-0 post. A particle released there meets row 0 with its
    centre in the lane that the next row's post deflects, which is the
    lane that decides between bumping and zigzagging. Releasing mid-gap
    instead lets a bumping particle drift for several rows before it
    locks on, which blurs the migration ratio over a single period.
    """
    array = array or build_post_array(design)
    row0 = array.centers[array.rows == 0]
    y0 = float(np.sort(row0[:, 1])[0]) + 0.5 * design.row_shift_um
    return design.inlet_margin_um / 2.0, y0


def trace(design: DldDesign, flow: FlowField, d_um: float, release_y_um: float | None = None,
          dt: float | None = None, max_time: float | None = None,
          config: TracerConfig | None = None, array: PostArray | None = None) -> Trajectory:
    """Trace one particle from the inlet region to the outlet margin.

    A trajectory that runs out of time is returned with ``complete=False``
    and an inconclusive label.
    """
    cfg = config or TracerConfig()
    dt = dt if dt is not None else cfg.dt
    if d_um <= 0 or d_um >= design.gap_um:
        raise ConfigurationError(f"particle size {d_um} um must lie in (0, G = {design.gap_um})")
    array = array or build_post_array(design)
    rx, ry = default_release(design, array)
    if cfg.release_x_um is not None:
        rx = cfg.release_x_um
    if cfg.release_y_um is not None:
        ry = cfg.release_y_um
    if release_y_um is not None:
        ry = release_y_um
    if rx >= design.array_start_um - design.post_diameter_um / 2.0:
        raise ConfigurationError("release point must lie in the inlet margin")

    U = flow.inlet_velocity
    if U <= 0:
        raise ConfigurationError("tracing needs a driven flow")
    x_stop = design.array_end_um + 0.5 * design.outlet_margin_um
    path = (x_stop - rx) * UM
    nominal_steps = max(int(path / U / dt), 1)
    max_time = max_time if max_time is not None else (cfg.max_time or 5.0 * path / U)
    max_steps = max(int(round(max_time / dt)), 1)
    stride = max(1, nominal_steps // cfg.target_samples)

    table = _post_table(array, flow.height_um, flow.periodic_y)
    u0 = np.array([U, 0.0])
    state = ParticleState(position=(rx, ry), velocity=tuple(u0), diameter_um=d_um,
                          density=cfg.particle_density)
    ts, xs, ys, _, _, _, _, status, min_clear, _ = _run_kernel(
        state, flow, table, cfg.lift_coefficient, cfg.fluid, dt, max_steps, x_stop, stride)
    if len(ts) > cfg.target_samples:
        # particles sliding round posts take longer than the nominal transit; thin
        # evenly so every case stores about the same number of samples
        keep = np.unique(np.round(np.linspace(0, len(ts) - 1, cfg.target_samples)).astype(int))
        ts, xs, ys = ts[keep], xs[keep], ys[keep]

    traj = Trajectory(
        case_id=case_id(design.period, d_um), n=design.period, g_um=design.gap_um,
        dp_um=design.post_diameter_um, size_um=float(d_um),
        t=ts.copy(), x=xs / UM, y=ys / UM,
        complete=status == K.STATUS_OUTLET,
        min_clearance_um=min_clear / UM if np.isfinite(min_clear) and min_clear < 1e299 else math.inf,
    )
    traj.migration_ratio = migration_ratio(traj, design)
    traj.mode = classify_mode(traj, design)
    return traj


def migration_ratio(traj: Trajectory, design: DldDesign) -> float:
    """Net lateral drift across the array divided by the ideal bumped drift eps * dx."""
    inside = (traj.x >= design.array_start_um) & (traj.x <= design.array_end_um)
    if inside.sum() < 2:
        return float("nan")
    xs, ys = traj.x[inside], traj.y[inside]
    dx = xs[-1] - xs[0]
    if dx <= 0:
        return float("nan")
    return float((ys[-1] - ys[0]) / (design.epsilon * dx))


def mode_from_ratio(ratio: float) -> ModeLabel:
    if not np.isfinite(ratio):
        return ModeLabel.INCONCLUSIVE
    if ratio >= BUMPED_THRESHOLD:
        return ModeLabel.BUMPED
    if ratio <= ZIGZAG_THRESHOLD:
        return ModeLabel.ZIGZAG
    return ModeLabel.INCONCLUSIVE


def classify_mode(traj: Trajectory, design: DldDesign) -> ModeLabel:
    if not traj.complete:
        return ModeLabel.INCONCLUSIVE
    inside = traj.x[(traj.x >= design.array_start_um) & (traj.x <= design.array_end_um)]
    span = inside[-1] - inside[0] if inside.size else 0.0
    # must cover (nearly) a full period of rows to say anything
    if span < 0.9 * (design.n_rows - 1) * design.pitch_um:
        return ModeLabel.INCONCLUSIVE
    return mode_from_ratio(migration_ratio(traj, design))


@dataclass
class CriticalDiameterEstimate:
    lower_um: float
    upper_um: float
    evaluations: list

    @property
    def midpoint_um(self) -> float:
        return 0.5 * (self.lower_um + self.upper_um)

    @property
    def width_um(self) -> float:
        return self.upper_um - self.lower_um


def estimate_critical_diameter(design: DldDesign, flow: FlowField, resolution: float,
                               config: TracerConfig | None = None,
                               d_min: float | None = None, d_max: float | None = None,
                               array: PostArray | None = None) -> CriticalDiameterEstimate:
    """Bracket the zigzag/bumped transition size by bisection.

    Returns [largest zigzag size, smallest bumped size]. If an inconclusive
    band separates the modes, both of its edges are bisected and the whole
    band is returned.
    """
    if resolution <= 0:
        raise ConfigurationError("resolution must be positive")
    array = array or build_post_array(design)
    lo = d_min if d_min is not None else 0.5
    hi = d_max if d_max is not None else 0.9 * design.gap_um
    evaluations = []
    cache = {}

    def mode_at(d):
        d = round(float(d), 9)
        if d not in cache:
            tr = trace(design, flow, d, config=config, array=array)
            cache[d] = tr.mode
            evaluations.append((d, tr.mode.value, tr.migration_ratio))
        return cache[d]

    if mode_at(lo) is not ModeLabel.ZIGZAG:
        raise ConfigurationError(f"smallest size {lo} um is not zigzag; lower d_min")
    if mode_at(hi) is not ModeLabel.BUMPED:
        raise ConfigurationError(f"largest size {hi} um is not bumped; raise d_max")

    # lo: zigzag, hi: bumped; stop once bracket <= resolution or an inconclusive size shows up
    mixed = None
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        m = mode_at(mid)
        if m is ModeLabel.ZIGZAG:
            lo = mid
        elif m is ModeLabel.BUMPED:
            hi = mid
        else:
            mixed = mid
            break

    if mixed is not None:
        a, b = lo, mixed  # zigzag | not zigzag
        while b - a > resolution:
            mid = 0.5 * (a + b)
            if mode_at(mid) is ModeLabel.ZIGZAG:
                a = mid
            else:
                b = mid
        c, e = mixed, hi  # not bumped | bumped
        while e - c > resolution:
            mid = 0.5 * (c + e)
            if mode_at(mid) is ModeLabel.BUMPED:
                e = mid
            else:
                c = mid
        lo, hi = a, e
    return CriticalDiameterEstimate(lower_um=lo, upper_um=hi, evaluations=evaluations)
