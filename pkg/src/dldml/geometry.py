"""DLD post-array geometry and the analytic critical-diameter correlations.

All lengths on this module's public surface are in micrometres.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError

STUDIED_PERIOD_RANGE = (3, 48)
LATERAL_BOUNDARIES = ("periodic", "wall")


def row_shift_fraction(n: int) -> float:
    """Lateral row shift as a fraction of the pitch, 1/N."""
    if n < 1:
        raise ConfigurationError(f"period number must be >= 1, got {n}")
    return 1.0 / n


def critical_diameter_inglis(gap_um: float, n: int) -> float:
    """D_c = 2 alpha G eps with alpha = sqrt(N/3) and eps = 1/N."""
    if gap_um <= 0:
        raise ConfigurationError("gap must be positive")
    alpha = math.sqrt(n / 3.0)
    return 2.0 * alpha * gap_um * row_shift_fraction(n)


def critical_diameter_davis(gap_um: float, epsilon: float) -> float:
    """Empirical D_c = 1.4 G eps^0.48."""
    if gap_um <= 0:
        raise ConfigurationError("gap must be positive")
    if not 0.0 < epsilon <= 1.0:
        raise ConfigurationError(f"row shift fraction must be in (0, 1], got {epsilon}")
    return 1.4 * gap_um * epsilon**0.48


def in_studied_regime(n: int) -> bool:
    lo, hi = STUDIED_PERIOD_RANGE
    return lo <= n <= hi


@dataclass(frozen=True)
class DldDesign:
    """Design parameters of a row-shifted post array.

    ``n_columns`` is the number of posts per row across the channel and
    ``n_rows`` defaults to one full period. Margins default to 1.5 pitches.
    With ``lateral="periodic"`` the channel height is exactly
    ``n_columns`` pitches and the lateral faces are periodic, which stands
    in for the bulk of a wide device; ``"wall"`` adds no-slip side walls
    with a half-pitch buffer.
    """

    post_diameter_um: float = 45.0
    gap_um: float = 45.0
    period: int = 10
    n_columns: int = 1
    n_rows: int | None = None
    inlet_margin_um: float | None = None
    outlet_margin_um: float | None = None
    lateral: str = "periodic"

    def __post_init__(self):
        if self.post_diameter_um <= 0 or self.gap_um <= 0:
            raise ConfigurationError("post diameter and gap must be positive")
        if int(self.period) != self.period or self.period < 2:
            raise ConfigurationError(f"period number must be an integer >= 2, got {self.period}")
        if self.n_columns < 1:
            raise ConfigurationError("n_columns must be >= 1")
        if self.lateral not in LATERAL_BOUNDARIES:
            raise ConfigurationError(f"lateral must be one of {LATERAL_BOUNDARIES}")
        if self.n_rows is None:
            object.__setattr__(self, "n_rows", int(self.period))
        if self.n_rows < 1:
            raise ConfigurationError("n_rows must be >= 1")
        for name in ("inlet_margin_um", "outlet_margin_um"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, 1.5 * self.pitch_um)
        if not in_studied_regime(self.period):
            warnings.warn(
                f"period number {self.period} lies outside the practical range "
                f"{STUDIED_PERIOD_RANGE}", stacklevel=2)

    @property
    def pitch_um(self) -> float:
        return self.gap_um + self.post_diameter_um

    @property
    def epsilon(self) -> float:
        return row_shift_fraction(self.period)

    @property
    def row_shift_um(self) -> float:
        return self.epsilon * self.pitch_um

    @property
    def bump_angle(self) -> float:
        """Array tilt relative to the mean flow, radians."""
        return math.atan(self.epsilon)

    @property
    def array_start_um(self) -> float:
        return self.inlet_margin_um

    @property
    def array_end_um(self) -> float:
        return self.inlet_margin_um + self.n_rows * self.pitch_um

    @property
    def length_um(self) -> float:
        return self.array_end_um + self.outlet_margin_um

    @property
    def height_um(self) -> float:
        return self.n_columns * self.pitch_um

    @property
    def valid(self) -> bool:
        return in_studied_regime(self.period)

    def to_dict(self) -> dict:
        return {
            "d_p_um": self.post_diameter_um,
            "g_um": self.gap_um,
            "n": self.period,
            "m_columns": self.n_columns,
            "n_rows": self.n_rows,
            "margins_um": [self.inlet_margin_um, self.outlet_margin_um],
            "lateral": self.lateral,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DldDesign":
        known = {"d_p_um", "g_um", "n", "m_columns", "n_rows", "margins_um", "lateral"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown design keys: {sorted(unknown)}")
        margins = data.get("margins_um", [None, None])
        if isinstance(margins, (int, float)):
            margins = [margins, margins]
        return cls(
            post_diameter_um=float(data.get("d_p_um", 45.0)),
            gap_um=float(data.get("g_um", 45.0)),
            period=int(data.get("n", 10)),
            n_columns=int(data.get("m_columns", 1)),
            n_rows=data.get("n_rows"),
            inlet_margin_um=margins[0],
            outlet_margin_um=margins[1],
            lateral=data.get("lateral", "periodic"),
        )


@dataclass(frozen=True)
class PostArray:
    """Post centres and domain of a built array, in micrometres.

    ``rows[k]`` is the row index of post ``k``; ``row_x`` holds the
    streamwise centre of each row. ``bounds`` is (x0, x1, y0, y1).
    """

    centers: np.ndarray
    radius_um: float
    bounds: tuple
    rows: np.ndarray
    row_x: np.ndarray
    periodic_y: bool
    design: DldDesign | None = field(default=None, compare=False)

    @property
    def n_posts(self) -> int:
        return len(self.centers)

    @property
    def width_um(self) -> float:
        return self.bounds[1] - self.bounds[0]

    @property
    def height_um(self) -> float:
        return self.bounds[3] - self.bounds[2]

    def row_offsets(self) -> np.ndarray:
        """Lateral offset of each row relative to row 0, reduced mod the pitch."""
        d = self.design
        return np.mod(np.arange(d.n_rows) * d.row_shift_um, d.pitch_um)


def build_post_array(design: DldDesign) -> PostArray:
    lam = design.pitch_um
    radius = design.post_diameter_um / 2.0
    if design.inlet_margin_um < lam or design.outlet_margin_um < lam:
        raise ConfigurationError("inlet/outlet margins must be at least one pitch")

    height = design.height_um
    periodic = design.lateral == "periodic"
    # periodic: row 0 posts sit on y = j*lambda; wall: half-pitch buffer to the wall
    base_y = 0.0 if periodic else lam / 2.0

    centers, rows, row_x = [], [], []
    for r in range(design.n_rows):
        x = design.array_start_um + lam / 2.0 + r * lam
        row_x.append(x)
        offset = math.fmod(r * design.row_shift_um, lam)
        for j in range(design.n_columns):
            y = base_y + offset + j * lam
            if periodic:
                y = math.fmod(y, height)
            centers.append((x, y))
            rows.append(r)

    return PostArray(
        centers=np.asarray(centers, dtype=float).reshape(-1, 2),
        radius_um=radius,
        bounds=(0.0, design.length_um, 0.0, height),
        rows=np.asarray(rows, dtype=int),
        row_x=np.asarray(row_x, dtype=float),
        periodic_y=periodic,
        design=design,
    )


def empty_channel(length_um: float, height_um: float) -> PostArray:
    """Post-free channel with no-slip side walls; used for solver checks."""
    if length_um <= 0 or height_um <= 0:
        raise ConfigurationError("channel dimensions must be positive")
    return PostArray(
        centers=np.zeros((0, 2)),
        radius_um=0.0,
        bounds=(0.0, float(length_um), 0.0, float(height_um)),
        rows=np.zeros(0, dtype=int),
        row_x=np.zeros(0),
        periodic_y=False,
        design=None,
    )


def design_summary(design: DldDesign) -> dict:
    out = asdict(design)
    out.update(
        pitch_um=design.pitch_um,
        epsilon=design.epsilon,
        bump_angle_deg=math.degrees(design.bump_angle),
        dc_inglis_um=critical_diameter_inglis(design.gap_um, design.period),
        dc_davis_um=critical_diameter_davis(design.gap_um, design.epsilon),
    )
    return out
