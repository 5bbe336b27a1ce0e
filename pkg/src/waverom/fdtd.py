"""Explicit FDTD integration of the scalar 3D wave equation.

A cubic cell contains a dielectric sphere (radius r, refractive index n).
A planar sinusoidal soft source radiates along the x axis, and a
polynomial sponge layer damps outgoing waves near every face. Units are
dimensionless with c = 1 and one length unit = 1 micron, so one source
period equals one time unit at wavelength 1.

Update scheme (leapfrog, 7-point Laplacian, Dirichlet-zero outer faces):

    E+ = [2 E - (1 - sigma dt) E- + dt^2 v^2 lap(E)] / (1 + sigma dt)

which discretizes  E_tt + 2 sigma E_t = v^2 lap(E)  with v = 1/n per voxel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InstabilityError, ValidationError

# Nominal physical duration of one simulation time unit. Recorded as
# metadata only; it never enters the dynamics.
TIME_UNIT_MICROSECONDS = 104.17

# Round-trip amplitude attenuation target for the sponge layer.
SPONGE_ATTENUATION = 1e-3
SPONGE_ORDER = 3


@dataclass
class SimulationConfig:
    """Full description of one FDTD run."""

    sphere_radius: float
    sphere_index: float
    cell_extent: float = 12.0
    resolution: int = 4  # grid points per unit; 16 reproduces 193^3 volumes
    boundary_width: float = 2.0
    source_position: float = -4.0
    source_size: tuple = (0.0, 8.0, 8.0)
    wavelength: float = 1.0
    snapshot_interval: float = 0.03125
    duration: float = 10.0
    courant_safety: float = 0.9
    rng_seed: int = 0
    source_enabled: bool = True
    source_stop_time: float | None = None  # disable injection after this time

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.resolution <= 0:
            raise ValidationError("resolution must be positive")
        if not 0 < 2 * self.boundary_width < self.cell_extent:
            raise ValidationError(
                "boundary_width must satisfy 0 < 2*boundary_width < cell_extent"
            )
        if self.sphere_radius + self.boundary_width >= self.cell_extent / 2:
            raise ValidationError(
                "sphere overlaps the absorbing layer: need "
                "sphere_radius + boundary_width < cell_extent/2"
            )
        if self.sphere_index < 1.0:
            raise ValidationError("sphere_index must be >= 1")
        if not 0 < self.courant_safety < 1:
            raise ValidationError("courant_safety must lie in (0, 1)")
        if self.snapshot_interval <= 0 or self.duration <= 0:
            raise ValidationError("snapshot_interval and duration must be positive")
        if self.wavelength <= 0:
            raise ValidationError("wavelength must be positive")
        if abs(self.source_position) >= self.cell_extent / 2:
            raise ValidationError("source_position outside the cell")

    @property
    def grid_points(self) -> int:
        """Points per axis; grid nodes sit at i/resolution."""
        return int(round(self.resolution * self.cell_extent)) + 1

    @property
    def dx(self) -> float:
        return 1.0 / self.resolution

    def axis_coords(self) -> np.ndarray:
        n = self.grid_points
        return np.arange(n) * self.dx - self.cell_extent / 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_size"] = list(self.source_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {f for f in cls.__dataclass_fields__}
        for key in d:
            if key not in known:
                raise ValidationError(f"unknown simulation config key: {key!r}")
        for req in ("sphere_radius", "sphere_index"):
            if req not in d:
                raise ValidationError(f"simulation config missing key: {req!r}")
        d = dict(d)
        if "source_size" in d:
            d["source_size"] = tuple(d["source_size"])
        return cls(**d)


@dataclass
class MediumGrid:
    """Per-voxel (n/c)^2 with c = 1; equals n^2 inside the sphere, 1 outside."""

    inverse_speed_squared: np.ndarray


@dataclass
class DampingGrid:
    """Sponge coefficients sigma >= 0; zero strictly inside the interior."""

    sigma: np.ndarray


@dataclass
class FieldState:
    e_curr: np.ndarray
    e_prev: np.ndarray
    step_index: int
    dt: float


@dataclass
class FieldVolume:
    """One 3D scalar field snapshot, indexed [x, y, z]."""

    data: np.ndarray
    time: float
    params: tuple  # (sphere_radius, sphere_index)
    voxel_size: float = 0.25


def build_medium(config: SimulationConfig) -> MediumGrid:
    """n^2 inside the sphere (center of the cell), 1 elsewhere."""
    config.validate()
    c = config.axis_coords()
    x, y, z = np.meshgrid(c, c, c, indexing="ij", sparse=True)
    inside = x * x + y * y + z * z <= config.sphere_radius**2
    grid = np.ones((config.grid_points,) * 3, dtype=np.float32)
    grid[inside] = config.sphere_index**2
    return MediumGrid(inverse_speed_squared=grid)


def courant_dt(config: SimulationConfig) -> float:
    """Stable explicit time step, clamped to the snapshot interval."""
    dt = config.courant_safety * config.dx / math.sqrt(3.0)
    return min(dt, config.snapshot_interval)


def sponge_max(config: SimulationConfig) -> float:
    """Peak damping giving the target round-trip attenuation analytically.

    A normally incident wave loses exp(-integral sigma dx / c) in amplitude
    per pass; with sigma = s_max (d/W)^p the integral is s_max W/(p+1), so
    the round trip is exp(-2 s_max W/(p+1)).
    """
    return (SPONGE_ORDER + 1) * math.log(1.0 / SPONGE_ATTENUATION) / (2.0 * config.boundary_width)


def sponge_profile(config: SimulationConfig) -> DampingGrid:
    """Polynomial damping profile, additive over the three axes."""
    config.validate()
    c = config.axis_coords()
    half = config.cell_extent / 2.0
    w = config.boundary_width
    depth = np.maximum(np.abs(c) - (half - w), 0.0) / w
    axis_sigma = sponge_max(config) * depth**SPONGE_ORDER
    sigma = (
        axis_sigma[:, None, None]
        + axis_sigma[None, :, None]
        + axis_sigma[None, None, :]
    ).astype(np.float32)
    return DampingGrid(sigma=sigma)


def source_amplitude(t: float, wavelength: float) -> float:
    """Soft-source drive: sin carrier with a one-period linear turn-on."""
    if t < 0:
        raise ValidationError("source time must be non-negative")
    ramp = min(1.0, t / wavelength)
    return ramp * math.sin(2.0 * math.pi * t / wavelength)


def source_mask(config: SimulationConfig):
    """(plane index along x, boolean (ny, nz) transverse mask)."""
    ix = int(round((config.source_position + config.cell_extent / 2.0) * config.resolution))
    c = config.axis_coords()
    _, sy, sz = config.source_size
    mask = (np.abs(c)[:, None] <= sy / 2.0) & (np.abs(c)[None, :] <= sz / 2.0)
    return ix, mask


def step(
    state: FieldState,
    medium: MediumGrid,
    damping: DampingGrid,
    config: SimulationConfig,
) -> FieldState:
    """Advance the field by one leapfrog step and inject the soft source."""
    e = state.e_curr
    if e.shape != medium.inverse_speed_squared.shape or e.shape != damping.sigma.shape:
        raise ValidationError("step: field/medium/damping grids disagree in shape")
    dt = state.dt
    dx2 = config.dx * config.dx

    lap = -6.0 * e
    lap[1:, :, :] += e[:-1, :, :]
    lap[:-1, :, :] += e[1:, :, :]
    lap[:, 1:, :] += e[:, :-1, :]
    lap[:, :-1, :] += e[:, 1:, :]
    lap[:, :, 1:] += e[:, :, :-1]
    lap[:, :, :-1] += e[:, :, 1:]
    lap /= dx2

    sig_dt = damping.sigma * dt
    e_next = (
        2.0 * e
        - (1.0 - sig_dt) * state.e_prev
        + (dt * dt / medium.inverse_speed_squared) * lap
    ) / (1.0 + sig_dt)

    new_index = state.step_index + 1
    t_next = new_index * dt
    active = config.source_enabled and (
        config.source_stop_time is None or t_next <= config.source_stop_time
    )
    if active:
        ix, mask = source_mask(config)
        e_next[ix][mask] += source_amplitude(t_next, config.wavelength)

    if not np.all(np.isfinite(e_next)):
        raise InstabilityError(f"non-finite field after step {new_index}")
    return FieldState(e_curr=e_next, e_prev=e, step_index=new_index, dt=dt)


def snapshot_times(config: SimulationConfig) -> np.ndarray:
    """Schedule labels k * snapshot_interval, k = 0 .. floor(T/interval)."""
    count = int(math.floor(config.duration / config.snapshot_interval + 1e-9)) + 1
    return np.arange(count) * config.snapshot_interval


def run_simulation(config: SimulationConfig, medium: MediumGrid | None = None):
    """Integrate the wave equation, yielding one FieldVolume per snapshot.

    Snapshot k carries the state at the internal step nearest k*interval;
    snapshot 0 is the zero initial field. ``medium`` may override the
    default sphere medium (e.g. a homogeneous grid for calibration runs).
    """
    config.validate()
    if medium is None:
        medium = build_medium(config)
    damping = sponge_profile(config)
    dt = courant_dt(config)
    times = snapshot_times(config)
    snap_steps = [int(round(t / dt)) for t in times]
    wanted = {}
    for k, s in enumerate(snap_steps):
        wanted.setdefault(s, []).append(k)

    shape = (config.grid_points,) * 3
    state = FieldState(
        e_curr=np.zeros(shape, dtype=np.float32),
        e_prev=np.zeros(shape, dtype=np.float32),
        step_index=0,
        dt=dt,
    )
    out: list[FieldVolume | None] = [None] * len(times)
    params = (config.sphere_radius, config.sphere_index)

    def record(st):
        for k in wanted.get(st.step_index, ()):
            out[k] = FieldVolume(
                data=st.e_curr.copy(),
                time=float(times[k]),
                params=params,
                voxel_size=config.dx,
            )

    record(state)
    last = max(snap_steps)
    for _ in range(last):
        state = step(state, medium, damping, config)
        record(state)
    return out
