"""Index landscape, computational grid and run configuration.

The structure is two identical Gaussian-core channel guides at ``y = +d``
(channel1) and ``y = -d`` (channel2), both centred at ``x = 0``, and a
step-index slab ``|y| <= a/2`` that extends across the whole ``x`` window.
Arrays are indexed ``[ix, iy]``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import numpy as np

PARTS = ("channel1", "channel2", "slab")


class ConfigError(ValueError):
    """Invalid geometry, grid or run configuration."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class GeometryParams:
    """Physical parameters, SI units (metres)."""

    wavelength: float = 980e-9
    n_substrate: float = 1.52
    delta_n_channel: float = 0.01
    delta_n_slab: float = 0.0049
    channel_radius: float = 2e-6
    slab_thickness: float = 4e-6
    channel_slab_distance: float = 9e-6
    device_length: float = 0.06

    def __post_init__(self):
        for name in ("wavelength", "n_substrate", "delta_n_channel", "delta_n_slab",
                     "channel_radius", "slab_thickness", "channel_slab_distance",
                     "device_length"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ConfigError(name, f"must be a finite number, got {value!r}")
            if value <= 0:
                raise ConfigError(name, f"must be strictly positive, got {value!r}")
        if self.delta_n_slab >= self.delta_n_channel:
            raise ConfigError(
                "delta_n_slab",
                "must be smaller than delta_n_channel (bound level not embedded)",
            )

    @property
    def beta(self) -> float:
        """Reference propagation constant (2 pi / lambda) n_s, rad/m."""
        return 2.0 * math.pi / self.wavelength * self.n_substrate

    def index_to_potential(self, delta_n):
        return -self.beta * np.asarray(delta_n) / self.n_substrate


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid2D:
    """Transverse sampling window plus the propagation step.

    ``x0``/``y0`` are the coordinates of sample 0; ``None`` centres the window
    so that it is mirror-symmetric about the axes. ``absorber_width`` is the
    raised-cosine ramp along the x edges, ``absorber_width_y`` along the y edges.
    """

    nx: int = 512
    ny: int = 256
    dx: float = 0.25e-6
    dy: float = 0.25e-6
    x0: float | None = None
    y0: float | None = None
    dz: float = 2e-6
    absorber_width: float = 10e-6
    absorber_width_y: float | None = None

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or not _is_pow2(int(n)):
                raise ConfigError(name, f"must be a power of two, got {n!r}")
        for name in ("dx", "dy", "dz", "absorber_width"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be strictly positive, got {v!r}")
        if self.absorber_width_y is not None and not self.absorber_width_y > 0:
            raise ConfigError("absorber_width_y", "must be strictly positive")
        if self.x0 is None:
            object.__setattr__(self, "x0", -0.5 * self.nx * self.dx)
        if self.y0 is None:
            object.__setattr__(self, "y0", -0.5 * self.ny * self.dy)
        if self.absorber_width_y is None:
            object.__setattr__(self, "absorber_width_y", self.absorber_width)
        if 2 * self.absorber_width >= self.nx * self.dx:
            raise ConfigError("absorber_width", "absorbers cover the whole x window")
        if 2 * self.absorber_width_y >= self.ny * self.dy:
            raise ConfigError("absorber_width_y", "absorbers cover the whole y window")

    @staticmethod
    def _axis(n, d, origin):
        off = origin / d
        if abs(off - round(off)) < 1e-9:
            # integer offsets keep mirrored samples exactly negated
            return (np.arange(n) + round(off)) * d
        return origin + np.arange(n) * d

    @property
    def x(self) -> np.ndarray:
        return self._axis(self.nx, self.dx, self.x0)

    @property
    def y(self) -> np.ndarray:
        return self._axis(self.ny, self.dy, self.y0)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def kx(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, self.dx)

    def ky(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, self.dy)

    def mirror_index_y(self) -> np.ndarray:
        """Index map j -> j' with y[j'] = -y[j] (periodic window)."""
        off = self.y0 / self.dy
        if abs(off - round(off)) > 1e-9:
            raise ValueError("grid y origin is not commensurate with dy; no mirror map")
        j0 = -int(round(off))  # index of y = 0
        j = np.arange(self.ny)
        return (2 * j0 - j) % self.ny

    def is_y_symmetric(self) -> bool:
        try:
            m = self.mirror_index_y()
        except ValueError:
            return False
        y = self.y
        # the wrapped sample at -L/2 maps onto itself through periodicity
        ok = np.isclose(y[m], -y, atol=1e-15) | np.isclose(np.abs(y), self.ny * self.dy / 2)
        return bool(np.all(ok))

    def with_(self, **changes) -> "Grid2D":
        """Copy with changes; a resized axis is re-centred unless its origin is given."""
        if ("nx" in changes or "dx" in changes) and "x0" not in changes:
            changes["x0"] = None
        if ("ny" in changes or "dy" in changes) and "y0" not in changes:
            changes["y0"] = None
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PotentialMap:
    """Sampled V(x, y) = beta [n_s - n(x, y)] / n_s in rad/m."""

    grid: Grid2D
    values: np.ndarray
    params: GeometryParams
    parts: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_window(params: GeometryParams, grid: Grid2D, parts: frozenset) -> None:
    y_lo = grid.y0 + grid.absorber_width_y
    y_hi = grid.y0 + (grid.ny - 1) * grid.dy - grid.absorber_width_y
    x_lo = grid.x0 + grid.absorber_width
    x_hi = grid.x0 + (grid.nx - 1) * grid.dx - grid.absorber_width
    margin = 3.0 * params.channel_radius
    if "slab" in parts:
        h = params.slab_thickness / 2
        if -h < y_lo or h > y_hi:
            raise ConfigError("ny", "window clips the slab in y")
    for name, yc in (("channel1", params.channel_slab_distance),
                     ("channel2", -params.channel_slab_distance)):
        if name not in parts:
            continue
        if yc - margin < y_lo or yc + margin > y_hi:
            raise ConfigError("ny", f"window clips {name} (needs 3 r_c margin inside absorber)")
        if -margin < x_lo or margin > x_hi:
            raise ConfigError("nx", f"window clips {name} (needs 3 r_c margin inside absorber)")


def index_contrast(params: GeometryParams, grid: Grid2D, parts: Iterable[str]) -> np.ndarray:
    """Index rise n(x, y) - n_s from the selected parts (overlaps take the max)."""
    parts = frozenset(parts)
    X, Y = grid.mesh()
    dn = np.zeros(grid.shape)
    rc2 = params.channel_radius ** 2
    d = params.channel_slab_distance
    if "channel1" in parts:
        dn = np.maximum(dn, params.delta_n_channel * np.exp(-(X**2 + (Y - d) ** 2) / rc2))
    if "channel2" in parts:
        dn = np.maximum(dn, params.delta_n_channel * np.exp(-(X**2 + (Y + d) ** 2) / rc2))
    if "slab" in parts:
        # point sampled, edge samples included
        inside = np.abs(Y) <= params.slab_thickness / 2 * (1 + 1e-12)
        dn = np.maximum(dn, np.where(inside, params.delta_n_slab, 0.0))
    return dn


def build_potential(params: GeometryParams, grid: Grid2D, parts: Iterable[str]) -> PotentialMap:
    """Superpose the selected structure.

    >>> pm = build_potential(GeometryParams(), Grid2D(), {"slab"})
    >>> bool(pm.values.max() <= 0)
    True
    """
    parts = frozenset(parts)
    if not parts:
        raise ValueError("parts must name at least one of " + ", ".join(PARTS))
    unknown = parts - set(PARTS)
    if unknown:
        raise ValueError(f"unknown parts: {sorted(unknown)}")
    _check_window(params, grid, parts)
    values = params.index_to_potential(index_contrast(params, grid, parts))
    return PotentialMap(grid=grid, values=values, params=params, parts=parts)


def slab_sample_count(params: GeometryParams, y: np.ndarray) -> int:
    return int(np.count_nonzero(np.abs(y) <= params.slab_thickness / 2 * (1 + 1e-12)))


@dataclass(frozen=True)
class EmbeddingReport:
    embedded: bool
    margin: float  # beta (dn_g - dn_S) / n_s, rad/m


def validate_embedding(params: GeometryParams) -> EmbeddingReport:
    """Coarse index-ordering test; the eigenvalue check lives in :mod:`modes`.

    Unlike the :class:`GeometryParams` constructor this never raises, so it can
    be used on duck-typed parameter records as well.
    """
    margin = params.beta * (params.delta_n_channel - params.delta_n_slab) / params.n_substrate
    return EmbeddingReport(embedded=bool(params.delta_n_slab < params.delta_n_channel),
                           margin=margin)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverSettings:
    absorber_strength: float = 2000.0   # 1/m, amplitude damping rate at full mask
    observer_every: int = 50
    k_max: float = 8e5                  # rad/m, continuum sampling half-range
    dk: float = 1000.0                  # rad/m
    mode_step: float = 5e-6             # imaginary-distance step, m
    mode_rtol: float = 1e-6
    fold_level_shift: bool = False
    seed: int = 20090101

    def __post_init__(self):
        if self.absorber_strength < 0:
            raise ConfigError("absorber_strength", "must be >= 0")
        if self.observer_every < 1:
            raise ConfigError("observer_every", "must be >= 1")
        for name in ("k_max", "dk", "mode_step", "mode_rtol"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be strictly positive")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryParams = field(default_factory=GeometryParams)
    grid: Grid2D = field(default_factory=Grid2D)
    solver: SolverSettings = field(default_factory=SolverSettings)

    def to_dict(self) -> dict[str, Any]:
        return {
            "geometry": dataclasses.asdict(self.geometry),
            "grid": dataclasses.asdict(self.grid),
            "solver": dataclasses.asdict(self.solver),
        }


def _build(cls, section: str, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(section, "must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{section}.{key}", "unknown key")
    try:
        return cls(**data)
    except ConfigError as exc:
        raise ConfigError(f"{section}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    for key in data:
        if key not in ("geometry", "grid", "solver"):
            raise ConfigError(key, "unknown section")
    return RunConfig(
        geometry=_build(GeometryParams, "geometry", data.get("geometry")),
        grid=_build(Grid2D, "grid", data.get("grid")),
        solver=_build(SolverSettings, "solver", data.get("solver")),
    )


def default_config() -> RunConfig:
    text = resources.files("continuum_trap").joinpath("default_config.json").read_text()
    return config_from_dict(json.loads(text))


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON config; missing sections/keys fall back to the defaults."""
    base = default_config().to_dict()
    if path is None:
        return config_from_dict(base)
    try:
        user = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config", "top level must be a JSON object")
    merged = {k: dict(v) for k, v in base.items()}
    for section, values in user.items():
        if section not in merged:
            raise ConfigError(section, "unknown section")
        if not isinstance(values, dict):
            raise ConfigError(section, "must be a JSON object")
        merged[section].update(values)
    return config_from_dict(merged)
