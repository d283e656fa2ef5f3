"""Split-step Fourier beam propagation of the paraxial envelope.

Each step is symmetric (Strang): half potential phase, full kinetic step in
the DFT domain, half potential phase, then the absorber mask. The envelope
obeys ``i g_z = -(1/2 beta) lap g + V g``, so the kinetic factor is
``exp(-i k^2 dz / (2 beta))``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .geometry import Grid2D, PotentialMap
from .modes import GuidedMode, fft_workers

PHASE_STEP_LIMIT = 0.1
SNAPSHOT_MAGIC = b"BPMF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sHHIIffd")  # 32 bytes


class PhaseStepError(ValueError):
    pass


class NonFiniteFieldError(FloatingPointError):
    def __init__(self, step: int, z: float):
        self.step = step
        self.z = z
        super().__init__(f"non-finite field at step {step} (z = {z:.6e} m)")


@dataclass
class ComplexField2D:
    samples: np.ndarray
    grid: Grid2D
    z: float = 0.0

    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.grid.cell_area)

    def copy(self) -> "ComplexField2D":
        return ComplexField2D(self.samples.copy(), self.grid, self.z)


@dataclass
class PropagationTrace:
    z_samples: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p_total: np.ndarray
    snapshots: list = field(default_factory=list)
    steps: int = 0

    def rows(self):
        return np.column_stack([self.z_samples, self.p1, self.p2, self.p_total])


def phase_step(potential: PotentialMap, dz: float) -> float:
    """Largest potential phase per half step, relative to the mean level.

    A constant offset in V is a global phase; only the spread matters.
    """
    v = potential.values
    return 0.5 * dz * float(np.max(v) - np.min(v))


def absorber_profile(grid: Grid2D) -> np.ndarray:
    """Raised-cosine ramp, 0 inside the window and 1 at the edges."""

    def ramp(coord, origin, n, d, width):
        length = n * d
        dist = np.minimum(coord - origin, origin + length - coord)
        s = np.clip((width - dist) / width, 0.0, 1.0)
        return 0.5 * (1.0 - np.cos(np.pi * s))

    px = ramp(grid.x, grid.x0, grid.nx, grid.dx, grid.absorber_width)
    py = ramp(grid.y, grid.y0, grid.ny, grid.dy, grid.absorber_width_y)
    return np.maximum(px[:, None], py[None, :])


def absorber_mask(grid: Grid2D, strength: float, dz: float) -> np.ndarray:
    if strength < 0:
        raise ValueError("absorber strength must be >= 0")
    return np.exp(-strength * dz * absorber_profile(grid))


def orthonormal_pair(modes: tuple[GuidedMode, GuidedMode]) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrically orthonormalised channel profiles.

    The two guide modes overlap weakly through their tails; projecting on the
    Loewdin pair keeps p1 + p2 <= p_total and preserves the y-mirror symmetry.
    """
    a, b = modes[0].profile, modes[1].profile
    dA = modes[0].grid.cell_area
    o = float(np.real(np.sum(np.conj(a) * b)) * dA)
    if abs(o) < 1e-15:
        return a, b
    p, m = 1 / math.sqrt(1 + o), 1 / math.sqrt(1 - o)
    c, d = 0.5 * (p + m), 0.5 * (p - m)
    return c * a + d * b, d * a + c * b


def make_input(kind: str, u1: GuidedMode, u2: GuidedMode) -> ComplexField2D:
    """Launch field: ``mode1``, ``mode2``, ``symmetric`` or ``antisymmetric``."""
    a, b = u1.profile, u2.profile
    if kind == "mode1":
        psi = a.astype(complex)
    elif kind == "mode2":
        psi = b.astype(complex)
    elif kind == "symmetric":
        psi = (a + b) / math.sqrt(2) + 0j
    elif kind == "antisymmetric":
        psi = (a - b) / math.sqrt(2) + 0j
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    grid = u1.grid
    psi = psi / math.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_area)
    return ComplexField2D(psi, grid, 0.0)


def propagate(
    initial: ComplexField2D,
    potential: PotentialMap,
    z_end: float,
    modes: tuple[GuidedMode, GuidedMode],
    *,
    dz: float | None = None,
    absorber_strength: float = 2000.0,
    observe_every: int = 50,
    snapshot_every: int | None = None,
    observer: Callable[[int, ComplexField2D], None] | None = None,
) -> PropagationTrace:
    """Propagate ``initial`` to ``z_end`` and record guide powers.

    ``p1``/``p2`` are the squared projections on the two channel modes
    (orthonormalised, see :func:`orthonormal_pair`) and
    ``p_total`` the power left in the window. Snapshots are kept at z = 0 and
    z = z_end, plus every ``snapshot_every`` steps if given.
    """
    grid = potential.grid
    if initial.grid != grid:
        raise ValueError("initial field and potential live on different grids")
    dz = grid.dz if dz is None else dz
    if z_end < 0:
        raise ValueError("z_end must be >= 0")
    ph = phase_step(potential, dz)
    if ph >= PHASE_STEP_LIMIT:
        raise PhaseStepError(
            f"dz = {dz:.3e} m gives a potential phase step {ph:.3f} rad >= {PHASE_STEP_LIMIT}")
    norm0 = initial.power()
    if abs(norm0 - 1.0) > 1e-6:
        raise ValueError(f"initial field must have unit power, got {norm0:.8f}")

    beta = potential.params.beta
    k2 = grid.kx()[:, None] ** 2 + grid.ky()[None, :] ** 2
    kin = np.exp(-1j * k2 * dz / (2 * beta))
    half_v = np.exp(-1j * potential.values * dz / 2)
    mask = absorber_mask(grid, absorber_strength, dz) if absorber_strength > 0 else None
    workers = fft_workers()
    dA = grid.cell_area
    e1, e2 = orthonormal_pair(modes)
    w1 = e1.conj() * dA
    w2 = e2.conj() * dA

    n_steps = int(round(z_end / dz))
    psi = initial.samples.astype(complex, copy=True)
    z0 = initial.z
    zs, p1, p2, pt = [], [], [], []
    snaps = [ComplexField2D(psi.copy(), grid, z0)]

    def record(step):
        if not np.all(np.isfinite(psi)):
            raise NonFiniteFieldError(step, z0 + step * dz)
        zs.append(z0 + step * dz)
        p1.append(abs(np.sum(w1 * psi)) ** 2)
        p2.append(abs(np.sum(w2 * psi)) ** 2)
        pt.append(float(np.sum(np.abs(psi) ** 2) * dA))

    record(0)
    for step in range(1, n_steps + 1):
        psi *= half_v
        psi = sfft.fft2(psi, workers=workers, overwrite_x=True)
        psi *= kin
        psi = sfft.ifft2(psi, workers=workers, overwrite_x=True)
        psi *= half_v
        if mask is not None:
            psi *= mask
        if step % observe_every == 0 or step == n_steps:
            record(step)
            if observer is not None:
                observer(step, ComplexField2D(psi, grid, z0 + step * dz))
        if snapshot_every and step % snapshot_every == 0 and step != n_steps:
            snaps.append(ComplexField2D(psi.copy(), grid, z0 + step * dz))
    if n_steps > 0:
        snaps.append(ComplexField2D(psi.copy(), grid, z0 + n_steps * dz))
    return PropagationTrace(np.array(zs), np.array(p1), np.array(p2), np.array(pt),
                            snaps, n_steps)


@dataclass(frozen=True)
class SlabResidual:
    theta: np.ndarray        # unit-norm slab field, zeros if degenerate
    residual_power: float    # ||psi - P psi||^2, P projects on span(u1, u2)
    c1: complex
    c2: complex
    degenerate: bool


def extract_theta(fld: ComplexField2D, modes: tuple[GuidedMode, GuidedMode],
                  tol: float = 1e-12) -> SlabResidual:
    """Strip the channel-mode components and normalise what is left.

    ``c1``/``c2`` are the plain overlaps with u1/u2; the component removed is
    the orthogonal projection on their span.
    """
    e1, e2 = orthonormal_pair(modes)
    dA = fld.grid.cell_area
    c1 = modes[0].overlap(fld.samples)
    c2 = modes[1].overlap(fld.samples)
    a1 = complex(np.sum(np.conj(e1) * fld.samples) * dA)
    a2 = complex(np.sum(np.conj(e2) * fld.samples) * dA)
    res = fld.samples - a1 * e1 - a2 * e2
    power = float(np.sum(np.abs(res) ** 2) * fld.grid.cell_area)
    if math.sqrt(power) < tol:
        return SlabResidual(np.zeros_like(res), power, c1, c2, True)
    return SlabResidual(res / math.sqrt(power), power, c1, c2, False)


def write_snapshot(path, fld: ComplexField2D) -> Path:
    """Raw field dump: 32-byte header then complex64 samples in [ix][iy] order."""
    g = fld.grid
    path = Path(path)
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, 0, g.nx, g.ny,
                          g.dx, g.dy, float(fld.z))
    data = np.ascontiguousarray(fld.samples, dtype="<c8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))
    return path


def read_snapshot(path, grid: Grid2D | None = None) -> ComplexField2D:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, version, _, nx, ny, dx, dy, z = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    body = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if body.size != nx * ny:
        raise ValueError("snapshot size does not match header")
    if grid is None:
        grid = Grid2D(nx=nx, ny=ny, dx=float(dx), dy=float(dy))
    elif grid.shape != (nx, ny):
        raise ValueError("snapshot shape does not match grid")
    return ComplexField2D(body.reshape(nx, ny).astype(complex), grid, float(z))
