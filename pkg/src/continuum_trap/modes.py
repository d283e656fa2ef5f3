"""Channel eigenmode, slab continuum and the golden-rule decay rate.

Conventions: eigenvalues are propagation-constant shifts of
``H = -(1/2 beta) lap + V`` (negative for guided light); continuum modes are
``u_k(x, y) = phi_S(y) exp(i k x) / sqrt(2 pi)`` so that
``<u_k|u_k'> = delta(k - k')``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import bisect, brentq

from .geometry import (
    GeometryParams,
    Grid2D,
    PotentialMap,
    RunConfig,
    build_potential,
    slab_sample_count,
)


class NotGuidingError(RuntimeError):
    pass


class NotEmbeddedError(RuntimeError):
    pass


class BandEdgeError(RuntimeError):
    pass


def fft_workers() -> int:
    env = os.environ.get("CONTINUUM_TRAP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class GuidedMode:
    profile: np.ndarray          # real, [ix, iy], unit L2 norm on the grid
    eigenvalue: float            # rad/m
    grid: Grid2D
    part: str = "channel1"
    steps: int = 0

    def mirror(self) -> "GuidedMode":
        """Mode of the partner guide, reflected through y = 0."""
        m = self.grid.mirror_index_y()
        part = {"channel1": "channel2", "channel2": "channel1"}[self.part]
        return GuidedMode(self.profile[:, m].copy(), self.eigenvalue, self.grid, part, self.steps)

    def overlap(self, other: np.ndarray) -> complex:
        return complex(np.sum(np.conj(self.profile) * other) * self.grid.cell_area)


def _kinetic_k2(grid: Grid2D) -> np.ndarray:
    kx, ky = grid.kx(), grid.ky()
    return kx[:, None] ** 2 + ky[None, :] ** 2


def rayleigh_quotient(psi: np.ndarray, potential: PotentialMap) -> float:
    grid = potential.grid
    beta = potential.params.beta
    spec = sfft.fft2(psi, workers=fft_workers())
    norm = np.sum(np.abs(psi) ** 2)
    kin = np.sum(_kinetic_k2(grid) * np.abs(spec) ** 2) / psi.size / (2 * beta)
    pot = np.sum(potential.values * np.abs(psi) ** 2)
    return float((kin + pot) / norm)


def solve_channel_mode(
    potential: PotentialMap,
    step: float = 5e-6,
    rtol: float = 1e-6,
    max_steps: int = 200_000,
    check_every: int = 10,
) -> GuidedMode:
    """Lowest eigenpair of an isolated channel by imaginary-distance propagation.

    Each step applies the Strang-split operator ``exp(-H step)`` to a Gaussian
    seed and renormalises. The eigenvalue is the Rayleigh quotient, converged
    once it moves by less than ``rtol`` (relative) per step.
    """
    channels = [p for p in potential.parts if p.startswith("channel")]
    if len(channels) != 1 or "slab" in potential.parts:
        raise ValueError("solve_channel_mode needs a potential built from a single channel")
    part = channels[0]
    params, grid = potential.params, potential.grid
    if np.min(potential.values) >= 0:
        raise NotGuidingError("channel not guiding")
    beta = params.beta
    X, Y = grid.mesh()
    yc = params.channel_slab_distance if part == "channel1" else -params.channel_slab_distance
    psi = np.exp(-(X**2 + (Y - yc) ** 2) / (2 * params.channel_radius**2)).astype(complex)

    kin = np.exp(-_kinetic_k2(grid) * step / (2 * beta))
    half_v = np.exp(-potential.values * step / 2)
    workers = fft_workers()
    dA = grid.cell_area
    e_old = None
    for n in range(1, max_steps + 1):
        psi = half_v * sfft.ifft2(kin * sfft.fft2(half_v * psi, workers=workers), workers=workers)
        psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * dA)
        if n % check_every:
            continue
        e = rayleigh_quotient(psi, potential)
        if e >= 0:
            raise NotGuidingError("channel not guiding")
        if e_old is not None and abs(e - e_old) / check_every < rtol * abs(e):
            break
        e_old = e
    else:
        raise RuntimeError(f"channel mode did not converge in {max_steps} steps")

    u = psi.real
    ic = np.unravel_index(np.argmax(np.abs(u)), u.shape)
    u = u * np.sign(u[ic]) / math.sqrt(np.sum(u**2) * dA)
    return GuidedMode(profile=u, eigenvalue=rayleigh_quotient(u.astype(complex), potential),
                      grid=grid, part=part, steps=n)


# ---------------------------------------------------------------------------
# slab
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlabMode1D:
    y: np.ndarray
    y_profile: np.ndarray        # even fundamental mode, unit norm on the y samples
    eigenvalue: float            # E_S, rad/m
    thickness: float             # well width actually solved for
    beta: float
    bound_eigenvalues: tuple = ()  # all bound slab modes, ascending (even, odd, ...)

    @property
    def n_bound(self) -> int:
        return len(self.bound_eigenvalues)


def _slab_roots(vparam: float) -> list[float]:
    """Dimensionless roots u = q a / 2 of the symmetric step well, ascending."""
    roots = []
    m = 0
    while m * math.pi / 2 < vparam:
        lo = m * math.pi / 2
        hi = min((m + 1) * math.pi / 2, vparam)
        if m % 2 == 0:
            f = lambda u: u * math.tan(u) - math.sqrt(max(vparam**2 - u**2, 0.0))
        else:
            f = lambda u: -u / math.tan(u) - math.sqrt(max(vparam**2 - u**2, 0.0))
        # f < 0 at lo, f > 0 (or +inf) at hi
        a = lo + 1e-15 * max(1.0, lo)
        b = hi - 1e-13 * (hi - lo)
        if b <= a or f(a) * f(b) > 0:
            m += 1
            continue
        roots.append(bisect(f, a, b, xtol=1e-12 * (b - a), rtol=4 * np.finfo(float).eps,
                            maxiter=200))
        m += 1
    return roots


def effective_slab_thickness(params: GeometryParams, y: np.ndarray) -> float:
    y = np.asarray(y)
    dy = float(y[1] - y[0])
    return slab_sample_count(params, y) * dy


def solve_slab_mode(params: GeometryParams, y_grid, thickness: float | None = None) -> SlabMode1D:
    """Fundamental even mode of the slab.

    ``thickness=None`` uses the width the point-sampled slab occupies on
    ``y_grid`` (samples inside ``|y| <= a/2`` times ``dy``), which is what the
    pseudospectral propagator sees. Pass ``params.slab_thickness`` for the
    continuum well.
    """
    y = np.asarray(y_grid, dtype=float)
    if params.delta_n_slab <= 0:
        raise ValueError("delta_n_slab must be positive")
    w = effective_slab_thickness(params, y) if thickness is None else float(thickness)
    if w <= 0:
        raise ValueError("slab is not resolved by the y grid")
    beta = params.beta
    depth = beta * params.delta_n_slab / params.n_substrate
    k0 = math.sqrt(2 * beta * depth)
    vparam = k0 * w / 2
    roots = _slab_roots(vparam)
    energies = tuple(-depth + (2 * u / w) ** 2 / (2 * beta) for u in roots)
    u = roots[0]
    q = 2 * u / w
    kappa = math.sqrt(max(k0**2 - q**2, 0.0))
    h = w / 2
    ay = np.abs(y)
    prof = np.where(ay <= h, np.cos(q * y), math.cos(q * h) * np.exp(-kappa * (ay - h)))
    dy = float(y[1] - y[0]) if y.size > 1 else 1.0
    prof = prof / math.sqrt(np.sum(prof**2) * dy)
    return SlabMode1D(y=y, y_profile=prof, eigenvalue=energies[0], thickness=w, beta=beta,
                      bound_eigenvalues=energies)


# ---------------------------------------------------------------------------
# continuum and coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuumSpectrum:
    k_samples: np.ndarray
    dispersion: np.ndarray
    coupling: np.ndarray | None = None

    @property
    def dk(self) -> float:
        return float(self.k_samples[1] - self.k_samples[0])

    def with_coupling(self, g: np.ndarray) -> "ContinuumSpectrum":
        return ContinuumSpectrum(self.k_samples, self.dispersion, np.asarray(g, dtype=complex))


def symmetric_k_grid(k_max: float, dk: float) -> np.ndarray:
    n = int(round(k_max / dk))
    return np.arange(-n, n + 1) * dk


def build_continuum(slab: SlabMode1D, k_grid) -> ContinuumSpectrum:
    k = np.asarray(k_grid, dtype=float)
    if k.ndim != 1 or k.size < 3:
        raise ValueError("k_grid must be a 1D array with at least 3 samples")
    if not np.allclose(k, -k[::-1], rtol=0, atol=1e-9 * np.max(np.abs(k))):
        raise ValueError("k_grid must be symmetric about 0")
    return ContinuumSpectrum(k, slab.eigenvalue + k**2 / (2 * slab.beta))


def coupling_spectrum(
    channel: GuidedMode,
    slab: SlabMode1D,
    k_grid,
    params: GeometryParams,
    scale: float = 1.0,
) -> ContinuumSpectrum:
    """First-order overlap g(k) = <u_channel | dV_channel | u_k>.

    ``dV_channel`` is the potential of the guide alone; ``scale`` multiplies it.
    """
    grid = channel.grid
    if slab.y.shape != (grid.ny,) or not np.allclose(slab.y, grid.y, rtol=0, atol=1e-3 * grid.dy):
        raise ValueError("grid mismatch between channel mode and slab mode")
    spec = build_continuum(slab, k_grid)
    dv = scale * build_potential(params, grid, {channel.part}).values
    row = (channel.profile * dv) @ slab.y_profile * grid.dy      # function of x
    x = grid.x
    g = np.empty(spec.k_samples.size, dtype=complex)
    chunk = max(1, 2_000_000 // x.size)
    for i in range(0, g.size, chunk):
        kk = spec.k_samples[i:i + chunk]
        g[i:i + chunk] = np.exp(1j * np.outer(kk, x)) @ row
    g *= grid.dx / math.sqrt(2 * math.pi)
    return spec.with_coupling(g)


def taper(k: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Raised-cosine window on the outer ``fraction`` of each k half-range."""
    kmax = np.max(np.abs(k))
    k1 = (1 - fraction) * kmax
    s = np.clip((np.abs(k) - k1) / (kmax - k1), 0.0, 1.0) if fraction > 0 else np.zeros_like(k)
    return 0.5 * (1 + np.cos(np.pi * s))


# ---------------------------------------------------------------------------
# decay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayModel:
    sigma: float          # 1/m
    level_shift: float    # principal value of int |g|^2 / (dbeta(k) - dbeta0) dk, rad/m
    resonant_k: float     # rad/m, largest resonant root
    decay_length: float   # m
    roots: tuple = ()


def _resonant_roots(k, disp_spline, d0):
    f = disp_spline(k) - d0
    roots = []
    for i in range(k.size - 1):
        if f[i] == 0:
            roots.append(float(k[i]))
        elif f[i] * f[i + 1] < 0:
            roots.append(brentq(lambda q: float(disp_spline(q) - d0), k[i], k[i + 1],
                                xtol=1e-14 * max(1.0, abs(k[i])), rtol=1e-15))
    if f[-1] == 0:
        roots.append(float(k[-1]))
    return roots


def decay_rate(spec: ContinuumSpectrum, delta_beta0: float, eps: float | None = None) -> DecayModel:
    """Golden-rule decay rate and principal-value level shift for one guide.

    sigma = pi * sum_r |g(k_r)|^2 / |dbeta'(k_r)| over all resonant k_r;
    the principal value is evaluated with each pole subtracted analytically.
    """
    if spec.coupling is None:
        raise ValueError("spectrum carries no coupling; use coupling_spectrum first")
    k = spec.k_samples
    disp = spec.dispersion
    if not (disp.min() < delta_beta0 < disp.max()):
        raise NotEmbeddedError("not embedded: delta_beta0 lies outside the sampled band")
    g2 = np.abs(spec.coupling) ** 2
    disp_s = CubicSpline(k, disp)
    g2_s = CubicSpline(k, g2)
    roots = _resonant_roots(k, disp_s, delta_beta0)
    if not roots:
        raise NotEmbeddedError("not embedded: no resonant continuum mode")
    if eps is None:
        eps = 1e-9 * (disp.max() - disp.min()) / (k.max() - k.min())
    sigma = 0.0
    poles = []
    for kr in roots:
        slope = float(disp_s(kr, 1))
        if abs(slope) < eps:
            raise BandEdgeError("band-edge degeneracy at the resonant k")
        f_r = float(g2_s(kr))
        sigma += math.pi * f_r / abs(slope)
        poles.append((kr, f_r / slope))
    # principal value: integrand minus simple poles is regular
    with np.errstate(divide="ignore", invalid="ignore"):
        reg = g2 / (disp - delta_beta0)
        for kr, res in poles:
            reg = reg - res / (k - kr)
    bad = ~np.isfinite(reg)
    if bad.any():
        reg[bad] = np.interp(k[bad], k[~bad], reg[~bad])
    pv = float(trapezoid(reg, k))
    a, b = float(k[0]), float(k[-1])
    for kr, res in poles:
        pv += res * math.log(abs((b - kr) / (a - kr)))
    kr_main = max(roots, key=abs)
    return DecayModel(sigma=sigma, level_shift=pv, resonant_k=abs(kr_main),
                      decay_length=(1.0 / sigma) if sigma > 0 else math.inf,
                      roots=tuple(roots))


# ---------------------------------------------------------------------------
# the whole pipeline for a configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeSet:
    u1: GuidedMode
    u2: GuidedMode
    slab: SlabMode1D
    spectrum: ContinuumSpectrum
    decay: DecayModel
    overlaps: dict = field(default_factory=dict)

    @property
    def delta_beta0(self) -> float:
        return self.u1.eigenvalue


def solve_modes(config: RunConfig) -> ModeSet:
    """Channel modes, slab continuum, g(k) and sigma for a run configuration."""
    params, grid, solver = config.geometry, config.grid, config.solver
    pot1 = build_potential(params, grid, {"channel1"})
    u1 = solve_channel_mode(pot1, step=solver.mode_step, rtol=solver.mode_rtol)
    u2 = u1.mirror()
    slab = solve_slab_mode(params, grid.y)
    if u1.eigenvalue <= slab.eigenvalue:
        raise NotEmbeddedError(
            f"not embedded: channel level {u1.eigenvalue:.3f} rad/m lies below the slab "
            f"continuum edge {slab.eigenvalue:.3f} rad/m")
    if slab.n_bound > 1 and slab.bound_eigenvalues[1] < u1.eigenvalue:
        raise NotEmbeddedError(
            "a second slab branch opens below the channel level; single-branch continuum invalid")
    k = symmetric_k_grid(solver.k_max, solver.dk)
    spec = coupling_spectrum(u1, slab, k, params)
    decay = decay_rate(spec, u1.eigenvalue)
    # slab-mode overlap at resonance (<u1|u_k>, dimension m^1/2)
    X = grid.x
    row = u1.profile @ slab.y_profile * grid.dy
    uk_overlap = abs(np.sum(row * np.exp(1j * decay.resonant_k * X)) * grid.dx) / math.sqrt(2 * math.pi)
    overlaps = {
        "u1_u2": float(np.sum(u1.profile * u2.profile) * grid.cell_area),
        "u1_uk_resonant": float(uk_overlap),
    }
    return ModeSet(u1=u1, u2=u2, slab=slab, spectrum=spec, decay=decay, overlaps=overlaps)
