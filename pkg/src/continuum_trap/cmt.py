"""Coupled-mode layer: Markovian S-matrix, discretized bath, pulse interference.

The slab column of the S-matrix is taken real and non-negative: only its
modulus and same-run conjugate products enter any observable, and
``s23 = s13`` makes a common phase cancel out of the two-photon paths.
All pulse envelopes live in the retarded frame ``t - z / v_g``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .modes import ContinuumSpectrum, taper


class ToleranceError(RuntimeError):
    pass


class RecurrenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScatterMatrix:
    """Amplitudes from guide 1 into (W1, W2, slab); guide 2 follows by symmetry."""

    z: float
    s11: complex
    s12: complex
    s13: complex
    sigma: float = math.nan
    delta_beta0: float = math.nan

    @property
    def s21(self):
        return self.s12

    @property
    def s22(self):
        return self.s11

    @property
    def s23(self):
        return self.s13

    def kappa(self, port: int):
        """Power fraction |s1j|^2 reaching ``port`` (1, 2 or 3)."""
        return np.abs((self.s11, self.s12, self.s13)[port - 1]) ** 2

    def unitarity_defect(self):
        return np.abs(np.abs(self.s11) ** 2 + np.abs(self.s12) ** 2 + np.abs(self.s13) ** 2 - 1.0)

    def rows(self) -> np.ndarray:
        """2 x 3 amplitude matrix, row i = input guide i, column j = output port j."""
        return np.array([[self.s11, self.s12, self.s13],
                         [self.s21, self.s22, self.s23]], dtype=complex)

    def unitary(self) -> np.ndarray:
        """3 x 3 unitary whose first two rows are :meth:`rows` (third row completes it)."""
        r = self.rows()
        third = np.conj(np.cross(r[0], r[1]))
        nrm = np.linalg.norm(third)
        if nrm < 1e-14:
            raise ValueError("rows are not linearly independent")
        return np.vstack([r, third / nrm])


def s_matrix(z, sigma: float, delta_beta0: float, level_shift: float = 0.0) -> ScatterMatrix:
    """Closed-form solution of the Markovian two-guide equations.

    ``level_shift`` is the principal-value part of the complex rate; it only
    rotates the phase of the symmetric eigenchannel and is zero by default.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be >= 0")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    phase = np.exp(-1j * delta_beta0 * z)
    decay = np.exp(-2.0 * sigma * z)
    sym = phase * decay * np.exp(2j * level_shift * z)
    s11 = 0.5 * (phase + sym)
    s12 = 0.5 * (sym - phase)
    # |s13|^2 = 1 - |s11|^2 - |s12|^2 = (1 - e^{-4 sigma z}) / 2
    s13 = np.sqrt(-0.5 * np.expm1(-4.0 * sigma * z)) + 0j
    if z.ndim == 0:
        s11, s12, s13, z = complex(s11), complex(s12), complex(s13), float(z)
    return ScatterMatrix(z=z, s11=s11, s12=s12, s13=s13, sigma=sigma, delta_beta0=delta_beta0)


def evolve_markovian(c1_0: complex, c2_0: complex, z, sigma: float, delta_beta0: float):
    s = s_matrix(z, sigma, delta_beta0)
    return s.s11 * c1_0 + s.s12 * c2_0, s.s21 * c1_0 + s.s22 * c2_0


# ---------------------------------------------------------------------------
# discretized continuum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CmtState:
    c1: complex
    c2: complex
    c_k: np.ndarray
    z: float


@dataclass(frozen=True)
class CmtTrajectory:
    z: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    norm: np.ndarray
    final: CmtState
    recurrence_z: float
    usable_z: float

    @property
    def p1(self) -> np.ndarray:
        return np.abs(self.c1) ** 2

    @property
    def p2(self) -> np.ndarray:
        return np.abs(self.c2) ** 2


def recurrence_distance(spectrum: ContinuumSpectrum, delta_beta0: float) -> float:
    """Revival distance 2 pi / (|dbeta/dk| dk) of the sampled bath at resonance."""
    k, d = spectrum.k_samples, spectrum.dispersion
    slope = np.gradient(d, k)
    i = np.argmin(np.abs(d - delta_beta0))
    s = abs(slope[i])
    return math.inf if s == 0 else 2 * math.pi / (s * spectrum.dk)


def integrate_discretized_continuum(
    spectrum: ContinuumSpectrum,
    c1_0: complex,
    c2_0: complex,
    z_end: float,
    dz: float | None = None,
    *,
    delta_beta0: float,
    record_every: int = 1,
    taper_fraction: float = 0.1,
    norm_tol: float = 1e-6,
) -> CmtTrajectory:
    """RK4 integration of the two guides coupled to a sampled continuum.

    Continuum integrals are Riemann sums with weight dk; the guides see the
    same coupling g(k). Amplitudes are integrated in a frame rotating at
    ``delta_beta0`` and returned in the lab frame. Raises
    :class:`ToleranceError` when the total norm drifts by more than
    ``norm_tol``; warns with :class:`RecurrenceWarning` when the guided
    population revives.
    """
    if spectrum.coupling is None:
        raise ValueError("spectrum carries no coupling")
    k = spectrum.k_samples
    dk = spectrum.dk
    w = spectrum.dispersion - delta_beta0
    g = spectrum.coupling * taper(k, taper_fraction) * math.sqrt(dk)
    gc = np.conj(g)
    if dz is None:
        dz = min(0.1 / max(np.max(np.abs(w)), 1e-300), z_end / 100)
    n_steps = max(1, int(math.ceil(z_end / dz)))
    h = z_end / n_steps

    y = np.zeros(k.size + 2, dtype=complex)
    y[0], y[1] = c1_0, c2_0
    w_full = np.concatenate(([0.0, 0.0], w))

    def rhs(v):
        out = -1j * w_full * v
        s = np.dot(g, v[2:])
        out[0] -= 1j * s
        out[1] -= 1j * s
        out[2:] -= 1j * gc * (v[0] + v[1])
        return out

    norm0 = float(np.sum(np.abs(y) ** 2))
    n_rec = n_steps // record_every + 1
    zs = np.empty(n_rec)
    c1s = np.empty(n_rec, dtype=complex)
    c2s = np.empty(n_rec, dtype=complex)
    norms = np.empty(n_rec)
    j = 0
    for i in range(n_steps + 1):
        if i % record_every == 0 and j < n_rec:
            zs[j], c1s[j], c2s[j] = i * h, y[0], y[1]
            norms[j] = float(np.sum(np.abs(y) ** 2))
            if abs(norms[j] - norm0) > norm_tol * max(norm0, 1e-300):
                raise ToleranceError(f"norm drift {norms[j] - norm0:.3e} at z = {i * h:.4e} m")
            j += 1
        if i == n_steps:
            break
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    zs, c1s, c2s, norms = zs[:j], c1s[:j], c2s[:j], norms[:j]
    rot = np.exp(-1j * delta_beta0 * zs)
    c1s, c2s = c1s * rot, c2s * rot

    z_rec = recurrence_distance(spectrum, delta_beta0)
    usable = _usable_distance(zs, np.abs(c1s) ** 2)
    if usable < zs[-1]:
        warnings.warn(f"bath recurrence: |c1|^2 revives; results usable for z < {usable:.4e} m",
                      RecurrenceWarning, stacklevel=2)
    final = CmtState(c1=complex(c1s[-1]), c2=complex(c2s[-1]),
                     c_k=y[2:] * np.exp(-1j * delta_beta0 * z_end) / math.sqrt(dk), z=z_end)
    return CmtTrajectory(z=zs, c1=c1s, c2=c2s, norm=norms, final=final,
                         recurrence_z=z_rec, usable_z=usable)


def _usable_distance(z: np.ndarray, p: np.ndarray, rise: float = 0.05) -> float:
    """First z at which p climbs more than ``rise`` (relative) above its running minimum,
    after having decayed; ``inf`` if that never happens."""
    if p.size < 3 or p[0] == 0:
        return math.inf
    run_min = np.minimum.accumulate(p)
    decayed = run_min < (1 - rise) * p[0]
    revived = decayed & (p > (1 + rise) * run_min)
    if not revived.any():
        return math.inf
    i = int(np.argmax(revived))
    return float(z[int(np.argmin(p[:i + 1]))])


# ---------------------------------------------------------------------------
# pulses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseEnvelope:
    t_samples: np.ndarray
    amplitude: np.ndarray
    delay: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=complex)
        e = float(trapezoid(np.abs(a) ** 2, self.t_samples))
        if not e > 0:
            raise ValueError("pulse has no energy")
        object.__setattr__(self, "amplitude", a / math.sqrt(e))

    @property
    def energy(self) -> float:
        return float(trapezoid(np.abs(self.amplitude) ** 2, self.t_samples))


def gaussian_pulse(t, tau_c: float, delay: float = 0.0, factor: complex = 1.0) -> PulseEnvelope:
    """factor * exp(-(t - delay)^2 / (2 tau_c^2)), normalised to unit energy."""
    t = np.asarray(t, dtype=float)
    return PulseEnvelope(t, factor * np.exp(-((t - delay) ** 2) / (2 * tau_c**2)), delay)


@dataclass(frozen=True)
class PulseOutput:
    w1: np.ndarray
    w2: np.ndarray
    leaked_fraction: float

    @property
    def trapped_fraction(self) -> float:
        return 1.0 - self.leaked_fraction


def _check_common_grid(r1: PulseEnvelope, r2: PulseEnvelope):
    if r1.t_samples.shape != r2.t_samples.shape or not np.allclose(r1.t_samples, r2.t_samples):
        raise ValueError("grid mismatch: pulses must share the t grid")


def pulse_propagate(r1: PulseEnvelope, r2: PulseEnvelope, s: ScatterMatrix) -> PulseOutput:
    _check_common_grid(r1, r2)
    t = r1.t_samples
    w1 = s.s11 * r1.amplitude + s.s21 * r2.amplitude
    w2 = s.s12 * r1.amplitude + s.s22 * r2.amplitude
    e_in = trapezoid(np.abs(r1.amplitude) ** 2, t) + trapezoid(np.abs(r2.amplitude) ** 2, t)
    e_out = trapezoid(np.abs(w1) ** 2, t) + trapezoid(np.abs(w2) ** 2, t)
    return PulseOutput(w1=w1, w2=w2, leaked_fraction=float(1.0 - e_out / e_in))


def autocorrelation(r: PulseEnvelope, delta: float) -> float:
    """Normalised Re int r(t) r*(t - delta) dt, shifted copy by linear interpolation."""
    t = r.t_samples
    a = r.amplitude
    shifted = np.interp(t - delta, t, a.real, left=0, right=0) + 1j * np.interp(
        t - delta, t, a.imag, left=0, right=0)
    return float(np.real(trapezoid(a * np.conj(shifted), t)) / r.energy)


def incoherent_average(
    r1: PulseEnvelope,
    r2: PulseEnvelope,
    s: ScatterMatrix,
    n_phase_samples: int = 64,
    rng: np.random.Generator | None = None,
    phases=None,
) -> float:
    """Mean leaked fraction when r2 carries a random relative phase.

    Explicit ``phases`` override the random draw.
    """
    if phases is None:
        if n_phase_samples < 16:
            raise ValueError("n_phase_samples must be >= 16")
        rng = np.random.default_rng() if rng is None else rng
        phases = rng.uniform(0.0, 2 * math.pi, n_phase_samples)
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    leaked = []
    for ph in phases:
        r2p = PulseEnvelope(r2.t_samples, r2.amplitude * np.exp(1j * ph), r2.delay)
        leaked.append(pulse_propagate(r1, r2p, s).leaked_fraction)
    return float(np.mean(leaked))
