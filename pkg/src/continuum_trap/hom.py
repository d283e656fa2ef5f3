"""Two-photon coincidences for down-converted wave packets (guide W1 vs slab).

Only the Gaussian phase-matching profile is shipped:
``G(Omega, -Omega) = exp(-Omega^2 tau_c^2 / 2)`` with ``tau_c = 1 / bandwidth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .cmt import ScatterMatrix


class PlateauError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseMatchSpec:
    bandwidth: float          # rad/s
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.shape != "gaussian":
            raise ValueError(f"unsupported phase-matching shape {self.shape!r}")

    @property
    def tau_c(self) -> float:
        return 1.0 / self.bandwidth

    def g_diag(self, omega):
        """G(Omega, -Omega)."""
        return np.exp(-0.5 * (np.asarray(omega) * self.tau_c) ** 2)

    @classmethod
    def from_tau_c(cls, tau_c: float) -> "PhaseMatchSpec":
        return cls(bandwidth=1.0 / tau_c)


def r_closed_form(tau, spec: PhaseMatchSpec):
    tc = spec.tau_c
    return np.exp(-0.5 * (np.asarray(tau) / tc) ** 2) / (math.sqrt(2 * math.pi) * tc)


def _r_quadrature(tau, spec: PhaseMatchSpec, n_omega: int = 4097, span: float = 12.0):
    w = np.linspace(-span * spec.bandwidth, span * spec.bandwidth, n_omega)
    gw = spec.g_diag(w)
    tau = np.asarray(tau, dtype=float)
    flat = tau.ravel()
    out = np.empty(flat.size)
    chunk = max(1, 4_000_000 // n_omega)
    for i in range(0, flat.size, chunk):
        # G real and even: the sine part integrates to zero
        out[i:i + chunk] = trapezoid(gw * np.cos(np.outer(flat[i:i + chunk], w)), w, axis=1)
    return (out / (2 * math.pi)).reshape(tau.shape)


def r_of_tau(spec: PhaseMatchSpec, tau_grid, method: str = "quadrature") -> np.ndarray:
    """Correlation function (1/2 pi) int G(Omega, -Omega) exp(-i Omega tau) dOmega."""
    tau = np.asarray(tau_grid, dtype=float)
    if tau.size > 1:
        dtau = float(np.min(np.diff(np.sort(tau))))
        if spec.bandwidth * dtau > math.pi:
            raise ValueError("tau grid too coarse: bandwidth * dtau > pi (aliasing)")
        if tau.max() < 6 * spec.tau_c or tau.min() > -6 * spec.tau_c:
            raise ValueError("tau grid must span at least +-6 tau_c")
    if method == "quadrature":
        return _r_quadrature(tau, spec)
    if method == "analytic":
        return r_closed_form(tau, spec)
    raise ValueError(f"unknown method {method!r}")


def coincidence_t1_t2(tau, delta, s: ScatterMatrix, spec: PhaseMatchSpec):
    """|r(tau + delta) s11 s23 + r(tau - delta) s13 s21|^2, tau = t2 - t1."""
    tau = np.asarray(tau, dtype=float)
    delta = np.asarray(delta, dtype=float)
    a = r_closed_form(tau + delta, spec) * s.s11 * s.s23
    b = r_closed_form(tau - delta, spec) * s.s13 * s.s21
    return np.abs(a + b) ** 2


def alpha_norm(spec: PhaseMatchSpec) -> float:
    """int r(tau)^2 dtau for the Gaussian profile."""
    return 1.0 / (2 * math.sqrt(math.pi) * spec.tau_c)


def overlap_ratio(delta, spec: PhaseMatchSpec, method: str = "analytic", n_tau: int = 4001):
    """R(delta) = int r(tau - delta) r(tau + delta) dtau / int r^2 dtau."""
    delta = np.asarray(delta, dtype=float)
    if method == "analytic":
        return np.exp(-(delta / spec.tau_c) ** 2)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    half = 10 * spec.tau_c + np.max(np.abs(delta), initial=0.0)
    tau = np.linspace(-half, half, n_tau)
    r_tau = r_of_tau(spec, tau)
    alpha = trapezoid(r_tau**2, tau)
    out = np.empty(delta.size)
    for i, d in enumerate(delta.ravel()):
        out[i] = trapezoid(_r_quadrature(tau - d, spec) * _r_quadrature(tau + d, spec), tau) / alpha
    return out.reshape(delta.shape)


@dataclass(frozen=True)
class CorrelationCurve:
    delta_samples: np.ndarray
    values: np.ndarray        # raw, carries alpha
    z: float
    alpha: float
    tau_c: float

    @property
    def normalized(self) -> np.ndarray:
        return self.values / self.alpha

    def plateau_value(self) -> float:
        return float(np.abs(self.values[np.argmax(np.abs(self.delta_samples))]))


def coincidence_curve(delta_grid, s: ScatterMatrix, spec: PhaseMatchSpec,
                      method: str = "analytic", n_tau: int = 4001) -> CorrelationCurve:
    """Coincidence rate vs signal/idler delay, integrated over tau.

    ``analytic`` uses the closed form with R(delta) = exp(-delta^2 / tau_c^2);
    ``quadrature`` integrates the time-resolved rate over tau on a grid.
    """
    delta = np.asarray(delta_grid, dtype=float)
    scale = max(float(np.max(np.abs(delta), initial=0.0)), 1e-300)
    if not np.allclose(np.sort(delta), np.sort(-delta), rtol=0, atol=1e-9 * scale):
        raise ValueError("delta grid must be symmetric")
    alpha = alpha_norm(spec)
    if method == "analytic":
        k11 = abs(s.s11) ** 2
        k12 = abs(s.s12) ** 2
        # k11 + k21 + 2 Re(s11 s21*) R, regrouped so the dip does not cancel
        rr = overlap_ratio(delta, spec)
        bracket = rr * abs(s.s11 + s.s21) ** 2 + (1 - rr) * (k11 + abs(s.s21) ** 2)
        values = alpha * (1 - k11 - k12) * bracket
    elif method == "quadrature":
        values = np.empty(delta.size)
        half = 10 * spec.tau_c + np.max(np.abs(delta), initial=0.0)
        tau = np.linspace(-half, half, n_tau)
        for i, d in enumerate(delta):
            values[i] = trapezoid(coincidence_t1_t2(tau, d, s, spec), tau)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CorrelationCurve(delta, np.asarray(values, dtype=float), float(s.z), alpha, spec.tau_c)


def dip_visibility(curve: CorrelationCurve, plateau_delta: float = 5.0) -> float:
    """1 - P(0) / P(plateau), plateau = mean over |delta| >= 5 tau_c."""
    d = curve.delta_samples
    far = np.abs(d) >= plateau_delta * curve.tau_c
    if not far.any():
        raise PlateauError("plateau not reached: no samples beyond 5 tau_c")
    plateau = float(np.mean(curve.values[far]))
    if plateau <= 1e-300 * max(curve.alpha, 1.0):
        raise PlateauError("plateau not reached: coincidence rate vanishes (z = 0?)")
    order = np.argsort(d)
    p0 = float(np.interp(0.0, d[order], curve.values[order]))
    return 1.0 - p0 / plateau
