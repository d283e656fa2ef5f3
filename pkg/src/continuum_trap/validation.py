"""Cross-layer consistency checks: BPM against coupled-mode theory and friends."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import hom, photons
from .cmt import integrate_discretized_continuum, s_matrix


class NonMarkovianWarning(UserWarning):
    pass


def markovian_p1(z, sigma: float):
    """|s11|^2 for single-guide excitation."""
    return 0.25 * (1.0 + np.exp(-2.0 * sigma * np.asarray(z))) ** 2


@dataclass(frozen=True)
class SigmaFit:
    sigma: float
    residual_norm: float    # RMS of p1 - model


def fit_sigma(z, p1=None, sigma0: float | None = None, warn_above: float = 0.05) -> SigmaFit:
    """Least-squares fit of p1(z) to (1 + exp(-2 sigma z))^2 / 4.

    Accepts either a :class:`~continuum_trap.bpm.PropagationTrace` or the two
    arrays. ``sigma0`` defaults to 3 / z_end, i.e. a trace spanning about three
    decay lengths.
    """
    if p1 is None:
        z, p1 = z.z_samples, z.p1
    z = np.asarray(z, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if z.size < 3:
        raise ValueError("need at least three samples to fit")
    if sigma0 is None:
        sigma0 = 3.0 / max(z[-1], 1e-300)
    scale = sigma0

    def res(x):
        return markovian_p1(z, x[0] * scale) - p1

    sol = least_squares(res, x0=[1.0], bounds=([0.0], [np.inf]), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    sigma = float(sol.x[0] * scale)
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    if rms > warn_above:
        warnings.warn(f"fit residual {rms:.3g} > {warn_above}: non-Markovian or under-resolved",
                      NonMarkovianWarning, stacklevel=2)
    return SigmaFit(sigma, rms)


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    sigma_golden: float = math.nan
    sigma_fit: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, threshold, ok, detail=""):
        self.checks.append(Check(name, bool(ok), float(value), float(threshold), detail))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "sigma_golden": self.sigma_golden,
            "sigma_fit": self.sigma_fit,
            "checks": [asdict(c) for c in self.checks],
        }


def check_sigma(report, trace, sigma_golden, rel_tol=0.25):
    fit = fit_sigma(trace)
    report.sigma_fit = fit.sigma
    rel = abs(fit.sigma - sigma_golden) / sigma_golden
    report.add("sigma_bpm_vs_golden_rule", rel, rel_tol, rel <= rel_tol,
               f"fit {fit.sigma:.4g} /m, golden rule {sigma_golden:.4g} /m, rms {fit.residual_norm:.3g}")


def check_bpm_vs_cmt(report, trace, sigma, tol=0.05):
    dev = float(np.max(np.abs(trace.p1 - markovian_p1(trace.z_samples, sigma))))
    report.add("bpm_p1_vs_markovian", dev, tol, dev <= tol, "max |p1 - |s11|^2| over the trace")


def check_bath(report, spectrum, sigma, delta_beta0, n_decay=3.0, rel_tol=0.10):
    z_end = n_decay / sigma
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = integrate_discretized_continuum(spectrum, 1.0, 0.0, z_end,
                                               delta_beta0=delta_beta0, record_every=20)
    ref = markovian_p1(traj.z, sigma)
    sel = traj.z <= min(z_end, traj.usable_z)
    dev = float(np.max(np.abs(traj.p1[sel] - ref[sel]) / ref[sel]))
    report.add("bath_vs_markovian", dev, rel_tol, dev <= rel_tol,
               f"relative, z <= {traj.z[sel][-1]:.4g} m")


def check_photons(report, sigma, delta_beta0, tol=1e-12):
    z = 1.0 / sigma
    s = s_matrix(z, sigma, delta_beta0)
    u = s.rows()
    worst = 0.0
    for n in range(1, 5):
        joint = photons.joint_single_input(photons.fock_single(n), s)
        for out in photons.all_outcomes(n):
            worst = max(worst, abs(joint[out] - photons.bosonic_oracle((n, 0), u, out)))
    pair = photons.two_photon_joint(s)
    for out in photons.all_outcomes(2):
        worst = max(worst, abs(pair[out] - photons.bosonic_oracle((1, 1), u, out)))
    norm = 2 * pair[(2, 0, 0)] + pair[(1, 1, 0)] + 2 * pair[(1, 0, 1)] + pair[(0, 0, 2)]
    worst = max(worst, abs(norm - 1.0))
    report.add("photon_statistics_vs_oracle", worst, tol, worst <= tol)


def check_hom(report, sigma, delta_beta0, limit=0.02):
    s = s_matrix(3.0 / sigma, sigma, delta_beta0)
    spec = hom.PhaseMatchSpec(bandwidth=1.0)
    delta = np.linspace(-8, 8, 161)
    curve = hom.coincidence_curve(delta, s, spec)
    ratio = 1.0 - hom.dip_visibility(curve)
    report.add("hom_dip_depth", ratio, limit, ratio < limit, "P(0)/P(plateau) at z = 3 l_d")


def run_validation(modes, trace=None) -> ValidationReport:
    """All cross-layer checks. ``trace`` is a BPM run from single-guide excitation."""
    sigma = modes.decay.sigma
    d0 = modes.delta_beta0
    report = ValidationReport(sigma_golden=sigma)
    if trace is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMarkovianWarning)
            check_sigma(report, trace, sigma)
        check_bpm_vs_cmt(report, trace, sigma)
    check_bath(report, modes.spectrum, sigma, d0)
    check_photons(report, sigma, d0)
    check_hom(report, sigma, d0)
    return report
