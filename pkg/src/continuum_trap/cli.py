"""Command-line entry point: ``continuum-trap <subcommand>``.

Exit codes: 0 success, 1 validation or numerical failure, 2 configuration error.
Every run writes ``manifest.json`` into the output directory before it starts
and finalises it (status plus output hashes) when it ends.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, bpm, cmt, hom, photons
from .geometry import ConfigError, build_potential, load_config
from .manifest import RunManifest
from .modes import BandEdgeError, NotEmbeddedError, NotGuidingError, solve_modes
from .validation import fit_sigma, run_validation

log = logging.getLogger("continuum_trap")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
FULL_STRUCTURE = ("channel1", "channel2", "slab")


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")
    return path


def _modes_summary(ms) -> dict:
    d = ms.decay
    return {
        "delta_beta0": ms.delta_beta0,
        "slab_edge": ms.slab.eigenvalue,
        "slab_bound_levels": list(ms.slab.bound_eigenvalues),
        "sigma": d.sigma,
        "decay_length": d.decay_length,
        "level_shift": d.level_shift,
        "resonant_k": d.resonant_k,
        "overlaps": ms.overlaps,
        "channel_solver_steps": ms.u1.steps,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_modes(args, cfg, man):
    ms = solve_modes(cfg)
    out = Path(args.out)
    man.register(write_json(out / "modes.json", _modes_summary(ms)))
    sp = ms.spectrum
    man.register(write_csv(out / "dispersion.csv", ["k", "dispersion"],
                           zip(sp.k_samples, sp.dispersion)))
    man.register(write_csv(out / "coupling.csv", ["k", "g_re", "g_im"],
                           zip(sp.k_samples, sp.coupling.real, sp.coupling.imag)))
    return EXIT_OK


def _run_bpm(cfg, ms, kind, z_end, snapshot_every=None):
    pot = build_potential(cfg.geometry, cfg.grid, FULL_STRUCTURE)
    return bpm.propagate(bpm.make_input(kind, ms.u1, ms.u2), pot, z_end, (ms.u1, ms.u2),
                         absorber_strength=cfg.solver.absorber_strength,
                         observe_every=cfg.solver.observer_every,
                         snapshot_every=snapshot_every)


def cmd_bpm(args, cfg, man):
    ms = solve_modes(cfg)
    z_end = cfg.geometry.device_length if args.z_end is None else args.z_end
    trace = _run_bpm(cfg, ms, args.input, z_end, args.snapshot_every)
    out = Path(args.out)
    trace_path = Path(args.trace_out) if args.trace_out else out / "trace.csv"
    if not trace_path.is_absolute():
        trace_path = out / trace_path
    man.register(write_csv(trace_path, ["z", "p1", "p2", "p_total"], trace.rows()))
    if args.snapshot_out:
        for i, snap in enumerate(trace.snapshots):
            p = out / f"{args.snapshot_out}_{i:04d}.bpmf"
            man.register(bpm.write_snapshot(p, snap))
    summary = {"input": args.input, "z_end": z_end, "p1": trace.p1[-1], "p2": trace.p2[-1],
               "p_total": trace.p_total[-1], "steps": trace.steps}
    if args.input == "mode1":
        fit = fit_sigma(trace)
        summary.update(sigma_fit=fit.sigma, fit_rms=fit.residual_norm, sigma_golden=ms.decay.sigma)
    man.register(write_json(out / "bpm_summary.json", summary))
    log.info("p1 = %.4f, p2 = %.4f at z = %.4g m", trace.p1[-1], trace.p2[-1], z_end)
    return EXIT_OK


def cmd_cmt(args, cfg, man):
    ms = solve_modes(cfg)
    sigma, d0 = ms.decay.sigma, ms.delta_beta0
    z_end = cfg.geometry.device_length if args.z_end is None else args.z_end
    out = Path(args.out)
    if args.mode == "smatrix":
        z = np.linspace(0.0, z_end, args.n_points)
        shift = ms.decay.level_shift if cfg.solver.fold_level_shift else 0.0
        s = cmt.s_matrix(z, sigma, d0, level_shift=shift)
        rows = zip(z, np.abs(s.s11) ** 2, np.abs(s.s12) ** 2, np.abs(s.s13) ** 2)
        man.register(write_csv(out / "s_matrix.csv", ["z", "k11", "k12", "k13"], rows))
    elif args.mode == "bath":
        traj = cmt.integrate_discretized_continuum(ms.spectrum, 1.0, 0.0, z_end,
                                                   delta_beta0=d0, record_every=50)
        man.register(write_csv(out / "bath.csv", ["z", "p1", "p2", "norm"],
                               zip(traj.z, traj.p1, traj.p2, traj.norm)))
    else:
        # r1 = r(t), r2 = -r(t - delta): trapped fraction vs delay at z_end
        tau_c = args.tauc
        s = cmt.s_matrix(z_end, sigma, d0)
        t = np.linspace(-12, 12 + args.delta_max, 4097) * tau_c
        r1 = cmt.gaussian_pulse(t, tau_c)
        rows = []
        for d in np.linspace(0.0, args.delta_max, args.n_points) * tau_c:
            r2 = cmt.gaussian_pulse(t, tau_c, delay=d, factor=-1.0)
            rows.append((d, cmt.pulse_propagate(r1, r2, s).trapped_fraction))
        man.register(write_csv(out / "pulse.csv", ["delta", "trapped_fraction"], rows))
    return EXIT_OK


def _parse_state(text: str):
    kind, _, n0 = text.partition(":")
    if kind == "pair" and not n0:
        return kind, 0.0
    if kind not in ("fock", "coherent") or not n0:
        raise ConfigError("state", f"expected fock:N, coherent:MEAN or pair, got {text!r}")
    try:
        return kind, float(n0)
    except ValueError:
        raise ConfigError("state", f"bad photon number in {text!r}") from None


def cmd_photons(args, cfg, man):
    kind, n0 = _parse_state(args.state)
    ms = solve_modes(cfg)
    sigma, d0 = ms.decay.sigma, ms.delta_beta0

    def joint_at(z):
        s = cmt.s_matrix(z, sigma, d0)
        if kind == "fock":
            if n0 != int(n0):
                raise ConfigError("state", "Fock photon number must be an integer")
            return photons.joint_single_input(photons.fock_single(int(n0), args.port), s)
        if kind == "coherent":
            return photons.joint_single_input(photons.coherent_single(n0, args.port), s)
        return photons.two_photon_joint(s)

    out = Path(args.out)
    z = args.z if args.z is not None else 1.0 / sigma
    joint = joint_at(z)
    table = [{"n": [int(a), int(b), int(c)], "p": p} for a, b, c, p in joint.to_rows()]
    man.register(write_json(out / "joint.json", {"state": args.state, "z": z, "entries": table}))
    if args.z_sweep:
        zs = np.linspace(0.0, args.z_sweep_max / sigma, args.z_sweep)
        picks = [(1, 0, 1), (1, 1, 0), (2, 0, 0), (0, 0, 2)] if kind == "pair" else \
            [(int(n0), 0, 0), (0, 0, int(n0))]
        rows = []
        for zz in zs:
            j = joint_at(zz)
            rows.append([zz] + [j[o] for o in picks])
        header = ["z"] + ["P" + "".join(map(str, o)) for o in picks]
        man.register(write_csv(out / "joint_sweep.csv", header, rows))
    return EXIT_OK


def cmd_hom(args, cfg, man):
    ms = solve_modes(cfg)
    sigma = ms.decay.sigma
    z = args.z if args.z is not None else 3.0 / sigma
    s = cmt.s_matrix(z, sigma, ms.delta_beta0)
    spec = hom.PhaseMatchSpec.from_tau_c(args.tauc)
    delta = np.linspace(-args.delta_max, args.delta_max, args.n_delta) * args.tauc
    curve = hom.coincidence_curve(delta, s, spec, method=args.method)
    out = Path(args.out)
    man.register(write_csv(out / "hom.csv", ["delta", "coincidence", "normalized"],
                           zip(curve.delta_samples, curve.values, curve.normalized)))
    man.register(write_json(out / "hom_summary.json",
                            {"z": z, "tau_c": args.tauc, "alpha": curve.alpha,
                             "visibility": hom.dip_visibility(curve)}))
    if args.t1t2_map:
        tau = np.linspace(-args.delta_max - 6, args.delta_max + 6, 241) * args.tauc
        grid = hom.coincidence_t1_t2(tau[None, :], delta[:, None], s, spec)
        rows = ([d, t, v] for d, row in zip(delta, grid) for t, v in zip(tau, row))
        man.register(write_csv(out / "hom_t1t2.csv", ["delta", "tau", "coincidence"], rows))
    return EXIT_OK


def cmd_validate(args, cfg, man):
    ms = solve_modes(cfg)
    trace = None
    if not args.skip_bpm:
        trace = _run_bpm(cfg, ms, "mode1", cfg.geometry.device_length)
        man.register(write_csv(Path(args.out) / "trace.csv", ["z", "p1", "p2", "p_total"],
                               trace.rows()))
    report = run_validation(ms, trace)
    man.register(write_json(Path(args.out) / "validation.json", report.to_dict()))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.4g} (limit {c.threshold:g})")
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="continuum-trap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON config; missing keys take the defaults")
    p.add_argument("--out", default="run_output", help="output directory (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("modes", help="channel modes, slab continuum, coupling and decay rate")

    b = sub.add_parser("bpm", help="beam propagation through the full structure")
    b.add_argument("--input", choices=["mode1", "mode2", "symmetric", "antisymmetric"],
                   default="mode1")
    b.add_argument("--z-end", type=float, help="propagation distance in m (default: device length)")
    b.add_argument("--trace-out", help="trace CSV path, relative to --out (default: trace.csv)")
    b.add_argument("--snapshot-out", help="prefix for binary field snapshots")
    b.add_argument("--snapshot-every", type=int, help="extra snapshot every N steps")

    c = sub.add_parser("cmt", help="Markovian S-matrix, discretized-bath run or pulse interference")
    c.add_argument("--mode", choices=["smatrix", "bath", "pulse"], default="smatrix")
    c.add_argument("--z-end", type=float, help="distance in m (default: device length)")
    c.add_argument("--n-points", type=int, default=601, help="z samples (smatrix) or delays (pulse)")
    c.add_argument("--tauc", type=float, default=1e-12, help="pulse duration in s (pulse mode)")
    c.add_argument("--delta-max", type=float, default=8.0, help="largest delay in units of tauc")

    ph = sub.add_parser("photons", help="joint photon-count distribution at distance z")
    ph.add_argument("--state", default="pair", help="fock:N, coherent:MEAN or pair (default)")
    ph.add_argument("--port", type=int, choices=[1, 2], default=1, help="excited guide")
    ph.add_argument("--z", type=float, help="distance in m (default: one decay length)")
    ph.add_argument("--z-sweep", type=int, metavar="N", help="also tabulate selected entries at N distances")
    ph.add_argument("--z-sweep-max", type=float, default=5.0, help="sweep range in decay lengths")

    h = sub.add_parser("hom", help="coincidence rate between guide 1 and the slab vs delay")
    h.add_argument("--z", type=float, help="distance in m (default: three decay lengths)")
    h.add_argument("--tauc", type=float, default=1e-12, help="correlation time in s")
    h.add_argument("--delta-max", type=float, default=8.0, help="delay range in units of tau_c")
    h.add_argument("--n-delta", type=int, default=161)
    h.add_argument("--method", choices=["analytic", "quadrature"], default="analytic")
    h.add_argument("--t1t2-map", action="store_true", help="also write the time-resolved rate")

    v = sub.add_parser("validate", help="cross-layer consistency suite (pass/fail JSON report)")
    v.add_argument("--skip-bpm", action="store_true", help="skip the full-length BPM run")
    return p


COMMANDS = {
    "modes": cmd_modes, "bpm": cmd_bpm, "cmt": cmd_cmt,
    "photons": cmd_photons, "hom": cmd_hom, "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "out", "verbose", "command")}
    man = RunManifest.begin(out, args.command, cfg.to_dict(), flags=flags, seed=cfg.solver.seed)
    try:
        status = COMMANDS[args.command](args, cfg, man)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        man.finalize(False)
        return EXIT_CONFIG
    except (NotGuidingError, NotEmbeddedError, BandEdgeError, bpm.PhaseStepError,
            bpm.NonFiniteFieldError, cmt.ToleranceError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.finalize(False)
        return EXIT_FAIL
    man.finalize(status == EXIT_OK)
    return status


if __name__ == "__main__":
    sys.exit(main())
