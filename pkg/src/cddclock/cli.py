"""Command-line front end: ``cddclock <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
Artifacts go to ``--out``, else ``$CDDCLOCK_OUTPUT_DIR``, else ``./cddclock-out``.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import logging
import math
import os
from pathlib import Path
import sys
import warnings

import numpy as np

from . import __version__
from .config import ConfigError, parse_config
from .io import read_csv, write_csv, write_snapshot

log = logging.getLogger("cddclock")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
OUTPUT_ENV = "CDDCLOCK_OUTPUT_DIR"


def _pmap(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


class _Ctx:
    def __init__(self, args, cfg, outdir):
        self.args, self.cfg, self.out = args, cfg, outdir
        self.files = []

    def csv(self, name, columns, rows, extra=None):
        p = write_csv(self.out / name, columns, rows, self.args.command, self.cfg, extra)
        self.files.append(p)
        return p


# --------------------------------------------------------------------------
# subcommands

def cmd_analyze(ctx):
    from . import dressing as dr
    from .clocksim import bare_response, quadratic_zeeman_offset

    cdd = ctx.cfg.cdd()
    ang = dr.mixing_angles(cdd)
    lin, quad = dr.rwa_field_response(cdd)
    rows = []
    for lbl in ("S", "D"):
        rows += [(f"omegabar0_{lbl}", cdd.omegabar0(lbl), "Hz"),
                 (f"omegabar1_{lbl}", cdd.omegabar1(lbl), "Hz"),
                 (f"cos_theta1_{lbl}", getattr(ang, f"c1_{lbl}"), ""),
                 (f"cos_theta2_{lbl}", getattr(ang, f"c2_{lbl}"), ""),
                 (f"Delta2_{lbl}", cdd.stages(lbl)[1].Delta, "Hz"),
                 (f"zeeman_residual_{lbl}", cdd.zeeman_residual(lbl), "Hz")]
    rows += [
        ("transition_offset", dr.artificial_transition_frequency(cdd), "Hz"),
        ("zeeman_linear", dr.zeeman_sensitivity(cdd), "Hz/nT"),
        ("zeeman_linear_rwa", lin, "Hz/nT"),
        ("zeeman_quadratic_rwa", quad, "Hz/nT^2"),
        ("bare_zeeman_linear", bare_response().linear, "Hz/nT"),
        ("qps_factor", dr.qps_suppression_factor(ang.c1_D, ang.c2_D), ""),
        ("qps_relative_to_bare", dr.qps_relative_to_bare(ang.c1_D, ang.c2_D), ""),
        ("magic_detuning", dr.magic_detuning(cdd.stage2_D.Omega, cdd.g_D), "Hz"),
        ("magic_detuning_stage1_convention",
         dr.magic_detuning(cdd.stage2_D.Omega, cdd.g_D, stage=1), "Hz"),
        ("compensation_detuning_S", dr.compensation_detuning_S(cdd), "Hz"),
        ("amplitude_sensitivity", dr.amplitude_sensitivity(cdd), "Hz"),
        ("quadratic_zeeman_offset", quadratic_zeeman_offset(cdd.B0), "Hz"),
    ]
    ctx.csv("analyze.csv", ["quantity", "value", "unit"], rows)
    for name, v, unit in rows:
        print(f"{name:34s} {v:+.6f} {unit}")


def _field_point(arg):
    cfg, dB = arg
    from .dynamics import transition_frequency_numeric

    return transition_frequency_numeric(cfg.cdd(), dB, cfg.propagation(), **cfg.floquet_kwargs())


def cmd_spectrum(ctx):
    from .dynamics import LabelingWarning, quasi_energies

    cfg = ctx.cfg
    cdd = cfg.cdd()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LabelingWarning)
        spec = quasi_energies(cdd, cfg.propagation(), ctx.args.dB, **cfg.floquet_kwargs())
    rows = [(lbl, m, e) for (lbl, m), e in spec.energies.items()]
    ctx.csv("spectrum.csv", ["manifold", "m", "energy_hz"], rows)
    lrows = []
    for lbl, lad in spec.ladders.items():
        per = lad.period
        lrows.append((lbl, lad.spacing, lad.guess, lad.overlap, int(lad.reliable),
                      per.T if per else 0.0, per.rounding if per else 0.0))
        print(f"{lbl}: gap {lad.spacing:.4f} Hz (rotating-wave {lad.guess:.4f} Hz), "
              f"overlap {lad.overlap:.4f}, drive-2 rounding "
              f"{(per.rounding if per else 0.0):+.2e} Hz")
    ctx.csv("spectrum_ladders.csv",
            ["manifold", "gap_hz", "rwa_gap_hz", "overlap", "reliable", "period_s",
             "omega2_rounding_hz"], lrows)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if ctx.args.field_scan:
        d = cfg["dynamics"]
        grid = np.linspace(-d["field_span_nT"], d["field_span_nT"], d["field_points"])
        nu = _pmap(_field_point, [(cfg, float(x)) for x in grid], ctx.args.jobs)
        nu = np.asarray(nu) - nu[int(np.argmin(np.abs(grid)))]
        c2, c1, _ = np.polyfit(grid, nu, 2)
        ctx.csv("spectrum_field.csv", ["dB_nT", "offset_hz"], zip(grid, nu),
                {"linear_hz_per_nT": repr(float(c1)), "quadratic_hz_per_nT2": repr(float(c2))})
        print(f"field response: linear {c1:+.3e} Hz/nT, quadratic {c2:+.3e} Hz/nT^2")


def cmd_prepare(ctx):
    from .dynamics import simulate_adiabatic_preparation

    cfg = ctx.cfg
    prog = cfg.program("S", speedup=ctx.args.speedup)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pops = simulate_adiabatic_preparation(prog, cfg.cdd(), cfg=cfg.propagation())
    ctx.csv("prepare.csv", ["m2", "population"], sorted(pops.items(), reverse=True),
            {"duration_s": repr(prog.duration)})
    for m, p in sorted(pops.items(), reverse=True):
        print(f"m2={m:+.1f}: {p:.6f}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)


def _response(cfg, cdd):
    from .clocksim import response_from_analytic, response_from_numeric

    theta = cfg["constants"]["theta_Q"]
    if cfg["servo"]["response"] == "numeric":
        return response_from_numeric(cdd, cfg.propagation(), theta,
                                     cfg["dynamics"]["field_span_nT"])
    return response_from_analytic(cdd, theta)


def cmd_scan(ctx):
    from dataclasses import replace

    from .clocksim import (DecayModel, fit_decay, per_ion_line_scan, rabi_flop_probability,
                           synthetic_flops)
    from .crystal import axial_field_gradient, equilibrium_positions, inhomogeneity_fit

    cfg = ctx.cfg
    s = cfg["scan"]
    cdd = cfg.cdd()
    resp = _response(cfg, cdd)
    if not s["qps"]:
        resp = replace(resp, qps_per_gradient=0.0)
    trap = cfg.trap()
    crys = equilibrium_positions(trap)
    grid = np.linspace(-s["span_hz"] / 2, s["span_hz"] / 2, s["points"])
    noise = cfg.noise()
    # centre the grid on the mean static line position
    mid = float(np.mean(resp.frequency(0.0, axial_field_gradient(crys, trap))))
    scan = per_ion_line_scan(resp, crys, trap, noise, grid + mid, s["shots"],
                             cfg["servo"]["probe_time_ms"] * 1e-3,
                             cfg["servo"]["cycle_time_ms"] * 1e-3, cfg.seed)
    rows = [(i, d, scan.excitation[i, j]) for i in range(crys.N)
            for j, d in enumerate(scan.detunings)]
    ctx.csv("scan.csv", ["ion", "detuning_hz", "excitation"], rows)
    crow = [(i, z * 1e6, scan.centers[i], scan.center_errors[i], scan.truth[i], int(i in scan.flags))
            for i, z in enumerate(crys.positions)]
    extra = {}
    if crys.N >= 3:
        lin, quad, spread = inhomogeneity_fit(crys.positions, scan.centers - mid)
        extra = {"linear_hz_per_um": repr(lin), "quadratic_hz_per_um2": repr(quad),
                 "spread_hz": repr(spread)}
        print(f"centres: linear {lin:+.4g} Hz/um, quadratic {quad:+.4g} Hz/um^2, "
              f"spread {spread:.4g} Hz")
    ctx.csv("scan_centers.csv", ["ion", "z_um", "center_hz", "center_err_hz", "model_hz",
                                 "flagged"], crow, extra)
    t = np.linspace(0, s["flop_duration"], s["flop_points"])
    model = DecayModel(gamma=s["gamma"], Omega_L=cdd.laser_Omega)
    p = synthetic_flops(t, model, s["flop_shots"], [cfg.seed, 3])
    fit = fit_decay(t, p)
    ctx.csv("flops.csv", ["t_s", "excitation", "model"],
            zip(t, p, rabi_flop_probability(t, fit.model)),
            {"gamma_fit_s": repr(fit.model.gamma), "gamma_err_s": repr(fit.gamma_err),
             "Omega_L_fit_hz": repr(float(fit.model.Omega_L))})
    print(f"flop fit: gamma = {fit.model.gamma:.4f} +- {fit.gamma_err:.4f} s")


def cmd_crystal(ctx):
    from . import dressing as dr
    from .crystal import axial_field_gradient, equilibrium_positions, per_ion_qps

    cfg = ctx.cfg
    if ctx.args.ions is not None:
        cfg = cfg.replace("trap", ions=ctx.args.ions)
    trap = cfg.trap()
    crys = equilibrium_positions(trap)
    grad = axial_field_gradient(crys, trap)
    theta = cfg["constants"]["theta_Q"]
    cdd = cfg.cdd()
    ang = dr.mixing_angles(cdd)
    rel = dr.qps_relative_to_bare(ang.c1_D, ang.c2_D)
    m = cdd.target.m2_D
    bare = per_ion_qps(crys, trap, theta, 1.5)
    dressed = per_ion_qps(crys, trap, theta, m, suppression=rel)
    rows = [(i, z * 1e6, g, b, d) for i, (z, g, b, d) in enumerate(zip(crys.positions, grad, bare, dressed))]
    ctx.csv("crystal.csv", ["ion", "z_um", "gradient_V_per_m2", "qps_bare_hz", "qps_dressed_hz"],
            rows, {"omega_z_rad_s": repr(trap.omega_z), "length_scale_m": repr(crys.length_scale)})
    for r in rows:
        print(f"ion {r[0]}: z={r[1]:+.4f} um grad={r[2]:.4e} V/m^2 "
              f"qps bare={r[3]:.4f} Hz dressed={r[4]:.4f} Hz")


def cmd_waveform(ctx):
    from .waveform import boundary_phase_mismatch, export_samples, precompensate

    cfg = ctx.cfg
    label = ctx.args.coil
    prog = cfg.program(label)
    rate = cfg["waveform"]["sample_rate"] or 10.0 * prog.max_frequency_hz()
    if rate < 10.0 * prog.max_frequency_hz():
        raise ConfigError("[waveform] sample_rate must be >= 10x the highest tone frequency")
    pre = precompensate(prog, cfg.coil_model(label))
    ext = "csv" if ctx.args.format == "csv" else "f32"
    for name, p in ((f"waveform_{label}", prog), (f"waveform_{label}_precomp", pre)):
        wf = p.sample(rate)
        path = ctx.out / f"{name}.{ext}"
        export_samples(wf, path, ctx.args.format)
        ctx.files.append(path)
    seg = [(i, s.kind, s.duration, s.phi1, s.phi2) for i, s in enumerate(prog.segments)]
    ctx.csv(f"waveform_{label}_segments.csv", ["index", "kind", "duration_s", "phi1", "phi2"], seg,
            {"sample_rate_hz": repr(rate),
             "boundary_phase_mismatch_rad": repr(boundary_phase_mismatch(prog))})
    print(f"{label} coil: {len(prog.segments)} segments, {prog.duration * 1e3:.3f} ms at "
          f"{rate / 1e6:.3f} MS/s, boundary mismatch {boundary_phase_mismatch(prog):.2e} rad")


def cmd_clock(ctx):
    from .clocksim import overlapping_allan, run_clock_servo, fit_white_fm
    from .crystal import equilibrium_positions

    cfg = ctx.cfg
    cdd = cfg.cdd()
    resp = _response(cfg, cdd)
    trap = cfg.trap()
    crys = equilibrium_positions(trap)
    servo = cfg.servo()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run = run_clock_servo(resp, crys, trap, cfg.noise(), servo, cfg["servo"]["duration_s"])
    cols = ["t_s"] + [f"ion{i}_hz" for i in range(crys.N)]
    rows = [(t, *run.corrections[:, k]) for k, t in enumerate(run.times)]
    ctx.csv("clock.csv", cols, rows, {"nu0_hz": repr(run.nu0), "unlocks": len(run.unlocks)})
    taus, adev, _, _ = overlapping_allan(run.fractional(), run.tau0)
    if taus.size >= 2:
        slope, s1 = fit_white_fm(taus, adev)
        print(f"crystal-average sigma_y(1 s) ~ {s1:.3e}, slope {slope:+.3f}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)


def cmd_allan(ctx):
    from .clocksim import overlapping_allan

    path = Path(ctx.args.input)
    try:
        meta, cols, data = read_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read clock record {path}: {exc}") from None
    if data.shape[0] < 3:
        raise ValueError("record too short for Allan statistics")
    nu0 = float(meta.get("nu0_hz", 411.0421297763904e12))
    t = data[:, 0]
    tau0 = float(t[1] - t[0])
    ions = data[:, 1:]
    y_all = ions.mean(axis=1) / nu0
    taus, adev, err, skipped = overlapping_allan(y_all, tau0)
    per = [overlapping_allan(ions[:, i] / nu0, tau0, taus)[1] for i in range(ions.shape[1])]
    cols = ["tau_s", "adev", "err"] + [f"adev_{c}" for c in cols[1:]]
    rows = [(taus[k], adev[k], err[k], *[p[k] for p in per]) for k in range(taus.size)]
    ctx.csv("allan.csv", cols, rows, {"source": path.name, "skipped_taus": len(skipped)})
    for k in range(taus.size):
        print(f"tau={taus[k]:10.3f} s  adev={adev[k]:.4e}")


COMMANDS = {
    "analyze": (cmd_analyze, "closed-form dressed-state report"),
    "spectrum": (cmd_spectrum, "numeric Floquet quasi-energies"),
    "prepare": (cmd_prepare, "adiabatic preparation fidelity"),
    "scan": (cmd_scan, "per-ion line scans, centre fits and Rabi-flop decay fit"),
    "crystal": (cmd_crystal, "ion positions, field gradients, quadrupole shifts"),
    "waveform": (cmd_waveform, "synthesize and pre-compensate coil waveforms"),
    "clock": (cmd_clock, "two-point servo simulation"),
    "allan": (cmd_allan, "overlapping Allan deviation of a clock record"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="cddclock", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cddclock {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI or .json config file")
    common.add_argument("--preset", choices=("resonant", "magic"), help="drive parameter preset")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=helptext)
        if name == "spectrum":
            sp.add_argument("--dB", type=float, default=0.0, help="field offset (nT)")
            sp.add_argument("--field-scan", action="store_true",
                            help="also fit the transition against field offsets")
        elif name == "prepare":
            sp.add_argument("--speedup", type=float, default=None,
                            help="divide both sweep durations by this factor")
        elif name == "crystal":
            sp.add_argument("--ions", type=int, default=None)
        elif name == "waveform":
            sp.add_argument("--coil", choices=("S", "D"), default="S")
            sp.add_argument("--format", choices=("csv", "raw"), default="csv")
        elif name == "allan":
            sp.add_argument("--input", required=True, help="clock.csv from the clock subcommand")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, args.preset)
        if args.seed is not None:
            cfg = cfg.replace("run", seed=args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        outdir = Path(args.out or cfg["run"]["output_dir"] or os.environ.get(OUTPUT_ENV)
                      or "cddclock-out")
        outdir.mkdir(parents=True, exist_ok=True)
        ctx = _Ctx(args, cfg, outdir)
        COMMANDS[args.command][0](ctx)
        write_snapshot(outdir, args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
