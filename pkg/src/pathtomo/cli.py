"""Command-line interface.

Exit codes: 0 success, 1 bad input or stage failure, 2 geometry validation
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import io
from .errors import PathTomoError
from .experiment import (
    SWEEP_VARIABLES,
    calibrate_from_simulation,
    hidden_offsets,
    reference_states,
    simulate_frameset,
    sweep,
)
from .geometry import (
    golomb_ruler,
    grid_2x3,
    plan_measurements,
    resource_report,
    validate_geometry,
)
from .optics import NoiseModel, OpticalConfig
from .prep import PrepSettings, prepare_paper_state, prepare_square_state
from .quantum import fidelity, maximally_mixed, pure_state, psd_violation, purity, random_state
from .reconstruct import calibrate, reconstruct_state

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2


@dataclass
class RunManifest:
    experiment_id: str
    geometry_file: str
    config_file: str
    state_source: str
    noise: dict
    output_dir: str
    seed: int
    slice_width: int = 1
    origin_offset_max_px: float = 0.0
    calibrated: bool = False

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


class UsageError(Exception):
    pass


def _load_config(args) -> OpticalConfig:
    return io.read_config(args.config) if args.config else OpticalConfig()


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fmt_number(x: float) -> str:
    return str(int(round(x))) if abs(x - round(x)) < 1e-9 else repr(float(x))


# ----------------------------------------------------------------- geometry


def cmd_geometry(args) -> int:
    if args.action == "gen-ruler":
        pts = golomb_ruler(args.d, args.lmin)
        print("[" + ", ".join(_fmt_number(x) for x in pts) + "]")
        if args.write:
            from .geometry import ruler_geometry

            io.write_geometry(ruler_geometry(pts, args.axis), args.write)
        return EXIT_OK
    if not args.file:
        raise UsageError(f"geometry {args.action} needs a geometry file")
    g = io.read_geometry(args.file)
    if args.action == "validate":
        rep = validate_geometry(g)
        print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.to_text())
        return EXIT_OK if rep.valid else EXIT_INVALID
    if args.action == "plan":
        rep = validate_geometry(g)
        if not rep.valid:
            print(rep.to_text())
            return EXIT_INVALID
        plan = plan_measurements(g)
        if args.json:
            print(json.dumps(plan.to_dict(), indent=2))
        else:
            for a in plan.angles:
                print(f"theta = {a.theta:.4f} deg")
                for grp in a.groups:
                    line = f"  x_m = {grp.x_m:+.4f} mm  paths {list(grp.members)}"
                    for p in grp.pairs:
                        line += f"  ({p.i},{p.j}) L={p.length:.4f}"
                    print(line)
            print(f"{len(plan.angles)} angle sections, {plan.pair_count} pair entries")
        return EXIT_OK
    if args.action == "report":
        rep = resource_report(g, _load_config(args))
        print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.to_text())
        return EXIT_OK if rep.nyquist_ok and rep.pixels_ok and rep.aperture_ok else EXIT_INVALID
    raise UsageError(f"unknown geometry action {args.action}")


# ----------------------------------------------------------------- prepare / simulate


def _prep_settings(args) -> PrepSettings:
    s = io.read_prep(args.settings) if getattr(args, "settings", None) else PrepSettings()
    for name in ("phi", "zeta", "omega", "tau"):
        val = getattr(args, name, None)
        if val is not None:
            s = replace(s, **{name: val})
    return s


def _make_state(args):
    """Returns (rho, geometry, source description)."""
    kind = getattr(args, "state", None) or "six-path"
    if kind == "six-path":
        s = _prep_settings(args)
        rho, g = prepare_paper_state(s)
        return rho, g, "prep:" + json.dumps(s.to_dict(), sort_keys=True)
    if kind == "square":
        tau = args.tau if args.tau is not None else 22.5
        rho, g = prepare_square_state(tau=tau)
        return rho, g, f"square:tau={tau}"
    g = io.read_geometry(args.geometry) if getattr(args, "geometry", None) else grid_2x3()
    if kind == "maximally-mixed":
        return maximally_mixed(g.d), g, kind
    if kind == "uniform":
        return pure_state(np.ones(g.d)), g, kind
    if kind == "random":
        return random_state(g.d, seed=args.seed), g, f"random:seed={args.seed}"
    path = Path(kind)
    if not path.exists():
        raise UsageError(f"unknown state {kind!r} (not a preset and no such file)")
    return io.read_density(path), g, str(path)


def cmd_prepare(args) -> int:
    out = _out(args)
    rho, g, src = _make_state(args)
    io.write_density(rho, out / "state.json")
    io.write_geometry(g, out / "geometry.json")
    if src.startswith("prep:"):
        io.write_prep(_prep_settings(args), out / "prep.json")
    print(f"state: d={rho.dim} purity={purity(rho):.6f}")
    print(f"wrote {out / 'state.json'} and {out / 'geometry.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    g = io.read_geometry(args.geometry)
    rho = io.read_density(args.input)
    if rho.dim != g.d:
        raise UsageError(f"state dimension {rho.dim} does not match {g.d} paths")
    plan = plan_measurements(g)
    offsets = hidden_offsets(plan.thetas, args.origin_offset_max, args.seed)
    fs = simulate_frameset(rho, g, cfg, plan, noise=NoiseModel.parse(args.noise),
                           seed=args.seed, offsets=offsets, mirrored=args.mirrored,
                           lab_frame=args.lab_frame, repeats=args.repeats)
    paths = io.write_frameset(fs, _out(args), reveal_truth=args.reveal_truth)
    print(f"wrote {len(paths)} frames to {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------- analysis


def cmd_calibrate(args) -> int:
    g = io.read_geometry(args.geometry)
    plan = plan_measurements(g)
    r1, r2 = io.read_density(args.ref1_state), io.read_density(args.ref2_state)
    cal = calibrate(io.read_frameset(args.ref1), r1, io.read_frameset(args.ref2), r2, plan,
                    width=args.slice_width, ids=(args.ref1_state, args.ref2_state))
    out = _out(args) / "calibration.json"
    io.write_calibration(cal, out)
    print(f"calibration: {len(cal.reference)} factors, conjugate={cal.conjugate}; wrote {out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    g = io.read_geometry(args.geometry)
    plan = plan_measurements(g)
    cal = io.read_calibration(args.calibration) if args.calibration else None
    res = reconstruct_state(io.read_frameset(args.frames), plan, cal, width=args.slice_width)
    out = _out(args)
    io.write_result(res, out / "result.json")
    io.write_pair_csv(res, out / "pairs.csv")
    print(f"purity={purity(res.rho_physical):.6f} "
          f"psd_violation={res.diagnostics['psd_violation']:.3e}; wrote {out / 'result.json'}")
    return EXIT_OK


def _evaluation(res, truth) -> dict:
    return {
        "fidelity": fidelity(res.rho_physical, truth),
        "purity": purity(res.rho_physical),
        "purity_raw": purity(res.rho_raw),
        "theory_purity": purity(truth),
        "psd_violation": psd_violation(res.rho_raw),
        "min_eigenvalue_raw": float(res.rho_raw.eigenvalues()[0]),
    }


def cmd_evaluate(args) -> int:
    res = io.read_result(args.result)
    truth = io.read_density(args.truth)
    ev = _evaluation(res, truth)
    for k, v in ev.items():
        print(f"{k}: {v:.6f}")
    (_out(args) / "evaluation.json").write_text(json.dumps(ev, indent=2) + "\n")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out = _out(args)
    cfg = _load_config(args)
    rho, g, src = _make_state(args)
    io.write_density(rho, out / "state.json")
    io.write_geometry(g, out / "geometry.json")
    io.write_config(cfg, out / "config.json")
    rep = validate_geometry(g)
    if not rep.valid:
        print(rep.to_text())
        return EXIT_INVALID
    noise = NoiseModel.parse(args.noise)
    plan = plan_measurements(g)
    offsets = hidden_offsets(plan.thetas, args.origin_offset_max, args.seed)
    use_cal = args.calibrate or args.origin_offset_max > 0 or args.mirrored
    manifest = RunManifest(
        experiment_id=args.experiment_id, geometry_file="geometry.json",
        config_file="config.json", state_source=src, noise=noise.to_dict(),
        output_dir=str(out), seed=args.seed, slice_width=args.slice_width,
        origin_offset_max_px=args.origin_offset_max, calibrated=bool(use_cal),
    )
    manifest.write(out / "manifest.json")

    fs = simulate_frameset(rho, g, cfg, plan, noise=noise, seed=args.seed, offsets=offsets,
                           mirrored=args.mirrored)
    if args.write_frames:
        io.write_frameset(fs, out / "frames")
    cal = None
    if use_cal:
        r1, r2 = reference_states(g.d)
        io.write_density(r1, out / "reference1.json")
        io.write_density(r2, out / "reference2.json")
        cal = calibrate_from_simulation(g, cfg, plan, noise=noise, seed=args.seed,
                                        offsets=offsets, mirrored=args.mirrored,
                                        width=args.slice_width, refs=(r1, r2))
        io.write_calibration(cal, out / "calibration.json")
    res = reconstruct_state(fs, plan, cal, width=args.slice_width)
    io.write_result(res, out / "result.json")
    io.write_pair_csv(res, out / "pairs.csv")
    ev = _evaluation(res, rho)
    io.write_csv(out / "summary.csv", list(ev), [list(ev.values())])
    print(f"fidelity={ev['fidelity']:.6f} purity={ev['purity']:.6f} "
          f"theory_purity={ev['theory_purity']:.6f} psd_violation={ev['psd_violation']:.3e}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.var not in SWEEP_VARIABLES:
        raise UsageError(f"unknown sweep variable {args.var!r}")
    n = int(round((args.stop - args.start) / args.step)) + 1
    values = [args.start + i * args.step for i in range(n)]
    rows = sweep(args.var, values, _load_config(args), base=_prep_settings(args),
                 noise=NoiseModel.parse(args.noise), seed=args.seed, width=args.slice_width)
    path = _out(args) / f"sweep_{args.var}.csv"
    io.write_csv(path, ["angle", "fidelity", "purity", "theory_purity"], rows)
    for r in rows:
        print(f"{r[0]:8.3f}  fidelity={r[1]:.5f}  purity={r[2]:.5f}  theory={r[3]:.5f}")
    print(f"wrote {path}")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _add_state_args(p, default_state="six-path"):
    p.add_argument("--state", default=default_state,
                   help="six-path | square | maximally-mixed | uniform | random | <state.json>")
    p.add_argument("--geometry", help="geometry JSON for non-prepared states")
    p.add_argument("--settings", help="prep settings JSON")
    for name in ("phi", "zeta", "omega", "tau"):
        p.add_argument(f"--{name}", type=float, help=f"{name} waveplate angle (deg)")


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        # Sub-commands repeat the flags with suppressed defaults so that a
        # value given before the command name is not overwritten.
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--seed", type=int, default=default(0), help="base RNG seed")
        p.add_argument("--out", default=default("out"), help="output directory")
        p.add_argument("--config", default=default(None),
                       help="optical config JSON (default: desk resolution)")
        return p

    common = global_flags(lambda _: argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="pathtomo", parents=[global_flags(lambda v: v)],
                                     description="Path-qudit tomography with a rotating "
                                                 "cylindrical lens.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", parents=[common], help="design and check path layouts")
    p.add_argument("action", choices=["gen-ruler", "validate", "plan", "report"])
    p.add_argument("file", nargs="?")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--lmin", type=float, default=1.0)
    p.add_argument("--axis", choices=["x", "y"], default="y")
    p.add_argument("--write", help="also write the ruler as geometry JSON")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("prepare", parents=[common], help="prepare a state and its geometry")
    _add_state_args(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("simulate", parents=[common], help="synthesize camera frames")
    p.add_argument("--input", required=True, help="state JSON")
    p.add_argument("--geometry", required=True)
    p.add_argument("--noise", default="none", help="e.g. poisson:1e4,read:2,bg:5")
    p.add_argument("--origin-offset-max", type=float, default=0.0,
                   help="hidden k-origin offset range (pixels)")
    p.add_argument("--mirrored", action="store_true")
    p.add_argument("--lab-frame", action="store_true", help="write frames as the lab sees them")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--reveal-truth", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], help="two-reference phase calibration")
    p.add_argument("--geometry", required=True)
    p.add_argument("--ref1", required=True, help="frame directory of reference 1")
    p.add_argument("--ref1-state", required=True)
    p.add_argument("--ref2", required=True)
    p.add_argument("--ref2-state", required=True)
    p.add_argument("--slice-width", type=int, default=1)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct from frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--calibration")
    p.add_argument("--slice-width", type=int, default=1)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", parents=[common], help="compare a result to a known state")
    p.add_argument("--result", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="prepare, simulate, reconstruct")
    _add_state_args(p)
    p.add_argument("--noise", default="none")
    p.add_argument("--origin-offset-max", type=float, default=0.0)
    p.add_argument("--mirrored", action="store_true")
    p.add_argument("--calibrate", action="store_true",
                   help="calibrate with two simulated references")
    p.add_argument("--slice-width", type=int, default=1)
    p.add_argument("--write-frames", action="store_true")
    p.add_argument("--experiment-id", default="pipeline")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", parents=[common], help="sweep one waveplate angle")
    p.add_argument("--var", required=True)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=45.0)
    p.add_argument("--step", type=float, default=5.0)
    p.add_argument("--noise", default="none")
    p.add_argument("--slice-width", type=int, default=1)
    p.add_argument("--settings", help="prep settings JSON for the fixed angles")
    p.set_defaults(func=cmd_sweep, phi=None, zeta=None, omega=None, tau=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PathTomoError, UsageError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
