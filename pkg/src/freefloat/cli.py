"""Command-line interface: ``freefloat simulate|predict|coupling|validate``.

Exit codes: 0 success, 1 invalid input (parse, validation, usage), 2 runtime
failure during computation.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BadDuration, DimensionMismatch, FreeFloatError, ParseError, ValidationError
from .model import RobotModel, load_model, model_from_dict, parse_toml
from .momentum import base_motion_map, coupling_factors, momentum_matrices
from .scenario import load_scenario, load_state, resolve_path, scenario_from_dict
from .sim import run_scenario, write_prediction_csv, write_run

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

SCHEMA_HELP = """\
input files are TOML.
  model:    [base] mass, inertia, mounts; [[arm]] role, mount_rotation;
            [[arm.joint]] axis, offset; [[arm.link]] mass, length, com, inertia
  scenario: model = "<path>"; [mission] target, duration, via;
            [control] kp, kd; [sim] dt, t_end, balance;
            [initial] base_attitude_rpy, joint_angles
  state:    joint_angles, and optionally joint_rates, base_position,
            base_attitude_rpy, base_twist
see the bundled table1.model and table1_balance.scenario for complete examples."""

_INPUT_ERRORS = (ParseError, ValidationError, DimensionMismatch, BadDuration)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n\n{SCHEMA_HELP}\n")
        sys.exit(EXIT_INVALID)


def _fmt_matrix(name: str, a: np.ndarray) -> str:
    lines = [f"{name} ({a.shape[0]}x{a.shape[1]}):"]
    lines += ["  " + " ".join(f"{v:12.6g}" for v in row) for row in a]
    return "\n".join(lines)


def _scenario(args):
    sc = load_scenario(args.scenario)
    balance = False if getattr(args, "no_balance", False) else None
    return sc.with_overrides(dt=args.dt, t_end=args.t_end, balance=balance)


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        log, summary = run_scenario(sc)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out)
    files = write_run(log, summary, out, sc.model)
    print(f"scenario {sc.name or args.scenario}: {log.n_rows} samples, "
          f"balance {'on' if sc.balance_enabled else 'off'}")
    for key, value in summary.as_dict().items():
        print(f"  {key:20s} {value:.6g}")
    print("wrote " + ", ".join(str(f) for f in files))
    return EXIT_OK


def cmd_predict(args) -> int:
    from .control import predict_base_motion

    sc = _scenario(args)
    pred = predict_base_motion(sc.model, sc.initial_state, sc.mission_trajectory())
    dev = np.abs(pred.rpy - pred.rpy[0]).max(axis=0)
    print(f"predicted base attitude change over {pred.t[-1]:g} s (mission arm alone):")
    print(f"  max |roll| {dev[0]:.6g}  max |pitch| {dev[1]:.6g}  max |yaw| {dev[2]:.6g} rad")
    print("  final rpy " + " ".join(f"{v:.6g}" for v in pred.rpy[-1]))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_prediction_csv(pred, out / "prediction.csv")
        print(f"wrote {out / 'prediction.csv'}")
    return EXIT_OK


def cmd_coupling(args) -> int:
    model = load_model(resolve_path(args.model))
    state = load_state(args.state, model)
    arms = range(model.n_arms) if args.arm is None else [args.arm]
    if args.arm is not None and not 0 <= args.arm < model.n_arms:
        raise ValidationError(f"--arm: model has {model.n_arms} arms")
    mm = momentum_matrices(model, state)
    print(_fmt_matrix("H0", mm.H0))
    print(_fmt_matrix("Hm", mm.Hm))
    print(f"cond(H0) = {np.linalg.cond(mm.H0):.6g}")
    g = base_motion_map(mm)
    print(f"cond(base angular map) = {np.linalg.cond(g[3:6]):.6g}")
    for arm in arms:
        cf = coupling_factors(model, state, arm)
        role = model.arm_roles[arm]
        print(_fmt_matrix(f"M[arm {arm}, {role}]", cf.M))
        print(_fmt_matrix(f"N[arm {arm}, {role}]", cf.N))
        print(f"cond(M[arm {arm}]) = {cf.condition:.6g}")
    return EXIT_OK


def _kind(doc: dict) -> str:
    if "base" in doc:
        return "model"
    if "mission" in doc:
        return "scenario"
    raise ParseError("not a model (no [base] table) or scenario (no [mission] table)")


def cmd_validate(args) -> int:
    path = resolve_path(args.path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    doc = parse_toml(text, str(path))
    if _kind(doc) == "model":
        model: RobotModel = model_from_dict(doc, str(path))
        print(f"{path}: valid model, {model.n_arms} arms, {model.n_joints} joints, "
              f"total mass {model.total_mass:g} kg")
    else:
        sc = scenario_from_dict(doc, path.parent, str(path))
        print(f"{path}: valid scenario, {sc.n_steps} steps of {sc.dt:g} s, "
              f"balance {'on' if sc.balance_enabled else 'off'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freefloat", description="Free-floating two-arm robot simulator.",
                     epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    timing = _Parser(add_help=False)
    timing.add_argument("--dt", type=float, help="override the integration step (s)")
    timing.add_argument("--t-end", type=float, help="override the run length (s)")

    p = sub.add_parser("simulate", parents=[timing], help="run a scenario closed loop")
    p.add_argument("scenario")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")
    p.add_argument("--no-balance", action="store_true", help="leave the balance arm still")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", parents=[timing], help="Phase I base-attitude prediction")
    p.add_argument("scenario")
    p.add_argument("--out", help="write prediction.csv into this directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("coupling", help="print momentum matrices and coupling factors")
    p.add_argument("model")
    p.add_argument("state")
    p.add_argument("--arm", type=int, help="only this arm (0-based)")
    p.set_defaults(func=cmd_coupling)

    p = sub.add_parser("validate", help="check a model or scenario file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FreeFloatError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
