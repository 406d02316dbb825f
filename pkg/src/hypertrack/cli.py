"""Command-line front end: ``hypertrack {design,simulate,analyze,robust,probe}``.

Every command reads ``--config``, writes under ``--out`` and embeds the
resolved config in its report.  Exit codes: 0 success, 2 validation error,
3 infeasible design, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    alias_frequency,
    check_internal_model,
    delay_compatible_all,
    design_controller,
    rejection_ratio,
    robustness_experiment,
)
from .config import RunConfig, dump_yaml, load_config, parse_number, parse_tf
from .errors import InfeasibleError, NumericalError, ValidationError
from .lifting import LiftedController, build_lifted_closed_loop
from .lti import as_ss
from .simulation import frequency_gain_probe, simulate_closed_loop

log = logging.getLogger("hypertrack")

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
CONTROLLER_FILE = "controller.txt"


# ------------------------------------------------------------ artifacts


def _fmt(x) -> str:
    return "%.17g" % x


def write_controller(K: LiftedController, path) -> None:
    """Labeled row-major text: a ``name rows cols`` line, then one line per row."""
    buf = io.StringIO()
    buf.write("# hypertrack lifted controller\n")
    buf.write(f"M {K.M}\nh {_fmt(K.h)}\n")
    for name in ("barA", "barB", "barC", "barD"):
        mat = getattr(K, name)
        buf.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            buf.write(" ".join(_fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_controller(path) -> LiftedController:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines()
                 if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ValidationError(f"cannot read controller: {exc}", field="--controller") from None
    try:
        it = iter(lines)
        M = int(next(it).split()[1])
        h = float(next(it).split()[1])
        mats = {}
        for _ in range(4):
            name, rows, cols = next(it).split()
            rows, cols = int(rows), int(cols)
            data = [[float(v) for v in next(it).split()] for _ in range(rows)]
            mats[name] = np.array(data, dtype=float).reshape(rows, cols)
    except (StopIteration, ValueError, IndexError) as exc:
        raise ValidationError(f"malformed controller file ({exc})", field="--controller") from None
    return LiftedController(mats["barA"], mats["barB"], mats["barC"], mats["barD"], M, h)


def write_csv(columns: dict, path) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) \
        if names and len(columns[names[0]]) else np.zeros((0, len(names)))
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in data:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def _manifest(args, cfg: RunConfig, outputs):
    return {
        "config": str(Path(args.config)),
        "command": args.command,
        "out": str(Path(args.out)),
        "deterministic": True,
        "version": __version__,
        "outputs": sorted(outputs),
    }


def _write_report(out: Path, stem: str, cfg: RunConfig, args, body: dict, outputs: list):
    report = {"command": args.command, **body, "config": cfg.resolved}
    (out / f"{stem}.yaml").write_text(dump_yaml(report))
    outputs.append(f"{stem}.yaml")
    (out / "manifest.yaml").write_text(dump_yaml(_manifest(args, cfg, outputs + ["manifest.yaml"])))


# ------------------------------------------------------------ commands


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "gamma_hi", None) is not None:
        lo = cfg.design.gamma_range[0]
        hi = parse_number(args.gamma_hi, "--gamma-hi")
        cfg.design = cfg.design.with_(gamma_range=(lo, hi))
        cfg.design.validate()
        cfg.resolved["design"]["gamma_range"] = [lo, hi]
    if getattr(args, "duration", None) is not None:
        cfg.duration = parse_number(args.duration, "--duration")
        if cfg.duration < 0:
            raise ValidationError("must be nonnegative", field="--duration")
        cfg.resolved["simulation"]["duration"] = cfg.duration
    if getattr(args, "perturb", None) is not None:
        cfg.delta = parse_tf(args.perturb, "--perturb")
        cfg.resolved["robust"]["delta"] = args.perturb
    return cfg


def _controller(cfg: RunConfig, args):
    """Load ``--controller`` if given, else design from the config."""
    path = getattr(args, "controller", None)
    if path:
        K = read_controller(path)
        if K.M != cfg.design.M or abs(K.h - cfg.design.h) > 1e-12 * cfg.design.h:
            raise ValidationError(
                f"controller (M={K.M}, h={K.h:g}) does not match config "
                f"(M={cfg.design.M}, h={cfg.design.h:g})", field="--controller")
        return K, None
    return design_controller(cfg.design, cfg.bisect_tol)


def _internal_model(K, cfg):
    return [check_internal_model(K, w).to_dict() for w in cfg.omegas]


def cmd_design(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    K, design = design_controller(cfg.design, cfg.bisect_tol)
    write_controller(K, out / CONTROLLER_FILE)
    loop = build_lifted_closed_loop(as_ss(cfg.design.plant), K)
    diag = {k: v for k, v in design.diagnostics.items() if k != "bisection_trace"}
    body = {
        "gamma_achieved": design.gamma,
        "stable": loop.is_stable,
        "closed_loop_spectral_radius": loop.spectral_radius,
        "controller_states": K.n_states,
        "riccati": diag,
        "bisection": [{"gamma": g, "feasible": f, "condition": c}
                      for g, f, c in design.diagnostics.get("bisection_trace", [])],
        "internal_model": _internal_model(K, cfg),
        "delay": {"L": cfg.design.L,
                  "compatible": delay_compatible_all(cfg.design.L, cfg.omegas)
                  if cfg.omegas else None},
    }
    _write_report(out, "design_report", cfg, args, body, [CONTROLLER_FILE])
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    K, _ = _controller(cfg, args)
    sim = dict(delay=cfg.design.L, duration=cfg.duration, n_sim=cfg.n_sim,
               window_fraction=cfg.window_fraction,
               prefilter=cfg.design.F_r if cfg.prefilter else None)
    res = simulate_closed_loop(cfg.design.plant, K, cfg.reference, cfg.disturbance, **sim)
    write_csv(res.columns(), out / "trajectory.csv")
    body = {"metrics": res.metrics, "objectives": {}}
    if res.metrics and cfg.reference is not None:
        body["objectives"]["tracking_relative_rms"] = res.metrics.get(
            "relative_rms_target" if cfg.prefilter else "relative_rms")
    if cfg.disturbance is not None and res.metrics:
        alone = simulate_closed_loop(cfg.design.plant, K, None, cfg.disturbance, **sim)
        body["objectives"]["rejection_ratio"] = rejection_ratio(
            cfg.design.plant, cfg.disturbance, alone.metrics["rms_e_tilde"])
    _write_report(out, "simulate_report", cfg, args, body, ["trajectory.csv"])
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    K, design = _controller(cfg, args)
    loop = build_lifted_closed_loop(as_ss(cfg.design.plant), K)
    h = cfg.design.h
    body = {
        "nyquist": math.pi / h,
        "closed_loop_spectral_radius": loop.spectral_radius,
        "stable": loop.is_stable,
        "gamma_achieved": design.gamma if design is not None else None,
        "signals": [
            {"omega": w, "alias": alias_frequency(w, h), "above_nyquist": w > math.pi / h,
             "delay_compatible": delay_compatible_all(cfg.design.L, [w])}
            for w in cfg.omegas
        ],
        "internal_model": _internal_model(K, cfg),
    }
    _write_report(out, "analysis_report", cfg, args, body, [])
    return EXIT_OK


def cmd_robust(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    if cfg.delta is None:
        raise ValidationError("a perturbation is required (robust.delta or --perturb)",
                              field="robust.delta")
    K, design = _controller(cfg, args)
    rep = robustness_experiment(cfg.design, cfg.delta, reference=cfg.reference,
                                duration=cfg.duration, n_sim=cfg.n_sim, controller=K)
    body = rep.to_dict()
    body["gamma"] = design.gamma if design is not None else None
    _write_report(out, "robust_report", cfg, args, body, [])
    return EXIT_OK


def cmd_probe(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    if not cfg.probe_omegas:
        raise ValidationError("no probe frequencies", field="probe.omegas")
    K, _ = _controller(cfg, args)
    rows = frequency_gain_probe(cfg.design.plant, K, cfg.probe_omegas, delay=cfg.design.L,
                                duration=cfg.probe_duration, n_sim=cfg.n_sim,
                                settle_tol=cfg.probe_settle_tol)
    write_csv({"omega": [r["omega"] for r in rows], "gain": [r["gain"] for r in rows],
               "converged": [float(r["converged"]) for r in rows]}, out / "probe.csv")
    body = {"unconverged": [r["omega"] for r in rows if not r["converged"]]}
    _write_report(out, "probe_report", cfg, args, body, ["probe.csv"])
    return EXIT_OK


COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "robust": cmd_robust,
    "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypertrack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--gamma-hi", dest="gamma_hi")
        if name != "design":
            p.add_argument("--controller", help="controller artifact from `design`")
        if name in ("simulate", "robust"):
            p.add_argument("--duration")
        if name == "robust":
            p.add_argument("--perturb", help="additive perturbation, e.g. '0.1/(s+1)'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"validation error{where}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        print(f"infeasible design [{exc.condition}]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
