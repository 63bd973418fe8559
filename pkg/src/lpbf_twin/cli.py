"""``lpbf-twin`` command line.

Every subcommand reads optional defaults from the ``[<subcommand>]``
section of an INI file given with ``--config``; explicit flags win.
Failures print one JSON object on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .container import FORMAT_VERSION

OUT_ENV = "LPBF_TWIN_OUT"
DEFAULT_OUT = "lpbf_out"

log = logging.getLogger("lpbf_twin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_dir(args) -> Path:
    p = Path(args.out or os.environ.get(OUT_ENV, DEFAULT_OUT))
    p.mkdir(parents=True, exist_ok=True)
    return p


def _models(args):
    from .pair import SurrogatePair

    base = Path(args.out or os.environ.get(OUT_ENV, DEFAULT_OUT)) / "models"
    xy = Path(args.model_xy or base / "xy.lpbf")
    xz = Path(args.model_xz or base / "xz.lpbf")
    for p in (xy, xz):
        if not p.exists():
            raise FileNotFoundError(f"model file {p} not found (train first or pass --model-xy/--model-xz)")
    return SurrogatePair.load(xy, xz)


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _grid_spec(text: str) -> tuple[int, int]:
    try:
        a, b = str(text).lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 40x25, got {text!r}") from exc


def _on_off(text: str) -> bool:
    t = str(text).lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


# --------------------------------------------------------------- subcommands

def cmd_simulate(a):
    from .features import extract_state
    from .meltpool.io import save_section, save_snapshot
    from .meltpool.sections import extract_sections
    from .meltpool.solver import SimDomain, run_to_steady
    from .params import ProcessParams
    from .thermo import MaterialProps, load_material

    props = load_material(a.material) if a.material else MaterialProps()
    params = ProcessParams(a.P, a.V, a.T_sub, a.alpha)
    s = a.spacing
    domain = SimDomain(spacing=(s, s, s)) if s else SimDomain()
    field = run_to_steady(params, domain, props, window=a.window, rtol=a.rtol)
    out = _out_dir(a)
    snap = save_snapshot(field, out / "snapshot.lpbf")
    xy, xz = extract_sections(field)
    save_section(xy, out / "section_xy.lpbf", params)
    save_section(xz, out / "section_xz.lpbf", params)
    state = extract_state((xy, xz))
    _write_json(out / "state.json", json.loads(state.to_json()))
    return {"snapshot": str(snap), "state": json.loads(state.to_json()),
            "diagnostics": field.diagnostics}


def cmd_sweep(a):
    from .dataset import DESK_GRID, FULL_GRID, SweepGrid, run_sweep, save_dataset
    from .meltpool.solver import SimDomain

    grid = {"desk": DESK_GRID, "full": FULL_GRID}.get(a.grid)
    if grid is None:
        raise UsageError(f"unknown sweep grid {a.grid!r} (desk or full)")
    if any((a.P_list, a.V_list, a.T_sub_list, a.alpha_list)):
        grid = SweepGrid(a.P_list or grid.P, a.V_list or grid.V, a.T_sub_list or grid.T_sub,
                         a.alpha_list or grid.alpha)
    s = a.spacing
    domain = SimDomain(spacing=(s, s, s)) if s else SimDomain()
    out = _out_dir(a)
    ds = run_sweep(grid, domain, out / "sweep", workers=a.workers, max_cells=a.max_cells)
    path = save_dataset(ds, out / "sweep_dataset.lpbf")
    return {"records": len(ds), "cells": len(grid), "dataset": str(path),
            "failed": ds.meta.get("failed", [])}


def cmd_synth_data(a):
    from .dataset import save_dataset, synthetic_dataset

    ds = synthetic_dataset(a.n_train, a.n_val, a.seed)
    path = save_dataset(ds, _out_dir(a) / "synthetic.lpbf")
    return {"dataset": str(path), "train": len(ds.train_index), "val": len(ds.val_index)}


def cmd_train(a):
    from .dataset import load_dataset, split
    from .fno.io import save_model
    from .fno.model import FnoConfig
    from .fno.train import train

    ds = load_dataset(a.data)
    if a.n_val is not None:
        ds = split(ds, a.n_val, a.seed)
    cfg = FnoConfig(layers=a.layers, width=a.width, modes=a.modes, proj_width=a.proj_width,
                    lr=a.lr, epochs=a.epochs, batch_size=a.batch_size, seed=a.seed)
    out = _out_dir(a) / "models"
    out.mkdir(exist_ok=True)
    planes = ("xy", "xz") if a.plane == "both" else (a.plane,)
    result = {}
    for plane in planes:
        model, report = train(ds, cfg, plane, target_val=a.target_val)
        mp = save_model(model, out / f"{plane}.lpbf")
        report.write(out / f"{plane}_loss.csv", out / f"{plane}_report.json")
        result[plane] = {"model": str(mp), "best_epoch": report.best_epoch,
                         "best_val_rel_l2": report.best_val, "wall_time_s": report.wall_time}
    return result


def cmd_predict(a):
    from .features import extract_state
    from .meltpool.io import save_section
    from .params import ProcessParams

    pair = _models(a)
    params = ProcessParams(a.P, a.V, a.T_sub, a.alpha)
    xy = pair.xy.forward(params)
    xz = pair.xz.forward(params)
    out = _out_dir(a)
    save_section(xy, out / "pred_xy.lpbf", params)
    save_section(xz, out / "pred_xz.lpbf", params)
    state = json.loads(extract_state((xy, xz)).to_json())
    state["extrapolated"] = xy.meta.get("extrapolated", [])
    _write_json(out / "prediction.json", state)
    return state


def _control_config(a):
    from .control import ControlConfig

    kw = {k: getattr(a, k) for k in ("phi", "T_t1", "T_t2", "lr", "max_iter")
          if getattr(a, k, None) is not None}
    return replace(ControlConfig(), **kw)


def cmd_window(a):
    from .control import process_window

    pair = _models(a)
    nP, nV = a.grid
    win = process_window(a.T_sub, a.alpha, pair, nP, nV, _control_config(a))
    path = win.write(_out_dir(a) / f"window_T{a.T_sub:g}.csv")
    return {"window": str(path), "shape": [nP, nV], "cold_cells": int(win.cold.sum())}


def cmd_optimize(a):
    from .control import optimize_pv

    pair = _models(a)
    res = optimize_pv(a.P0, a.V0, a.T_sub, a.alpha, pair, _control_config(a))
    out = _out_dir(a)
    res.write_trace(out / "optimize_trace.csv")
    summary = res.summary()
    _write_json(out / "optimize.json", summary)
    return summary


def cmd_calibrate(a):
    from .calibrate import CalibConfig, GaussianSpec, calibrate_absorptivity, fit_length_samples

    pair = _models(a)
    if a.lengths:
        values = np.loadtxt(a.lengths, delimiter=",", ndmin=1)
        target = fit_length_samples(values.ravel())
    elif a.target_mu is not None and a.target_sigma is not None:
        target = GaussianSpec.from_sigma(a.target_mu, a.target_sigma, "um")
    else:
        raise UsageError("calibrate needs --lengths or both --target-mu and --target-sigma")
    cfg = CalibConfig(a.P, a.V, a.T_sub, samples=a.samples, epochs=a.epochs, lr=a.lr,
                      seed=a.seed, variant=a.variant)
    init = GaussianSpec.from_sigma(a.init_mu, a.init_sigma)
    res = calibrate_absorptivity(target, cfg, pair, init)
    out = _out_dir(a)
    res.write_trace(out / "calibration_trace.csv")
    summary = {"alpha": res.spec.to_dict(), "kl": res.kl, "target": target.to_dict(),
               "excluded_samples": res.excluded, "clamped_samples": res.clamped,
               "variant": a.variant}
    _write_json(out / "calibration.json", summary)
    return summary


def cmd_uq(a):
    from .calibrate import GaussianSpec, propagate_uq, write_histograms
    from .control import ControlConfig

    pair = _models(a)
    spec = GaussianSpec.from_sigma(a.mu_alpha, a.sigma_alpha)
    summ = propagate_uq(spec, a.P, a.V, a.T_sub, pair, a.samples, a.seed,
                        ControlConfig().constants)
    out = _out_dir(a)
    write_histograms(summ, out / "uq_histograms.csv")
    _write_json(out / "uq.json", summ)
    return {k: {s: v[s] for s in ("mean", "std", "p5", "p50", "p95")}
            for k, v in summ.items() if k != "meta"}


def cmd_demo(a):
    from .calibrate import GaussianSpec
    from .demo import DemoConfig, run_demo, write_outputs

    pair = _models(a)
    cfg = DemoConfig()
    kw = {k: getattr(a, k) for k in ("height", "layers_per_step", "P0", "V0", "uq_samples")
          if getattr(a, k, None) is not None}
    cfg = replace(cfg, seed=a.seed, alpha=GaussianSpec.from_sigma(a.mu_alpha, a.sigma_alpha),
                  control_config=replace(cfg.control_config, max_iter=a.max_iter), **kw)
    branches = tuple(a.control) if a.control else (True, False)
    traces, summary = run_demo(cfg, pair, branches)
    paths = write_outputs(traces, summary, _out_dir(a) / "demo")
    return {"outputs": [str(p) for p in paths], "summary": summary}


# ------------------------------------------------------------------- parser

def _common(p, section):
    p.add_argument("--config", help="INI file; keys of section [%s] act as defaults" % section)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--log-level", default="WARNING")


def _process(p, P=300.0, V=1.5, T_sub=300.0, alpha=0.3):
    p.add_argument("--P", type=float, default=P, help="laser power, W")
    p.add_argument("--V", type=float, default=V, help="scan speed, m/s")
    p.add_argument("--T-sub", dest="T_sub", type=float, default=T_sub, help="substrate temperature, K")
    p.add_argument("--alpha", type=float, default=alpha, help="absorptivity")


def _model_flags(p):
    p.add_argument("--model-xy")
    p.add_argument("--model-xz")


def _control_flags(p):
    p.add_argument("--phi", type=float)
    p.add_argument("--T-t1", dest="T_t1", type=float)
    p.add_argument("--T-t2", dest="T_t2", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpbf-twin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print package and format versions")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the 3D thermal solver to steady state")
    _common(p, "simulate")
    _process(p)
    p.add_argument("--spacing", type=float, help="grid spacing, um")
    p.add_argument("--material", help="INI file with a [material] section")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--rtol", type=float, default=1e-3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate a parameter grid (resumable)")
    _common(p, "sweep")
    p.add_argument("--grid", default="desk", help="desk (81 cells) or full (750 cells)")
    p.add_argument("--P-list", dest="P_list", type=_float_list)
    p.add_argument("--V-list", dest="V_list", type=_float_list)
    p.add_argument("--T-sub-list", dest="T_sub_list", type=_float_list)
    p.add_argument("--alpha-list", dest="alpha_list", type=_float_list)
    p.add_argument("--spacing", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-cells", dest="max_cells", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth-data", help="closed-form synthetic training corpus")
    _common(p, "synth-data")
    p.add_argument("--n-train", dest="n_train", type=int, default=200)
    p.add_argument("--n-val", dest="n_val", type=int, default=20)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train plane surrogates")
    _common(p, "train")
    p.add_argument("--data", required=False)
    p.add_argument("--plane", default="both", choices=("xy", "xz", "both"))
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--modes", type=int, default=12)
    p.add_argument("--proj-width", dest="proj_width", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--n-val", dest="n_val", type=int)
    p.add_argument("--target-val", dest="target_val", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="surrogate sections and melt-pool state")
    _common(p, "predict")
    _process(p)
    _model_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("window", help="process window (Ra over P x V)")
    _common(p, "window")
    _process(p)
    _model_flags(p)
    _control_flags(p)
    p.add_argument("--grid", type=_grid_spec, default=(40, 25), help="nP x nV, e.g. 40x25")
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("optimize", help="roughness-minimizing (P, V)")
    _common(p, "optimize")
    _process(p)
    _model_flags(p)
    _control_flags(p)
    p.add_argument("--P0", type=float, default=300.0)
    p.add_argument("--V0", type=float, default=1.65)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("calibrate", help="fit the absorptivity distribution to length data")
    _common(p, "calibrate")
    _process(p)
    _model_flags(p)
    p.add_argument("--lengths", help="CSV of observed melt-pool lengths, um")
    p.add_argument("--target-mu", dest="target_mu", type=float)
    p.add_argument("--target-sigma", dest="target_sigma", type=float)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--variant", default="standard", choices=("standard", "unnormalized"))
    p.add_argument("--init-mu", dest="init_mu", type=float, default=0.3)
    p.add_argument("--init-sigma", dest="init_sigma", type=float, default=0.05)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("uq", help="propagate absorptivity uncertainty")
    _common(p, "uq")
    _process(p)
    _model_flags(p)
    p.add_argument("--mu-alpha", dest="mu_alpha", type=float, default=0.3)
    p.add_argument("--sigma-alpha", dest="sigma_alpha", type=float, default=0.02)
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_uq)

    p = sub.add_parser("demo", help="controlled vs uncontrolled cone build")
    _common(p, "demo")
    _model_flags(p)
    p.add_argument("--control", type=_on_off, action="append",
                   help="on/off per branch; repeat for two branches (default: on, off)")
    p.add_argument("--mu-alpha", dest="mu_alpha", type=float, default=0.3)
    p.add_argument("--sigma-alpha", dest="sigma_alpha", type=float, default=0.02)
    p.add_argument("--height", type=float, help="cone height, um")
    p.add_argument("--layers-per-step", dest="layers_per_step", type=int)
    p.add_argument("--P0", type=float)
    p.add_argument("--V0", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=40)
    p.add_argument("--uq-samples", dest="uq_samples", type=int)
    p.set_defaults(func=cmd_demo)
    return parser


def _apply_config(parser, args, argv):
    """Fill options not given on the command line from the INI section."""
    if not getattr(args, "config", None):
        return args
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(args.config) as fh:
        cp.read_file(fh)
    section = args.command
    if not cp.has_section(section):
        return args
    sub = parser._subparsers._group_actions[0].choices[section]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    given = {a.dest for a in sub._actions for s in a.option_strings
             for x in argv if x == s or x.startswith(s + "=")}
    for key, raw in cp.items(section):
        dest = key.replace("-", "_")
        match = next((d for d in actions if d.lower() == dest.lower()), None)
        if match is None:
            raise UsageError(f"unknown key {key!r} in [{section}] of {args.config}")
        if match in given:
            continue
        act = actions[match]
        if isinstance(act, argparse._AppendAction):
            vals = [act.type(v.strip()) if act.type else v.strip() for v in raw.split(",")]
            setattr(args, match, vals)
        else:
            setattr(args, match, act.type(raw) if act.type else raw)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            print(json.dumps({"lpbf_twin": __version__, "container_format": FORMAT_VERSION}))
            return 0
        if not args.command:
            raise UsageError("missing subcommand")
        args = _apply_config(parser, args, argv)
        if args.command == "train" and not args.data:
            raise UsageError("train needs --data")
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        np.random.seed(args.seed)  # legacy global state; all library code uses explicit generators
        result = args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON record
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=1, sort_keys=True, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
