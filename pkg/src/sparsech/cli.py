"""Command-line interface: ``sparsech {simulate,optimize,sweep-kappa,verify}``.

Every command writes into ``--out`` a ``STATUS`` file (``running`` while in
progress, then ``ok`` or ``failed: ...``) and a copy of the effective
configuration as ``config.ini``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from .checkpoint import fmt, write_csv, write_fields
from .config import ProblemConfig, load_config, loads_config, serialize_config
from .errors import ConfigError, SparseCHError
from .experiments import run_optimize, run_sweep, state_diagnostics, sweep_scale
from .setup import build_setup
from .verify import SUITES, run_suite

log = logging.getLogger("sparsech")

HISTORY_COLUMNS = ["iter", "J", "G", "total", "kkt", "sparsity_fraction", "step"]
SWEEP_COLUMNS = ["kappa", "final_total", "sparsity_fraction", "min_rayleigh", "kkt", "iterations", "converged"]


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=lambda o: o.item() if hasattr(o, "item") else str(o)))


def _status(out: Path, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "STATUS").write_text(text + "\n")


# ------------------------------------------------------------------ commands

def cmd_simulate(cfg: ProblemConfig, out: Path) -> int:
    s = build_setup(cfg)
    traj = s.problem.state(s.u0)
    write_fields(out / "trajectory.csv", {"phi": traj.phi, "mu": traj.mu, "w": traj.w, "u": traj.u})
    write_csv(out / "diagnostics.csv", ["t", "mass", "energy", "phi_inf"], state_diagnostics(traj))
    return 0


def cmd_optimize(cfg: ProblemConfig, out: Path) -> int:
    s = build_setup(cfg)
    t0 = time.perf_counter()
    rep = run_optimize(s, callback=lambda rec: log.info("iter %d total %.6e kkt %.3e", rec.iter, rec.total, rec.kkt))
    write_csv(out / "history.csv", HISTORY_COLUMNS,
              [[getattr(h, c) for c in HISTORY_COLUMNS] for h in rep.history])
    write_fields(out / "control.csv", {"u": rep.u, "multiplier": rep.multiplier, "r": rep.r})
    write_fields(out / "state.csv", {"phi": rep.traj.phi, "mu": rep.traj.mu, "w": rep.traj.w,
                                     "p": rep.adj.p, "q": rep.adj.q})
    last = rep.history[-1]
    _json(out / "summary.json", {"status": rep.status, "converged": rep.converged, "iterations": rep.iterations,
                                 "final": asdict(last), "seconds": time.perf_counter() - t0})
    print(f"{rep.status}: {rep.iterations} iterations, total {fmt(last.total)}, kkt {last.kkt:.3e}, "
          f"zero fraction {last.sparsity_fraction:.4f}")
    return 0 if rep.converged else 1


def cmd_sweep_kappa(cfg: ProblemConfig, out: Path, kappas=None) -> int:
    s = build_setup(cfg)
    if kappas is None:
        scale = sweep_scale(cfg, s)
        kappas = [k * scale for k in cfg.run.kappas]
    entries = run_sweep(cfg, sorted(kappas))
    write_csv(out / "sweep.csv", SWEEP_COLUMNS,
              [[getattr(e, c) if c != "converged" else str(e.converged).lower() for c in SWEEP_COLUMNS]
               for e in entries])
    fr = [e.sparsity_fraction for e in entries]
    for e in entries:
        print(f"kappa {e.kappa:.6g}: zero fraction {e.sparsity_fraction:.4f}, total {e.final_total:.6e}, "
              f"min quotient {e.min_rayleigh:.4e}")
    monotone = all(b >= a for a, b in zip(fr, fr[1:]))
    return 0 if monotone and all(e.converged for e in entries) else 1


def cmd_verify(cfg: ProblemConfig, out: Path, suite: str) -> int:
    names = list(SUITES) if suite == "all" else [suite]
    failed = 0
    for name in names:
        res = run_suite(name, cfg)
        print(res.line())
        _json(out / f"verify_{name}.json", {"suite": name, "passed": res.passed, "message": res.message,
                                            "metrics": res.metrics})
        failed += not res.passed
    return 1 if failed else 0


# ------------------------------------------------------------------ plotting helper

_PLOT = '''"""Quick-look plots for the CSV files in this directory (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent


def read(name):
    with open(here / name) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else {}


for name, x, ys in {specs}:
    if not (here / name).exists():
        continue
    data = read(name)
    fig, axes = plt.subplots(len(ys), 1, sharex=True, squeeze=False)
    for ax, y in zip(axes[:, 0], ys):
        ax.plot(data[x], data[y], marker=".")
        ax.set_ylabel(y)
    axes[-1, 0].set_xlabel(x)
    fig.savefig(here / (name[:-4] + ".png"), dpi=120)
'''

_PLOT_SPECS = {
    "simulate": [("diagnostics.csv", "t", ["mass", "energy", "phi_inf"])],
    "optimize": [("history.csv", "iter", ["total", "kkt", "sparsity_fraction"])],
    "sweep-kappa": [("sweep.csv", "kappa", ["sparsity_fraction", "final_total", "min_rayleigh"])],
}


def write_plot_script(out: Path, command: str) -> None:
    specs = _PLOT_SPECS.get(command)
    if specs:
        (out / "plot.py").write_text(_PLOT.replace("{specs}", repr(specs)))


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file (defaults are used if omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    common.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    common.add_argument("--plot", action="store_true", help="also write a plot.py next to the data")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sparsech", description="Sparse optimal control of a Cahn-Hilliard system.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="forward solve with data.control")
    sub.add_parser("optimize", parents=[common], help="minimize the sparse tracking cost")
    sw = sub.add_parser("sweep-kappa", parents=[common], help="optimize for several kappa values")
    sw.add_argument("--kappas", type=float, nargs="+", help="absolute kappa values (default: run.kappas * scale)")
    ve = sub.add_parser("verify", parents=[common], help="run a verification suite")
    ve.add_argument("suite", choices=[*SUITES, "all"])
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else loads_config("", env=os.environ)
        if args.seed is not None:
            cfg = cfg.replace("run", seed=args.seed)
        if args.out is not None:
            cfg = cfg.replace("run", out=str(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "show-config":
        print(serialize_config(cfg), end="")
        return 0

    out = Path(cfg.run.out)
    _status(out, f"running {args.command}")
    (out / "config.ini").write_text(serialize_config(cfg))
    try:
        if args.command == "simulate":
            code = cmd_simulate(cfg, out)
        elif args.command == "optimize":
            code = cmd_optimize(cfg, out)
        elif args.command == "sweep-kappa":
            code = cmd_sweep_kappa(cfg, out, args.kappas)
        else:
            code = cmd_verify(cfg, out, args.suite)
        if args.plot or cfg.run.plot:
            write_plot_script(out, args.command)
    except (SparseCHError, ValueError, RuntimeError) as exc:
        _status(out, f"failed: {args.command}: {type(exc).__name__}: {exc}")
        print(f"error during {args.command}: {exc}", file=sys.stderr)
        return 1
    _status(out, "ok" if code == 0 else f"failed: {args.command} checks did not pass")
    return code


if __name__ == "__main__":
    sys.exit(main())
