"""Command line entry point: ``gsomnet <subcommand> [options]``.

Exit status is 0 on success, 1 on a configuration or runtime error (a JSON
object describing it goes to stderr), 2 on a usage error and 3 when the
command ran but one of its checks failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .diagnostics import (
    c_star,
    classify_returning,
    property_harness,
    random_network,
    tv_series,
)
from .fundamental import DomainError, GreenshieldsFamily, validate_family
from .junction import MODES, JunctionSpecError, aprsom_solve, inadmissible_waves
from .riemann import solve_riemann
from .wft import RoadSpec, WFTInvariantError, run, sample_initial

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 3


def fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return json.dumps(x)


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return fmt(obj)


def _write(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text, encoding="utf-8")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _need(cfg: cfgmod.ScenarioConfig, *blocks: str) -> None:
    missing = [b for b in blocks if b not in cfg.raw]
    if missing:
        raise cfgmod.ConfigError([f"{b}: block required by this command" for b in missing])


def _spec(cfg, args):
    spec = cfg.spec
    if getattr(args, "mode", None):
        spec = spec.with_mode(args.mode)
    return spec


def _initial(cfg, args):
    eps0 = args.eps_0 if args.eps_0 is not None else cfg.run["eps_0"]
    return [sample_initial(cfg.model, road, rows, eps0) for road, rows in zip(cfg.roads, cfg.profiles)]


def _run(cfg, args, snapshot_times=None):
    _need(cfg, "junction", "roads")
    spec = _spec(cfg, args)
    t_end = args.t_end if args.t_end is not None else cfg.run["t_end"]
    eps_fan = args.eps_fan if args.eps_fan is not None else cfg.run["eps_fan"]
    times = cfg.run["snapshot_times"] if snapshot_times is None else snapshot_times
    return run(cfg.model, spec, cfg.roads, _initial(cfg, args), t_end, eps_fan, cfg.caps, times)


# ---------------------------------------------------------------------------
# subcommands


def cmd_riemann(args) -> int:
    cfg = cfgmod.load(args.config)
    _need(cfg, "riemann")
    left, right = cfg.riemann
    sol = solve_riemann(cfg.model, left, right)
    out = {
        "left": [left.rho, left.w],
        "right": [right.rho, right.w],
        "middle": [sol.middle.rho, sol.middle.w],
        "flags": list(sol.flags),
        "waves": [
            {
                "family": wv.family,
                "kind": wv.kind,
                "left": [wv.left.rho, wv.left.w],
                "right": [wv.right.rho, wv.right.w],
                "speed_lo": wv.speed_lo,
                "speed_hi": wv.speed_hi,
                "vacuum": wv.vacuum,
                "flux_jump": wv.flux_jump(cfg.model),
            }
            for wv in sol.waves
        ],
    }
    _write(to_json(out) + "\n", args.out, "riemann.json")
    return EXIT_OK


def cmd_junction(args) -> int:
    cfg = cfgmod.load(args.config)
    _need(cfg, "junction")
    spec = _spec(cfg, args)
    if cfg.junction_states is None:
        _need(cfg, "roads")
    states = cfg.states_at_junction()
    sol = aprsom_solve(cfg.model, states, spec)
    out = sol.to_dict()
    out["states"] = [[u.rho, u.w] for u in states]
    out["gamma"] = sol.gamma
    out["inadmissible_waves"] = inadmissible_waves(cfg.model, states, sol)
    _write(to_json(out) + "\n", args.out, "junction.json")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = cfgmod.load(args.config)
    traj = _run(cfg, args)
    model = cfg.model
    snap_rows = []
    for t in sorted(traj.snapshots):
        for r, pieces in enumerate(traj.snapshots[t]):
            for xl, _, u in pieces:
                snap_rows.append((t, r, xl, u.rho, u.w, model.flux(u.rho, u.w)))
    ev_rows = [
        (e.time, e.kind, "" if e.road is None else str(e.road), " ".join(map(str, e.created)), " ".join(map(str, e.retired)))
        for e in traj.events
    ]
    genealogy = [traj.genealogy[k].to_dict() for k in sorted(traj.genealogy)]
    led = traj.ledger
    summary = {
        "t_end": traj.time,
        "events": len(traj.events),
        "collisions": traj.n_collisions,
        "arrivals": traj.n_arrivals,
        "exits": traj.n_exits,
        "fronts": len(traj.genealogy),
        "max_live_fronts": traj.max_live_fronts,
        "truncated": traj.truncated,
        "mass_initial": led.initial,
        "mass_final": led.final,
        "boundary_net_inflow": led.boundary_net_inflow,
        "mass_residual": led.residual,
        "junction_imbalance": led.junction_imbalance,
    }
    if args.out is None:
        sys.stdout.write(to_json(summary) + "\n")
    else:
        _write(_csv(("time", "road", "x", "rho", "w", "q"), snap_rows), args.out, "snapshots.csv")
        _write(_csv(("time", "type", "road", "front_ids", "parent_ids"), ev_rows), args.out, "events.csv")
        _write(to_json(genealogy) + "\n", args.out, "genealogy.json")
        _write(to_json(summary) + "\n", args.out, "summary.json")
    return EXIT_OK if traj.truncated is None else EXIT_CHECK_FAILED


def cmd_diagnose(args) -> int:
    cfg = cfgmod.load(args.config)
    t_end = args.t_end if args.t_end is not None else cfg.run["t_end"]
    times = cfg.run["snapshot_times"] or [t_end * k / 40 for k in range(41)]
    traj = _run(cfg, args, times)
    rows = [(r.time, r.gamma, r.tv_q, r.tv_w, r.h_bar, r.vacuum_w_jumps) for r in tv_series(traj)]
    text = _csv(("time", "gamma", "tv_q", "tv_w", "h_bar", "vacuum_w_jumps"), rows)
    _write(text, args.out, "functionals.csv")
    return EXIT_OK


RETURNING_HEADER = (
    "scenario", "front", "road", "side", "kind", "t_o", "t_a", "K", "tv_tree", "n_rho_root",
    "delta_q", "root_positive", "bound", "case", "bound_ok", "case_ok",
)


def _returning_rows(tag, recs):
    return [
        (tag, r.front, r.road, r.side, r.kind, r.t_o, r.t_a, r.K, r.tv_tree, r.n_rho_root,
         r.delta_q, r.root_positive, r.bound, r.case, r.bound_ok, r.case_ok)
        for r in recs
    ]


def cmd_returning(args) -> int:
    rows = []
    if args.suite:
        if args.suite != "random-jams":
            raise cfgmod.ConfigError([f"--suite: unknown suite {args.suite!r} (expected 'random-jams')"])
        model = cfgmod.load(args.config).model if args.config else GreenshieldsFamily()
        cs = c_star(model).value
        rng = np.random.default_rng(args.seed)
        t_end = args.t_end if args.t_end is not None else 4.0
        eps_fan = args.eps_fan if args.eps_fan is not None else 0.05
        for k in range(args.count):
            spec, profiles = random_network(model, rng)
            if args.mode:
                spec = spec.with_mode(args.mode)
            roads = [RoadSpec(r, "in" if r < spec.n else "out", 1.0) for r in range(spec.n + spec.m)]
            eps0 = args.eps_0 if args.eps_0 is not None else 0.01
            initial = [sample_initial(model, road, rows_, eps0) for road, rows_ in zip(roads, profiles)]
            traj = run(model, spec, roads, initial, t_end, eps_fan)
            rows += _returning_rows(str(k), classify_returning(traj, cs))
    else:
        if not args.config:
            raise cfgmod.ConfigError(["--config or --suite is required"])
        cfg = cfgmod.load(args.config)
        traj = _run(cfg, args)
        rows = _returning_rows("0", classify_returning(traj, c_star(cfg.model).value))
    text = _csv(RETURNING_HEADER, rows)
    _write(text, args.out, "returning.csv")
    failed = any(not (r[-1] and r[-2]) for r in rows)
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _properties_text(rep, cs) -> str:
    lines = [
        f"suite appendix-a: {len(rep.samples)} perturbations, P1 pairs {rep.p1_pairs}, P1 mismatches {rep.p1_mismatches}",
        f"C* = {fmt(cs.value)} (grid {fmt(cs.grid_value)}, refined {fmt(cs.refined_value)})",
        "family count identities C_tvq C_tvw C_hbar C_gamma C1 C_tvq_vs_sum max_h_rise",
    ]
    for key, fc in sorted(rep.families.items()):
        lines.append(
            " ".join(
                [key, str(fc.count), str(fc.identities)]
                + [fmt(getattr(fc, k)) for k in ("c_tvq", "c_tvw", "c_hbar", "c_gamma", "c1", "c_tvq_sum")]
                + [fmt(fc.max_h_rise)]
            )
        )
    for m in rep.missing:
        lines.append(f"missing {m}")
    for f in rep.failures:
        lines.append(f"failure {f}")
    lines.append(f"result {'pass' if rep.passed else 'fail'}")
    return "\n".join(lines) + "\n"


def cmd_properties(args) -> int:
    suite = args.suite or "appendix-a"
    if suite != "appendix-a":
        raise cfgmod.ConfigError([f"--suite: unknown suite {suite!r} (expected 'appendix-a')"])
    model = cfgmod.load(args.config).model if args.config else GreenshieldsFamily()
    modes = (args.mode,) if args.mode else MODES
    rep = property_harness(model, modes=modes, seed=args.seed)
    _write(_properties_text(rep, c_star(model)), args.out, "properties.txt")
    if args.out is not None:
        _write(to_json(rep.to_dict()) + "\n", args.out, "properties.json")
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_validate_model(args) -> int:
    model = cfgmod.load(args.config).model if args.config else GreenshieldsFamily()
    rep = validate_family(model)
    out = rep.to_dict()
    out["c_star"] = c_star(model).to_dict()
    _write(to_json(out) + "\n", args.out, "model.json")
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


COMMANDS = {
    "riemann": cmd_riemann,
    "junction": cmd_junction,
    "run": cmd_run,
    "diagnose": cmd_diagnose,
    "returning": cmd_returning,
    "properties": cmd_properties,
    "validate-model": cmd_validate_model,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsomnet", description="Front tracking for second-order traffic on a junction.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario file (JSON)")
        p.add_argument("--out", help="output directory; stdout when omitted")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--eps-fan", type=float, dest="eps_fan")
        p.add_argument("--eps-0", type=float, dest="eps_0")
        p.add_argument("--t-end", type=float, dest="t_end")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--suite")
        if name == "returning":
            p.add_argument("--count", type=int, default=200, help="scenarios in a random suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    needs_config = args.command in ("riemann", "junction", "run", "diagnose")
    try:
        if needs_config and not args.config:
            raise cfgmod.ConfigError(["--config: required by this command"])
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        _fail("config", str(exc).splitlines())
    except (JunctionSpecError, DomainError, WFTInvariantError, ValueError, OSError) as exc:
        _fail(type(exc).__name__, [str(exc)])
    return EXIT_ERROR


def _fail(kind: str, details: list[str]) -> None:
    sys.stderr.write(json.dumps({"error": kind, "details": details}, sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())
