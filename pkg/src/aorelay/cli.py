"""``aorelay`` command-line tool.

Exit codes: 0 success, 1 invalid input, 2 simulation disagrees with the
closed form (|z| above the limit), 3 MDP solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from . import experiments as ex
from .mdp import NotConverged
from .model import ParameterError

EXIT_OK, EXIT_INVALID, EXIT_CROSSCHECK, EXIT_NOT_CONVERGED = 0, 1, 2, 3

# per-command defaults; flags override config-file values override these
DEFAULTS = {
    "common": {
        "p1": 0.2, "p2": 0.8, "p3": 0.8, "seed": 1, "slots": ex.FULL_SLOTS,
        "caps": "30,60,120", "epsilon": 1e-6, "quick": False, "out": None,
    },
    "single": {"p": "1.0", "engines": "analytic,simulate"},
    "sweep-p": {"p": "0.05:0.05:1", "engines": "analytic"},
    "sweep-p2p3-diff": {"p": "0.8", "engines": "analytic", "p2_grid": "0.25:0.05:0.95", "p3_grid": "0.25:0.05:0.95"},
    "sweep-p1-gaw": {"p": "1", "engines": "analytic", "p1_grid": "0.01:0.01:0.99", "sets": "0.3,0.3;0.8,0.8"},
    "compare": {"p": "1.0", "engines": "analytic"},
    "mdp-solve": {"p": "1.0", "engines": "mdp", "out": "policy.csv"},
}
KEYS = ("p1", "p2", "p3", "p", "slots", "seed", "engines", "out", "caps", "epsilon", "quick",
        "p1_grid", "p2_grid", "p3_grid", "sets")


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key = value")
            key, val = (x.strip() for x in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in KEYS:
                raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = val
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--p1", type=float, help="S-D success probability")
    g.add_argument("--p2", type=float, help="S-R success probability")
    g.add_argument("--p3", type=float, help="R-D success probability")
    g.add_argument("--p", help="generation probability: value, list a,b,c or range start:step:stop")
    g.add_argument("--slots", type=int, help="simulated slots per run (default 10^7)")
    g.add_argument("--seed", type=int, help="base seed; runs use derived seeds")
    g.add_argument("--engines", help="comma list from analytic,simulate,mdp")
    g.add_argument("--out", help="output path (default stdout)")
    g.add_argument("--caps", help="MDP age caps cap_s,cap_r,cap_d")
    g.add_argument("--epsilon", type=float, help="RVI span tolerance")
    g.add_argument("--quick", action="store_const", const=True, help="10^5 slots and a wider z limit")
    g.add_argument("--config", help="key = value file with the same keys as the flags")

    parser = argparse.ArgumentParser(prog="aorelay", description="Age-of-information relaying protocols.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("single", parents=[common], help="both protocols at one (channel, p)")
    sub.add_parser("sweep-p", parents=[common], help="AoI versus generation probability")
    diff = sub.add_parser("sweep-p2p3-diff", parents=[common], help="RP minus SP AoI over a (P2, P3) grid")
    diff.add_argument("--p2-grid", dest="p2_grid")
    diff.add_argument("--p3-grid", dest="p3_grid")
    gaw = sub.add_parser("sweep-p1-gaw", parents=[common], help="generate-at-will AoI versus P1")
    gaw.add_argument("--p1-grid", dest="p1_grid")
    gaw.add_argument("--sets", help="(P2, P3) pairs as 'a,b;c,d'")
    sub.add_parser("compare", parents=[common], help="recommend a protocol for one (channel, p)")
    sub.add_parser("mdp-solve", parents=[common], help="solve the MDP and export the policy table")
    return parser


def effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[args.command])
    file_keys = {}
    if args.config:
        file_keys = read_config(args.config)
        cfg.update(file_keys)
    for key in KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["quick"] = _bool(cfg["quick"])
    # config-file values arrive as text; type them so the echoed header is uniform
    for key, cast in (("p1", float), ("p2", float), ("p3", float), ("epsilon", float), ("slots", int), ("seed", int)):
        cfg[key] = cast(cfg[key])
    if cfg["quick"] and args.slots is None and "slots" not in file_keys:
        cfg["slots"] = ex.QUICK_SLOTS
    cfg["command"] = args.command
    return cfg


def make_spec(cfg: dict) -> ex.ExperimentSpec:
    sets = ()
    if cfg.get("sets"):
        sets = tuple(tuple(float(x) for x in pair.split(",")) for pair in str(cfg["sets"]).split(";") if pair.strip())
        if any(len(s) != 2 for s in sets):
            raise ParameterError("sets must be 'p2,p3' pairs separated by ';'")
    caps = tuple(int(x) for x in str(cfg["caps"]).split(","))
    if len(caps) != 3:
        raise ParameterError("caps must be three integers")
    grids = {k: ex.parse_grid(cfg[k]) if cfg.get(k) else () for k in ("p1_grid", "p2_grid", "p3_grid")}
    return ex.ExperimentSpec(
        kind=cfg["command"],
        p1=float(cfg["p1"]),
        p2=float(cfg["p2"]),
        p3=float(cfg["p3"]),
        p_grid=ex.parse_grid(cfg["p"]),
        engines=tuple(e.strip() for e in str(cfg["engines"]).split(",") if e.strip()),
        slots=int(cfg["slots"]),
        seed=int(cfg["seed"]),
        caps=caps,
        epsilon=float(cfg["epsilon"]),
        quick=cfg["quick"],
        sets=sets,
        **grids,
    )


def render_csv(cfg: dict, rows, notes=()) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(cfg, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ex.CSV_COLUMNS)
    for row in rows:
        w.writerow(row.csv_fields())
    for note in notes:
        buf.write(f"# {note}\n")
    return buf.getvalue()


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        spec = make_spec(cfg)
        cmd = cfg["command"]
        if cmd == "compare":
            result = ex.cmd_compare(spec)
            result["config"] = cfg
            _emit(json.dumps(result, indent=2, sort_keys=True) + "\n", cfg["out"])
            return EXIT_OK
        if cmd == "mdp-solve":
            try:
                table = ex.cmd_mdp_solve(spec)
                code = EXIT_OK
            except NotConverged as err:
                print(f"aorelay: {err}", file=sys.stderr)
                table = err.policy
                code = EXIT_NOT_CONVERGED
            table.meta["config"] = cfg
            sidecar = table.to_csv(cfg["out"])
            summary = {"gain": table.gain, "span_residual": table.span_residual,
                       "iterations": table.iterations, "policy": cfg["out"], "sidecar": sidecar}
            print(json.dumps(summary, sort_keys=True))
            return code

        notes = ()
        if cmd == "single":
            rows = ex.cmd_single(spec)
        elif cmd == "sweep-p":
            rows, notes = ex.cmd_sweep_p(spec)
        elif cmd == "sweep-p2p3-diff":
            rows = ex.cmd_sweep_p2p3_diff(spec)
        else:
            rows, notes = ex.cmd_sweep_p1_gaw(spec)
        _emit(render_csv(cfg, rows, notes), cfg["out"])
        worst = ex.max_abs_z(rows)
        if worst > spec.z_limit:
            print(f"aorelay: simulation disagrees with the closed form (|z| = {worst:.2f})", file=sys.stderr)
            return EXIT_CROSSCHECK
        return EXIT_OK
    except NotConverged as err:
        print(f"aorelay: {err}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ParameterError, ValueError, OSError) as err:
        print(f"aorelay: {err}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
