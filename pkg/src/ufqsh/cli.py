"""Command-line front end: ``ufqsh run|sweep|validate-hedge|check-constants|check-coherence``.

Exit codes: 0 success, 1 other protocol error or failed check, 2 incoherent
forecast, 3 collateral violation, 4 configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .analysis import antecedent_check, littleo_diagnostics, path_stats_from_checkpoints
from .config import ConfigError, build_game, config_hash, load_config
from .constants import demo_constants, select_constants
from .engine import geometric_checkpoints, play
from .hedge import hedge_from_config, validate_assumption1
from .kernels import BACKEND
from .protocol import (CollateralViolation, ForecasterMove, IncoherentForecast, ProtocolError,
                       check_coherence, coherence_supmin_oracle)

EXIT_OK, EXIT_PROTOCOL, EXIT_INCOHERENT, EXIT_COLLATERAL, EXIT_CONFIG = 0, 1, 2, 3, 4


def exit_code(err: ProtocolError | None) -> int:
    if err is None:
        return EXIT_OK
    if isinstance(err, IncoherentForecast):
        return EXIT_INCOHERENT
    if isinstance(err, CollateralViolation):
        return EXIT_COLLATERAL
    return EXIT_PROTOCOL


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _jsonable(x.item())
    return x


def execute(cfg: dict, out_dir: str | None = None, write: bool = True) -> tuple[int, dict]:
    """Run one configured game; returns (exit code, JSON-ready report)."""
    game = build_game(cfg)
    cp = cfg["run.checkpoints"]
    if cp == "geometric":
        checkpoints = geometric_checkpoints(game.rounds)
    elif isinstance(cp, list):
        checkpoints = [int(c) for c in cp]
    else:
        raise ConfigError("run.checkpoints must be 'geometric' or a list of rounds")
    record = bool(cfg["output.csv"]) and write
    res = play(hedge=game.hedge, forecaster=game.forecaster, skeptic=game.skeptic,
               reality=game.reality, rounds=game.rounds, kind=game.kind, K0=game.K0,
               prudent=game.prudent, coherence_gate=game.coherence_gate, record=record,
               checkpoints=checkpoints, additivity_every=int(cfg["run.additivity_every"]))
    stats = path_stats_from_checkpoints(res.checkpoints)
    code = exit_code(res.stop)
    report = {
        "reproducibility": {"config_hash": config_hash(cfg), "seed": cfg["run.seed"],
                            "kernel_backend": BACKEND},
        "config": cfg,
        "exit_code": code,
        "stop": None if res.stop is None else {"code": res.stop.code, "round": res.stop.round,
                                               "message": str(res.stop)},
        "rounds_completed": res.rounds,
        "capital": {"sign": res.K_sign, "log_magnitude": res.K_logmag,
                    "sup_log_magnitude": res.sup_logmag},
        "max_lil_ratio_tail": stats.max_ratio(int(cfg["run.tail_start"])),
        "path_stats": stats.as_dict(),
        "skeptic": res.skeptic,
        "reality": res.reality,
        "constants": [b.as_dict() for b in game.bundles],
    }
    if res.trace is not None and res.rounds > 0 and game.hedge is not None:
        report["antecedent"] = antecedent_check(res.trace, game.hedge).as_dict()
        try:
            report["littleo"] = littleo_diagnostics(res.trace, game.hedge).as_dict()
        except ValueError as e:
            report["littleo"] = {"skipped": str(e)}
    report = _jsonable(report)
    if write:
        out_dir = out_dir or str(cfg["output.dir"])
        os.makedirs(out_dir, exist_ok=True)
        if res.trace is not None:
            res.trace.to_csv(os.path.join(out_dir, "trace.csv"))
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return code, report


def _sweep_one(args):
    cfg, seed = args
    cfg = dict(cfg)
    cfg["run.seed"] = seed
    cfg["output.csv"] = False
    try:
        code, rep = execute(cfg, write=False)
    except ConfigError as e:
        return {"seed": seed, "exit_code": EXIT_CONFIG, "error": str(e)}
    blocks = rep["skeptic"].get("blocks") or []
    return {"seed": seed, "exit_code": code, "rounds": rep["rounds_completed"],
            "max_lil_ratio_tail": rep["max_lil_ratio_tail"],
            "sup_log_capital": rep["capital"]["sup_log_magnitude"],
            "final_log_capital": rep["capital"]["log_magnitude"],
            "completed_blocks": sum(len(b) for b in blocks)}


def sweep(cfg: dict, seeds: list[int], jobs: int = 1) -> dict:
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    work = [(cfg, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_sweep_one, work))
    else:
        rows = [_sweep_one(w) for w in work]
    ok = [r for r in rows if r["exit_code"] == 0]
    return {
        "config_hash": config_hash(cfg),
        "seeds": seeds,
        "runs": rows,
        "aggregate": {
            "n_ok": len(ok),
            "max_lil_ratio_tail": max((r["max_lil_ratio_tail"] for r in ok
                                       if r["max_lil_ratio_tail"] is not None), default=None),
            "sup_log_capital": max((r["sup_log_capital"] for r in ok), default=None),
            "completed_blocks": sum(r["completed_blocks"] for r in ok),
        },
    }


def _parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ufqsh", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--rounds", type=int)
        sp.add_argument("--out", help="output directory")

    r = sub.add_parser("run", help="play one game and write trace.csv and report.json")
    common(r)
    r.add_argument("--seed", type=int)
    s = sub.add_parser("sweep", help="play one game per seed and aggregate")
    common(s)
    s.add_argument("--seeds", required=True, help="e.g. 1-20 or 1,5,9")
    s.add_argument("--jobs", type=int, default=1)
    vh = sub.add_parser("validate-hedge", help="check the hedge assumptions on a grid")
    vh.add_argument("--kind", default="power")
    vh.add_argument("--alpha", type=float)
    cc = sub.add_parser("check-constants", help="select and verify block constants for eps")
    cc.add_argument("--eps", type=float, required=True)
    cc.add_argument("--demo", nargs=2, type=float, metavar=("DELTA", "LNLNC"))
    co = sub.add_parser("check-coherence", help="test prices (v, w) for coherence")
    co.add_argument("--kind", default="power")
    co.add_argument("--alpha", type=float)
    co.add_argument("--v", type=float, required=True)
    co.add_argument("--w", type=float, required=True)
    return p


def _hedge(args):
    alpha = args.alpha if args.alpha is not None else (3.0 if args.kind == "power" else None)
    return hedge_from_config(args.kind, alpha)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config, **{"run.seed": args.seed, "run.rounds": args.rounds,
                                              "output.dir": args.out})
            code, rep = execute(cfg)
            print(json.dumps({k: rep[k] for k in ("exit_code", "stop", "rounds_completed", "capital",
                                                  "max_lil_ratio_tail")}, indent=2))
            print(f"wrote {cfg['output.dir']}", file=sys.stderr)
            return code
        if args.command == "sweep":
            cfg = load_config(args.config, **{"run.rounds": args.rounds, "output.dir": args.out})
            rep = sweep(cfg, _parse_seeds(args.seeds), args.jobs)
            os.makedirs(str(cfg["output.dir"]), exist_ok=True)
            with open(os.path.join(str(cfg["output.dir"]), "sweep.json"), "w") as fh:
                json.dump(_jsonable(rep), fh, indent=2)
            for row in rep["runs"]:
                print(" ".join(f"{k}={row[k]}" for k in row))
            print(json.dumps(_jsonable(rep["aggregate"])))
            return max(r["exit_code"] for r in rep["runs"])
        if args.command == "validate-hedge":
            rep = validate_assumption1(_hedge(args))
            print(json.dumps(_jsonable(rep.as_dict()), indent=2))
            return EXIT_OK if rep.passed else EXIT_PROTOCOL
        if args.command == "check-constants":
            if args.demo:
                b = demo_constants(args.eps, args.demo[0], args.demo[1])
            else:
                b = select_constants(args.eps)
            print(b.report.format())
            print(json.dumps(_jsonable({k: v for k, v in b.as_dict().items() if k != "report"}), indent=2))
            return EXIT_OK if b.report.passed else EXIT_PROTOCOL
        if args.command == "check-coherence":
            h = _hedge(args)
            ok = check_coherence(h, ForecasterMove(0.0, args.v, args.w))
            out = {"coherent": ok, "h(sqrt v) - w": h.eval(math.sqrt(args.v)) - args.w}
            if args.v > 0 and args.w > 0:
                out["supmin_oracle"] = coherence_supmin_oracle(h, args.v, args.w)
            print(json.dumps(out))
            return EXIT_OK if ok else EXIT_INCOHERENT
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
