"""Run configuration: YAML files flattened to dotted key paths.

Every key has a default below; a key not listed there is an error, so typos
surface at load time instead of being silently ignored.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import yaml

from .constants import demo_constants, select_constants
from .hedge import hedge_from_config
from .players import (comply_reality, constant_forecaster, file_forecaster, iid_reality,
                      scripted_reality)
from .protocol import ProtocolKind, check_coherence
from .strategy import (DEFAULT_EPS_GRID, MIRROR_SHARE, UPPER_K_MAX, UPPER_K_MIN, TruncationAccount,
                       ZeroStrategy, lower_block_strategy, theorem2_forcer, truncation_strategy,
                       upper_forcer)

__all__ = ["ConfigError", "DEFAULTS", "load_config", "flatten", "resolve", "config_hash", "Game",
           "build_game"]


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, object] = {
    "protocol.kind": "ufqsh",
    "protocol.prudent": True,
    "protocol.coherence_gate": True,
    "protocol.K0": 1.0,
    "hedge.kind": "power",
    "hedge.alpha": 3.0,
    "forecaster.kind": "constant",
    "forecaster.m": 0.0,
    "forecaster.v": 1.0,
    "forecaster.w": None,  # None: the cheapest coherent price h(sqrt v)
    "forecaster.c": None,
    "forecaster.file": None,
    "skeptic.strategy": "none",
    "skeptic.epsilon": 0.0625,
    "skeptic.mode": "demo",
    "skeptic.demo.delta": 0.05,
    "skeptic.demo.lnlnC": 3.0,
    "skeptic.demo.eps_star": None,
    "skeptic.eps_grid": list(DEFAULT_EPS_GRID),
    "skeptic.weights.truncation": 1 / 3,
    "skeptic.weights.upper": 1 / 3,
    "skeptic.weights.lower": 1 / 3,
    "skeptic.mirror_share": MIRROR_SHARE,
    "skeptic.truncation.D": 1.0,
    "skeptic.truncation.max_D": 32,
    "skeptic.upper.k_min": UPPER_K_MIN,
    "skeptic.upper.k_max": UPPER_K_MAX,
    "skeptic.backend": None,
    "reality.kind": "iid",
    "reality.seed": None,  # None: use run.seed
    "reality.dist.kind": "gaussian",
    "reality.dist.p": None,
    "reality.dist.nu": None,
    "reality.script": "lil_violator_low",
    "reality.script_eps": 0.0625,
    "reality.cap": None,
    "reality.level": None,
    "reality.drive": False,
    "run.rounds": 1000,
    "run.seed": 0,
    "run.checkpoints": "geometric",
    "run.tail_start": 10000,
    "run.additivity_every": 0,
    "output.dir": "runs",
    "output.csv": True,
}

STRATEGIES = ("none", "truncation", "truncation_account", "upper", "lower_block", "theorem2")


def flatten(tree: dict, prefix: str = "") -> dict[str, object]:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def resolve(overrides: dict | None = None) -> dict[str, object]:
    """Defaults updated with ``overrides`` (nested or dotted); rejects unknown keys."""
    flat = flatten(overrides or {})
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = dict(DEFAULTS)
    cfg.update(flat)
    return cfg


def load_config(path: str | None, **overrides) -> dict[str, object]:
    tree = {}
    if path is not None:
        try:
            with open(path) as fh:
                tree = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(tree, dict):
            raise ConfigError(f"config {path} must be a mapping")
    cfg = resolve(tree)
    for k, v in overrides.items():
        if v is not None:
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {k}")
            cfg[k] = v
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Game:
    hedge: object
    forecaster: object
    skeptic: object
    reality: object
    kind: ProtocolKind
    K0: float
    prudent: bool
    coherence_gate: bool
    rounds: int
    bundles: list


def _num(cfg, key, cast=float, allow_none=False):
    v = cfg[key]
    if v is None and allow_none:
        return None
    try:
        return cast(v)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key} must be a {cast.__name__}, got {v!r}") from e


def build_game(cfg: dict) -> Game:
    """Instantiate every player from a resolved config; errors become ConfigError."""
    try:
        return _build(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, OSError, ArithmeticError) as e:
        raise ConfigError(str(e)) from e


def _build(cfg: dict) -> Game:
    kind = ProtocolKind.parse(str(cfg["protocol.kind"]))
    rounds = _num(cfg, "run.rounds", int)
    if rounds < 1:
        raise ConfigError("run.rounds must be at least 1")
    seed = _num(cfg, "run.seed", int)
    hedge = hedge_from_config(cfg["hedge.kind"],
                              _num(cfg, "hedge.alpha", allow_none=True) if cfg["hedge.kind"] == "power" else None)
    c = _num(cfg, "forecaster.c", allow_none=True)
    fk = cfg["forecaster.kind"]
    if fk == "constant":
        # the engine's coherence gate rejects bad prices at round 1
        v = _num(cfg, "forecaster.v")
        w = _num(cfg, "forecaster.w", allow_none=True)
        if w is None:
            w = hedge.eval(math.sqrt(v)) if kind is ProtocolKind.UFQSH and v >= 0 else 0.0
        fc = constant_forecaster(_num(cfg, "forecaster.m"), v, w, None, math.inf if c is None else c)
    elif fk == "file":
        if not cfg["forecaster.file"]:
            raise ConfigError("forecaster.file is required for forecaster.kind = file")
        fc = file_forecaster(str(cfg["forecaster.file"]))
    else:
        raise ConfigError(f"forecaster.kind must be 'constant' or 'file', got {fk!r}")

    strat = cfg["skeptic.strategy"]
    if strat not in STRATEGIES:
        raise ConfigError(f"skeptic.strategy must be one of {STRATEGIES}, got {strat!r}")
    grid = [float(e) for e in cfg["skeptic.eps_grid"]]
    backend = cfg["skeptic.backend"]
    mode = cfg["skeptic.mode"]
    bundles = []
    K0 = _num(cfg, "protocol.K0")

    def bundle_for(eps):
        if mode == "proof":
            return select_constants(eps)
        if mode == "demo":
            return demo_constants(eps, _num(cfg, "skeptic.demo.delta"), _num(cfg, "skeptic.demo.lnlnC"),
                                  _num(cfg, "skeptic.demo.eps_star", allow_none=True))
        raise ConfigError(f"skeptic.mode must be 'proof' or 'demo', got {mode!r}")

    k_range = (_num(cfg, "skeptic.upper.k_min", int), _num(cfg, "skeptic.upper.k_max", int))
    if strat != "none" and kind is not ProtocolKind.UFQSH and strat != "upper":
        raise ConfigError(f"strategy {strat!r} needs the h-ticket of the ufqsh protocol")
    if strat == "none":
        sk = ZeroStrategy(K0)
    elif strat == "truncation":
        sk = truncation_strategy(hedge, grid, _num(cfg, "skeptic.truncation.max_D", int), backend)
    elif strat == "truncation_account":
        D = _num(cfg, "skeptic.truncation.D")
        sk = TruncationAccount(_num(cfg, "skeptic.epsilon"), D)
        K0 = D
    elif strat == "upper":
        sk = upper_forcer(hedge, grid, *k_range, backend=backend)
    elif strat == "lower_block":
        bundles = [bundle_for(_num(cfg, "skeptic.epsilon"))]
        sk = lower_block_strategy(hedge, bundles, _num(cfg, "skeptic.mirror_share"), k_range, backend)
    else:
        weights = {k: _num(cfg, f"skeptic.weights.{k}") for k in ("truncation", "upper", "lower")}
        es = _num(cfg, "skeptic.demo.eps_star", allow_none=True)
        if mode == "demo" and es is not None:
            raise ConfigError("skeptic.demo.eps_star applies to lower_block only")
        sk = theorem2_forcer(hedge, grid, mode=mode, demo_delta=_num(cfg, "skeptic.demo.delta"),
                             demo_lnlnC=_num(cfg, "skeptic.demo.lnlnC"), weights=weights,
                             max_D=_num(cfg, "skeptic.truncation.max_D", int), k_range=k_range,
                             mirror_share=_num(cfg, "skeptic.mirror_share"), backend=backend)
        bundles = [bundle_for(e) for e in grid]
    if strat not in ("none", "truncation_account") and abs(K0 - 1.0) > 1e-12:
        raise ConfigError("mixture strategies are normalised to protocol.K0 = 1")

    rk = cfg["reality.kind"]
    rseed = seed if cfg["reality.seed"] is None else _num(cfg, "reality.seed", int)
    if rk == "iid":
        # moments are only checked against prices that pass the coherence gate
        f0 = fc.f if fk == "constant" and kind is ProtocolKind.UFQSH else None
        if f0 is not None and not check_coherence(hedge, f0):
            f0 = None
        rl = iid_reality(cfg["reality.dist.kind"], rseed, f=f0, hedge=hedge if f0 else None,
                         p=_num(cfg, "reality.dist.p", allow_none=True),
                         nu=_num(cfg, "reality.dist.nu", allow_none=True))
    elif rk == "scripted":
        rl = scripted_reality(cfg["reality.script"], _num(cfg, "reality.script_eps"),
                              cap=_num(cfg, "reality.cap", allow_none=True),
                              level=_num(cfg, "reality.level", allow_none=True),
                              drive=bool(cfg["reality.drive"]))
    elif rk == "comply":
        rl = comply_reality(hedge, rseed)
    else:
        raise ConfigError(f"reality.kind must be 'iid', 'scripted' or 'comply', got {rk!r}")
    return Game(hedge, fc, sk, rl, kind, K0, bool(cfg["protocol.prudent"]),
                bool(cfg["protocol.coherence_gate"]), rounds, bundles)
