"""
JSON run configurations with per-command defaults
"""
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

from .config import (DECAY_FEATURES, DECAY_ITERATIONS, DECAY_STEPS, DEFAULT_OUT_DIR, DEFAULT_SEED, FIT_TARGET_LRS,
                     FIT_TARGET_STEPS, PPR_ALPHA, SYNTHETIC_ITERATIONS, SYNTHETIC_STEPS)
from .errors import ConfigError
from .logger import get_logger

logger = get_logger("run_config")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "filters": {
        "graph": {"generator": "complete", "n": 3},
        "self_loops": False,
        "filters": [{"kind": "gcn", "w": 1.0}],
        "random_filters": 0,
    },
    "decay": {
        "graph": {"generator": "karate_club"},
        "steps": list(DECAY_STEPS),
        "metrics": ["E_sym", "ROD"],
        "iterations": DECAY_ITERATIONS,
        "features": DECAY_FEATURES,
        "skp_terms": 2,
        "rod_norm": "spectral",
    },
    "sca": {
        "graph": {"generator": "complete", "n": 3},
        "self_loops": False,
        "pairs": [[1, 2]],
        "features": 3,
        "svd": True,
    },
    "split": {
        "graph": {"generator": "complete", "n": 3},
        "ordering": "degree",     # degree | random | ppr | features
        "swap": False,
        "self_loops": False,
        "alpha": PPR_ALPHA,
    },
    "lmgc-probe": {
        "weight_fns": ["tanh_mlp", "softmax_heads"],
        "K": 2,
        "features": 3,
        "channels": 3,
        "max_multiplicity": 3,
        "trials": 100,
        "battery_size": 20,
    },
    "pprgnn": {
        "instance": "identity",   # identity | graph
        "graph": {"generator": "cycle", "n": 6},
        "nodes": 1,
        "features": 3,
        "depth": 10,              # "auto" uses the depth estimate
        "pprgnn": {"epsilon": 1.0, "gamma": 1e-4, "activation": "identity", "j": 0},
    },
    "train-synthetic": {
        "variants": ["kp", "skp", "softmax_skp"],
        "iterations": SYNTHETIC_ITERATIONS,
        "steps": SYNTHETIC_STEPS,
        "lr": 0.001,
        "learn_aggregation": False,  # true also trains the aggregation entries
        "terms": 2,
    },
    "fit-target": {
        "nodes": 16,
        "p": 0.1,
        "features": 4,
        "steps": FIT_TARGET_STEPS,
        "variants": ["lmgc", "mimo"],
        "lrs": list(FIT_TARGET_LRS),
        "terms": 4,
    },
}

COMMANDS = tuple(DEFAULTS)
POSITIVE_INTS = ("iterations", "steps", "features", "trials", "max_multiplicity", "nodes", "K", "channels")


@dataclass
class RunConfig:
    command: str
    params: Dict[str, Any]
    seeds: List[int] = field(default_factory=lambda: [DEFAULT_SEED])
    out_dir: Path = Path(DEFAULT_OUT_DIR)
    base_dir: Path = Path(".")

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def resolve(self, path: str) -> Path:
        """Paths in a config file are relative to that file"""
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    def to_dict(self) -> Dict[str, Any]:
        return {"command": self.command, "seeds": self.seeds, **self.params}


def load_run_config(command: str, path: str | Path | None = None, seed: int | None = None,
                    out_dir: str | Path | None = None) -> RunConfig:
    """
    Merge a JSON config over the command defaults and validate it.

    With --seed N, the configured seeds are replaced by N, N+1, ... keeping
    their count.
    """
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}; choose from {list(COMMANDS)}")
    params = copy.deepcopy(DEFAULTS[command])
    seeds: List[int] = [DEFAULT_SEED]
    base_dir = Path(".")

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if data.pop("command", command) != command:
            raise ConfigError(f"{path} is a config for another command")
        if "seeds" in data:
            seeds = data.pop("seeds")
        unknown = set(data) - set(params)
        if unknown:
            raise ConfigError(f"{path}: unknown keys for {command}: {sorted(unknown)}")
        params.update(data)
        base_dir = path.parent

    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"seeds must be a nonempty list of integers, got {seeds!r}")
    if seed is not None:
        seeds = [seed + i for i in range(len(seeds))]

    for key in POSITIVE_INTS:
        if key in params and (not isinstance(params[key], int) or params[key] < 1):
            raise ConfigError(f"{key} must be a positive integer, got {params[key]!r}")

    cfg = RunConfig(command=command, params=params, seeds=seeds,
                    out_dir=Path(out_dir) if out_dir is not None else Path(DEFAULT_OUT_DIR), base_dir=base_dir)
    graph = params.get("graph")
    if isinstance(graph, dict) and "file" in graph:
        graph_path = cfg.resolve(graph["file"])
        if not graph_path.exists():
            raise ConfigError(f"graph file not found: {graph_path}")
    logger.debug(f"run config for {command}: {cfg.to_dict()}")
    return cfg
