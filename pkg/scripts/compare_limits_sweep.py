"""Finite-depth limit checks for several truncation depths and sample sizes."""

import argparse
import json
import time
from dataclasses import asdict, dataclass

from bforge.cli_io import parse_instance
from bforge.exact_metric import format_rational
from bforge.kettlebell import compare_limits
from bforge.tree_system import assign_shrinking


@dataclass
class Config:
    instance: str = "bundled:three_level"
    depths: tuple = (2, 3, 4)
    samples: tuple = (10, 40)
    seed: int = 0


def run(cfg: Config) -> dict:
    system = parse_instance(cfg.instance)
    metrics = assign_shrinking(system)
    rows = []
    for k in cfg.depths:
        for s in cfg.samples:
            t0 = time.perf_counter()
            rep = compare_limits(system, metrics, k, samples=s, seed=cfg.seed)
            kinds = {}
            for c in rep.checks:
                tally = kinds.setdefault(c["name"], {"pass": 0, "fail": 0, "open": 0})
                tally["pass" if c["ok"] else "fail" if c["ok"] is False else "open"] += 1
            rows.append({"k": k, "samples": s, "failures": len(rep.failures), "checks": kinds,
                         "max_interval_length_per_n": [format_rational(x) for x in rep.max_interval_length_per_n],
                         "seconds": round(time.perf_counter() - t0, 2)})
    return {"config": asdict(cfg), "rows": rows}


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--instance", default=Config.instance)
    p.add_argument("--depths", type=int, nargs="+", default=list(Config.depths))
    p.add_argument("--samples", type=int, nargs="+", default=list(Config.samples))
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    print(json.dumps(run(Config(a.instance, tuple(a.depths), tuple(a.samples), a.seed)), indent=1))
