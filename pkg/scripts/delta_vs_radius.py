"""Four-point hyperbolicity estimate of the K-bar ball for a range of radii.

Each radius uses the smallest depth the depth rule accepts. Large balls are
sampled, so the numbers are lower bounds and need not grow monotonically.
"""

import argparse
import json
import time
from dataclasses import asdict, dataclass

from bforge.cli_io import parse_instance
from bforge.graph_analysis import delta_estimate
from bforge.splitting_engine import build_barK, required_depth


@dataclass
class Config:
    instance: str = "bundled:z3_free_product"
    radii: tuple = (2, 3, 4)
    samples: int = 20000
    seed: int = 0
    threads: int = 1


def run(cfg: Config) -> dict:
    spec = parse_instance(cfg.instance)
    rows = []
    for R in cfg.radii:
        t0 = time.perf_counter()
        D = required_depth(spec, R)
        ball = build_barK(spec, D, R)
        inner = [v for v in ball.vertices if ball.ball_dist[v] <= R - 1]
        est = delta_estimate(ball.adjacency(), inner, samples=cfg.samples, seed=cfg.seed, threads=cfg.threads)
        rows.append({"radius": R, "depth": D, "vertices": len(ball.vertices), **est.to_json(),
                     "seconds": round(time.perf_counter() - t0, 2)})
    return {"config": asdict(cfg), "rows": rows}


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--instance", default=Config.instance)
    p.add_argument("--radii", type=int, nargs="+", default=list(Config.radii))
    p.add_argument("--samples", type=int, default=Config.samples)
    p.add_argument("--seed", type=int, default=Config.seed)
    p.add_argument("--threads", type=int, default=Config.threads)
    a = p.parse_args()
    print(json.dumps(run(Config(a.instance, tuple(a.radii), a.samples, a.seed, a.threads)), indent=1))
