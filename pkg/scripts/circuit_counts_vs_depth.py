"""Circuit counts through a fixed junction edge of the K-bar ball as the depth grows.

A length-n count is settled once the unfolding reaches every parabolic
vertex such a circuit can visit; the table shows where each column stops moving.
"""

import argparse
import json
import time
from dataclasses import asdict, dataclass

from bforge.cli_io import fixed_orbit_edge, parse_instance
from bforge.graph_analysis import circuits_through_edge
from bforge.splitting_engine import build_barK


@dataclass
class Config:
    instance: str = "bundled:z3_free_product"
    radius: int = 3
    depths: tuple = (4, 5, 6, 7)
    max_length: int = 8


def run(cfg: Config) -> dict:
    spec = parse_instance(cfg.instance)
    rows, edge = [], None
    for D in cfg.depths:
        t0 = time.perf_counter()
        ball = build_barK(spec, D, cfg.radius)
        edge = edge or fixed_orbit_edge(ball)
        c = circuits_through_edge(ball.adjacency(), edge, cfg.max_length)
        rows.append({"depth": D, "vertices": len(ball.vertices), "counts": dict(c.by_length),
                     "seconds": round(time.perf_counter() - t0, 2)})
    settled = {}
    for n in range(3, cfg.max_length + 1):
        vals = [r["counts"][n] for r in rows]
        # only claim a depth when a deeper row confirms it
        settled[n] = next((cfg.depths[i] for i in range(len(vals) - 1) if len(set(vals[i:])) == 1), None)
    return {"config": asdict(cfg), "edge": list(edge), "rows": rows, "first_stable_depth": settled}


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--instance", default=Config.instance)
    p.add_argument("--radius", type=int, default=Config.radius)
    p.add_argument("--depths", type=int, nargs="+", default=list(Config.depths))
    p.add_argument("--max-length", type=int, default=Config.max_length)
    a = p.parse_args()
    print(json.dumps(run(Config(a.instance, a.radius, tuple(a.depths), a.max_length)), indent=1))
