"""Glued diameter of each V-node against the 2^-k bound, per tree level."""

import argparse
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

from bforge.cli_io import parse_instance
from bforge.exact_metric import format_rational
from bforge.glue_space import glue, shrinking_report
from bforge.tree_system import assign_shrinking


@dataclass
class Config:
    instance: str = "bundled:three_level"
    depth: int | None = None


def run(cfg: Config) -> dict:
    system = parse_instance(cfg.instance, cfg.depth)
    rep = shrinking_report(glue(system, assign_shrinking(system)))
    worst = {}
    for _, k, diam, bound in rep.rows:
        worst[k] = max(worst.get(k, diam), diam)
    return {"config": asdict(cfg), "ok": rep.ok,
            "levels": [{"k": k, "max_diameter": format_rational(worst[k]),
                        "bound": format_rational(Fraction(1, 2 ** k))} for k in sorted(worst)]}


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--instance", default=Config.instance)
    p.add_argument("--depth", type=int)
    a = p.parse_args()
    print(json.dumps(run(Config(a.instance, a.depth)), indent=1))
