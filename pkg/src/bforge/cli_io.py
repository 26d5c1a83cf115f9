"""Command line front end: instance parsing, pipelines and report export."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import networkx as nx

from .exact_metric import (MetricDomainError, MetricStructureError, format_rational, parse_rational,
                           validate_metric)
from .glue_space import (InfeasibleEps, approximate_completion, embedding_violations, glue,
                         net_coverage_failures, shrinking_report)
from .graph_analysis import (CutVertexError, as_adjacency, circuits_through_edge, convexity_check,
                             delta_estimate, dual_tree, inseparable_cut_pairs, iso_check,
                             separation_components, separation_oracle)
from .kettlebell import compare_limits
from .splitting_engine import (DepthTooSmall, SplittingSpec, SplittingStructureError, ball_to_dot,
                               build_barK, forest_matches_classes, is_ball_automorphism,
                               parabolic_forest, pipe_geodesics_unique, required_depth,
                               stabiliser_relabelling, validate_splitting)
from .tree_system import (TreeSystem, TreeSystemError, assign_shrinking, build_tree_system,
                          compatibility_violations)

COMMANDS = ("validate", "shrink", "glue", "complete", "kettlebell", "combine", "decompose")
FORMATS = ("json", "dot", "text")


class InstanceError(ValueError):
    """Unreadable or structurally invalid instance file; the message names the location."""


class UsageError(ValueError):
    pass


@dataclass
class PipelineConfig:
    instance: str
    command: str
    depth: int | None = None
    radius: int | None = None
    eps: Fraction | None = None
    out: str | None = None
    format: str = "json"
    threads: int = 1
    circuit_length: int = 8
    samples: int = 40
    seed: int = 0
    check_stability: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.format not in FORMATS:
            raise UsageError(f"unknown format {self.format!r}")
        if self.threads < 1:
            raise UsageError("--threads must be at least 1")


# ----------------------------------------------------------------------------
# parsing


def read_instance_text(path: str) -> tuple:
    """Return (text, display name). ``bundled:NAME`` reads a packaged example."""
    if path.startswith("bundled:"):
        name = path.split(":", 1)[1]
        res = resources.files("bforge.data").joinpath(f"{name}.json")
        if not res.is_file():
            raise InstanceError(f"{path}: no bundled instance named {name!r}")
        return res.read_text(encoding="utf-8"), path
    p = Path(path)
    if not p.is_file():
        raise InstanceError(f"{path}: file not found")
    try:
        return p.read_text(encoding="utf-8"), path
    except UnicodeDecodeError as exc:
        raise InstanceError(f"{path}: not UTF-8 ({exc.reason} at byte {exc.start})") from None


def is_splitting(data) -> bool:
    return isinstance(data, dict) and "groups" in data and "quotient" in data


def parse_instance(path: str, depth: int | None = None) -> SplittingSpec | TreeSystem:
    text, name = read_instance_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{name}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InstanceError(f"{name}: top level must be an object")
    return parse_data(data, name, depth)


def parse_data(data: dict, name: str = "<instance>", depth: int | None = None):
    if is_splitting(data):
        try:
            spec, report = validate_splitting(data)
        except (SplittingStructureError, MetricStructureError, MetricDomainError,
                KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"{name}: {exc}") from None
        if spec is None:
            detail = "; ".join(f"{v.axiom} {list(v.witness)}: {v.detail}" for v in report.violations)
            raise InstanceError(f"{name}: invalid splitting: {detail}")
        return spec
    try:
        return build_tree_system(data, depth)
    except TreeSystemError as exc:
        detail = "; ".join(f"[{d.code}] {d.message}" for d in exc.diagnostics)
        raise InstanceError(f"{name}: {detail}") from None
    except (MetricStructureError, MetricDomainError, KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"{name}: {exc}") from None


# ----------------------------------------------------------------------------
# reports


@dataclass
class Report:
    command: str
    instance: str
    sections: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    dot: str | None = None
    refused: str | None = None

    def fail(self, check: str, **detail):
        self.failures.append({"check": check, **detail})

    def to_json(self) -> dict:
        return {"command": self.command, "instance": self.instance, "ok": not self.failures,
                "refused": self.refused, "failures": self.failures, "sections": self.sections}

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps(_plain(self.to_json()), indent=1, sort_keys=True) + "\n"
        if fmt == "dot":
            return self.dot if self.dot is not None else "graph empty {\n}\n"
        lines = [f"command: {self.command}", f"instance: {self.instance}"]
        if self.refused:
            lines.append(f"refused: {self.refused}")
        for key in sorted(self.sections):
            val = self.sections[key]
            if isinstance(val, (dict, list, tuple)):
                val = json.dumps(_plain(val), sort_keys=True)
                if len(val) > 200:
                    val = val[:197] + "..."
            lines.append(f"{key}: {val}")
        lines.append(f"failures: {len(self.failures)}")
        for f in self.failures:
            lines.append(f"  - {json.dumps(_plain(f), sort_keys=True)}")
        return "\n".join(lines) + "\n"


def _plain(x):
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (set, frozenset)):
        return sorted((_plain(v) for v in x), key=str)
    if x is None or isinstance(x, (bool, int, str)):
        return x
    if hasattr(x, "to_json"):
        return _plain(x.to_json())
    return str(x)


# ----------------------------------------------------------------------------
# commands


def _need_tree(obj, command) -> TreeSystem:
    if not isinstance(obj, TreeSystem):
        raise UsageError(f"{command} needs a tree-system instance, got a splitting")
    return obj


def _shrunk(system: TreeSystem, threads: int):
    metrics = assign_shrinking(system)
    return metrics, glue(system, metrics, threads=threads)


def cmd_validate(cfg, obj, rep: Report):
    if isinstance(obj, SplittingSpec):
        rep.sections["kind"] = "splitting"
        rep.sections["orbits"] = {"v": list(obj.v_orbits), "w": list(obj.w_orbits)}
        rep.sections["neck_added"] = sorted(map(str, obj.neck_added))
        return
    rep.sections["kind"] = "tree_system"
    tree = obj.tree
    rep.sections["v_nodes"] = len(tree.v_nodes)
    rep.sections["w_nodes"] = len(tree.w_nodes)
    rep.sections["frontier"] = len(tree.frontier)
    for v in sorted(tree.v_nodes):
        r = validate_metric(obj.constituent[v])
        for viol in r.violations:
            rep.fail("metric", node=v, axiom=viol.axiom, witness=list(viol.witness), detail=viol.detail)
    rep.dot = _tree_dot(obj)


def cmd_shrink(cfg, obj, rep: Report):
    system = _need_tree(obj, "shrink")
    metrics, glued = _shrunk(system, cfg.threads)
    for item in compatibility_violations(system, metrics):
        rep.fail("compatibility", detail=item)
    sr = shrinking_report(glued)
    for row in sr.violations:
        rep.fail("shrinking", node=row[0], level=row[1], diameter=row[2], bound=row[3])
    for row in sr.invariant_violations:
        rep.fail("pair_invariant", node=row[0], level=row[1], distance=row[2], bound=row[3])
    rep.sections["shrinking"] = sr.to_json()
    rep.sections["metrics"] = metrics.to_json()
    rep.dot = _tree_dot(system)


def cmd_glue(cfg, obj, rep: Report):
    system = _need_tree(obj, "glue")
    metrics, glued = _shrunk(system, cfg.threads)
    for v, p, q in embedding_violations(glued):
        rep.fail("isometric_embedding", node=v, points=[p, q])
    rep.sections["classes"] = len(glued.classes)
    rep.sections["glued"] = glued.to_json()
    rep.dot = _glued_dot(glued)


def cmd_complete(cfg, obj, rep: Report):
    system = _need_tree(obj, "complete")
    if cfg.eps is None:
        raise UsageError("complete needs --eps")
    k = max(system.tree.distances()[v] // 2 for v in system.tree.v_nodes)
    metrics, glued = _shrunk(system, cfg.threads)
    try:
        approx = approximate_completion(glued, k, cfg.eps)
    except InfeasibleEps as exc:
        rep.refused = str(exc)
        rep.fail("infeasible_eps", eps=cfg.eps, depth=k)
        return
    for item in net_coverage_failures(approx):
        rep.fail("net_coverage", point=item)
    for e in approx.undecided:
        rep.sections.setdefault("undecided_ends", []).append(e.to_json())
    rep.sections["completion"] = approx.to_json()
    rep.sections["ends"] = len(approx.end_points)
    rep.sections["net_size"] = len(approx.net)
    rep.dot = _glued_dot(glued, highlight=set(approx.net))


def cmd_kettlebell(cfg, obj, rep: Report):
    system = _need_tree(obj, "kettlebell")
    k = max(system.tree.distances()[v] // 2 for v in system.tree.v_nodes)
    metrics = assign_shrinking(system)
    report = compare_limits(system, metrics, k, samples=cfg.samples, seed=cfg.seed)
    for c in report.failures:
        rep.fail("limit", **c)
    rep.sections["limits"] = report.to_json()
    rep.sections["inconclusive"] = sum(1 for c in report.checks if c["ok"] is None)


def cmd_combine(cfg, obj, rep: Report):
    if not isinstance(obj, SplittingSpec):
        raise UsageError("combine needs a splitting instance")
    spec = obj
    radius = cfg.radius if cfg.radius is not None else 3
    depth = cfg.depth if cfg.depth is not None else required_depth(spec, radius)
    try:
        ball = build_barK(spec, depth, radius)
    except DepthTooSmall as exc:
        rep.refused = f"{exc}"
        rep.sections["required_depth"] = exc.required
        rep.fail("depth_rule", depth=depth, radius=radius, required=exc.required)
        return
    adj = ball.adjacency()
    rep.sections["ball"] = {"depth": depth, "radius": radius, "vertices": len(ball.vertices),
                            "edges": len(ball.edges)}
    # separation by interior Lambda_w
    iw = ball.interior_w()
    for u in iw:
        comps = separation_components(adj, ball.image_of(u))
        if len(comps) < 2:
            rep.fail("lambda_w_separates", w=str(u))
    rep.sections["interior_w"] = len(iw)
    # convexity of K_u images
    images = 0
    for u in ball.unfolding.vertices:
        img = ball.image_of(u)
        if not img:
            continue
        images += 1
        res = convexity_check(adj, img)
        if not res:
            rep.fail("convexity", u=str(u), witness=list(res.witness))
    rep.sections["convexity_images"] = images
    # parabolic forest versus classes
    forest = parabolic_forest(spec, depth, ball.unfolding)
    match = forest_matches_classes(forest, ball)
    if not match["bijective"]:
        rep.fail("forest_bijection", mismatches=match["mismatches"][:10])
    rep.sections["forest"] = {"classes": match["classes"], "components": match["components"]}
    for x1, x2, count in pipe_geodesics_unique(ball):
        rep.fail("pipe_geodesic", pair=[str(x1), str(x2)], count=count)
    # circuits through a fixed junction edge and its base-stabiliser orbit
    edge = fixed_orbit_edge(ball)
    base = circuits_through_edge(adj, edge, cfg.circuit_length)
    orbit = {"edge": list(edge), "counts": dict(base.by_length)}
    order = len(spec.groups[spec.base].table)
    for a in range(1, order):
        m = stabiliser_relabelling(ball, a)
        if not is_ball_automorphism(ball, m):
            rep.fail("stabiliser_automorphism", element=a)
            continue
        img = circuits_through_edge(adj, (m[edge[0]], m[edge[1]]), cfg.circuit_length)
        if img.by_length != base.by_length:
            rep.fail("circuit_orbit_invariance", element=a, counts=dict(img.by_length))
    rep.sections["circuits"] = orbit
    if cfg.check_stability:
        deeper = build_barK(spec, depth + 1, radius)
        counts = circuits_through_edge(deeper.adjacency(), edge, cfg.circuit_length)
        unstable = [n for (n, c), (_, c2) in zip(base.by_length, counts.by_length) if c != c2]
        rep.sections["circuits_deeper"] = dict(counts.by_length)
        if unstable:
            rep.fail("circuit_stability", depth=depth, lengths=unstable)
    est = delta_estimate(adj, [v for v in ball.vertices if ball.ball_dist[v] <= radius - 1],
                         seed=cfg.seed, threads=cfg.threads)
    rep.sections["delta"] = est.to_json()
    rep.dot = ball_to_dot(ball)


def fixed_orbit_edge(ball) -> tuple:
    """The junction edge closest to the centre, smallest id first."""
    junction = [tuple(sorted(e)) for e, k in ball.edge_kind.items() if k == "junction"]
    return min(junction, key=lambda e: (ball.ball_dist[e[0]] + ball.ball_dist[e[1]], e))


def constituent_obstructions(system: TreeSystem) -> list:
    """Constituents whose skeleton has a cut point or a cut pair."""
    out = []
    for v in sorted(system.tree.v_nodes):
        sp = system.constituent[v]
        g = nx.Graph()
        g.add_nodes_from(sp.points)
        g.add_edges_from(tuple(e) for e in sp.skeleton_edges())
        if not nx.is_connected(g) or nx.node_connectivity(g) < 3 and len(sp.points) > 3:
            out.append(v)
    return out


def cmd_decompose(cfg, obj, rep: Report):
    system = _need_tree(obj, "decompose")
    bad = constituent_obstructions(system)
    if bad:
        rep.refused = f"constituents with cut points or cut pairs: {', '.join(bad)}"
        rep.fail("constituent_precondition", nodes=bad)
        return
    metrics, glued = _shrunk(system, cfg.threads)
    adj = as_adjacency(glued)
    try:
        W = inseparable_cut_pairs(adj)
    except CutVertexError as exc:
        rep.refused = str(exc)
        rep.fail("cut_vertex", vertex=exc.vertex)
        return
    expected = {frozenset(glued.classes_of(w)) for w in system.tree.w_nodes
                if w not in system.tree.frontier}
    found = set(W)
    for p in sorted(expected - found, key=sorted):
        rep.fail("missing_pair", pair=sorted(p))
    for p in sorted(found - expected, key=sorted):
        rep.fail("extra_pair", pair=sorted(p))
    rep.sections["pairs"] = [sorted(p) for p in W]
    corr = {w: glued.classes_of(w) for w in system.tree.w_nodes}
    if W:
        dual = dual_tree(W, separation_oracle(adj), adj)
        if not dual.is_tree():
            rep.fail("dual_not_tree")
        rep.sections["dual_tree"] = dual.to_json()
        rep.dot = dual.to_dot()
    else:
        dual = None
    iso = iso_check(system.tree, dual, corr)
    if not iso.ok:
        rep.fail("isomorphism", mismatch=iso.mismatch, at=None if iso.at is None else str(iso.at))
    rep.sections["isomorphism"] = iso.to_json()


HANDLERS = {"validate": cmd_validate, "shrink": cmd_shrink, "glue": cmd_glue,
            "complete": cmd_complete, "kettlebell": cmd_kettlebell, "combine": cmd_combine,
            "decompose": cmd_decompose}


# ----------------------------------------------------------------------------
# DOT helpers


def _tree_dot(system: TreeSystem) -> str:
    tree = system.tree
    lines = ["graph T {"]
    for v in sorted(tree.v_nodes):
        lines.append(f'  "{v}" [shape=circle];')
    for w in sorted(tree.w_nodes):
        style = ",style=dashed" if w in tree.frontier else ""
        lines.append(f'  "{w}" [shape=box{style}];')
    for v, w in sorted(tree.edges):
        lines.append(f'  "{v}" -- "{w}";')
    return "\n".join(lines + ["}"]) + "\n"


def _glued_dot(glued, highlight=frozenset()) -> str:
    lines = ["graph M {"]
    for c in glued.classes:
        extra = " [style=filled]" if c in highlight else ""
        lines.append(f'  "{c}"{extra};')
    for a, b in sorted(tuple(sorted(e)) for e in glued.space.skeleton_edges()):
        lines.append(f'  "{a}" -- "{b}" [label="{format_rational(glued.d(a, b))}"];')
    return "\n".join(lines + ["}"]) + "\n"


# ----------------------------------------------------------------------------
# driver


def run(cfg: PipelineConfig) -> tuple:
    """Execute one pipeline. Returns (exit status, Report)."""
    obj = parse_instance(cfg.instance, cfg.depth if cfg.command != "combine" else None)
    rep = Report(cfg.command, cfg.instance)
    HANDLERS[cfg.command](cfg, obj, rep)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        ext = {"json": "json", "dot": "dot", "text": "txt"}[cfg.format]
        (out / f"{cfg.command}.{ext}").write_text(rep.render(cfg.format), encoding="utf-8")
        if cfg.format != "json":
            (out / f"{cfg.command}.json").write_text(rep.render("json"), encoding="utf-8")
    return (0 if not rep.failures else 1), rep


def _rational_arg(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bforge", description="Tree systems of cut pairs and combination balls.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--instance", required=True, help="JSON file or bundled:NAME")
    p.add_argument("--depth", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--eps", type=_rational_arg, help="rational such as 3/4")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--circuit-length", type=int, default=8)
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check-stability", action="store_true",
                   help="combine: also compare circuit counts at depth + 1")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig(args.instance, args.command, args.depth, args.radius, args.eps, args.out,
                             args.format, args.threads, args.circuit_length, args.samples, args.seed,
                             args.check_stability)
        status, rep = run(cfg)
    except (InstanceError, UsageError) as exc:
        print(f"bforge: error: {exc}", file=sys.stderr)
        return 2
    if rep.refused:
        print(f"bforge: refused: {rep.refused}", file=sys.stderr)
    if not cfg.out:
        sys.stdout.write(rep.render(cfg.format))
    else:
        print(f"{cfg.command}: {'ok' if status == 0 else f'{len(rep.failures)} failure(s)'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
