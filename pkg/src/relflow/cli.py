"""Command-line front end: ``relflow COMMAND --config FILE --out DIR``.

Exit codes: 0 success, 1 usage or configuration error, 2 certification
failure (a set that should be a block is not, a search ran out of budget, a
containment check failed, or a demo's expected outcome was not reproduced).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import report as rpt
from .attractor import certify_block_multiflow, describe_pair, find_block_in_neighborhood, is_attractor_block
from .continuation import continuation_check, fatten, robustness_radius
from .errors import BudgetExhausted, ConfigError, NotABlock, RelflowError, SamplingInconsistency
from .grid import check_metric
from .multiflow import (
    check_semigroup,
    classify_multiflow,
    omega_multiflow,
    sample_relation,
)
from .omega import omega as relation_omega
from .relation import FiniteRelation, classify

EXIT_OK, EXIT_USAGE, EXIT_CERT = 0, 1, 2
COMMANDS = ("omega", "classify", "sample", "semigroup", "block", "find-block", "continuation", "demo")
CAVEAT = "claims about all times hold at the sampled times listed in sampled_times"


class UsageError(Exception):
    pass


class _Run:
    """Collects the report and figures of one command invocation."""

    def __init__(self, command, cfg, out, threads, seed, metric):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.threads = threads
        self.seed = seed
        self.metric = metric
        self.space = cfg.grid()
        self.times: list[float] = []
        self.result: dict = {}
        self.failed = False
        self.files: list[str] = []
        self._cache: dict = {}

    def param(self, key, default=None, required=False):
        if key in self.cfg.params:
            return self.cfg.params[key]
        if required:
            raise ConfigError(f"command {self.command!r} needs params.{key}", path=f"params.{key}")
        return default

    def cellset(self, name):
        return self.cfg.cell_set(name, self.space, self._cache)

    def relation(self, spec=None):
        spec = spec if spec is not None else self.param("relation", required=True)
        if "file" in spec:
            path = Path(self.cfg.base_dir) / spec["file"]
            return FiniteRelation.from_text(self.space, path.read_text())
        if "products" in spec:
            return FiniteRelation.from_box_products(
                self.space, [((p[0][0], p[0][1]), (p[1][0], p[1][1])) for p in spec["products"]]
            )
        if "time" in spec:
            t = float(spec["time"])
            self.times.append(t)
            return sample_relation(self.cfg.build_model(), self.space, t)
        raise ConfigError("relation needs one of file, products, time", path="params.relation")

    def figure(self, name, S):
        if S.space.dimension == 2:
            self.files.append(str(rpt.write_cellset_pgm(self.out / f"{name}.pgm", S)))
            self.files.append(str(rpt.write_cellset_svg(self.out / f"{name}.svg", S)))
        elif S.space.dimension == 1:
            self.files.append(str(rpt.write_cellset_pgm(self.out / f"{name}.pgm", S)))

    def report(self, status, error=None) -> dict:
        model = self.cfg.model if isinstance(self.cfg.model, str) else (self.cfg.model or None)
        rep = {
            "schema_version": rpt.REPORT_SCHEMA,
            "command": self.command,
            "config_hash": self.cfg.digest(),
            "grid": self.space.to_dict(),
            "model": model,
            "sampled_times": sorted(set(self.times)),
            "seed": self.seed,
            "metric": self.metric,
            "status": status,
            "caveat": CAVEAT,
            "result": self.result,
            "files": sorted(Path(f).name for f in self.files),
        }
        if error is not None:
            rep["error"] = error
        return rep


def _use_times(run):
    tg = run.cfg.time_grid()
    run.times.extend(tg.samples)
    return tg


def cmd_omega(run: _Run):
    U = run.cellset(run.param("set", required=True))
    if "relation" in run.cfg.params:
        rep = relation_omega(run.relation(), U)
        run.result = rep.to_dict()
        run.figure("omega", rep.omega)
        return
    tg = _use_times(run)
    omega_times = run.param("omega_times")
    if omega_times is not None:
        run.times.extend(float(t) for t in omega_times)
    rep = omega_multiflow(run.cfg.build_model(), run.space, U, tg, omega_times=omega_times,
                          max_iter=int(run.param("max_iter", 256)), threads=run.threads)
    run.result = rep.to_dict()
    run.figure("omega", rep.omega)
    for k, (t, r) in enumerate(rep.per_time.items()):
        run.figure(f"omega_t{k}", r.omega)
    if rep.eventually_confining and not rep.cross_time_equal:
        run.failed = True


def cmd_classify(run: _Run):
    S = run.cellset(run.param("set", required=True))
    if "relation" in run.cfg.params:
        run.result = classify(run.relation(), S, run.param("horizon")).to_dict()
        return
    tg = _use_times(run)
    run.result = classify_multiflow(run.cfg.build_model(), run.space, S, tg, threads=run.threads).to_dict()


def cmd_sample(run: _Run):
    model = run.cfg.build_model()
    times = run.param("times")
    times = [float(t) for t in times] if times is not None else list(_use_times(run).samples)
    run.times.extend(times)
    source = run.param("source")
    src_cell = run.space.cell_of(source) if source is not None else None
    rows = []
    for k, t in enumerate(times):
        rel = sample_relation(model, run.space, t)
        tag = f"t{k}"
        run.files.append(str(rpt.atomic_write(run.out / f"relation_{tag}.txt", rel.to_text())))
        if run.space.dimension == 1:
            run.files.append(str(rpt.write_relation_pgm(run.out / f"relation_{tag}.pgm", rel)))
            run.files.append(str(rpt.write_relation_svg(run.out / f"relation_{tag}.svg", rel)))
        elif src_cell is not None and run.space.dimension == 2:
            run.files.append(str(rpt.write_row_pgm(run.out / f"row_{tag}.pgm", rel, src_cell)))
        entry = {"time": t, "pairs": len(rel), "file": f"relation_{tag}.txt"}
        if src_cell is not None:
            entry["source"] = src_cell
            entry["row"] = rel.row(src_cell).tolist()
        rows.append(entry)
    run.result = {"relations": rows}


def cmd_semigroup(run: _Run):
    s = float(run.param("s", required=True))
    t = float(run.param("t", required=True))
    run.times.extend([s, t, s + t])
    rep = check_semigroup(run.cfg.build_model(), run.space, s, t)
    run.result = rep.to_dict()
    run.failed = not rep.contained


def cmd_block(run: _Run):
    B = run.cellset(run.param("block", required=True))
    if "relation" in run.cfg.params:
        v = is_attractor_block(run.relation(), B)
        run.result = {"is_block": v.is_block,
                      "witnesses": [describe_pair(run.space, x, y) for x, y in v.witnesses]}
        run.failed = not v.is_block
        return
    tg = _use_times(run)
    try:
        cert = certify_block_multiflow(run.cfg.build_model(), run.space, B, tg,
                                       spot_checks=int(run.param("spot_checks", 8)),
                                       seed=run.seed, threads=run.threads)
    except SamplingInconsistency as exc:
        run.result = {"is_block": False, "error": str(exc)}
        run.failed = True
        return
    run.times.extend(cert.spot_check_times)
    run.result = cert.to_dict()
    run.figure("block", B)
    run.figure("attractor", cert.attractor)
    run.failed = not cert.is_block


def cmd_find_block(run: _Run):
    A = run.cellset(run.param("attractor", required=True))
    V = run.cellset(run.param("neighborhood", required=True))
    tg = _use_times(run)
    try:
        cert = find_block_in_neighborhood(run.cfg.build_model(), run.space, A, V, tg,
                                          budget=int(run.param("budget", 64)),
                                          spot_checks=int(run.param("spot_checks", 8)),
                                          seed=run.seed, threads=run.threads)
    except BudgetExhausted as exc:
        run.result = {"found": False, "message": str(exc),
                      "candidate": exc.candidate, "witnesses": exc.witnesses}
        run.failed = True
        return
    run.times.extend(cert.spot_check_times)
    run.result = {"found": True, **cert.to_dict()}
    run.figure("block", cert.block)


def cmd_continuation(run: _Run):
    f = run.relation()
    B = run.cellset(run.param("block", required=True))
    epsilons = [float(e) for e in run.param("epsilons", [])]
    try:
        rob = robustness_radius(f, B, run.metric)
    except NotABlock as exc:
        run.result = {"is_block": False, "message": str(exc),
                      "witnesses": [describe_pair(run.space, x, y) for x, y in exc.witnesses]}
        run.failed = True
        return
    table = []
    for e in epsilons:
        v = continuation_check(f, B, fatten(f, e, run.metric), run.metric)
        table.append({"epsilon": e, "hausdorff": v.epsilon, "still_block": v.is_block,
                      "status": v.status, "witnesses": v.witnesses[:4]})
    run.result = {**rob.to_dict(), "epsilon_tested": [[r["epsilon"], r["still_block"]] for r in table],
                  "checks": table}
    run.files.append(str(rpt.write_csv(
        run.out / "epsilons.csv", ["epsilon", "hausdorff", "still_block", "status"],
        [(r["epsilon"], r["hausdorff"], r["still_block"], r["status"]) for r in table])))


HANDLERS = {
    "omega": cmd_omega,
    "classify": cmd_classify,
    "sample": cmd_sample,
    "semigroup": cmd_semigroup,
    "block": cmd_block,
    "find-block": cmd_find_block,
    "continuation": cmd_continuation,
}


# ---------------------------------------------------------------------------
# demos


def _demo_ce1():
    cfg = {
        "space": {"bounds": [[0, 3]], "resolution": [300]},
        "sets": {"B": {"boxes": [[[1], [2]]]}},
        "params": {
            "relation": {"products": [[[[0.8], [2.1]], [[1.5], [1.5]]], [[[2.1], [2.1]], [[1.5], [3]]]]},
            "block": "B",
            "epsilons": [0.05, 0.08, 0.09, 0.1, 0.15],
        },
    }

    def checks(res, grid):
        slack = 2 * float(grid.pitch[0]) + 1e-12
        status = {r["epsilon"]: r["status"] for r in res["checks"]}
        return {
            "delta_graph_near_0.1": abs(res["delta_graph"] - 0.1) <= slack,
            "delta_image_near_0.5": abs(res["delta_image"] - 0.5) <= slack,
            "guaranteed_at_0.08": status.get(0.08) == "guaranteed",
            "fails_at_0.15": status.get(0.15) == "fail",
        }

    return "continuation", cfg, checks


def _demo_sqrtabs():
    cfg = {
        "space": {"bounds": [[-30, 40]], "resolution": [256]},
        "model": "sqrt-abs",
        "params": {"times": [7.0, 10.0], "source": [-4.0]},
    }

    def checks(res, grid):
        row7 = res["relations"][0]["row"]
        lo, hi = grid.cell_boxes(row7)
        return {"t7_row_from_-4_spans_0_to_2.25": lo.min() <= 0.0 <= hi.max() and lo.min() <= 2.25 <= hi.max()}

    return "sample", cfg, checks


def _demo_wedge():
    cfg = {
        "space": {"bounds": [[-4, 4], [-4, 4]], "resolution": [128, 128]},
        "model": "filippov-wedge",
        "params": {"times": [2.0], "source": [-2.0, 0.0]},
    }

    def checks(res, grid):
        lo, hi = grid.cell_boxes(res["relations"][0]["row"])
        return {"row_hugs_segment": bool(np.all(np.abs((lo[:, 0] + hi[:, 0]) / 2) <= grid.pitch[0])
                                         and lo[:, 1].min() <= -2 and hi[:, 1].max() >= 2)}

    return "sample", cfg, checks


def _demo_rotation():
    cfg = {
        "space": {"bounds": [[-5, 5], [-5, 5]], "resolution": [128, 128]},
        "model": "rotation",
        "times": {"uniform": {"t_max": 4 * math.pi, "count": 64}, "threshold_T": 2 * math.pi},
        "sets": {"U": {"predicate": "4*x**2 + y**2 <= 16"}},
        "params": {"set": "U", "omega_times": [math.pi, math.pi / 3]},
    }

    def checks(res, grid):
        per = list(res["per_time"].values())
        n_u = len(per[0]["omega"])
        return {"ellipse<flower<disk": n_u < len(per[1]["omega"]) < len(res["flow_strict_omega"])}

    return "omega", cfg, checks


def _demo_heart():
    cfg = {
        "space": {"bounds": [[-0.1, 1.06], [-0.36, 0.36]], "resolution": [290, 180]},
        "model": "spiral-contraction",
        "times": {"uniform": {"t_max": 2 * math.pi, "count": 32}, "threshold_T": 1.5 * math.pi},
        "sets": {"heart": {"heart": {}}, "S": {"hull": "heart"}},
        "params": {"set": "S"},
    }

    def checks(res, grid):
        bad = res["failures"].get("strict_confining", [])
        return {"confining": res["confining"],
                "strict_fails_early": any(t <= math.pi for t in bad),
                "strict_late": all(t <= math.pi + 0.1 for t in bad)}

    return "classify", cfg, checks


def _demo_spiral():
    cfg = {
        "space": {"bounds": [[-2.5, 2.5], [-2.5, 2.5]], "resolution": [100, 100]},
        "model": "spiral-contraction",
        "times": {"uniform": {"t_max": 2.0, "count": 16}},
        "sets": {"B": {"disk": {"center": [0, 0], "radius": 1.0}}},
        "params": {"block": "B"},
    }

    def checks(res, grid):
        return {"is_block": res.get("is_block", False), "attractor_nonempty": bool(res.get("attractor"))}

    return "block", cfg, checks


DEMOS = {
    "ce1": _demo_ce1,
    "sqrtabs": _demo_sqrtabs,
    "wedge": _demo_wedge,
    "rotation": _demo_rotation,
    "heart": _demo_heart,
    "spiral": _demo_spiral,
}


# ---------------------------------------------------------------------------
# entry points


def run(command: str, cfg, out, threads: int = 1, seed: int = 0, metric: str | None = None,
        demo: str | None = None) -> int:
    """Execute one command, write its report and figures, return the exit code."""
    out = Path(out)
    checks = None
    if command == "demo":
        if demo not in DEMOS:
            raise UsageError(f"unknown demo {demo!r}; choose from {sorted(DEMOS)}")
        command, raw, checks = DEMOS[demo]()
        cfg = cfgmod.from_dict(raw)
        rpt.atomic_write(out / "config.json", cfg.serialize())
    if command not in HANDLERS:
        raise UsageError(f"unknown command {command!r}")
    metric = check_metric(metric or cfg.params.get("metric", "euclidean"))
    r = _Run(command, cfg, out, threads, seed, metric)
    try:
        HANDLERS[command](r)
    except (ConfigError, UsageError):
        raise
    except SamplingInconsistency as exc:
        r.result = {}
        rpt.write_json(out / "report.json", r.report("certification-failure", f"{type(exc).__name__}: {exc}"))
        return EXIT_CERT
    except RelflowError as exc:
        r.result = {}
        rpt.write_json(out / "report.json", r.report("error", f"{type(exc).__name__}: {exc}"))
        raise
    if checks is not None:
        outcome = checks(r.result, r.space)
        r.result["demo"] = demo
        r.result["demo_checks"] = outcome
        r.failed = r.failed or not all(outcome.values())
    status = "certification-failure" if r.failed else "ok"
    rpt.write_json(out / "report.json", r.report(status))
    return EXIT_CERT if r.failed else EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for per-time checks")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized spot checks")
    common.add_argument("--metric", choices=("euclidean", "chebyshev"), help="product metric")
    parser = _Parser(prog="relflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "demo":
            p.add_argument("name", choices=sorted(DEMOS))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "demo":
            return run("demo", None, args.out, args.threads, args.seed, args.metric, demo=args.name)
        if not args.config:
            raise UsageError("--config is required")
        cfg = cfgmod.load(args.config)
        return run(args.command, cfg, args.out, args.threads, args.seed, args.metric)
    except (ConfigError, UsageError) as exc:
        print(f"relflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RelflowError as exc:
        print(f"relflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, KeyError, ValueError, TypeError) as exc:
        print(f"relflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
