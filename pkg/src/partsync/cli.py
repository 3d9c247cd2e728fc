"""Command-line interface: ``partsync {analyze,simulate,experiment,collapse}``.

Exit codes: 0 success, 1 an experiment ran but missed a threshold,
2 configuration error, 3 capacity limit, 4 numerical failure.
"""
import argparse
import inspect
import json
import os
import sys
import time
from collections import Counter
from itertools import combinations, permutations


from . import kernels
from .config import ConfigError, graph_from_dict, load_json, network_from_dict, scenario_from_dict
from .dynamics import IntegrationError, estimate_decay_rate, integrate
from .experiments import REGISTRY, _jsonable, fit_window, run_experiment
from .graph import collapse_analysis
from .network import (CapacityError, DegenerateConfigurationError, check_condition_A,
                      check_condition_B, check_cut_condition, check_injectivity,
                      so3_quad_condition, so3_triangle_class)

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NUMERIC = 0, 1, 2, 3, 4

GNUPLOT = """set logscale y
set xlabel "t"
set key outside
set datafile separator ","
plot for [c in "{columns}"] "{csv}" using "t":c with lines title c
pause -1
"""


def _yes(flag):
    return "yes" if flag else "no"


def _triangles(net):
    out = []
    edges = set(net.graph.edges)
    for a, b, c in combinations(range(net.k), 3):
        if {(a, b), (a, c), (b, c)} <= edges:
            ys = [net.ref(a, b), net.ref(a, c), net.ref(b, c)]
            out.append({"vertices": [a + 1, b + 1, c + 1], "class": so3_triangle_class(*ys)})
    return out


def _quads(net):
    """Four-agent tests on every (1,2),(1,3),(1,4),(2,3),(2,4) edge pattern."""
    out = []
    edges = set(net.graph.edges)
    has = lambda u, v: (min(u, v), max(u, v)) in edges
    for quad in combinations(range(net.k), 4):
        for a, b, c, d in permutations(quad):
            if a > b or c > d:
                continue
            if all(has(*e) for e in ((a, b), (a, c), (a, d), (b, c), (b, d))):
                ys = [net.ref(*e) for e in ((a, b), (a, c), (a, d), (b, c), (b, d))]
                try:
                    res = so3_quad_condition(*ys)
                except DegenerateConfigurationError:
                    res = {"holds": False, "reason": "degenerate"}
                out.append({"vertices": [a + 1, b + 1, c + 1, d + 1], "holds": res["holds"],
                            "reason": res["reason"]})
    return out


def analyze_network(net):
    """All static checks for a fixed-reference network, as a dict."""
    if not net.fixed:
        raise ConfigError("analyze needs fixed references")
    rep = {"injectivity": check_injectivity(net), "cut": check_cut_condition(net),
           "condition_A": check_condition_A(net)}
    if net.space == "SOn":
        B = check_condition_B(net)
        B.pop("L_V")
        rep["condition_B"] = B
        if net.n == 3:
            rep["triangles"] = _triangles(net)
            rep["quads"] = _quads(net)
    col = collapse_analysis(net.graph)
    rep["collapse"] = {"reducible": col["reducible"], "remaining": len(col["final"].vertices),
                       "trace": col["trace"]}
    return rep


def _table(rep):
    rows = [("injective", _yes(rep["injectivity"]["injective"])),
            ("cut condition", _yes(rep["cut"]["holds"])),
            ("condition_A", f"{_yes(rep['condition_A']['holds'])} "
                            f"(rank {rep['condition_A']['rank']}/{rep['condition_A']['required']})")]
    if "condition_B" in rep:
        b = rep["condition_B"]
        rows.append(("condition_B", f"{_yes(b['holds'])} (rank {b['rank']}/{b['required']})"))
    tris = rep.get("triangles", [])
    if len(tris) == 1:
        rows.append((f"triangle {tris[0]['vertices']}", tris[0]["class"]))
    elif tris:
        counts = Counter(t["class"] for t in tris)
        rows.append(("triangles", ", ".join(f"{c} {counts[c]}" for c in sorted(counts))))
    quads = rep.get("quads", [])
    if quads:
        rows.append(("quad condition", f"{sum(q['holds'] for q in quads)}/{len(quads)} hold"))
    c = rep["collapse"]
    rows.append(("collapse", "single vertex" if c["reducible"]
                 else f"{c['remaining']} vertices remain"))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _write_json(path, obj):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2)


def _emit_gnuplot(csv_path, columns=("f_s", "f_o", "f_oe")):
    script = os.path.splitext(csv_path)[0] + ".gp"
    with open(script, "w") as fh:
        fh.write(GNUPLOT.format(columns=" ".join(columns), csv=os.path.basename(csv_path)))
    return script


def cmd_analyze(args):
    obj = load_json(args.config)
    net = network_from_dict(obj.get("network", obj))
    rep = analyze_network(net)
    print(_table(rep))
    if args.out:
        _write_json(os.path.join(args.out, "analyze.json"), rep)
    return EXIT_OK


def cmd_simulate(args):
    obj = load_json(args.config)
    net, spec, X0, output = scenario_from_dict(obj, args.seed, args.horizon, args.step)
    out = args.out or output or "."
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "trajectory.csv")
    t0 = time.perf_counter()
    summary = {"config": os.path.abspath(args.config), "seed": args.seed, "backend": kernels.BACKEND}
    try:
        traj = integrate(X0, net, spec)
    except IntegrationError as exc:
        exc.trajectory.to_csv(csv_path)
        summary.update({"error": str(exc), "last_t": exc.trajectory.times[-1]})
        _write_json(os.path.join(out, "summary.json"), summary)
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    traj.to_csv(csv_path)
    summary["final"] = traj.summary()
    win = fit_window(traj)
    summary["decay_f_o"] = estimate_decay_rate(traj, "f_o", win) if win else None
    summary["decay_f_s"] = estimate_decay_rate(traj, "f_s")
    summary["runtime_s"] = time.perf_counter() - t0
    _write_json(os.path.join(out, "summary.json"), summary)
    if args.emit_gnuplot:
        _emit_gnuplot(csv_path)
    for name, value in summary["final"].items():
        print(f"{name:>9}  {value:.6e}")
    return EXIT_OK


def _overrides(name, args):
    params = set(inspect.signature(REGISTRY[name]).parameters)
    kw = {"case": args.case} if name == "sweep" else {}
    for value, key, flag in ((args.horizon, "T", "--horizon"), (args.step, "h", "--step")):
        if value is None:
            continue
        if key not in params:
            raise ConfigError(f"experiment {name!r} does not accept {flag}")
        kw[key] = value
    return kw


def cmd_experiment(args):
    if args.name not in REGISTRY:
        raise ConfigError(f"unknown experiment {args.name!r}; choose from {sorted(REGISTRY)}")
    rep = run_experiment(args.name, args.seed, **_overrides(args.name, args))
    folder = rep.save(args.out)
    if args.emit_gnuplot:
        for path in rep.csv_paths:
            _emit_gnuplot(path)
    for check, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {check}")
    print(f"report: {os.path.join(folder, 'report.json')}  ({rep.runtime:.1f} s)")
    return EXIT_OK if rep.passed else EXIT_THRESHOLD


def cmd_collapse(args):
    G = graph_from_dict(load_json(args.config))
    res = collapse_analysis(G)
    for step in res["trace"]:
        verts = [v + 1 for v in step["vertices"]]
        print(f"{step['rule']:<11} {verts} -> {step['into'] + 1}")
    print("single vertex" if res["reducible"]
          else f"not reducible: {len(res['final'].vertices)} vertices remain")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="partsync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="static synchronization checks for a network")
    a.add_argument("--config", required=True)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="integrate a scenario and write its trajectory")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--horizon", type=float)
    s.add_argument("--step", type=float)
    s.add_argument("--emit-gnuplot", action="store_true")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a registered experiment")
    e.add_argument("name")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="results")
    e.add_argument("--case", choices=("A", "B"), default="B")
    e.add_argument("--horizon", type=float)
    e.add_argument("--step", type=float)
    e.add_argument("--emit-gnuplot", action="store_true")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("collapse", help="run the graph collapse algorithm")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_collapse)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError) as exc:
        if isinstance(exc, CapacityError):
            print(f"capacity limit: {exc}", file=sys.stderr)
            return EXIT_CAPACITY
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
