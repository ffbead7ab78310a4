"""Command-line interface.

Exit codes: 0 success, 1 usage or I/O error, 2 assumption violation, 3 non-convergence.
Human-readable summaries go to standard output; machine-readable results go to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, io
from .dynamics import (
    AssumptionViolation,
    BiVirusParams,
    NotConverged,
    SisParams,
    find_equilibrium,
    simulate,
    validate_assumptions,
)
from .hypergraph import (
    DirectedHypergraph,
    cycle_hypergraph,
    cycle_triples,
    pairwise_strongly_connected,
    random_ba_hypergraph,
)
from .learning import learn_all
from .stochastic import compare_meanfield

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which would collide with the assumption code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _vector(text: str, n: int | None = None) -> np.ndarray:
    """Comma-separated numbers, a single number (broadcast to ``n``) or a JSON file path."""
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        vals = np.asarray(json.loads(p.read_text()), dtype=float)
    else:
        try:
            vals = np.array([float(v) for v in text.split(",")], dtype=float)
        except ValueError:
            raise UsageError(f"cannot parse vector {text!r}") from None
    if n is not None and vals.size == 1:
        vals = np.full(n, float(vals[0]))
    if n is not None and vals.size != n:
        raise UsageError(f"expected {n} values, got {vals.size}")
    return vals


def _guard_outputs(args, outputs, inputs) -> None:
    ins = {Path(p).resolve() for p in inputs if p}
    for o in outputs:
        if o and Path(o).resolve() in ins:
            raise UsageError(f"output {o} would overwrite an input file")


def _load(args):
    hg = DirectedHypergraph.load(args.hypergraph)
    return hg, io.load_params(args.params, hg)


def _print_checks(report) -> None:
    for c in report.checks:
        mark = "ok  " if c.holds else "FAIL"
        print(f"  [{mark}] {c.name} (margin {c.margin:.6g})")


# -- subcommands ------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.kind == "ba":
        if args.seed is None:
            raise UsageError("generate ba needs --seed")
        hg = random_ba_hypergraph(args.n, args.m, args.triples, args.seed)
    else:
        hg = cycle_hypergraph(args.n, cycle_triples(args.n) if args.with_triples else ())
    hg.save(args.out)
    print(
        f"wrote {args.out}: n={hg.n}, edges={len(hg.edges)}, "
        f"pairwise strongly connected={pairwise_strongly_connected(hg)}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    _guard_outputs(args, [args.out], [args.hypergraph, args.params])
    hg, params = _load(args)
    x0 = _vector(args.x0, hg.n)
    traj = simulate(params, x0, args.steps, force=args.force)
    io.write_trajectory_csv(args.out, traj)
    print(f"simulated {args.steps} steps; final state {np.array2string(traj.final, precision=6)}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_bivirus(args) -> int:
    _guard_outputs(args, [args.out], [args.hypergraph, args.hypergraph2, args.params1, args.params2])
    hg1 = DirectedHypergraph.load(args.hypergraph)
    hg2 = DirectedHypergraph.load(args.hypergraph2) if args.hypergraph2 else hg1
    p1 = SisParams.from_general(io.load_params(args.params1, hg1))
    p2 = SisParams.from_general(io.load_params(args.params2, hg2))
    params = BiVirusParams(p1, p2)
    x1 = _vector(args.x1, params.n)
    x2 = _vector(args.x2, params.n)
    traj = simulate(params, (x1, x2), args.steps, force=args.force)
    io.write_trajectory_csv(args.out, traj)
    f = traj.final
    print(f"virus 1 final {np.array2string(f[0], precision=6)}")
    print(f"virus 2 final {np.array2string(f[1], precision=6)}")
    if args.report:
        rep = analysis.bivirus_conditions(params)
        Path(args.report).write_text(rep.to_json())
        print(f"wrote {args.report}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    _guard_outputs(args, [args.out], [args.hypergraph, args.params])
    hg, params = _load(args)
    init = None if args.init is None else _vector(args.init, hg.n)
    x = find_equilibrium(params, init, tol=args.tol, max_iters=args.max_iters)
    J = analysis.jacobian(params, x)
    doc = {"equilibrium": x.tolist(), "jacobian_radius": J.radius, "stable": J.stable}
    print(f"equilibrium {np.array2string(x, precision=6)}; rho(J)={J.radius:.6f} ({'stable' if J.stable else 'unstable'})")
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    _guard_outputs(args, [args.out], [args.hypergraph, args.params])
    hg, params = _load(args)
    assumptions = validate_assumptions(params, "strict")
    report = analysis.classify(params, args.smallness_tol)
    print(f"reproduction number rho(I - hD + hB) = {report.rho_reproduction:.6f}")
    print(f"rho(D^-1 B + D^-1 H z) = {report.rho_prop1:.6f}")
    if report.theta is not None:
        print(f"theta = {report.theta:.6g}")
    for c in report.conditions:
        print(f"  [{'ok  ' if c.holds else 'FAIL'}] {c.name} (margin {c.margin:.6g})")
    print(f"classification: {report.classification.value}")
    doc = report.to_dict()
    doc["assumptions"] = assumptions.to_dict()
    if args.doa:
        doc["domains"] = _domains(params)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {args.out}")
    weak = validate_assumptions(params, "weak")
    if not weak.ok:
        print("assumptions violated:")
        _print_checks(weak)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _domains(params) -> list:
    out = []
    for name, fn in (("alpha1", analysis.thm1_alpha1), ("p_plus_healthy", analysis.thm5_healthy_p_plus)):
        try:
            out.append({"name": name, **fn(params).to_dict()})
        except (analysis.PreconditionFailed, ValueError) as exc:
            out.append({"name": name, "error": str(exc)})
    try:
        xbar = find_equilibrium(params)
    except NotConverged as exc:
        out.append({"name": "endemic", "error": str(exc)})
        return out
    if xbar.max() > 1e-9:
        for name, fn in (("alpha2", analysis.thm3_alpha2), ("p_plus_endemic", analysis.thm6_endemic_p_plus)):
            try:
                out.append({"name": name, **fn(params, xbar).to_dict()})
            except (analysis.PreconditionFailed, ValueError) as exc:
                out.append({"name": name, "error": str(exc)})
    return out


def cmd_learn(args) -> int:
    _guard_outputs(args, [args.out], [args.traj, args.hypergraph])
    hg = DirectedHypergraph.load(args.hypergraph)
    traj = io.read_trajectory_csv(args.traj, args.h)
    learned = learn_all(traj, hg, args.h, q=args.q, m=args.m)
    print("node  delta         mu2           mu3           rank_ok  residual")
    for f in learned.fits:
        th = list(f.theta) + [0.0] * (3 - len(f.theta))
        print(f"{f.node + 1:<5} {th[0]:<13.8f} {th[1]:<13.8f} {th[2]:<13.8f} {str(f.rank_ok):<8} {f.residual:.3g}")
    if args.out:
        Path(args.out).write_text(learned.to_json())
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    _guard_outputs(args, [args.out], [args.hypergraph, args.params])
    if args.hypergraph:
        if not args.params:
            raise UsageError("--hypergraph needs --params")
        hg, params = _load(args)
    else:
        if args.n is None or args.graph_seed is None:
            raise UsageError("give --hypergraph/--params or --n with --graph-seed")
        hg = random_ba_hypergraph(args.n, args.m, args.triples, args.graph_seed)
        params = SisParams.from_rates(
            hg, [args.delta] * hg.n, [args.mu2] * hg.n, [args.mu3] * hg.n, args.h
        )
    init = _vector(args.init, hg.n)
    rho = analysis.reproduction_number(params)
    max_err, series = compare_meanfield(params, init, args.steps, args.runs, args.seed)
    io.write_ensemble_csv(args.out, series)
    print(f"rho(I - hD + hB) = {rho:.6f}; runs={args.runs}, seed={args.seed}")
    print(f"max |meanfield - monte carlo| = {max_err:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypersis", description="Mean-field SIS contagion on directed hypergraphs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a hypergraph JSON file")
    g.add_argument("kind", choices=["ba", "cycle"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, default=3, help="BA attachment count")
    g.add_argument("--triples", type=int, default=0, help="number of random third-order edges (ba)")
    g.add_argument("--with-triples", action="store_true", help="add (i; i+1, i+2) triples (cycle)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="iterate the mean-field map")
    s.add_argument("--hypergraph", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--x0", required=True, help="comma list, scalar or JSON file")
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--force", action="store_true", help="step even if assumptions fail (no clamping)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bivirus", help="iterate the competing two-virus map")
    b.add_argument("--hypergraph", required=True)
    b.add_argument("--hypergraph2", help="hypergraph of virus 2 (default: same as virus 1)")
    b.add_argument("--params1", required=True)
    b.add_argument("--params2", required=True)
    b.add_argument("--x1", required=True)
    b.add_argument("--x2", required=True)
    b.add_argument("--steps", type=int, required=True)
    b.add_argument("--force", action="store_true")
    b.add_argument("--report", help="also write the two-virus condition report JSON")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bivirus)

    e = sub.add_parser("equilibrium", help="find an equilibrium with the fixed-point map")
    e.add_argument("--hypergraph", required=True)
    e.add_argument("--params", required=True)
    e.add_argument("--init", help="start (default all ones: the largest equilibrium)")
    e.add_argument("--tol", type=float, default=1e-12)
    e.add_argument("--max-iters", type=int, default=1_000_000)
    e.add_argument("--out")
    e.set_defaults(func=cmd_equilibrium)

    a = sub.add_parser("analyze", help="threshold conditions and regime classification")
    a.add_argument("--hypergraph", required=True)
    a.add_argument("--params", required=True)
    a.add_argument("--smallness-tol", type=float, default=None)
    a.add_argument("--doa", action="store_true", help="also compute domains of attraction")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    lp = sub.add_parser("learn", help="recover rates from a trajectory")
    lp.add_argument("--traj", required=True)
    lp.add_argument("--hypergraph", required=True)
    lp.add_argument("--h", type=float, required=True)
    lp.add_argument("--q", type=int, default=0)
    lp.add_argument("--m", type=int, default=None)
    lp.add_argument("--out")
    lp.set_defaults(func=cmd_learn)

    c = sub.add_parser("compare", help="mean-field against Monte Carlo")
    c.add_argument("--hypergraph")
    c.add_argument("--params")
    c.add_argument("--n", type=int)
    c.add_argument("--m", type=int, default=3)
    c.add_argument("--triples", type=int, default=0)
    c.add_argument("--graph-seed", type=int)
    c.add_argument("--delta", type=float, default=1.0)
    c.add_argument("--mu2", type=float, default=0.1)
    c.add_argument("--mu3", type=float, default=0.0)
    c.add_argument("--h", type=float, default=0.1)
    c.add_argument("--init", default=str(1 / 3), help="per-node initial infection probabilities")
    c.add_argument("--steps", type=int, default=1000)
    c.add_argument("--runs", type=int, required=True)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AssumptionViolation as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        if exc.report is not None:
            _print_checks(exc.report)
        return EXIT_ASSUMPTION
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
