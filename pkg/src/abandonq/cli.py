"""Command-line entry point.

Exit codes: 0 success, 1 usage/schema/admissibility error, 2 infeasible
model, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .bounds import error_bound
from .chain import build_chain, stationary_vector
from .config import load_config, write_rows
from .distributions import fit_exponential, fit_hyperexp2, ks_statistic
from .errors import ConfigError, Infeasible, InfeasibleBox, NumericalFailure, SchemaError
from .fluid import fluid_measures
from .measures import AbandonmentProb, OfferedSojourn, expected_measure, measure_from_dict
from .optimizer import SizingProblem, build_equity_model, run_algorithm1, \
    verify_epsilon_optimality
from .sim import SimConfig, simulate_measures
from .studies import StudySpec, rel_error, run_study, tertile_labels

log = logging.getLogger("abandonq")

COLUMNS = ["queue_id", "measure", "method", "value", "stderr", "rel_error"]
SUBCOMMANDS = ("evaluate", "simulate", "optimize", "bound", "compare", "fit", "study")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="abandonq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "study", help="JSON configuration file")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--r", type=int, help="approximation order")
        p.add_argument("--knots", type=int, help="PWL knot count")
        p.add_argument("--eps", type=float, help="constraint relaxation")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--scheme", choices=("upper", "midpoint"), help="state assignment rule")
        p.add_argument("--dump-chain", help="write the chain (npz or csv) for debugging")
        p.add_argument("--allow-large", action="store_true", help="permit bounds with r > 8")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _apply_overrides(cfg, args):
    if args.r is not None:
        cfg.r = args.r
    if args.seed is not None:
        cfg.seed = args.seed
    if args.scheme is not None:
        cfg.scheme = args.scheme
    if cfg.optimize is not None:
        if args.knots is not None:
            cfg.optimize["knots"] = args.knots
        if args.eps is not None:
            cfg.optimize["eps"] = args.eps
    if cfg.study is not None:
        if args.seed is not None:
            cfg.study.seed = args.seed
        if args.r is not None:
            cfg.study.r = args.r
        if args.knots is not None:
            cfg.study.knots = args.knots
        if args.eps is not None:
            cfg.study.eps = args.eps
        if args.scheme is not None:
            cfg.study.scheme = args.scheme
    return cfg


def _sim_cfg(cfg, k):
    seed = int(np.random.SeedSequence([cfg.seed, k]).generate_state(1)[0])
    return SimConfig(n=int(cfg.sim["n"]), burn_in=int(cfg.sim["burn_in"]), seed=seed,
                     estimator=cfg.sim["estimator"])


def _dump_path(base, label, many):
    if not many:
        return base
    root, ext = os.path.splitext(base)
    return f"{root}_{label}{ext}"


def cmd_evaluate(cfg, args):
    rows = []
    many = len(cfg.queues) > 1
    for q, mu in zip(cfg.queues, cfg.service_rates()):
        chain = build_chain(q, mu, cfg.r, scheme=cfg.scheme, threads=args.threads)
        sv = stationary_vector(chain)
        if args.dump_chain:
            from .chain import dump_chain

            dump_chain(chain, sv, _dump_path(args.dump_chain, q.label, many))
        for k in cfg.measures:
            rows.append(dict(queue_id=q.label, measure=k.name, method="finite",
                             value=expected_measure(k, q, chain, sv), stderr="", rel_error=""))
    write_rows(os.path.join(args.out, "evaluate.csv"), rows, COLUMNS)


def cmd_simulate(cfg, args):
    rows = []
    for i, (q, mu) in enumerate(zip(cfg.queues, cfg.service_rates())):
        est = simulate_measures(q, mu, cfg.measures, _sim_cfg(cfg, i))
        for k in cfg.measures:
            e = est[k.name]
            lo95, hi95 = e.ci95
            lo99, hi99 = e.ci99
            rows.append(dict(queue_id=q.label, measure=k.name, method="simulation",
                             value=e.value, stderr=e.stderr, rel_error="", ci95_lo=lo95,
                             ci95_hi=hi95, ci99_lo=lo99, ci99_hi=hi99))
    write_rows(os.path.join(args.out, "simulate.csv"), rows,
               COLUMNS + ["ci95_lo", "ci95_hi", "ci99_lo", "ci99_hi"])


def cmd_compare(cfg, args):
    from .measures import finite_measures

    rows = []
    for i, (q, mu) in enumerate(zip(cfg.queues, cfg.service_rates())):
        finite = finite_measures(q, mu, cfg.measures, cfg.r, scheme=cfg.scheme,
                                 threads=args.threads)
        fluid = fluid_measures(q, mu, cfg.measures)
        sim = simulate_measures(q, mu, cfg.measures, _sim_cfg(cfg, i))
        for k in cfg.measures:
            ref = sim[k.name]
            rows.append(dict(queue_id=q.label, measure=k.name, method="simulation",
                             value=ref.value, stderr=ref.stderr, rel_error=""))
            for method, val in (("finite", finite[k.name]), ("fluid", fluid[k.name])):
                rows.append(dict(queue_id=q.label, measure=k.name, method=method, value=val,
                                 stderr="", rel_error=rel_error(val, ref.value)[0]))
            rows.append(dict(queue_id=q.label, measure=k.name, method="diffusion", value="",
                             stderr="", rel_error=""))
    write_rows(os.path.join(args.out, "compare.csv"), rows, COLUMNS)


def _sizing_problem(cfg):
    opt = cfg.optimize
    if opt is None:
        raise SchemaError("optimize needs an 'optimize' section", field="optimize")
    r = int(opt.get("r", cfg.r))
    common = dict(n_knots=int(opt["knots"]), r=r, eps=float(opt["eps"]), scheme=cfg.scheme,
                  mu_min=float(opt.get("mu_min", 0.0)),
                  mu_max=float(opt.get("mu_max", np.inf)), theta=tuple(opt["theta"]))
    if opt["template"] == "generic":
        measures = cfg.measures
        mu_total = opt["mu_total"] if opt["mu_total"] is not None else np.inf
        return SizingProblem(cfg.queues, measures, "generic", p=opt.get("p"), M=opt.get("M"),
                             d=opt.get("d"), mu_total=float(mu_total), **common)
    kind = OfferedSojourn() if opt["template"] == "equity_ost" else AbandonmentProb()
    varsigma = opt["varsigma"] if opt["varsigma"] is not None else np.inf
    return build_equity_model(cfg.queues, kind, float(varsigma), opt["mu_total"], **common)


def cmd_optimize(cfg, args):
    problem = _sizing_problem(cfg)
    sol = run_algorithm1(problem, threads=args.threads)
    if cfg.optimize.get("r_check"):
        verify_epsilon_optimality(sol, problem, int(cfg.optimize["r_check"]),
                                  threads=args.threads)
    lam = problem.intensities
    inten = tertile_labels(lam, ("small", "medium", "large"))
    risk = tertile_labels([q.patience.mean for q in problem.queues], ("high", "medium", "low"))
    rows = []
    for k, q in enumerate(problem.queues):
        for l, m in enumerate(problem.measures):
            rows.append(dict(queue_id=q.label, measure=m.name, intensity=lam[k], mu=sol.mu[k],
                             ratio=sol.mu[k] / lam[k], w=sol.w[k, l],
                             intensity_cluster=inten[k], risk_cluster=risk[k]))
    write_rows(os.path.join(args.out, "solution.csv"), rows,
               ["queue_id", "measure", "intensity", "mu", "ratio", "w", "intensity_cluster",
                "risk_cluster"])
    report = {"template": problem.template, "objective": sol.objective,
              "mu": sol.mu.tolist(), "w": sol.w.tolist(), "slack": sol.slack,
              "heuristic": sol.heuristic, "nodes": sol.info.get("nodes"),
              "verification": sol.verification}
    if problem.template != "generic":
        report.update(Z=sol.Z, w_bar=sol.w_bar, z=sol.z.tolist(),
                      note="measure links use a two-sided band of width eps")
    _write_json(os.path.join(args.out, "solution.json"), report)


def cmd_bound(cfg, args):
    b = cfg.bound or {"r": 7, "measure": "abandonment", "allow_large": False}
    r = args.r if args.r is not None else int(b["r"])
    kind = measure_from_dict(b["measure"])
    reports = []
    for q, mu in zip(cfg.queues, cfg.service_rates()):
        rep = error_bound(q, kind, mu, r, allow_large=args.allow_large or b["allow_large"],
                          threads=args.threads)
        reports.append(json.loads(rep.to_json()))
    _write_json(os.path.join(args.out, "bound.json"), reports)


def cmd_fit(cfg, args):
    f = cfg.fit
    if f is None:
        raise SchemaError("fit needs a 'fit' section", field="fit")
    if "csv" in f:
        samples = np.loadtxt(f["csv"], delimiter=",", ndmin=1)
    else:
        samples = np.asarray(f.get("samples", []), dtype=float)
    if samples.size < 2:
        raise SchemaError("fit needs at least two samples", field="samples")
    out = {}
    for name, dist in (("exponential", fit_exponential(samples)),
                       ("hyperexp2", fit_hyperexp2(samples))):
        d, p = ks_statistic(samples, dist)
        out[name] = {"dist": dist.to_dict(), "ks": d, "p_value": p}
    _write_json(os.path.join(args.out, "fit.json"), out)


def cmd_study(cfg, args):
    spec = cfg.study if cfg is not None and cfg.study is not None else StudySpec()
    if cfg is None:
        if args.seed is not None:
            spec.seed = args.seed
        if args.r is not None:
            spec.r = args.r
    tables = run_study(spec, threads=args.threads)
    for name, rows in tables.items():
        write_rows(os.path.join(args.out, f"{name}.csv"), rows)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v).__name__}")


def _diagnostic(kind, exc):
    d = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "field"):
        if getattr(exc, attr, None) is not None:
            d[attr] = getattr(exc, attr)
    print(json.dumps(d, sort_keys=True), file=sys.stderr)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _diagnostic("usage", exc)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config, require_admissible=args.command != "simulate")
            cfg = _apply_overrides(cfg, args)
        os.makedirs(args.out, exist_ok=True)
        handler = globals()[f"cmd_{args.command}"]
        handler(cfg, args)
    except (Infeasible, InfeasibleBox) as exc:
        _diagnostic("infeasible", exc)
        return 2
    except ConfigError as exc:
        _diagnostic("config", exc)
        return 1
    except NumericalFailure as exc:
        _diagnostic("numerical", exc)
        return 3
    except (OSError, ValueError) as exc:
        _diagnostic("usage", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
