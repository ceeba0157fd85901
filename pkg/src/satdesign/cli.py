"""Command-line entry point: satdesign <command> [--config PATH] [--seed U64] ..."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analytics.coefficients import (
    variance_coefficients_full,
    variance_coefficients_simplified,
)
from .analytics.interference import cond_mse_interference, ConditionalMoments
from .analytics.marginal import bias_regime, marginal_bias_interference
from .analytics.sutva import sutva_cond_mse, sutva_mse_form, sutva_regime
from .builders import build_graph, derived_seed, design_spec, draw_outcomes
from .designs import Mode
from .errors import (
    AssumptionViolationError,
    ConsistencyError,
    InvalidInputError,
    SatDesignError,
    TooLargeError,
    UnsupportedConfigurationError,
)
from .graph import cluster_edge_stats, gamma_prime, write_graph
from .montecarlo.enumerate import enumerate_exact
from .montecarlo.replicate import replicate
from .montecarlo.repro import reproduce_deterministic_comparison, reproduce_var_shape, write_json
from .optimize import (
    QuadraticObjective,
    SmoothObjective,
    beta_shape_search,
    deterministic_qp,
    symmetric_family_optimum,
)
from .outcomes import interference_tensors, sutva_table, write_outcomes
from .stats import central_moments

log = logging.getLogger("satdesign")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
VIOLATIONS = (TooLargeError, AssumptionViolationError, UnsupportedConfigurationError,
              ConsistencyError, InvalidInputError)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(x, "value") and not isinstance(x, (int, str)):
        return x.value
    return x


def _emit(payload: dict, out_dir: Path, name: str) -> None:
    payload = _jsonable(payload)
    write_json(out_dir / name, payload)
    print(json.dumps(payload, indent=2, sort_keys=True))


def _out_dir(args, cfg) -> Path:
    d = Path(args.out or cfg["output_dir"])
    if not d.exists():
        d.mkdir(parents=True)
        log.info("created output directory %s", d)
    return d


def _instance(cfg, base_dir):
    seed = cfg["seed"]
    g = build_graph(cfg["graph"], derived_seed(seed, "graph", 0), base_dir)
    model = draw_outcomes(cfg["outcomes"], g, derived_seed(seed, "outcomes", 0), base_dir)
    n_t = int(round(cfg["treated_fraction"] * g.N))
    return g, model, n_t


def _coefficients(model, g, n_t, tier, warn):
    out = {}
    if tier in ("auto", "full"):
        try:
            out["full"] = variance_coefficients_full(interference_tensors(model, g, n_t), g).as_dict()
        except SatDesignError as exc:
            warn("full", exc)
    if tier in ("auto", "simplified"):
        try:
            out["simplified"] = variance_coefficients_simplified(model, g, n_t).as_dict()
        except SatDesignError as exc:
            warn("simplified", exc)
    return out


# ---------------------------------------------------------------- commands


def cmd_gen_graph(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    g = build_graph(cfg["graph"], derived_seed(cfg["seed"], "graph", 0), base_dir)
    write_graph(g, out / "edges.csv", out / "membership.csv")
    print(json.dumps({"N": g.N, "M": g.M, "edges": int(g.adj.nnz // 2)}))
    return EXIT_OK


def cmd_gen_outcomes(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    g, model, _ = _instance(cfg, base_dir)
    write_outcomes(model, out / "outcomes.csv")
    print(json.dumps({"N": model.N}))
    return EXIT_OK


def cmd_analyze(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    g, model, n_t = _instance(cfg, base_dir)
    warnings_out = []

    def warn(where, exc):
        warnings_out.append({"where": where, "type": type(exc).__name__, "message": str(exc)})

    sutva = not np.any(model.gamma != 0)
    stats = cluster_edge_stats(g)
    rep = {
        "N": g.N, "M": g.M, "n_t": n_t,
        "tier": "sutva" if sutva else "interference",
        "tte": float(model.beta.mean() + model.gamma.mean()),
        "gamma_prime": gamma_prime(g, model.gamma),
        "rho_C": stats.rho_C,
    }
    br = bias_regime(g, model.gamma)
    rep["bias_regime"] = {"regime": br.regime.value, "gamma_prime": br.gamma_prime,
                          "threshold": br.threshold, "minimized_bias": br.minimized_bias}
    if sutva:
        t = sutva_table(model)
        try:
            rep["sutva_regime"] = sutva_regime(t, g, n_t).value
        except SatDesignError as exc:
            warn("sutva_regime", exc)
    tier = cfg["analysis"].get("tier", "auto")
    if tier != "none":
        rep["coefficients"] = _coefficients(model, g, n_t, tier, warn)
    pi = cfg["analysis"].get("pi")
    if pi is not None:
        pi = np.asarray(pi, dtype=float)
        cond = {}
        try:
            if sutva:
                val, _ = sutva_cond_mse(sutva_table(model), pi, g, n_t)
                cond["mse"] = val
            c = cond_mse_interference(interference_tensors(model, g, n_t), pi, g)
            cond.update({"expectation": c.expectation, "bias": c.bias, "variance": c.variance, "mse": c.value})
        except SatDesignError as exc:
            warn("conditional", exc)
        m = central_moments(pi)
        cond["moments"] = m.as_dict()
        try:
            mb = marginal_bias_interference(g, model, m, n_t)
            cond["marginal_expectation"] = mb.expectation
            cond["marginal_bias"] = mb.bias
        except SatDesignError as exc:
            warn("marginal_bias", exc)
        for k, V in rep.get("coefficients", {}).items():
            cond[f"marginal_variance_{k}"] = float(V["V0"] + V["V1"] * m.mu2c + V["V2"] * m.mu2c**2
                                                   + V["V3"] * m.mu3c + V["V4"] * (m.mu4c - m.mu2c**2))
        rep["conditional"] = cond
    rep["warnings"] = warnings_out
    _emit(rep, out, "analysis.json")
    return EXIT_OK


def cmd_optimize(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    g, model, n_t = _instance(cfg, base_dir)
    oc = cfg["optimizer"]
    kind = oc["kind"]
    mean = n_t / g.N
    if kind in ("symmetric", "beta_search"):
        if oc.get("tier", "full") == "full":
            V = variance_coefficients_full(interference_tensors(model, g, n_t), g)
        else:
            V = variance_coefficients_simplified(model, g, n_t)
        if kind == "symmetric":
            res = symmetric_family_optimum(V, mean, g.M)
            payload = {"optimizer": kind, "coefficients": V.as_dict(), **res.as_dict()}
        else:
            grid = [cfgmod.as_float(x) for x in oc.get("lambda_grid", cfg["var_shape"]["lambda_grid"])]
            res = beta_shape_search(V, g.M, grid)
            payload = {"optimizer": kind, "coefficients": V.as_dict(), **res.as_dict()}
    else:
        objective = oc.get("objective", "auto")
        if objective == "auto":
            objective = "sutva_mse" if not np.any(model.gamma != 0) else "interference_mse"
        if objective == "sutva_mse":
            obj = QuadraticObjective.from_form(sutva_mse_form(sutva_table(model), g, n_t))
        else:
            cm = ConditionalMoments(interference_tensors(model, g, n_t), g)
            obj = SmoothObjective(cm.mse, cm.mse_grad, cm.mse_hess)
        res = deterministic_qp(obj, g.M, mean, sizes=g.sizes, n_t=n_t, seed=derived_seed(cfg["seed"], "qp", 0),
                               vertex_cap=oc["vertex_cap"], extra_random=oc["extra_random"],
                               threads=args.threads or cfg["threads"])
        payload = {"optimizer": kind, "objective_kind": objective, **res.as_dict()}
    _emit(payload, out, "optimize.json")
    return EXIT_OK


def cmd_simulate(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    g, model, n_t = _instance(cfg, base_dir)
    spec = design_spec(cfg["design"], g, cfg["treated_fraction"])
    R = cfg["simulation"]["replications"]
    s = replicate(spec, model, g, R, derived_seed(cfg["seed"], "replicate", 0), cfg["estimator"],
                  threads=args.threads or cfg["threads"])
    _emit({"design_mode": spec.mode.value, "estimator": cfg["estimator"], **s.as_dict()}, out, "simulate.json")
    return EXIT_OK


def cmd_enumerate(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    g, model, n_t = _instance(cfg, base_dir)
    spec = design_spec(cfg["design"], g, cfg["treated_fraction"])
    limit = args.limit if args.limit is not None else cfg["enumerate"]["limit"]
    if spec.mode is Mode.INDEPENDENT:
        res = enumerate_exact(None, model, g, Mode.INDEPENDENT, cfg["estimator"], limit=limit,
                              distribution=spec.distribution)
    else:
        res = enumerate_exact(spec.pi, model, g, spec.mode, cfg["estimator"], limit=limit)
    _emit({"design_mode": spec.mode.value, **res.as_dict()}, out, "enumerate.json")
    return EXIT_OK


def cmd_repro(args, cfg, base_dir):
    out = _out_dir(args, cfg)
    threads = args.threads or cfg["threads"]
    if args.figure == "fig-var-shape":
        reproduce_var_shape(cfg, out, threads)
        print(str(out / "fig_var_shape.csv"))
    else:
        reproduce_deterministic_comparison(cfg, out, threads)
        print(str(out / "fig_deterministic_designs.csv"))
    return EXIT_OK


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "gen-outcomes": cmd_gen_outcomes,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "enumerate": cmd_enumerate,
    "repro": cmd_repro,
}


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--config", type=Path, help="YAML run configuration", **kw)
    p.add_argument("--seed", type=int, help="overrides the config seed", **kw)
    p.add_argument("--threads", type=int, help="worker thread cap", **kw)
    p.add_argument("--out", type=Path, help="output directory", **kw)
    p.add_argument("--limit", type=int, help="enumeration limit", **kw)
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit", **kw)
    p.add_argument("-v", "--verbose", action="store_true", **kw)


def build_parser() -> argparse.ArgumentParser:
    # flags are accepted before or after the command; the sub-parsers use
    # SUPPRESS defaults so they never overwrite values given earlier
    p = argparse.ArgumentParser(prog="satdesign", description=__doc__)
    _add_common(p, suppress=False)
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        _add_common(sp, suppress=True)
        if name == "repro":
            sp.add_argument("figure", choices=["fig-var-shape", "fig-deterministic"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None and not args.print_config:
        parser.error("a command is required")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = cfgmod.load(args.config, args.seed)
        if args.threads is not None and args.threads < 1:
            raise InvalidInputError("--threads must be positive")
        if args.print_config:
            sys.stdout.write(cfgmod.dump(cfg))
            return EXIT_OK
        base_dir = args.config.parent if args.config else Path(".")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, cfg, base_dir)
    except TooLargeError as exc:
        print(f"error: {exc} (count={exc.count})", file=sys.stderr)
        return EXIT_VIOLATION
    except VIOLATIONS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (SatDesignError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
