"""Scaled reproductions of the two simulation studies, emitted as CSV tables."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy import optimize as sopt

from ..analytics.coefficients import variance_coefficients_full
from ..analytics.interference import ConditionalMoments
from ..builders import build_graph, cluster_sizes, derived_seed, draw_outcomes, lattice_pi
from ..config import as_float, config_hash
from ..designs import DesignSpec, beta_quantile_pi, cluster_based_pi, stratified_pi
from ..errors import InvalidInputError
from ..optimize.qp import SmoothObjective, deterministic_qp
from ..outcomes import OutcomeModel, interference_tensors
from .replicate import replicate

log = logging.getLogger(__name__)

VAR_SHAPE_HEADER = ["lambda", "mean_relative_variance_pct", "q025_pct", "q975_pct", "se_mean_pct", "realizations"]
VAR_SHAPE_DETAIL_HEADER = ["realization", "lambda", "variance", "se_variance", "relative_variance_pct"]
DESIGNS_HEADER = ["realization", "design", "tte", "mean_tau", "bias", "variance", "mse",
                  "se_bias", "se_variance", "se_mse", "degenerate", "conditional_mse"]
IMPROVEMENT_HEADER = ["realization", "baseline", "delta_abs_bias", "delta_variance", "delta_mse"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- calibration


def calibrate_alpha_scale(z, beta, gamma, g, n_t: int, target: float):
    """Scale s so that alpha = s * z gives -V1 / (2 V2) = target.

    V1 is a quadratic polynomial in s (V2 does not involve alpha), so three
    evaluations pin it down exactly; the positive root is then bracketed.
    Returns (s, coefficients at s, converged flag).
    """
    def coeffs(s):
        return variance_coefficients_full(interference_tensors(OutcomeModel(s * z, beta, gamma), g, n_t), g)

    v0, vp, vm = coeffs(0.0), coeffs(1.0), coeffs(-1.0)
    c0 = v0.V1
    c1 = 0.5 * (vp.V1 - vm.V1)
    c2 = 0.5 * (vp.V1 + vm.V1) - c0
    V2 = v0.V2
    h = lambda s: c0 + c1 * s + c2 * s * s + 2 * target * V2
    if V2 <= 0 or h(0.0) <= 0:
        log.warning("calibration target unreachable: V2=%g, h(0)=%g", V2, h(0.0))
        return 0.0, v0, False
    hi = 1.0
    while h(hi) > 0:
        hi *= 2
        if hi > 1e8:
            log.warning("calibration target unreachable for alpha scales below 1e8")
            return 0.0, v0, False
    s = sopt.brentq(h, 0.0, hi, xtol=1e-12, rtol=1e-14)
    return s, coeffs(s), True


# ---------------------------------------------------------------- variance vs shape


def _grid(cfg) -> list[float]:
    return [as_float(x) for x in cfg["var_shape"]["lambda_grid"]]


def _var_shape_realization(cfg: dict, r: int):
    seed = cfg["seed"]
    g = build_graph(cfg["graph"], derived_seed(seed, "graph", r))
    base = draw_outcomes(cfg["outcomes"], g, derived_seed(seed, "outcomes", r))
    n_t = int(round(cfg["treated_fraction"] * g.N))
    info = {"realization": r}
    model = base
    if cfg["var_shape"]["calibrate_alpha"]:
        s, V, ok = calibrate_alpha_scale(base.alpha, base.beta, base.gamma, g, n_t, cfg["var_shape"]["target_ratio"])
        model = OutcomeModel(s * base.alpha, base.beta, base.gamma)
        info.update({"alpha_scale": s, "calibrated": ok, "ratio": -V.V1 / (2 * V.V2) if V.V2 else None,
                     "V": list(V.as_tuple())})
    R = cfg["simulation"]["replications"]
    rep_seed = derived_seed(seed, "replicate", r)
    out = []
    for lam in _grid(cfg):
        pi = lattice_pi(beta_quantile_pi(lam, g.M).pi, g.sizes)
        est = replicate(DesignSpec.permutation(pi), model, g, R, rep_seed, cfg["estimator"])
        out.append((lam, est.variance, est.se_variance))
    return out, info


def reproduce_var_shape(cfg: dict, out_dir: Path | None = None, threads: int | None = None) -> dict:
    """Relative variance (in % of the stratified design) across Beta shapes."""
    threads = threads or cfg.get("threads", 1)
    out_dir = Path(out_dir or cfg["output_dir"])
    grid = _grid(cfg)
    if not any(math.isinf(x) for x in grid):
        raise InvalidInputError("lambda grid must contain inf (the reference design)")
    n_real = cfg["simulation"]["realizations"]
    results = _map(lambda r: _var_shape_realization(cfg, r), list(range(n_real)), threads)
    ref = grid.index(math.inf)
    rel = np.array([[100.0 * v / res[ref][1] for (_, v, _) in res] for res, _ in results])
    detail = []
    for r, (res, _) in enumerate(results):
        for k, (lam, v, se) in enumerate(res):
            detail.append([r, lam, v, se, rel[r, k]])
    summary = []
    for k, lam in enumerate(grid):
        col = rel[:, k]
        sd = float(np.std(col, ddof=1)) if n_real > 1 else 0.0
        summary.append([lam, float(np.mean(col)), float(np.quantile(col, 0.025)),
                        float(np.quantile(col, 0.975)), sd / math.sqrt(n_real), n_real])
    write_csv(out_dir / "fig_var_shape.csv", VAR_SHAPE_HEADER, summary)
    write_csv(out_dir / "fig_var_shape_realizations.csv", VAR_SHAPE_DETAIL_HEADER, detail)
    side = {"command": "repro fig-var-shape", "config_hash": config_hash(cfg), "seed": cfg["seed"],
            "realizations": [info for _, info in results]}
    write_json(out_dir / "fig_var_shape.json", side)
    return {"summary": summary, "detail": detail, "sidecar": side}


# ---------------------------------------------------------------- deterministic comparison


def _comparison_realization(cfg: dict, r: int):
    seed = cfg["seed"]
    dc = cfg["deterministic_comparison"]
    g = build_graph(cfg["graph"], derived_seed(seed, "graph", r))
    model = draw_outcomes(cfg["outcomes"], g, derived_seed(seed, "outcomes", r))
    mean = cfg["treated_fraction"]
    n_t = int(round(mean * g.N))
    tens = interference_tensors(model, g, n_t)
    cm = ConditionalMoments(tens, g)
    obj = SmoothObjective(cm.mse, cm.mse_grad, cm.mse_hess)
    qp = deterministic_qp(obj, g.M, n_t / g.N, sizes=g.sizes, n_t=n_t, seed=derived_seed(seed, "qp", r),
                          vertex_cap=dc["vertex_cap"], extra_random=dc["extra_random"])
    pi_det = qp.pi_snapped
    if dc["randomized"] == "cluster_based":
        pi_rand = cluster_based_pi(g.M, int(round(g.M * mean))).pi
    else:
        pi_rand = stratified_pi(g.M, mean).pi
    designs = {
        "randomized": DesignSpec.permutation(lattice_pi(pi_rand, g.sizes)),
        "deterministic": DesignSpec.deterministic(lattice_pi(pi_det, g.sizes)),
        "rerandomized": DesignSpec.permutation(lattice_pi(pi_det, g.sizes)),
    }
    R = cfg["simulation"]["replications"]
    rep_seed = derived_seed(seed, "replicate", r)
    rows = {}
    for name, spec in designs.items():
        est = replicate(spec, model, g, R, rep_seed, cfg["estimator"])
        cond = cm.mse(pi_det) if name == "deterministic" else math.nan
        rows[name] = (est, cond)
    info = {"realization": r, "qp_objective": qp.objective, "qp_objective_snapped": qp.objective_snapped,
            "starts_tried": qp.starts_tried, "dominated_baselines": qp.dominated_baselines,
            "pi_snapped": [float(v) for v in pi_det]}
    return rows, info


def reproduce_deterministic_comparison(cfg: dict, out_dir: Path | None = None, threads: int | None = None) -> dict:
    threads = threads or cfg.get("threads", 1)
    out_dir = Path(out_dir or cfg["output_dir"])
    sizes = cluster_sizes(cfg["graph"]) if cfg["graph"]["source"] == "sbm" else None
    if sizes is not None and len(set(sizes.tolist())) != 1:
        raise InvalidInputError("the deterministic comparison needs equal cluster sizes")
    n_real = cfg["simulation"]["realizations"]
    results = _map(lambda r: _comparison_realization(cfg, r), list(range(n_real)), threads)
    design_rows, improve_rows = [], []
    for r, (rows, _) in enumerate(results):
        for name in ("randomized", "deterministic", "rerandomized"):
            e, cond = rows[name]
            design_rows.append([r, name, e.tte, e.mean_tau, e.bias, e.variance, e.mse,
                                e.se_bias, e.se_variance, e.se_mse, e.degenerate, cond])
        det = rows["deterministic"][0]
        for base in ("randomized", "rerandomized"):
            b = rows[base][0]
            improve_rows.append([r, base, abs(det.bias) - abs(b.bias), det.variance - b.variance, det.mse - b.mse])
    write_csv(out_dir / "fig_deterministic_designs.csv", DESIGNS_HEADER, design_rows)
    write_csv(out_dir / "fig_deterministic_improvement.csv", IMPROVEMENT_HEADER, improve_rows)
    side = {"command": "repro fig-deterministic", "config_hash": config_hash(cfg), "seed": cfg["seed"],
            "realizations": [info for _, info in results]}
    write_json(out_dir / "fig_deterministic.json", side)
    return {"designs": design_rows, "improvement": improve_rows, "sidecar": side}
