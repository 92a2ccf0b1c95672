"""run_experiment: dispatch a validated config, write CSV + JSON summary."""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import __version__
from .config import ExperimentConfig, build_model
from .fit import fit_rate

SUMMARY_NAME = "summary.json"

CSV_COLUMNS = {
    "homog_rate": ["epsilon", "n_fields", "n_paths", "err_mean", "err_se", "noise_floor", "seed"],
    "corrector_rate": ["lambda", "quantity", "value"],
    "spde_moments": ["epsilon", "m", "n", "re_mean", "im_mean", "stderr", "n_bundles", "seed"],
    "mclt_suite": ["model", "k", "bound", "bound_se", "lower_estimate", "lower_se", "pass"],
    "variance_lemma": ["epsilon", "t", "mc_value", "mc_se", "exact", "z", "n_samples", "seed"],
    "weak_residual": ["epsilon", "field", "residual", "stderr", "z", "n_paths", "seed"],
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Outcome:
    rows: list
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunReport:
    out_dir: Path
    csv_path: Path
    summary_path: Path
    passed: bool
    checks: tuple


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ------------------------------------------------------------------ kinds


def _corrector_rate(cfg: ExperimentConfig) -> Outcome:
    from .. import corrector as C

    model = build_model(cfg.model)
    funcs = {
        "corrector_energy": lambda lam: C.corrector_energy(lam, model),
        "sigma_lambda2_gap": lambda lam: abs(C.sigma_lambda2_gap(lam, model)),
        "eta_gap": lambda lam: C.eta_gap(lam, model),
    }
    specs = cfg.params.get("quantities", [{"name": "corrector_energy"}])
    out = Outcome(rows=[])
    for spec in specs:
        name = spec["name"]
        if name not in funcs:
            raise ValueError(f"unknown quantity {name!r}")
        vals = [funcs[name](lam) for lam in cfg.sweep]
        out.rows += [dict(**{"lambda": lam}, quantity=name, value=v) for lam, v in zip(cfg.sweep, vals)]
        fm = spec.get("fit", "pure-power")
        fit = fit_rate(list(zip(cfg.sweep, vals)), fm)
        out.fits[name] = fit.to_dict()
        if "expected" in spec:
            tol = float(spec.get("tol", 0.05))
            ok = abs(fit.exponent - spec["expected"]) <= tol
            out.checks.append(Check(f"{name}_exponent", ok, f"{fit.exponent:.4f} vs {spec['expected']} +- {tol}"))
        if fm == "power-with-log" and "spread_tol" in spec:
            ok = fit.ratio_spread <= spec["spread_tol"]
            out.checks.append(
                Check(f"{name}_log_ratio", ok, f"spread {fit.ratio_spread:.4f} <= {spec['spread_tol']}")
            )
    if "sigma2_rtol" in cfg.params:
        s1, s2 = C.sigma2_spatial(model), C.sigma2_spectral(model)
        rel = abs(s1 - s2) / abs(s2)
        out.extra["sigma2"] = {"spatial": s1, "spectral": s2}
        out.checks.append(Check("sigma2_identity", rel <= cfg.params["sigma2_rtol"], f"relative gap {rel:.2e}"))
    return out


def monotone_within_ci(means, ses, z: float = 2.0) -> tuple[bool, str]:
    """No step increases by more than z combined standard errors, and the last value is below the first."""
    bad = []
    for i in range(len(means) - 1):
        if means[i + 1] - means[i] > z * math.hypot(ses[i], ses[i + 1]):
            bad.append(i + 1)
    overall = means[-1] < means[0] - z * math.hypot(ses[0], ses[-1])
    ok = not bad and overall
    detail = "ok" if ok else f"increasing steps at {bad}; overall drop significant: {overall}"
    return ok, detail


def _homog_rate(cfg: ExperimentConfig) -> Outcome:
    from ..corrector import sigma2_spectral
    from ..feynman_kac import homogenization_sweep, initial_from_spec

    model = build_model(cfg.model)
    f = initial_from_spec(cfg.f)
    rows = homogenization_sweep(
        model, f, cfg.t, np.asarray(cfg.point), cfg.sweep, cfg.budgets["n_fields"], cfg.budgets["n_paths"],
        cfg.dt, cfg.seed, gamma=cfg.params.get("gamma", 1.0), L=cfg.params.get("L"),
    )
    out = Outcome(rows=[r.__dict__ for r in rows])
    out.extra["sigma2"] = sigma2_spectral(model)
    out.extra["rms_debiased"] = [r.rms_debiased for r in rows]
    means = [r.err_mean for r in rows]
    ses = [r.err_se for r in rows]
    floor_ok = all(r.noise_floor < r.err_mean for r in rows)
    out.checks.append(
        Check("noise_floor", floor_ok, "noise floor below every error" if floor_ok else "rate fit aborted")
    )
    ok, detail = monotone_within_ci(means, ses, cfg.params.get("monotone_z", 2.0))
    out.checks.append(Check("decreasing", ok, detail))
    lo, hi = cfg.params.get("exponent_range", [0.3, 0.7])
    if floor_ok:
        fit = fit_rate(list(zip(cfg.sweep, means)))
        out.fits["err_mean"] = fit.to_dict()
        out.checks.append(Check("exponent", lo <= fit.exponent <= hi, f"{fit.exponent:.4f} in [{lo}, {hi}]"))
    else:
        out.checks.append(Check("exponent", False, "fit aborted by the noise-floor rule"))
    return out


def _spde_moments(cfg: ExperimentConfig) -> Outcome:
    from ..feynman_kac import initial_from_spec
    from ..spde import SpdeModel, moment_sweep

    base = build_model(cfg.model)
    model = SpdeModel(base.alphas, cfg.params.get("coupling", 1.0), base.variance)
    f = initial_from_spec(cfg.f)
    z = cfg.params.get("z", 3.0)
    out = Outcome(rows=[])
    worst = float("inf")
    for i, (m, n) in enumerate(cfg.params.get("moments", [[1, 0], [1, 1]])):
        rows = moment_sweep(
            model, f, cfg.t, np.asarray(cfg.point), cfg.sweep, m, n, cfg.budgets["n_bundles"], cfg.dt,
            cfg.seed + i, cfg.params.get("richardson", False),
        )
        out.rows += rows
        worst = min(worst, min(r["min_eig"] for r in rows))
        eps_rows = [r for r in rows if r["epsilon"] > 0]
        last = eps_rows[-1]
        ok = abs(last["diff_mean"]) <= z * last["diff_se"]
        out.checks.append(
            Check(
                f"moment_{m}{n}_limit", ok,
                f"eps={last['epsilon']}: diff {last['diff_mean']:.4g} vs {z} SE = {z * last['diff_se']:.4g}",
            )
        )
        gaps = [abs(r["diff_mean"]) for r in eps_rows]
        ok, detail = monotone_within_ci(gaps, [r["diff_se"] for r in eps_rows])
        out.checks.append(Check(f"moment_{m}{n}_monotone", ok, detail))
        out.extra[f"paired_diff_{m}{n}"] = [(r["epsilon"], r["diff_mean"], r["diff_se"]) for r in eps_rows]
    out.checks.append(Check("q_psd", worst >= -1e-9, f"smallest eigenvalue {worst:.3g}"))
    return out


def _mclt_suite(cfg: ExperimentConfig) -> Outcome:
    from ..mclt import MartingaleModel, mclt_suite, shipped_models

    docs = cfg.params.get("models")
    models = [MartingaleModel(**d) for d in docs] if docs else shipped_models()
    reps = mclt_suite(models, cfg.params.get("ks", [0.5, 1.0, 2.0]), cfg.seed, cfg.budgets["n_samples"])
    rows = [dict(r.row(), **{"pass": r.passed}) for r in reps]
    failed = [f"{r.model}/k={r.k}" for r in reps if not r.passed]
    return Outcome(rows=rows, checks=[Check("bound_holds", not failed, f"failed: {failed}" if failed else "all pass")])


def _variance_lemma(cfg: ExperimentConfig) -> Outcome:
    from ..corrector import scenery_variance_exact
    from ..path_engine import scenery_variance_mc

    model = build_model(cfg.model)
    zmax = cfg.params.get("z", 3.0)
    out = Outcome(rows=[])
    for i, eps in enumerate(cfg.sweep):
        mc, se = scenery_variance_mc(
            model, cfg.t, eps, cfg.budgets["n_samples"], cfg.dt, cfg.seed + i, cfg.params.get("n_features", 64)
        )
        exact = scenery_variance_exact(model, model.d, cfg.t, eps)
        z = (mc - exact) / se
        out.rows.append(dict(epsilon=eps, t=cfg.t, mc_value=mc, mc_se=se, exact=exact, z=z,
                             n_samples=cfg.budgets["n_samples"], seed=cfg.seed + i))
        out.checks.append(Check(f"variance_eps_{eps}", abs(z) <= zmax, f"z = {z:.3f}"))
    return out


def _weak_residual(cfg: ExperimentConfig) -> Outcome:
    from ..feynman_kac import ResidualQuadrature, TestFunction, default_period, initial_from_spec, weak_form_residual
    from ..field_models import ConstantField, synthesize_blob_field

    p = cfg.params
    kind = p["field"]
    d = cfg.d
    f = initial_from_spec(cfg.f)
    phi = TestFunction(tuple(p.get("center", [0.0] * d)), float(p.get("radius", 1.0)))
    quad = ResidualQuadrature(p.get("n_space", 9), p.get("n_time", 11))
    zmax = p.get("z", 4.0)
    out = Outcome(rows=[])
    for i, eps in enumerate(cfg.sweep):
        if kind == "zero":
            fld = ConstantField(0.0, d)
        elif kind == "constant":
            fld = ConstantField(float(p.get("value", 1.0)), d)
        else:
            model = build_model(cfg.model)
            L = p.get("L") or default_period(model, cfg.t / eps**2)
            fld = synthesize_blob_field(model, L, cfg.seed + 1000 + i)
        res, se = weak_form_residual(
            fld, f, phi, cfg.t, cfg.budgets["n_paths"], cfg.seed + i, eps, p.get("gamma", 1.0), cfg.dt, quad
        )
        z = res / se if se > 0 else (0.0 if res == 0 else float("inf"))
        out.rows.append(dict(epsilon=eps, field=kind, residual=res, stderr=se, z=z,
                             n_paths=cfg.budgets["n_paths"], seed=cfg.seed + i))
        out.checks.append(Check(f"residual_eps_{eps}", z <= zmax, f"|residual| = {z:.3f} SE"))
    return out


DISPATCH: dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "corrector_rate": _corrector_rate,
    "homog_rate": _homog_rate,
    "spde_moments": _spde_moments,
    "mclt_suite": _mclt_suite,
    "variance_lemma": _variance_lemma,
    "weak_residual": _weak_residual,
}


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[Path] = None) -> RunReport:
    """Run one experiment; writes <kind>.csv and summary.json into the output directory."""
    out_dir = Path(output_dir or cfg.resolved()["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        outcome = DISPATCH[cfg.kind](cfg)
    except Exception as exc:
        raise RuntimeError(f"{cfg.kind} experiment {cfg.label!r} failed: {exc}") from exc
    wall = time.perf_counter() - t0
    csv_path = out_dir / f"{cfg.kind}.csv"
    write_csv(csv_path, CSV_COLUMNS[cfg.kind], outcome.rows)
    passed = all(c.passed for c in outcome.checks)
    summary = {
        "format": "fkscenery-summary",
        "version": 1,
        "package_version": __version__,
        "kind": cfg.kind,
        "name": cfg.label,
        "config": cfg.resolved(),
        "config_hash": cfg.content_hash(),
        "seeds": {"master": cfg.seed},
        "budgets": cfg.budgets,
        "csv": csv_path.name,
        "csv_columns": CSV_COLUMNS[cfg.kind],
        "fits": outcome.fits,
        "checks": [c.__dict__ for c in outcome.checks],
        "passed": passed,
        "extra": outcome.extra,
        "wall_time_s": wall,
        "python": platform.python_version(),
    }
    summary_path = out_dir / SUMMARY_NAME
    summary_path.write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunReport(out_dir, csv_path, summary_path, passed, tuple(outcome.checks))


def load_summaries(out_dir) -> list[dict]:
    """Every summary.json under out_dir (recursively), sorted by path."""
    root = Path(out_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    out = []
    for p in sorted(root.rglob(SUMMARY_NAME)):
        doc = json.loads(p.read_text(encoding="utf-8"))
        if doc.get("format") != "fkscenery-summary":
            raise ValueError(f"{p}: not an experiment summary")
        doc["_path"] = str(p)
        out.append(doc)
    return out
