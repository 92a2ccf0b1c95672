"""Experiment configuration: schema validation plus kind-specific completeness checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema

SCHEMA_VERSION = 1
KINDS = ("homog_rate", "corrector_rate", "spde_moments", "mclt_suite", "variance_lemma", "weak_residual")

# dotted paths that must be present for each kind
_REQUIRED = {
    "homog_rate": ("model", "sweep", "dt", "budgets.n_fields", "budgets.n_paths"),
    "corrector_rate": ("model", "sweep"),
    "spde_moments": ("model", "sweep", "dt", "budgets.n_bundles"),
    "mclt_suite": ("budgets.n_samples",),
    "variance_lemma": ("model", "sweep", "dt", "budgets.n_samples"),
    "weak_residual": ("sweep", "dt", "budgets.n_paths", "params.field"),
}
_MIN_SWEEP = {"homog_rate": 4, "corrector_rate": 4, "spde_moments": 1, "variance_lemma": 1, "weak_residual": 1}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds one message per offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def load_schema() -> dict:
    text = resources.files("fkscenery.harness").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    model: Optional[dict] = None
    f: Any = "gaussian"
    t: float = 1.0
    x: Optional[tuple] = None
    sweep: tuple = ()
    dt: Optional[float] = None
    budgets: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: Optional[str] = None
    name: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    @property
    def d(self) -> int:
        if self.model is not None:
            if "d" in self.model:
                return int(self.model["d"])
            if "alphas" in self.model:
                return len(self.model["alphas"])
        return 3

    @property
    def point(self) -> tuple:
        return tuple(self.x) if self.x is not None else (0.0,) * self.d

    @property
    def label(self) -> str:
        return self.name or self.kind

    def resolved(self) -> dict:
        """Plain dict with every default filled in (embedded in reports)."""
        out = asdict(self)
        out["x"] = list(self.point)
        out["sweep"] = list(self.sweep)
        out["output"] = self.output or f"out/{self.label}"
        return out

    def content_hash(self) -> str:
        return git_blob_hash(canonical_json(self.resolved()))


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def git_blob_hash(data: bytes) -> str:
    """Same digest as `git hash-object` for the given bytes."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def build_model(doc: dict):
    """CovarianceModel from a config block; d defaults to len(alphas), else 3."""
    from ..field_models import CovarianceModel

    doc = dict(doc)
    if "d" not in doc:
        doc["d"] = len(doc["alphas"]) if doc.get("alphas") else 3
    return CovarianceModel.from_dict(doc)


def _lookup(raw: dict, dotted: str):
    cur = raw
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def validate_dict(raw: Any) -> ExperimentConfig:
    """Validate before any compute; raises ConfigError listing every problem."""
    schema = load_schema()
    v = jsonschema.Draft202012Validator(schema)
    errors = [
        f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
        for e in sorted(v.iter_errors(raw), key=lambda e: list(e.absolute_path))
    ]
    if errors:
        raise ConfigError(errors)
    kind = raw["kind"]
    for key in _REQUIRED[kind]:
        if _lookup(raw, key) is None:
            errors.append(f"{key.replace('.', '/')}: required for kind {kind!r}")
    sweep = raw.get("sweep", [])
    if any(b >= a for a, b in zip(sweep, sweep[1:])):
        errors.append("sweep: values must be strictly decreasing")
    if kind in _MIN_SWEEP and sweep and len(sweep) < _MIN_SWEEP[kind]:
        errors.append(f"sweep: kind {kind!r} needs at least {_MIN_SWEEP[kind]} points")
    if kind in ("homog_rate", "spde_moments", "variance_lemma", "weak_residual") and any(e > 1 for e in sweep):
        errors.append("sweep: epsilon values must lie in (0, 1]")
    model = raw.get("model")
    if model is not None:
        try:
            build_model(model)
        except (TypeError, ValueError) as exc:
            errors.append(f"model: {exc}")
        if kind == "spde_moments" and model.get("kind") != "product-power":
            errors.append("model/kind: spde_moments needs a product-power base covariance")
        if kind == "homog_rate" and model.get("kind") == "product-power":
            errors.append("model/kind: product-power tails make sigma^2 infinite")
    if "x" in raw and model is not None:
        d = model.get("d", len(model.get("alphas", [])) or 3)
        if len(raw["x"]) != d:
            errors.append(f"x: expected {d} coordinates")
    if kind == "mclt_suite" and raw.get("budgets", {}).get("n_samples", 0) < 10_000:
        errors.append("budgets/n_samples: mclt_suite needs at least 10000 samples")
    if kind == "weak_residual":
        fld = _lookup(raw, "params.field")
        if fld is not None and fld not in ("zero", "constant", "blob"):
            errors.append("params/field: one of 'zero', 'constant', 'blob'")
        if fld == "blob" and model is None:
            errors.append("model: required for a blob field")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        kind=kind,
        seed=int(raw["seed"]),
        model=raw.get("model"),
        f=raw.get("f", "gaussian"),
        t=float(raw.get("t", 1.0)),
        x=tuple(raw["x"]) if "x" in raw else None,
        sweep=tuple(float(s) for s in sweep),
        dt=raw.get("dt"),
        budgets=dict(raw.get("budgets", {})),
        params=dict(raw.get("params", {})),
        output=raw.get("output"),
        name=raw.get("name"),
    )


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"{p}: file not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{p}: invalid JSON ({exc})"]) from None
    return validate_dict(raw)
