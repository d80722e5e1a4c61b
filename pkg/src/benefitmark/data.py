"""Observed trial data, benefit definitions and analysis configuration.

A trial table holds one row per randomized subject: an identifier, the
assigned treatment (0 = control, 1 = experimental), the observed outcome
and the baseline covariates. Markers under evaluation are themselves
covariates; ``X = (Z, W)`` where ``Z`` is the marker and ``W`` the rest.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError

BINARY_KINDS = ("binary_leq", "binary_lt")
BENEFIT_KINDS = BINARY_KINDS + ("continuous_gap",)
APPROACHES = ("direct", "indirect", "both")
LINKS = ("logit", "probit")

# Strict open bound on the direct-approach scaling factor.
GAMMA_BOUND = 2.0 ** -0.5
GAMMA_FLOOR = GAMMA_BOUND + 1e-6


@dataclass(frozen=True)
class BenefitDefinition:
    """Which potential-outcome pairs ``(y0, y1)`` count as a benefit.

    ``binary_leq`` is ``y0 <= y1``, ``binary_lt`` is ``y0 < y1`` and
    ``continuous_gap`` is ``y1 - y0 > delta``.
    """

    kind: str = "binary_leq"
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in BENEFIT_KINDS:
            raise ValidationError(
                f"unknown benefit kind {self.kind!r}; expected one of {BENEFIT_KINDS}")
        if not math.isfinite(self.delta):
            raise ValidationError("benefit delta must be finite")

    @property
    def outcome_kind(self) -> str:
        return "binary" if self.kind in BINARY_KINDS else "continuous"

    def indicator(self, y0, y1) -> np.ndarray:
        """Vectorized ``I{(y0, y1) in B}`` as an int8 array."""
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        if self.kind in BINARY_KINDS:
            bad = ~(np.isin(y0, (0.0, 1.0)) & np.isin(y1, (0.0, 1.0)))
            if np.any(bad):
                raise ValidationError(
                    f"benefit kind {self.kind} requires binary outcomes in {{0,1}}")
            out = y0 <= y1 if self.kind == "binary_leq" else y0 < y1
        else:
            out = (y1 - y0) > self.delta
        return out.astype(np.int8)


def evaluate_benefit(y0: float, y1: float, definition: BenefitDefinition) -> int:
    """Return 1 if the pair ``(y0, y1)`` is a benefit under ``definition``, else 0."""
    return int(definition.indicator(y0, y1))


@dataclass(frozen=True)
class AnalysisConfig:
    """Knobs for one analysis run.

    Markers are listed in ``marker_columns``; the full covariate vector is the
    markers followed by ``covariate_columns``. ``interaction_columns`` defaults
    to the markers (treatment-by-marker interactions only).
    """

    benefit: BenefitDefinition = field(default_factory=BenefitDefinition)
    marker_columns: tuple = ()
    covariate_columns: tuple = ()
    approach: str = "both"
    link: str = "logit"
    interaction_columns: tuple | None = None
    marker_kinds: Mapping[str, str] | None = None
    gamma_grid: tuple = (GAMMA_FLOOR, 1.0, 2.0, 4.0)
    theta_u_grid: tuple = (0.0, 1.8, 4.0, 8.0)
    pair_fraction: float = 0.01
    bandwidth_exponents: tuple = tuple(range(-5, 6))
    cv_split_fraction: float = 0.5
    bootstrap_replicates: int = 200
    ci_level: float = 0.90
    seed: int = 0
    quadrature_nodes: int = 32

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "marker_columns", tuple(self.marker_columns))
        set_(self, "covariate_columns", tuple(self.covariate_columns))
        set_(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        set_(self, "theta_u_grid", tuple(float(t) for t in self.theta_u_grid))
        set_(self, "bandwidth_exponents", tuple(int(e) for e in self.bandwidth_exponents))
        if self.interaction_columns is not None:
            set_(self, "interaction_columns", tuple(self.interaction_columns))
        if self.marker_kinds is not None:
            set_(self, "marker_kinds", dict(self.marker_kinds))
        self._validate()

    def _validate(self):
        if not self.marker_columns:
            raise ValidationError("at least one marker column is required")
        names = self.covariate_names
        if len(set(names)) != len(names):
            raise ValidationError("marker and covariate columns must be distinct")
        reserved = {"id", "treatment", "outcome"} & set(names)
        if reserved:
            raise ValidationError(f"reserved column names used as covariates: {sorted(reserved)}")
        for col in self.interactions:
            if col not in names:
                raise ValidationError(f"interaction column {col!r} is not a covariate")
        if self.approach not in APPROACHES:
            raise ValidationError(f"approach must be one of {APPROACHES}")
        if self.link not in LINKS:
            raise ValidationError(f"link must be one of {LINKS}")
        for g in self.gamma_grid:
            if not g > GAMMA_BOUND:
                raise ValidationError(
                    f"gamma {g} is not above the identifiability bound 2^-1/2")
        for t in self.theta_u_grid:
            if not (t >= 0 and math.isfinite(t)):
                raise ValidationError(f"theta_u values must be finite and >= 0, got {t}")
        if not 0 < self.pair_fraction <= 1:
            raise ValidationError("pair_fraction must lie in (0, 1]")
        if not self.bandwidth_exponents:
            raise ValidationError("bandwidth_exponents must be nonempty")
        if not 0 < self.cv_split_fraction < 1:
            raise ValidationError("cv_split_fraction must lie in (0, 1)")
        if self.bootstrap_replicates < 0:
            raise ValidationError("bootstrap_replicates must be >= 0")
        if not 0 < self.ci_level < 1:
            raise ValidationError("ci_level must lie in (0, 1)")
        if self.seed < 0:
            raise ValidationError("seed must be an unsigned integer")
        if self.quadrature_nodes < 2:
            raise ValidationError("quadrature_nodes must be >= 2")
        for name, kind in (self.marker_kinds or {}).items():
            if kind not in ("binary", "continuous"):
                raise ValidationError(f"marker kind for {name!r} must be binary or continuous")

    @property
    def covariate_names(self) -> tuple:
        return self.marker_columns + self.covariate_columns

    @property
    def interactions(self) -> tuple:
        if self.interaction_columns is None:
            return self.marker_columns
        return self.interaction_columns

    @property
    def outcome_kind(self) -> str:
        return self.benefit.outcome_kind

    def run_direct(self) -> bool:
        return self.approach in ("direct", "both")

    def run_indirect(self) -> bool:
        return self.approach in ("indirect", "both")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AnalysisConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)} | {"marker_column"}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        if "marker_column" in doc:
            if "marker_columns" in doc:
                raise ValidationError("give either marker_column or marker_columns, not both")
            doc["marker_columns"] = [doc.pop("marker_column")]
        if "benefit" in doc and not isinstance(doc["benefit"], BenefitDefinition):
            doc["benefit"] = BenefitDefinition(**doc["benefit"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(f"malformed config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "AnalysisConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["benefit"] = asdict(self.benefit)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc

    def with_overrides(self, **kwargs) -> "AnalysisConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Validated per-subject trial records.

    ``covariates`` is ``n x d`` with columns ordered as ``covariate_names``
    (markers first). Arrays are read-only.
    """

    ids: tuple
    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple
    marker_names: tuple
    outcome_kind: str
    marker_kinds: Mapping[str, str]

    def __post_init__(self):
        y = np.array(self.outcome, dtype=float)
        t = np.array(self.treatment)
        x = np.array(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = len(self.ids)
        if y.shape != (n,) or t.shape != (n,) or x.shape[0] != n:
            raise ValidationError("outcome, treatment and covariates must have one entry per subject")
        if x.shape[1] != len(self.covariate_names):
            raise ValidationError("covariate matrix width does not match covariate names")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValidationError("missing or non-finite values are not allowed")
        if not np.all(np.isin(t, (0, 1))):
            raise ValidationError("invalid treatment value: treatment must be 0 or 1")
        t = t.astype(np.int8)
        if not (np.any(t == 0) and np.any(t == 1)):
            raise ValidationError("empty treatment arm")
        if self.outcome_kind not in ("binary", "continuous"):
            raise ValidationError("outcome_kind must be binary or continuous")
        if self.outcome_kind == "binary" and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValidationError("binary outcome outside {0,1}")
        for name in self.marker_names:
            if name not in self.covariate_names:
                raise ValidationError(f"column not found: marker {name!r}")
            kind = self.marker_kinds.get(name)
            if kind not in ("binary", "continuous"):
                raise ValidationError(f"marker {name!r} has no valid kind")
            if kind == "binary":
                z = x[:, self.covariate_names.index(name)]
                if not np.all(np.isin(z, (0.0, 1.0))):
                    raise ValidationError(f"binary marker {name!r} has values outside {{0,1}}")
        for arr in (y, t, x):
            arr.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "ids", tuple(str(i) for i in self.ids))
        set_(self, "outcome", y)
        set_(self, "treatment", t)
        set_(self, "covariates", x)
        set_(self, "covariate_names", tuple(self.covariate_names))
        set_(self, "marker_names", tuple(self.marker_names))
        set_(self, "marker_kinds", dict(self.marker_kinds))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n0(self) -> int:
        return int(np.sum(self.treatment == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.treatment == 1))

    def column_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise ValidationError(f"column not found: {name!r}") from None

    def marker(self, name: str) -> np.ndarray:
        return self.covariates[:, self.column_index(name)]

    def subset(self, index: Sequence[int]) -> "TrialDataset":
        """Rows ``index`` (repeats allowed) as a new dataset; ids get a row suffix."""
        index = np.asarray(index, dtype=np.intp)
        ids = tuple(f"{self.ids[i]}#{k}" for k, i in enumerate(index))
        return TrialDataset(
            ids=ids,
            outcome=self.outcome[index],
            treatment=self.treatment[index],
            covariates=self.covariates[index],
            covariate_names=self.covariate_names,
            marker_names=self.marker_names,
            outcome_kind=self.outcome_kind,
            marker_kinds=self.marker_kinds,
        )


def infer_marker_kind(values: Iterable[float]) -> str:
    values = np.asarray(list(values), dtype=float)
    return "binary" if np.all(np.isin(values, (0.0, 1.0))) else "continuous"


def _parse_float(cell: str, column: str, line: int) -> float:
    text = cell.strip()
    if text == "":
        raise ValidationError(f"missing value in column {column!r} at line {line}")
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"non-numeric cell {cell!r} in column {column!r} at line {line}") from None
    if not math.isfinite(value):
        raise ValidationError(f"non-finite value in column {column!r} at line {line}")
    return value


def read_table(path, required: Sequence[str]) -> tuple[list[str], dict[str, list[str]]]:
    """Read a UTF-8 CSV and return (ids, raw string columns) for ``required`` columns."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"data file not found: {path}") from None
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for col in ["id", *required]:
            if col not in header:
                raise ValidationError(f"column not found: {col!r}")
        ids: list[str] = []
        cols: dict[str, list[str]] = {c: [] for c in required}
        for line, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise ValidationError(f"wrong number of fields at line {line}")
            if row["id"].strip() == "":
                raise ValidationError(f"missing value in column 'id' at line {line}")
            ids.append(row["id"].strip())
            for c in required:
                cols[c].append(row[c])
    if not ids:
        raise ValidationError("data file has no rows")
    return ids, cols


def load_trial(path, config: AnalysisConfig) -> TrialDataset:
    """Load and validate a trial CSV according to ``config``."""
    names = list(config.covariate_names)
    ids, raw = read_table(path, ["treatment", "outcome", *names])
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate subject ids")
    treat = [_parse_float(v, "treatment", k + 2) for k, v in enumerate(raw["treatment"])]
    if any(v not in (0.0, 1.0) for v in treat):
        bad = next(v for v in treat if v not in (0.0, 1.0))
        raise ValidationError(f"invalid treatment value {bad:g}: treatment must be 0 or 1")
    y = [_parse_float(v, "outcome", k + 2) for k, v in enumerate(raw["outcome"])]
    x = np.column_stack([
        [_parse_float(v, c, k + 2) for k, v in enumerate(raw[c])] for c in names
    ])
    kinds = dict(config.marker_kinds or {})
    for m in config.marker_columns:
        kinds.setdefault(m, infer_marker_kind(x[:, names.index(m)]))
    return TrialDataset(
        ids=tuple(ids),
        outcome=np.array(y),
        treatment=np.array(treat, dtype=np.int8),
        covariates=x,
        covariate_names=tuple(names),
        marker_names=config.marker_columns,
        outcome_kind=config.outcome_kind,
        marker_kinds=kinds,
    )
