"""
Configuration and data loading.

Units come from a CSV with a header row; the border from a GeoJSON
LineString or a CSV of vertices; optional region polygons from a GeoJSON
FeatureCollection whose features carry the region label as a property.
"""
import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import shapely
import yaml

from .cliff import RegionData, dummy_encode
from .exceptions import DataError, GeometryError
from .geometry import Border
from .gp import Hyperparams
from .late import Scheme

__all__ = [
    "AnalysisConfig",
    "Dataset",
    "LoadReport",
    "load_config",
    "load_dataset",
    "read_border",
    "read_regions",
    "resolve_seed",
    "TEST_NAMES",
    "SEED_ENV",
]

log = logging.getLogger(__name__)

SEED_ENV = "GEORDD_SEED"
TEST_NAMES = ("INV_ANALYTIC", "INV_UNCALIBRATED", "INV", "MLL", "CHI2")
BOOTSTRAP_TESTS = {"INV", "MLL", "CHI2"}


@dataclass
class AnalysisConfig:
    """Everything needed to run an analysis.

    Paths are resolved relative to ``base_dir`` (the config file's folder
    when loaded from disk). ``theta`` fixes the hyperparameters; when it is
    None they are fitted by maximum marginal likelihood from ``theta_init``.
    ``covariate_mode`` is ``"residualize"`` (plug-in coefficient estimate)
    or ``"joint"``.
    """

    units: str = None
    border: str = None
    regions: str = None
    x_col: str = "x"
    y_col: str = "y"
    outcome_col: str = "outcome"
    region_col: str = "region"
    treatment_label: str = "treatment"
    control_label: str = "control"
    covariates: list = field(default_factory=list)
    categorical: list = field(default_factory=list)
    log_outcome: bool = False
    theta: dict = None
    theta_init: dict = None
    n_restarts: int = 5
    covariate_mode: str = "residualize"
    R: int = 100
    delta: float = None
    nu: float = None
    kde_bandwidth: float = None
    B: int = 10000
    seed: int = None
    schemes: list = field(default_factory=lambda: ["UNIF", "INV"])
    tests: list = field(default_factory=lambda: ["INV_ANALYTIC"])
    full_covariance: bool = False
    n_jobs: int = 1
    base_dir: str = "."

    def __post_init__(self):
        self.schemes = [Scheme(str(s).upper()).value for s in self.schemes]
        if "CUSTOM" in self.schemes:
            raise ValueError("the CUSTOM scheme cannot be requested from a config")
        self.tests = [str(t).upper() for t in self.tests]
        bad = [t for t in self.tests if t not in TEST_NAMES]
        if bad:
            raise ValueError(f"unknown tests {bad}; expected a subset of {list(TEST_NAMES)}")
        if int(self.R) < 1:
            raise ValueError(f"R must be at least 1, got {self.R}")
        self.R = int(self.R)
        if self.needs_bootstrap and int(self.B) < 100:
            raise ValueError(f"B must be at least 100 for bootstrap tests, got {self.B}")
        if self.covariate_mode not in ("residualize", "joint"):
            raise ValueError(f"covariate_mode must be 'residualize' or 'joint', "
                             f"got {self.covariate_mode!r}")
        if self.theta is not None:
            Hyperparams(**self.theta)

    @property
    def needs_bootstrap(self):
        return any(t in BOOTSTRAP_TESTS for t in self.tests)

    @property
    def needs_seed(self):
        return self.needs_bootstrap or (self.theta is None and self.n_restarts > 0)

    def path(self, name):
        p = getattr(self, name)
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def hash(self):
        """SHA-256 of the canonical JSON form (paths as given, not resolved)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


def load_config(path):
    """Read a JSON or YAML config file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        raw = yaml.safe_load(text) or {}
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    names = {f.name for f in dataclasses.fields(AnalysisConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    raw.setdefault("base_dir", str(path.parent))
    return AnalysisConfig(**raw)


def resolve_seed(seed, required=True):
    """The given seed, else ``$GEORDD_SEED``; error if neither and ``required``."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{SEED_ENV}={env!r} is not an integer") from None
    if required:
        raise ValueError(f"a seed is required: pass --seed, set 'seed' in the config, "
                         f"or set {SEED_ENV}")
    return None


@dataclass
class LoadReport:
    """Row accounting for one load, with the reason each dropped row was removed."""

    n_rows: int
    n_kept: int
    dropped: dict = field(default_factory=dict)

    @property
    def n_dropped(self):
        return sum(len(v) for v in self.dropped.values())

    def to_dict(self):
        return {"n_rows": self.n_rows, "n_kept": self.n_kept,
                "dropped": {k: len(v) for k, v in sorted(self.dropped.items())},
                "dropped_rows": {k: list(v) for k, v in sorted(self.dropped.items())}}


@dataclass(eq=False)
class Dataset:
    treatment: RegionData
    control: RegionData
    border: Border
    polygons: dict
    report: LoadReport
    covariate_names: list = field(default_factory=list)


def _geojson_geometries(obj):
    t = obj.get("type")
    if t == "FeatureCollection":
        for f in obj.get("features", []):
            yield from _geojson_geometries(f)
    elif t == "Feature":
        yield obj.get("geometry") or {}, obj.get("properties") or {}
    else:
        yield obj, {}


def read_border(path):
    """Border from a GeoJSON LineString or a vertex CSV with ``x,y`` columns."""
    path = Path(path)
    if path.suffix.lower() in (".json", ".geojson"):
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise GeometryError(f"{path}: malformed JSON ({exc})") from exc
        lines = [g for g, _ in _geojson_geometries(obj) if g.get("type") == "LineString"]
        if len(lines) != 1:
            raise GeometryError(f"{path}: expected exactly one LineString, found {len(lines)}")
        verts = lines[0].get("coordinates")
        try:
            return Border(np.asarray(verts, dtype=float)[:, :2])
        except (ValueError, IndexError, TypeError) as exc:
            raise GeometryError(f"{path}: malformed LineString coordinates ({exc})") from exc
    df = pd.read_csv(path)
    missing = {"x", "y"} - set(df.columns)
    if missing:
        raise GeometryError(f"{path}: border CSV lacks columns {sorted(missing)}")
    xy = df[["x", "y"]].apply(pd.to_numeric, errors="coerce")
    bad = np.flatnonzero(~np.isfinite(xy.to_numpy()).all(axis=1))
    if bad.size:
        raise GeometryError(f"{path}: non-numeric border vertex at line(s) "
                            f"{(bad + 2).tolist()}")
    return Border(xy.to_numpy())


def read_regions(path, label_key="region"):
    """Region polygons keyed by label from a GeoJSON FeatureCollection."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: malformed JSON ({exc})") from exc
    out = {}
    for i, (geom, props) in enumerate(_geojson_geometries(obj)):
        if geom.get("type") not in ("Polygon", "MultiPolygon"):
            continue
        if label_key not in props:
            raise GeometryError(f"{path}: feature {i} has no '{label_key}' property")
        try:
            shp = shapely.geometry.shape(geom)
        except Exception as exc:  # shapely raises several types for bad input
            raise GeometryError(f"{path}: feature {i} has malformed geometry ({exc})") from exc
        if not shp.is_valid:
            raise GeometryError(f"{path}: feature {i} polygon is invalid")
        label = str(props[label_key])
        out[label] = shapely.union(out[label], shp) if label in out else shp
    if not out:
        raise GeometryError(f"{path}: no Polygon features found")
    return out


def _numeric(df, col, path):
    raw = df[col]
    num = pd.to_numeric(raw, errors="coerce")
    # text that is present but not a number is a format error, not missing data
    bad = num.isna() & raw.notna() & (raw.astype(str).str.strip() != "")
    if raw.dtype == object:
        bad &= ~raw.astype(str).str.strip().str.lower().isin(["nan", "na", "inf", "-inf"])
    if bad.any():
        lines = (np.flatnonzero(bad.to_numpy()) + 2).tolist()
        raise DataError(f"{path}: column '{col}' has non-numeric values at line(s) "
                        f"{lines[:20]}")
    return num.to_numpy(dtype=float)


def load_dataset(config):
    """Read the input files and partition the units by region.

    Rows with missing or non-finite numeric values (and non-positive
    outcomes when ``log_outcome`` is set) are dropped and reported by line
    number. Units without a region column are labelled by polygon
    containment.
    """
    cfg = config
    path = cfg.path("units")
    if path is None or cfg.path("border") is None:
        raise DataError("config must name both a units CSV and a border file")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    cols = [cfg.x_col, cfg.y_col, cfg.outcome_col] + list(cfg.covariates)
    missing = [c for c in cols + list(cfg.categorical) if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}; found {list(df.columns)}")
    n = len(df)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    border = read_border(cfg.path("border"))
    polygons = read_regions(cfg.path("regions"), cfg.region_col) if cfg.regions else None

    num = {c: _numeric(df.replace({"": np.nan}), c, path) for c in cols}
    keep = np.ones(n, dtype=bool)
    dropped = {}

    def drop(mask, reason):
        new = mask & keep
        if new.any():
            dropped[reason] = (np.flatnonzero(new) + 2).tolist()
            keep[new] = False

    for c in cols:
        drop(~np.isfinite(num[c]), f"non_finite_{c}")
    y = num[cfg.outcome_col]
    if cfg.log_outcome:
        drop(np.isfinite(y) & (y <= 0), "non_positive_outcome")
        with np.errstate(divide="ignore", invalid="ignore"):
            y = np.log(y)
    for c in cfg.categorical:
        drop((df[c].str.strip() == "").to_numpy(), f"missing_{c}")

    X = np.column_stack([num[cfg.x_col], num[cfg.y_col]])
    labels_map = {cfg.treatment_label: "treatment", cfg.control_label: "control"}
    if cfg.region_col in df.columns:
        labels = df[cfg.region_col].astype(str).str.strip().to_numpy()
        unknown = keep & ~np.isin(labels, list(labels_map))
        if unknown.any():
            i = int(np.flatnonzero(unknown)[0])
            raise DataError(
                f"{path}: line {i + 2}: region label {labels[i]!r} is not mapped; "
                f"expected {cfg.treatment_label!r} or {cfg.control_label!r}"
            )
    elif polygons is not None:
        labels = np.full(n, "", dtype=object)
        for lab in (cfg.treatment_label, cfg.control_label):
            if lab not in polygons:
                raise DataError(f"region polygons lack label {lab!r}")
            ok = np.isfinite(X).all(axis=1)
            inside = np.zeros(n, dtype=bool)
            inside[ok] = shapely.contains_xy(polygons[lab], X[ok, 0], X[ok, 1])
            labels[inside & (labels == "")] = lab
        drop(labels == "", "outside_regions")
    else:
        raise DataError(f"{path}: no '{cfg.region_col}' column and no region polygons "
                        "to assign units")

    D, names = None, []
    if cfg.covariates or cfg.categorical:
        parts = [np.column_stack([num[c] for c in cfg.covariates])] if cfg.covariates else []
        names = list(cfg.covariates)
        for c in cfg.categorical:
            dummies, levels = dummy_encode(df[c].to_numpy()[keep])
            full = np.zeros((n, dummies.shape[1]))
            full[keep] = dummies
            parts.append(full)
            names += [f"{c}={lv}" for lv in levels]
        D = np.hstack(parts)

    def region(lab, role):
        m = keep & (labels == lab)
        if not m.any():
            raise DataError(f"{path}: region {lab!r} has no usable units")
        return RegionData(X[m], y[m], None if D is None else D[m], role)

    data_T = region(cfg.treatment_label, "treatment")
    data_C = region(cfg.control_label, "control")
    report = LoadReport(n, int(keep.sum()), dropped)
    if report.n_dropped:
        log.info("dropped %d of %d rows: %s", report.n_dropped, n,
                 {k: len(v) for k, v in dropped.items()})
    polys = None
    if polygons is not None:
        polys = {"treatment": polygons.get(cfg.treatment_label),
                 "control": polygons.get(cfg.control_label)}
    return Dataset(data_T, data_C, border, polys, report, names)
