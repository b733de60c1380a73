"""Sweeps over system size, scaling fits and result artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy.stats import linregress

from . import __version__
from .bounds import ModelParams, product_bound, theorem_bound
from .errors import InsufficientDataError, InvalidParameterError, ResourceLimitError
from .esseen import DEFAULT_C, verify_esseen
from .lattice import dimension_certificate
from .operators import HamiltonianModel, check_dim, model_from_config
from .spectral import fast_commuting_measure, kolmogorov_distance, spectral_measure, standardize
from .states import DecayFit, ProductState, QuantumState, fit_alpha, state_from_config

CSV_COLUMNS = ("N", "sigma2", "variance_ok", "delta", "esseen_rhs_min", "thm_bound", "runtime_ms")
PATHS = ("auto", "exact", "fast_commuting")


def normalize_name(name: str) -> str:
    return name.replace("-", "_")


# ---------------------------------------------------------------------------
# measures and parameters
# ---------------------------------------------------------------------------

def fast_path_available(model: HamiltonianModel, state: QuantumState) -> bool:
    return isinstance(state, ProductState) and model.is_diagonal() and model.is_commuting()


def compute_measure(model: HamiltonianModel, state: QuantumState, path: str = "auto"):
    """Spectral measure by the requested path; auto prefers the commuting fast path."""
    if path not in PATHS:
        raise InvalidParameterError(f"unknown path {path!r}; choose from {PATHS}")
    if path == "auto":
        path = "fast_commuting" if fast_path_available(model, state) else "exact"
    if path == "fast_commuting":
        return fast_commuting_measure(model, state), path
    check_dim(model.local_dim ** model.n_sites)
    return spectral_measure(model, state), path


def estimate_decay(state: QuantumState, model: HamiltonianModel, convention: str = "eq4") -> DecayFit:
    """Zero decay for product states, otherwise an exponential fit of the correlators."""
    D = model.lattice.geometric_dim
    if isinstance(state, ProductState):
        return DecayFit("exponential", 0.0, 1.0, D)
    conv = "with_min_support" if convention == "eq4" else "without"
    return fit_alpha(state, model.lattice, "exponential", convention=conv, D=D)


def model_params(model: HamiltonianModel, state: QuantumState, sigma: float, c0: float | None = None,
                 decay: DecayFit | None = None, convention: str = "eq4") -> ModelParams:
    """Collect N, D, c_D, R, E, c0, sigma for the bound pipeline.

    Without an explicit c0 the largest admissible value sigma^2 / (E^2 N) is used.
    """
    cert = dimension_certificate(model.lattice)
    N, E = model.n_sites, model.E
    if c0 is None:
        c0 = sigma ** 2 / (E ** 2 * N)
    return ModelParams(N=N, D=cert.D, c_D=max(cert.c_D, 1.0), R=max(model.R, 1), E=E, c0=c0, sigma=sigma,
                       decay=decay, convention=convention, commuting=model.is_commuting(),
                       product=isinstance(state, ProductState))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepConfig:
    model: dict
    state: dict = field(default_factory=lambda: {"kind": "maximally_mixed"})
    n_values: list = field(default_factory=list)
    path: str = "auto"
    seed: int = 0
    out_dir: str | None = None
    C: float = DEFAULT_C
    esseen: bool = True
    esseen_omegas: list | None = None
    esseen_tol: float = 1e-8
    c0: float | None = None
    decay: dict | None = None
    convention: str = "eq4"
    workers: int = 1

    def __post_init__(self):
        self.model = {**self.model, "family": normalize_name(self.model.get("family", "zz_chain"))}
        self.state = {**self.state, "kind": normalize_name(self.state.get("kind", "maximally_mixed"))}
        self.path = normalize_name(self.path)
        if not self.n_values:
            raise InvalidParameterError("the N list must be non-empty")
        ns = [int(n) for n in self.n_values]
        if any(n < 1 for n in ns) or ns != sorted(ns) or len(set(ns)) != len(ns):
            raise InvalidParameterError("the N list must be positive, strictly ascending")
        self.n_values = ns
        if self.path not in PATHS:
            raise InvalidParameterError(f"unknown path {self.path!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidParameterError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps({k: v for k, v in self.to_dict().items() if k not in ("out_dir", "workers")},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class SweepRow:
    N: int
    sigma2: float | None = None
    variance_ok: bool | None = None
    delta: float | None = None
    esseen_rhs_min: float | None = None
    thm_bound: float | None = None
    runtime_ms: float = 0.0
    path: str = ""
    skipped: str | None = None
    bound_variant: str | None = None

    def csv_fields(self) -> list:
        def num(x):
            return "" if x is None else f"{x:.17g}"
        if self.skipped:
            return [str(self.N), "skipped", "skipped", "skipped", "skipped", "skipped", num(self.runtime_ms)]
        return [str(self.N), num(self.sigma2), str(bool(self.variance_ok)).lower(), num(self.delta),
                "" if self.esseen_rhs_min is None else num(self.esseen_rhs_min),
                "not-applicable" if self.thm_bound is None else num(self.thm_bound), num(self.runtime_ms)]


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list
    fit: dict | None = None

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "rows": [asdict(r) for r in self.rows], "fit": self.fit}


def _decay_from_config(d: dict | None, D: int) -> DecayFit | None:
    if d is None:
        return None
    model = d.get("model", "exponential")
    conv = d.get("convention", "with_min_support")
    return DecayFit(model, float(d.get("L0", 1.0)), float(d["rate"]), D, conv)


def compute_row(cfg: SweepConfig, n: int) -> SweepRow:
    t0 = time.perf_counter()
    row = SweepRow(N=n)
    model_cfg = {"seed": cfg.seed, **cfg.model}
    state_cfg = {"seed": cfg.seed + 1, **cfg.state}
    try:
        model = model_from_config(model_cfg, n)
        state = state_from_config(state_cfg, model)
        measure, row.path = compute_measure(model, state, cfg.path)
    except (ResourceLimitError, InvalidParameterError) as exc:
        if cfg.path == "fast_commuting" or isinstance(exc, ResourceLimitError):
            row.skipped = str(exc)
            row.runtime_ms = (time.perf_counter() - t0) * 1e3
            return row
        raise
    std = standardize(measure)
    row.sigma2 = std.sigma ** 2
    row.delta = kolmogorov_distance(std)
    if cfg.esseen:
        omegas = cfg.esseen_omegas or [1.0, 2.0, 5.0, 10.0, math.sqrt(n)]
        row.esseen_rhs_min = verify_esseen(std, omegas, cfg.C, cfg.esseen_tol).min_rhs
    decay = _decay_from_config(cfg.decay, model.lattice.geometric_dim)
    params = model_params(model, state, std.sigma, cfg.c0, decay, cfg.convention)
    row.variance_ok = params.variance_ok
    if params.product and decay is None:
        rep = product_bound(params, cfg.C)
    elif decay is not None:
        rep = theorem_bound(params, C=cfg.C)
    else:
        rep = None
    if rep is not None:
        row.bound_variant = rep.variant
        row.thm_bound = rep.delta_bound
    row.runtime_ms = (time.perf_counter() - t0) * 1e3
    return row


def fit_scaling(rows) -> dict:
    """Least-squares slope of log(delta) against log(N), with its standard error."""
    if isinstance(rows, SweepResult):
        rows = rows.rows
    pts = [(r.N, r.delta) if isinstance(r, SweepRow) else (r[0], r[1]) for r in rows]
    pts = [(n, d) for n, d in pts if d is not None and d > 0]
    if len(pts) < 4:
        raise InsufficientDataError(f"scaling fit needs at least 4 rows with delta > 0, got {len(pts)}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    res = linregress(x, y)
    return {"slope": float(res.slope), "intercept": float(res.intercept), "stderr": float(res.stderr),
            "rows_used": len(pts)}


def run_sweep(cfg: SweepConfig | dict) -> SweepResult:
    if isinstance(cfg, dict):
        cfg = SweepConfig.from_dict(cfg)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda n: compute_row(cfg, n), cfg.n_values))
    else:
        rows = [compute_row(cfg, n) for n in cfg.n_values]
    rows.sort(key=lambda r: r.N)
    try:
        fit = fit_scaling(rows)
    except InsufficientDataError:
        fit = None
    result = SweepResult(cfg, rows, fit)
    if cfg.out_dir:
        write_artifacts(result, cfg.out_dir)
    return result


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(r.csv_fields())


def metadata(cfg: SweepConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed,
            "versions": {"be_lab": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}


def write_artifacts(result: SweepResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "results.csv", "json": out / "results.json", "metadata": out / "metadata.json"}
    write_csv(result.rows, paths["csv"])
    paths["json"].write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True, default=_json_default))
    paths["metadata"].write_text(json.dumps(metadata(result.config), indent=2, sort_keys=True))
    return {k: str(v) for k, v in paths.items()}


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidParameterError(f"cannot read config {path}: {exc}") from exc
