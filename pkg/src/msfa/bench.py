"""Baseline estimators and the Monte-Carlo comparison harness.

One VAR model is drawn per master seed. Each replication simulates a panel per
sample size, runs every estimator in the roster and scores squared Frobenius
errors against the model's exact correlation and cluster-RV matrices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .exceptions import ValidationError
from .global_factor import cov_to_corr, fit_global, whole_network_cov
from .layout import NetworkLayout, TimeSeriesPanel, center_panel
from .local_factor import BIC, Fixed, VarianceThreshold
from .rv import RvMatrix, _rv_from_index_sets, rv_from_covariance, rv_matrix_clusters
from .simulate import SimulationSpec, build_modular_var, ground_truth, simulate_series


def _centered(panel) -> np.ndarray:
    if not isinstance(panel, TimeSeriesPanel):
        panel = TimeSeriesPanel(panel)
    return center_panel(panel).data


def sample_covariance(panel) -> np.ndarray:
    Y = _centered(panel)
    return Y.T @ Y / Y.shape[0]


def sample_correlation(panel) -> np.ndarray:
    """Correlation of the centered panel (divisor ``T``)."""
    return cov_to_corr(sample_covariance(panel))


def ledoit_wolf_shrinkage(panel) -> tuple[np.ndarray, float]:
    """Ledoit-Wolf (2004) shrinkage towards a scaled identity.

    Returns the shrunk covariance and the shrinkage intensity ``b^2 / d^2``.
    """
    Y = _centered(panel)
    T, N = Y.shape
    S = Y.T @ Y / T
    mu = np.trace(S) / N
    target_dev = S.copy()
    target_dev[np.diag_indices_from(target_dev)] -= mu
    d2 = np.sum(target_dev**2) / N
    # (1/T^2) sum_t ||y_t y_t' - S||_F^2 / N, expanded to avoid T outer products
    sq = np.sum(Y**2, axis=1)
    b2_bar = (np.sum(sq**2) / T - np.sum(S**2)) / (T * N)
    b2 = min(b2_bar, d2)
    delta = 0.0 if d2 == 0 else b2 / d2
    shrunk = (1 - delta) * S
    shrunk[np.diag_indices_from(shrunk)] += delta * mu
    return shrunk, float(delta)


def ledoit_wolf(panel) -> np.ndarray:
    return ledoit_wolf_shrinkage(panel)[0]


def mean_series_rv(panel, layout: NetworkLayout, level: str = "cluster") -> RvMatrix:
    """RV matrix using each cluster's cross-node average as a one-factor block."""
    Y = _centered(panel)
    means = np.column_stack([Y[:, list(c)].mean(axis=1) for c in layout.clusters])
    if level == "cluster":
        sets = [np.array([r]) for r in range(layout.num_clusters)]
        names = layout.cluster_names
    elif level == "network":
        sets = [np.asarray(m, dtype=int) for m in layout.networks]
        names = layout.network_names
    else:
        raise ValidationError(f"level must be 'cluster' or 'network', got {level!r}")
    C = cov_to_corr(means.T @ means / means.shape[0])
    return _rv_from_index_sets(C, sets, level, names)


def frobenius_sq_error(A, B) -> float:
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.sum((A - B) ** 2))


# -- roster -------------------------------------------------------------------


@dataclass(frozen=True)
class RosterEntry:
    """One estimator in a benchmark.

    ``kind`` is one of ``sample``, ``ledoit_wolf``, ``mean_rv`` or ``msfa``; the
    ``msfa`` kind takes exactly one of ``tau``, ``n_factors`` or ``bic``.
    """

    kind: str
    tau: Optional[float] = None
    n_factors: Optional[int] = None
    bic: bool = False
    max_factors: Optional[int] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in {"sample", "ledoit_wolf", "mean_rv", "msfa"}:
            raise ValidationError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "msfa":
            n_set = (self.tau is not None) + (self.n_factors is not None) + bool(self.bic)
            if n_set != 1:
                raise ValidationError("msfa needs exactly one of tau, n_factors, bic")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind != "msfa":
            return self.kind
        if self.tau is not None:
            return f"msfa_tau{self.tau:g}"
        if self.n_factors is not None:
            return f"msfa_m{self.n_factors}"
        return "msfa_bic"

    def selection(self):
        if self.tau is not None:
            return VarianceThreshold(self.tau, self.max_factors)
        if self.n_factors is not None:
            return Fixed(self.n_factors)
        return BIC(self.max_factors)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("tau", "n_factors", "max_factors", "label"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.bic:
            d["bic"] = True
        return d

    @classmethod
    def from_dict(cls, doc) -> "RosterEntry":
        if isinstance(doc, str):
            return cls(kind=doc)
        return cls(**doc)


def estimate(entry: RosterEntry, panel: TimeSeriesPanel, layout: NetworkLayout):
    """Run one estimator; returns ``(correlation or None, cluster RV or None)``."""
    if entry.kind == "sample":
        S = sample_covariance(panel)
        return cov_to_corr(S), rv_from_covariance(S, layout).values
    if entry.kind == "ledoit_wolf":
        S = ledoit_wolf(panel)
        return cov_to_corr(S), rv_from_covariance(S, layout).values
    if entry.kind == "mean_rv":
        return None, mean_series_rv(panel, layout).values
    fit = fit_global(center_panel(panel), layout, entry.selection())
    return cov_to_corr(whole_network_cov(fit)), rv_matrix_clusters(fit).values


DEFAULT_ROSTER = (
    RosterEntry("sample"),
    RosterEntry("ledoit_wolf"),
    RosterEntry("mean_rv"),
    RosterEntry("msfa", tau=0.5),
    RosterEntry("msfa", tau=0.75),
)


@dataclass(frozen=True)
class BenchConfig:
    spec: SimulationSpec
    sample_sizes: tuple[int, ...] = tuple(range(50, 251, 25))
    n_replications: int = 100
    roster: tuple[RosterEntry, ...] = DEFAULT_ROSTER
    master_seed: int = 0
    burn_in: int = 500
    keep_raw: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(t) for t in self.sample_sizes))
        object.__setattr__(self, "roster", tuple(
            r if isinstance(r, RosterEntry) else RosterEntry.from_dict(r) for r in self.roster))

    def validate(self) -> "BenchConfig":
        self.spec.validate()
        if self.n_replications < 1:
            raise ValidationError("n_replications must be >= 1")
        if not self.sample_sizes or min(self.sample_sizes) < 2:
            raise ValidationError("every sample size must be >= 2")
        if not self.roster:
            raise ValidationError("empty estimator roster")
        names = [r.name for r in self.roster]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate estimator names in roster: {names}")
        return self

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "sample_sizes": list(self.sample_sizes),
            "n_replications": self.n_replications,
            "roster": [r.to_dict() for r in self.roster],
            "master_seed": self.master_seed,
            "burn_in": self.burn_in,
            "keep_raw": self.keep_raw,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchConfig":
        doc = dict(doc)
        spec_doc = doc.pop("spec")
        spec = SimulationSpec.from_dict(spec_doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown bench config keys: {sorted(unknown)}")
        return cls(spec=spec, **doc)


@dataclass(frozen=True)
class BenchRow:
    estimator: str
    T: int
    n_replications: int
    n_failures: int
    corr_error_mean: float
    corr_error_sd: float
    rv_error_mean: float
    rv_error_sd: float


@dataclass(frozen=True)
class BenchResult:
    rows: tuple[BenchRow, ...]
    raw: dict = field(default_factory=dict, repr=False)
    #: seconds per fit; excluded from equality since it is not reproducible
    timings: dict = field(default_factory=dict, repr=False, compare=False)

    def row(self, estimator: str, T: int) -> BenchRow:
        for r in self.rows:
            if r.estimator == estimator and r.T == T:
                return r
        raise KeyError((estimator, T))

    def crossover(self) -> dict:
        """At the largest ``T``: does the sample estimator beat every MSFA variant?"""
        T = max(r.T for r in self.rows)
        at_T = {r.estimator: r.corr_error_mean for r in self.rows if r.T == T}
        msfa = [v for k, v in at_T.items() if k.startswith("msfa")]
        if "sample" not in at_T or not msfa:
            return {"T": T, "sample_beats_msfa": None}
        return {"T": T, "sample_beats_msfa": bool(at_T["sample"] < min(msfa))}

    def to_csv(self) -> str:
        cols = ["estimator", "T", "n_replications", "n_failures", "corr_error_mean",
                "corr_error_sd", "rv_error_mean", "rv_error_sd"]
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(
                repr(getattr(r, c)) if isinstance(getattr(r, c), float) else str(getattr(r, c))
                for c in cols))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        """JSON-ready form; undefined (NaN) errors become ``None``."""
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        raw = {key: {k: [clean(x) for x in xs] for k, xs in rec.items()}
               for key, rec in self.raw.items()}
        return {
            "rows": [{k: clean(v) for k, v in r.__dict__.items()} for r in self.rows],
            "crossover": self.crossover(),
            **({"raw": raw} if raw else {}),
        }


def _replication_seed(master_seed, T, rep) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(1, int(T), int(rep)))


def model_seed(master_seed) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(0,)).generate_state(1)[0])


def _one_replication(model, truth, roster, T, rep, master_seed, burn_in):
    panel = simulate_series(model, T, burn_in=burn_in, seed=_replication_seed(master_seed, T, rep))
    out = {}
    for entry in roster:
        t0 = time.perf_counter()
        try:
            corr, rv = estimate(entry, panel, model.layout)
        except (ValidationError, ArithmeticError, np.linalg.LinAlgError):
            out[entry.name] = None
            continue
        elapsed = time.perf_counter() - t0
        ce = frobenius_sq_error(corr, truth.corr) if corr is not None else math.nan
        re = frobenius_sq_error(rv, truth.rv_clusters) if rv is not None else math.nan
        out[entry.name] = (ce, re, elapsed)
    return T, rep, out


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.all(np.isnan(v)):
        return math.nan, math.nan
    mean = math.fsum(v) / v.size
    if v.size == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1))


def run_benchmark(config: BenchConfig, *, n_jobs=None) -> BenchResult:
    """Run the simulation comparison described by ``config``.

    The model is drawn from ``config.spec`` with its seed replaced by one
    derived from ``config.master_seed``; replication ``(T, rep)`` draws its
    panel from a counter-derived stream, so results do not depend on
    ``n_jobs`` or on which other sample sizes are included.
    """
    config.validate()
    spec = SimulationSpec(**{**config.spec.__dict__, "seed": model_seed(config.master_seed)})
    model = build_modular_var(spec)
    truth = ground_truth(model)
    tasks = [(T, rep) for T in config.sample_sizes for rep in range(config.n_replications)]
    args = (config.roster,)
    if n_jobs in (None, 1):
        results = [_one_replication(model, truth, *args, T, rep, config.master_seed,
                                    config.burn_in) for T, rep in tasks]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_one_replication)(model, truth, *args, T, rep, config.master_seed,
                                      config.burn_in) for T, rep in tasks)
    results.sort(key=lambda x: (x[0], x[1]))
    rows, raw, timings = [], {}, {}
    for entry in config.roster:
        for T in config.sample_sizes:
            recs = [res[entry.name] for t, _, res in results if t == T]
            ok = [r for r in recs if r is not None]
            ce = [r[0] for r in ok]
            re = [r[1] for r in ok]
            cm, cs = _mean_sd(ce)
            rm, rs = _mean_sd(re)
            rows.append(BenchRow(entry.name, T, config.n_replications, len(recs) - len(ok),
                                 cm, cs, rm, rs))
            mean_time = math.fsum(r[2] for r in ok) / len(ok) if ok else math.nan
            timings[f"{entry.name}@{T}"] = mean_time
            if config.keep_raw:
                raw[f"{entry.name}@{T}"] = {"corr_error": ce, "rv_error": re}
    return BenchResult(tuple(rows), raw, timings)
