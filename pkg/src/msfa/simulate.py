"""Modular VAR(1) network simulator with exact ground-truth covariance.

``Y(t) = Phi Y(t-1) + W(t)``, ``W(t) ~ N(0, noise_var * I)``. ``Phi`` has dense
within-cluster blocks, sparse listed between-cluster blocks and zeros
elsewhere, rescaled to a target spectral radius.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import NumericalError, ValidationError
from .global_factor import cov_to_corr
from .io import (
    file_digest, layout_from_dict, layout_to_dict, read_matrix, write_json, write_matrix,
)
from .layout import NetworkLayout, TimeSeriesPanel
from .rv import rv_from_covariance

#: directed block edges (j, k) meaning cluster k drives cluster j, 0-based:
#: Phi_12, Phi_25, Phi_41, Phi_43, Phi_45 of the 5-cluster benchmark
BENCHMARK_EDGES = ((0, 1), (1, 4), (3, 0), (3, 2), (3, 4))

VEC_ORACLE_MAX_N = 64


@dataclass(frozen=True)
class SimulationSpec:
    """Parameters of a modular VAR(1) draw.

    ``within_range`` / ``between_range`` are magnitude ranges; an entry is
    positive with probability ``*_positive_prob`` and negative otherwise.
    Densities are Bernoulli inclusion probabilities.
    """

    layout: NetworkLayout
    edges: tuple[tuple[int, int], ...] = BENCHMARK_EDGES
    within_range: tuple[float, float] = (0.1, 0.9)
    within_density: float = 1.0
    between_range: tuple[float, float] = (0.1, 0.9)
    between_density: float = 0.2
    within_positive_prob: float = 0.5
    between_positive_prob: float = 0.5
    spectral_radius: float = 0.9
    noise_var: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(j), int(k)) for j, k in self.edges))
        object.__setattr__(self, "within_range", tuple(float(x) for x in self.within_range))
        object.__setattr__(self, "between_range", tuple(float(x) for x in self.between_range))

    def validate(self) -> "SimulationSpec":
        self.layout.check()
        if not 0 < self.spectral_radius < 1:
            raise ValidationError(f"spectral_radius must lie in (0, 1), got {self.spectral_radius}")
        for name in ("within_density", "between_density"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValidationError(f"{name} must lie in (0, 1], got {v}")
        for name in ("within_positive_prob", "between_positive_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        for name in ("within_range", "between_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValidationError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        if self.noise_var < 0:
            raise ValidationError("noise_var must be nonnegative")
        R = self.layout.num_clusters
        for j, k in self.edges:
            if not (0 <= j < R and 0 <= k < R) or j == k:
                raise ValidationError(f"edge {(j, k)} is not an off-diagonal cluster pair")
        return self

    def to_dict(self) -> dict:
        return {
            "layout": layout_to_dict(self.layout),
            "edges": [list(e) for e in self.edges],
            "within_range": list(self.within_range),
            "within_density": self.within_density,
            "between_range": list(self.between_range),
            "between_density": self.between_density,
            "within_positive_prob": self.within_positive_prob,
            "between_positive_prob": self.between_positive_prob,
            "spectral_radius": self.spectral_radius,
            "noise_var": self.noise_var,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulationSpec":
        doc = dict(doc)
        layout = layout_from_dict(doc.pop("layout"))
        known = {f for f in cls.__dataclass_fields__} - {"layout"}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown simulation spec keys: {sorted(unknown)}")
        if "edges" in doc:
            doc["edges"] = tuple(tuple(e) for e in doc["edges"])
        return cls(layout=layout, **doc)


def benchmark_layout() -> NetworkLayout:
    """Five contiguous clusters of 25 nodes."""
    return NetworkLayout.from_sizes([25] * 5)


def benchmark_spec(seed: int = 0, **overrides) -> SimulationSpec:
    layout = overrides.pop("layout", benchmark_layout())
    return SimulationSpec(layout=layout, seed=seed, **overrides)


@dataclass(frozen=True, eq=False)
class VarModel:
    """VAR(1) coefficient matrix, isotropic noise variance and layout."""

    phi: np.ndarray = field(repr=False)
    noise_var: float
    layout: NetworkLayout

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def num_nodes(self) -> int:
        return self.phi.shape[0]


MODEL_FILE = "model.json"
PHI_FILE = "phi.bin"


def write_model(directory, model: VarModel) -> list[str]:
    """Write ``model.json`` (noise variance, layout, shape, digest) and binary ``phi.bin``."""
    out = Path(directory)
    write_matrix(out / PHI_FILE, model.phi)
    write_json(out / MODEL_FILE, {
        "phi_file": PHI_FILE,
        "shape": list(model.phi.shape),
        "phi_sha256": file_digest(out / PHI_FILE),
        "noise_var": model.noise_var,
        "spectral_radius": spectral_radius(model.phi),
        "layout": layout_to_dict(model.layout),
    })
    return [MODEL_FILE, PHI_FILE]


def read_model(directory) -> VarModel:
    src = Path(directory)
    with open(src / MODEL_FILE, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{src / MODEL_FILE}: {exc}") from exc
    phi_path = src / doc["phi_file"]
    if file_digest(phi_path) != doc["phi_sha256"]:
        raise ValidationError(f"{phi_path}: digest does not match {MODEL_FILE}")
    phi = read_matrix(phi_path)
    if list(phi.shape) != list(doc["shape"]):
        raise ValidationError(f"{phi_path}: shape {phi.shape} does not match {MODEL_FILE}")
    layout = layout_from_dict(doc["layout"])
    if layout.num_nodes != phi.shape[0]:
        raise ValidationError("layout size does not match the coefficient matrix")
    return VarModel(phi, float(doc["noise_var"]), layout)


def spectral_radius(phi) -> float:
    """Largest eigenvalue modulus of a general square matrix."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValidationError("matrix has non-finite entries")
    if phi.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(phi))))


def _signed_uniform(rng, shape, lo, hi, p_pos):
    mag = rng.uniform(lo, hi, size=shape)
    sign = np.where(rng.random(shape) < p_pos, 1.0, -1.0)
    return mag * sign


def build_modular_var(spec: SimulationSpec) -> VarModel:
    """Draw ``Phi`` and rescale it to ``spec.spectral_radius``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    layout = spec.layout
    N = layout.num_nodes
    phi = np.zeros((N, N))
    idx = [np.asarray(c, dtype=int) for c in layout.clusters]
    for nodes in idx:
        shape = (nodes.size, nodes.size)
        block = _signed_uniform(rng, shape, *spec.within_range, spec.within_positive_prob)
        block *= rng.random(shape) < spec.within_density
        phi[np.ix_(nodes, nodes)] = block
    for j, k in spec.edges:
        shape = (idx[j].size, idx[k].size)
        block = _signed_uniform(rng, shape, *spec.between_range, spec.between_positive_prob)
        block *= rng.random(shape) < spec.between_density
        phi[np.ix_(idx[j], idx[k])] = block
    rho = spectral_radius(phi)
    if rho == 0:
        raise NumericalError("drawn coefficient matrix has zero spectral radius")
    return VarModel(phi * (spec.spectral_radius / rho), spec.noise_var, layout)


def _check_stable(model: VarModel) -> None:
    if spectral_radius(model.phi) >= 1 - 1e-8:
        raise ValidationError("VAR model is not stable (spectral radius >= 1)")


def implied_stationary_cov(model: VarModel, *, rtol: float = 1e-12, max_iter: int = 100
                           ) -> np.ndarray:
    """Solve ``Sigma = Phi Sigma Phi' + noise_var I`` by repeated squaring.

    ``Sigma_{k+1} = Sigma_k + A_k Sigma_k A_k'`` with ``A_{k+1} = A_k^2``
    accumulates ``sum_i Phi^i Sigma_W Phi'^i`` in doubling blocks.
    """
    _check_stable(model)
    N = model.num_nodes
    A = model.phi.copy()
    S = model.noise_var * np.eye(N)
    if model.noise_var == 0:
        return S
    for _ in range(max_iter):
        inc = A @ S @ A.T
        S = S + inc
        if np.linalg.norm(inc) < rtol * np.linalg.norm(S):
            return 0.5 * (S + S.T)
        A = A @ A
    raise NumericalError("Lyapunov squaring iteration did not converge")


def implied_stationary_cov_vec_oracle(model: VarModel) -> np.ndarray:
    """Direct solve of ``vec(Sigma) = (I - Phi kron Phi)^{-1} vec(Sigma_W)``. Testing only."""
    N = model.num_nodes
    if N > VEC_ORACLE_MAX_N:
        raise ValidationError(f"vec oracle limited to N <= {VEC_ORACLE_MAX_N}")
    _check_stable(model)
    A = np.eye(N * N) - np.kron(model.phi, model.phi)
    rhs = (model.noise_var * np.eye(N)).reshape(-1)
    try:
        vec = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular vectorized Lyapunov system") from exc
    # row-major reshape is consistent with kron(Phi, Phi) applied to row-major vec
    return vec.reshape(N, N)


def simulate_series(model: VarModel, T: int, *, burn_in: int = 500, seed=0) -> TimeSeriesPanel:
    """Run the recursion from ``Y(0) = 0`` and return ``T`` post-burn-in rows."""
    if T < 1:
        raise ValidationError("T must be >= 1")
    if burn_in < 0:
        raise ValidationError("burn_in must be >= 0")
    _check_stable(model)
    rng = np.random.default_rng(seed)
    N = model.num_nodes
    total = burn_in + T
    W = rng.standard_normal((total, N)) * np.sqrt(model.noise_var)
    phiT = model.phi.T
    out = np.empty((T, N))
    y = np.zeros(N)
    for t in range(total):
        y = y @ phiT + W[t]
        if t >= burn_in:
            out[t - burn_in] = y
    return TimeSeriesPanel(out)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    cov: np.ndarray
    corr: np.ndarray
    rv_clusters: np.ndarray
    rv_networks: np.ndarray


def ground_truth(model: VarModel) -> GroundTruth:
    S = implied_stationary_cov(model)
    return GroundTruth(
        cov=S,
        corr=cov_to_corr(S),
        rv_clusters=rv_from_covariance(S, model.layout, "cluster").values,
        rv_networks=rv_from_covariance(S, model.layout, "network").values,
    )
