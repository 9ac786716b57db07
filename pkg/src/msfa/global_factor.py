"""Global block factor model assembled from per-cluster fits.

Stacking every cluster's factors gives ``f(t)`` of dimension ``M = sum m_r``
with a block-diagonal mixing matrix, so all between-cluster dependence lives in
the factor covariance ``Sigma_ff``. The whole-network covariance is rebuilt
block by block as ``Q_j Sigma_{f_j f_k} Q_k'`` (plus noise on the diagonal
blocks) without ever forming the dense ``N x M`` mixing matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .exceptions import ValidationError
from .io import layout_from_dict, layout_to_dict
from .layout import NetworkLayout, TimeSeriesPanel, extract_cluster
from .local_factor import LocalFactorFit, Selection, VarianceThreshold, fit_local

DEFAULT_MAX_DENSE_NODES = 20000


@dataclass(frozen=True, eq=False)
class GlobalFactorFit:
    """Assembled multi-scale factor model.

    Use :meth:`from_local_fits` to build one from per-cluster fits; the factor
    covariance and block map are derived there.
    """

    local_fits: tuple[LocalFactorFit, ...]
    layout: NetworkLayout
    factors: np.ndarray = field(repr=False)
    factor_cov: np.ndarray = field(repr=False)
    blocks: tuple[slice, ...] = field(repr=False)

    @classmethod
    def from_local_fits(cls, local_fits, layout: NetworkLayout) -> "GlobalFactorFit":
        local_fits = tuple(local_fits)
        if len(local_fits) != layout.num_clusters:
            raise ValidationError(
                f"{len(local_fits)} local fits for {layout.num_clusters} clusters"
            )
        T = {lf.num_samples for lf in local_fits}
        if len(T) != 1:
            raise ValidationError("local fits disagree on the number of samples")
        for r, lf in enumerate(local_fits):
            if lf.num_nodes != len(layout.clusters[r]):
                raise ValidationError(f"fit {r} has {lf.num_nodes} nodes, cluster has "
                                      f"{len(layout.clusters[r])}")
        (T,) = T
        blocks, start = [], 0
        for lf in local_fits:
            blocks.append(slice(start, start + lf.num_factors))
            start += lf.num_factors
        F = np.hstack([lf.factors for lf in local_fits])
        S = F.T @ F / T
        S = 0.5 * (S + S.T)
        for lf, b in zip(local_fits, blocks):
            S[b, b] = lf.factor_cov
        F.setflags(write=False)
        S.setflags(write=False)
        return cls(local_fits, layout, F, S, tuple(blocks))

    @property
    def num_factors(self) -> int:
        return self.factors.shape[1]

    @property
    def num_samples(self) -> int:
        return self.factors.shape[0]

    @property
    def factors_per_cluster(self) -> tuple[int, ...]:
        return tuple(lf.num_factors for lf in self.local_fits)

    def network_columns(self, s: int) -> np.ndarray:
        """Factor-column indices of network ``s`` in member order (duplicates kept)."""
        return np.concatenate([np.arange(self.blocks[r].start, self.blocks[r].stop)
                               for r in self.layout.networks[s]])

    def network_factors(self, s: int) -> np.ndarray:
        return self.factors[:, self.network_columns(s)]

    def noise_var(self) -> np.ndarray:
        """Per-node residual variances in node-index order."""
        out = np.empty(self.layout.num_nodes)
        for lf, nodes in zip(self.local_fits, self.layout.clusters):
            out[list(nodes)] = lf.noise_var
        return out

    def block_map(self) -> list[dict]:
        return [
            {"cluster": r, "name": self.layout.cluster_names[r],
             "start": b.start, "stop": b.stop}
            for r, b in enumerate(self.blocks)
        ]

    def sign_flipped(self, signs) -> "GlobalFactorFit":
        """Apply a per-cluster diagonal +-1 transform to every (loadings, factors) pair."""
        fits = [lf.sign_flipped(s) for lf, s in zip(self.local_fits, signs)]
        return GlobalFactorFit.from_local_fits(fits, self.layout)


def fit_global(panel, layout: NetworkLayout, selection: Selection = VarianceThreshold(0.5),
               *, n_jobs=None) -> GlobalFactorFit:
    """Fit every cluster and assemble the global model.

    ``panel`` must already be centered. ``n_jobs`` is forwarded to joblib;
    the result does not depend on it.
    """
    layout.check()
    if not isinstance(panel, TimeSeriesPanel):
        panel = TimeSeriesPanel(panel)
    panel.check_layout(layout)
    blocks = [extract_cluster(panel, layout, r) for r in range(layout.num_clusters)]
    if n_jobs in (None, 1):
        fits = [fit_local(Y, selection) for Y in blocks]
    else:
        fits = Parallel(n_jobs=n_jobs)(delayed(fit_local)(Y, selection) for Y in blocks)
    return GlobalFactorFit.from_local_fits(fits, layout)


def _check_index(i, bound, what):
    if not 0 <= i < bound:
        raise ValidationError(f"{what} index {i} out of range 0..{bound - 1}")


def factor_cross_cov(fit: GlobalFactorFit, j: int, k: int) -> np.ndarray:
    """``(1/T) sum_t f_j(t) f_k(t)'`` as stored in the global factor covariance."""
    R = fit.layout.num_clusters
    _check_index(j, R, "cluster")
    _check_index(k, R, "cluster")
    return fit.factor_cov[fit.blocks[j], fit.blocks[k]].copy()


def network_factor_cov(fit: GlobalFactorFit, p: int, q: int) -> np.ndarray:
    """Cross-covariance of the stacked factors of networks ``p`` and ``q``."""
    S = fit.layout.num_networks
    _check_index(p, S, "network")
    _check_index(q, S, "network")
    return fit.factor_cov[np.ix_(fit.network_columns(p), fit.network_columns(q))]


def whole_network_cov(fit: GlobalFactorFit, *, max_nodes: int = DEFAULT_MAX_DENSE_NODES
                      ) -> np.ndarray:
    """``N x N`` covariance assembled blockwise, rows/columns in node-index order."""
    layout = fit.layout
    N = layout.num_nodes
    if N > max_nodes:
        raise ValidationError(f"N={N} exceeds the dense assembly ceiling of {max_nodes}")
    out = np.empty((N, N))
    R = layout.num_clusters
    idx = [np.asarray(c, dtype=int) for c in layout.clusters]
    for j in range(R):
        Qj = fit.local_fits[j].loadings
        for k in range(j, R):
            Qk = fit.local_fits[k].loadings
            block = Qj @ fit.factor_cov[fit.blocks[j], fit.blocks[k]] @ Qk.T
            if j == k:
                block = 0.5 * (block + block.T)
                block[np.diag_indices_from(block)] += fit.local_fits[j].noise_var
                out[np.ix_(idx[j], idx[j])] = block
            else:
                out[np.ix_(idx[j], idx[k])] = block
                out[np.ix_(idx[k], idx[j])] = block.T
    return out


def whole_network_cov_dense(fit: GlobalFactorFit) -> np.ndarray:
    """Reference path: dense ``Q Sigma_ff Q' + Sigma_EE``. Testing only."""
    N, M = fit.layout.num_nodes, fit.num_factors
    Q = np.zeros((N, M))
    for lf, nodes, b in zip(fit.local_fits, fit.layout.clusters, fit.blocks):
        Q[np.ix_(list(nodes), np.arange(b.start, b.stop))] = lf.loadings
    return Q @ fit.factor_cov @ Q.T + np.diag(fit.noise_var())


def cov_to_corr(S) -> np.ndarray:
    """Scale a covariance matrix to unit diagonal."""
    S = np.asarray(S, dtype=float)
    d = np.diag(S)
    if np.any(d <= 1e-15):
        raise ValidationError("covariance has a nonpositive diagonal entry")
    sd = np.sqrt(d)
    C = S / sd[:, None] / sd[None, :]
    C[np.diag_indices_from(C)] = 1.0
    return C


def fit_to_dict(fit: GlobalFactorFit) -> dict:
    return {
        "num_samples": fit.num_samples,
        "layout": layout_to_dict(fit.layout),
        "blocks": fit.block_map(),
        "clusters": [lf.to_dict() for lf in fit.local_fits],
    }


def fit_from_dict(doc: dict) -> GlobalFactorFit:
    layout = layout_from_dict(doc["layout"])
    fits = [LocalFactorFit.from_dict(c) for c in doc["clusters"]]
    return GlobalFactorFit.from_local_fits(fits, layout)
