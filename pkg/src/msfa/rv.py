"""RV-coefficient dependence between clusters and networks, with significance tests.

The RV coefficient of two variable sets is computed on their correlation
blocks (covariances scaled by per-variable standard deviations)::

    RV = tr(C_jk C_kj) / sqrt(tr(C_jj^2) tr(C_kk^2))

Null moments follow the permutation-distribution approximation of Kazi-Aoual
et al. as used by Josse et al. (2008), evaluated on the same standardized
matrices the statistic uses.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .exceptions import NumericalError, ValidationError
from .global_factor import GlobalFactorFit, cov_to_corr
from .layout import NetworkLayout

RANGE_TOL = 1e-10


@dataclass(frozen=True)
class RvMatrix:
    """Symmetric ``K x K`` RV matrix at cluster or network level."""

    values: np.ndarray
    level: str
    names: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class RvTestResult:
    """Standardized-RV test of one pair ``(i, j)``."""

    i: int
    j: int
    rv: float
    e_null: float
    var_null: float
    z: float
    threshold: float
    significant: bool
    level: str = "cluster"

    def to_dict(self) -> dict:
        return asdict(self)


def _standardize(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] < 2:
        raise ValidationError("need at least 2 samples")
    sd = np.sqrt(np.mean(F**2, axis=0))
    if np.any(sd <= 0):
        raise ValidationError("zero-variance factor column")
    return F / sd


def _check_range(rv: float) -> float:
    if rv < -RANGE_TOL or rv > 1 + RANGE_TOL:
        raise NumericalError(f"RV coefficient {rv!r} outside [0, 1]")
    return float(rv)


def _rv_blocks(Cjk, Cjj, Ckk) -> float:
    num = float(np.sum(Cjk * Cjk))
    den = np.sqrt(float(np.sum(Cjj * Cjj)) * float(np.sum(Ckk * Ckk)))
    return _check_range(num / den)


def rv_coefficient(F_j, F_k) -> float:
    """RV coefficient between two ``T x m`` factor matrices.

    Columns are taken as centered; covariances use divisor ``T``.
    """
    Zj, Zk = _standardize(F_j), _standardize(F_k)
    if Zj.shape[0] != Zk.shape[0]:
        raise ValidationError("factor matrices have different lengths")
    T = Zj.shape[0]
    return _rv_blocks(Zj.T @ Zk / T, Zj.T @ Zj / T, Zk.T @ Zk / T)


def _rv_from_index_sets(C, sets, level, names) -> RvMatrix:
    K = len(sets)
    out = np.eye(K)
    for a in range(K):
        for b in range(a + 1, K):
            ia, ib = sets[a], sets[b]
            out[a, b] = out[b, a] = _rv_blocks(
                C[np.ix_(ia, ib)], C[np.ix_(ia, ia)], C[np.ix_(ib, ib)]
            )
    return RvMatrix(out, level, tuple(names))


def rv_matrix_clusters(fit: GlobalFactorFit) -> RvMatrix:
    """Between-cluster RV matrix from the fitted factors."""
    C = cov_to_corr(fit.factor_cov)
    sets = [np.arange(b.start, b.stop) for b in fit.blocks]
    return _rv_from_index_sets(C, sets, "cluster", fit.layout.cluster_names)


def rv_matrix_networks(fit: GlobalFactorFit) -> RvMatrix:
    """Between-network RV matrix from the stacked member-cluster factors."""
    C = cov_to_corr(fit.factor_cov)
    sets = [fit.network_columns(s) for s in range(fit.layout.num_networks)]
    return _rv_from_index_sets(C, sets, "network", fit.layout.network_names)


def rv_matrix(fit: GlobalFactorFit, level: str = "cluster") -> RvMatrix:
    if level == "cluster":
        return rv_matrix_clusters(fit)
    if level == "network":
        return rv_matrix_networks(fit)
    raise ValidationError(f"level must be 'cluster' or 'network', got {level!r}")


def rv_from_covariance(S, layout: NetworkLayout, level: str = "cluster") -> RvMatrix:
    """RV matrix computed from node-level blocks of an ``N x N`` covariance."""
    S = np.asarray(S, dtype=float)
    if S.shape != (layout.num_nodes, layout.num_nodes):
        raise ValidationError(f"covariance shape {S.shape} does not match layout")
    C = cov_to_corr(S)
    if level == "cluster":
        sets = [np.asarray(c, dtype=int) for c in layout.clusters]
        names = layout.cluster_names
    elif level == "network":
        sets = [layout.network_nodes(s) for s in range(layout.num_networks)]
        names = layout.network_names
    else:
        raise ValidationError(f"level must be 'cluster' or 'network', got {level!r}")
    return _rv_from_index_sets(C, sets, level, names)


# -- inference ----------------------------------------------------------------


def _beta(Z) -> float:
    S = Z.T @ Z / Z.shape[0]
    return float(np.trace(S) ** 2 / np.sum(S * S))


def _tau(Z, beta, form) -> float:
    T = Z.shape[0]
    if form == "observation":
        W = Z @ Z.T
    elif form == "printed":
        W = Z.T @ Z
    else:
        raise ValidationError(f"unknown tau form {form!r}")
    ratio = float(np.sum(np.diag(W) ** 2) / np.sum(W * W))
    return (T - 1) / ((T - 3) * (T - 1 - beta)) * (T * (T + 1) * ratio - (T - 1) * (beta + 2))


def rv_null_moments(F_j, F_k, *, tau_form: str = "observation"):
    """Mean and variance of the RV coefficient under temporal-permutation independence.

    Parameters
    ----------
    F_j, F_k : array-like of shape (T, m_j), (T, m_k)
        Centered factor series. Moments are evaluated on the column-standardized
        matrices, matching :func:`rv_coefficient`.
    tau_form : {"observation", "printed"}
        ``"observation"`` takes the kurtosis term from the diagonal of the
        ``T x T`` matrix ``F F'``; ``"printed"`` uses the ``m x m`` matrix
        ``F'F`` instead, which overstates the variance by an order of magnitude.

    Returns
    -------
    e_null, var_null : float
    """
    Zj, Zk = _standardize(F_j), _standardize(F_k)
    T = Zj.shape[0]
    if Zk.shape[0] != T:
        raise ValidationError("factor matrices have different lengths")
    if T < 4:
        raise ValidationError("null moments need T >= 4")
    bj, bk = _beta(Zj), _beta(Zk)
    e_null = np.sqrt(bj * bk) / (T - 1)
    tj, tk = _tau(Zj, bj, tau_form), _tau(Zk, bk, tau_form)
    var = (2 * (T - 1 - bj) * (T - 1 - bk) / ((T + 1) * (T - 1) ** 2 * (T - 2))
           * (1 + (T - 3) / (2 * T * (T - 1)) * tj * tk))
    if not var > 0:
        raise NumericalError(f"nonpositive null variance {var!r}")
    return float(e_null), float(var)


def bonferroni_threshold(alpha: float, n_tests: int) -> float:
    """Standard-normal quantile at ``1 - alpha / (2 D)``."""
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
    if n_tests < 1:
        raise ValidationError("number of tests must be >= 1")
    return float(norm.ppf(1 - alpha / (2 * n_tests)))


def _test_sets(fit: GlobalFactorFit, level):
    if level == "cluster":
        return [fit.local_fits[r].factors for r in range(fit.layout.num_clusters)]
    if level == "network":
        return [fit.network_factors(s) for s in range(fit.layout.num_networks)]
    raise ValidationError(f"level must be 'cluster' or 'network', got {level!r}")


def rv_test_sets(sets, alpha: float = 0.05, n_tests: Optional[int] = None,
                 *, level: str = "cluster", tau_form: str = "observation"
                 ) -> list[RvTestResult]:
    """Pairwise standardized-RV tests over a list of factor matrices."""
    K = len(sets)
    pairs = [(a, b) for a in range(K) for b in range(a + 1, K)]
    D = len(pairs) if n_tests is None else int(n_tests)
    thr = bonferroni_threshold(alpha, max(D, 1))
    out = []
    for a, b in pairs:
        rv = rv_coefficient(sets[a], sets[b])
        e, v = rv_null_moments(sets[a], sets[b], tau_form=tau_form)
        z = (rv - e) / np.sqrt(v)
        out.append(RvTestResult(a, b, rv, e, v, float(z), thr, bool(z >= thr), level))
    return out


def rv_test(fit: GlobalFactorFit, level: str = "cluster", alpha: float = 0.05,
            n_tests: Optional[int] = None, *, tau_form: str = "observation"
            ) -> list[RvTestResult]:
    """Test every unordered pair of clusters (or networks) for nonzero RV.

    ``n_tests`` is the Bonferroni count ``D``; it defaults to the number of
    distinct pairs ``K(K-1)/2``. Pass ``K*K`` to follow the full-matrix count.
    """
    return rv_test_sets(_test_sets(fit, level), alpha, n_tests, level=level,
                        tau_form=tau_form)


def _perm_rng(seed, i):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def rv_permutation_null(F_j, F_k, n_perm: int, seed=0, *, include_identity: bool = False
                        ) -> np.ndarray:
    """RV values with the rows of ``F_k`` randomly permuted.

    Permutation ``i`` draws from its own counter-derived stream, so the sample
    does not depend on evaluation order. With ``include_identity`` the first
    entry uses the unpermuted order.
    """
    if n_perm < 1:
        raise ValidationError("n_perm must be >= 1")
    Zj, Zk = _standardize(F_j), _standardize(F_k)
    T = Zj.shape[0]
    den = np.sqrt(np.sum((Zj.T @ Zj) ** 2) * np.sum((Zk.T @ Zk) ** 2))
    out = np.empty(n_perm)
    for i in range(n_perm):
        if include_identity and i == 0:
            perm = np.arange(T)
        else:
            perm = _perm_rng(seed, i).permutation(T)
        X = Zj.T @ Zk[perm]
        out[i] = np.sum(X * X) / den
    return out
