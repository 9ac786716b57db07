"""Per-cluster PCA factor models.

Each cluster's ``T x n`` panel ``Y`` is modelled as ``Y(t) = Q f(t) + E(t)`` with
orthonormal loadings ``Q`` (``n x m``), uncorrelated factors and diagonal noise
covariance. Loadings and factors come from the eigendecomposition of either the
cross-sectional covariance ``Y'Y/T`` (when ``T >= n``) or the temporal
covariance ``YY'/T`` (when ``T < n``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .exceptions import NumericalError, ValidationError

#: relative cut-off below which eigenvalues are treated as exact zeros
EIG_RTOL = 1e-12
#: floor inside the log of the BIC criterion (exact-fit guard)
BIC_EPS = 1e-12


def eig_sym_desc(S, *, sym_rtol: float = 1e-10):
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Negative eigenvalues produced by roundoff (down to ``-EIG_RTOL * max|lambda|``)
    are clamped to zero; larger negative values are kept, since the input is
    then genuinely indefinite.

    Returns
    -------
    eigenvalues : ndarray of shape (p,)
    eigenvectors : ndarray of shape (p, p)
        Column ``i`` pairs with ``eigenvalues[i]``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValidationError("matrix has non-finite entries")
    scale = np.max(np.abs(S)) if S.size else 0.0
    if scale > 0 and np.max(np.abs(S - S.T)) > sym_rtol * scale:
        raise ValidationError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w, V = w[::-1].copy(), V[:, ::-1].copy()
    top = np.max(np.abs(w)) if w.size else 0.0
    w[(w < 0) & (w >= -EIG_RTOL * top)] = 0.0
    return w, V


# -- factor-count selection ---------------------------------------------------


def select_num_factors_variance(eigenvalues, tau: float, cap: Optional[int] = None) -> int:
    """Largest ``l`` whose leading ``l`` eigenvalues explain at most ``tau`` of the total.

    The count is floored at 1 (even when the first eigenvalue alone exceeds
    ``tau``) and capped at ``cap`` when given.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    if lam.size == 0 or np.any(lam < 0) or np.any(np.diff(lam) > 0):
        raise ValidationError("eigenvalues must be nonnegative and descending")
    total = lam.sum()
    if total <= 0:
        raise ValidationError("all eigenvalues are zero")
    frac = np.cumsum(lam) / total
    # integer-exact comparisons like 0.9 <= 0.9 must not be lost to roundoff
    m = int(np.count_nonzero(frac <= tau * (1 + 1e-12)))
    m = max(m, 1)
    if cap is not None:
        m = min(m, max(int(cap), 1))
    return m


def bic_criterion(eigenvalues, n: int, T: int, L_max: int) -> np.ndarray:
    """BIC values for ``l = 1..L_max`` from the eigenvalues of ``Y'Y/T`` (or ``YY'/T``).

    ``V(l) = sum_{i>l} lambda_i / n`` equals the residual mean square
    ``(1/(nT)) sum_t ||E_t||^2`` of an ``l``-factor PCA fit.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    tail = lam.sum() - np.cumsum(lam)[:L_max]
    V = np.maximum(tail, 0.0) / n
    penalty = (n + T) / (n * T) * np.log(n * T / (n + T))
    ell = np.arange(1, L_max + 1)
    return np.log(np.maximum(V, BIC_EPS)) + ell * penalty


def select_num_factors_bic(Y, L_max: int) -> int:
    """Factor count minimizing the penalized log residual variance.

    ``Y`` is a centered ``T x n`` matrix; candidates are ``1..L_max``.
    """
    Y = np.asarray(Y, dtype=float)
    T, n = Y.shape
    if L_max < 1:
        raise ValidationError("L_max must be >= 1")
    if L_max > min(n, T):
        raise ValidationError(f"L_max={L_max} exceeds min(n, T)={min(n, T)}")
    lam, _ = _eigs(Y)
    return int(np.argmin(bic_criterion(lam, n, T, L_max))) + 1


@dataclass(frozen=True)
class Fixed:
    """Use exactly ``m`` factors."""

    m: int


@dataclass(frozen=True)
class VarianceThreshold:
    """Select by cumulative explained-variance fraction ``tau``."""

    tau: float
    cap: Optional[int] = None


#: default BIC candidate bound; ``l = min(n, T)`` is never a default candidate
#: because it fits exactly and the floored log then always wins
BIC_DEFAULT_MAX = 8


def default_bic_bound(n: int, T: int) -> int:
    return max(1, min(BIC_DEFAULT_MAX, min(n, T) - 1))


@dataclass(frozen=True)
class BIC:
    """Select by BIC over ``1..max_factors`` (default ``min(8, min(n, T) - 1)``)."""

    max_factors: Optional[int] = None


Selection = Union[Fixed, VarianceThreshold, BIC, int]


def as_selection(selection) -> Union[Fixed, VarianceThreshold, BIC]:
    if isinstance(selection, (Fixed, VarianceThreshold, BIC)):
        return selection
    if isinstance(selection, (int, np.integer)) and not isinstance(selection, bool):
        return Fixed(int(selection))
    raise ValidationError(f"unsupported factor selection {selection!r}")


def selection_to_dict(selection) -> dict:
    sel = as_selection(selection)
    if isinstance(sel, Fixed):
        return {"policy": "fixed", "m": sel.m}
    if isinstance(sel, VarianceThreshold):
        return {"policy": "variance", "tau": sel.tau, "cap": sel.cap}
    return {"policy": "bic", "max_factors": sel.max_factors}


def selection_from_dict(doc: dict):
    policy = doc.get("policy")
    if policy == "fixed":
        return Fixed(int(doc["m"]))
    if policy == "variance":
        return VarianceThreshold(float(doc["tau"]), doc.get("cap"))
    if policy == "bic":
        return BIC(doc.get("max_factors"))
    raise ValidationError(f"unknown selection policy {policy!r}")


# -- fitting ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalFactorFit:
    """PCA factor model of one cluster.

    Attributes
    ----------
    loadings : ndarray (n, m)
        Orthonormal loading matrix.
    factors : ndarray (T, m)
        Estimated factor series.
    factor_var : ndarray (m,)
        Diagonal of the factor covariance (the selected eigenvalues).
    noise_var : ndarray (n,)
        Residual variance of each node.
    eigenvalues : ndarray (n,) or (T,)
        Full descending spectrum of the sample covariance used by ``branch``.
    branch : {"cross-sectional", "temporal"}
    """

    loadings: np.ndarray = field(repr=False)
    factors: np.ndarray = field(repr=False)
    factor_var: np.ndarray
    noise_var: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    branch: str

    @property
    def num_factors(self) -> int:
        return self.loadings.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.loadings.shape[0]

    @property
    def num_samples(self) -> int:
        return self.factors.shape[0]

    @property
    def factor_cov(self) -> np.ndarray:
        return np.diag(self.factor_var)

    @property
    def noise_cov(self) -> np.ndarray:
        return np.diag(self.noise_var)

    def common_component(self) -> np.ndarray:
        """``T x n`` fitted values ``f(t)' Q'``."""
        return self.factors @ self.loadings.T

    def sign_flipped(self, signs) -> "LocalFactorFit":
        """Same fit with loading/factor column ``i`` multiplied by ``signs[i]``."""
        s = np.asarray(signs, dtype=float)
        return LocalFactorFit(
            self.loadings * s, self.factors * s, self.factor_var,
            self.noise_var, self.eigenvalues, self.branch,
        )

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "num_factors": self.num_factors,
            "loadings": self.loadings.tolist(),
            "factors": self.factors.tolist(),
            "factor_var": self.factor_var.tolist(),
            "noise_var": self.noise_var.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LocalFactorFit":
        m = int(doc["num_factors"])
        noise = np.asarray(doc["noise_var"], dtype=float)
        return cls(
            loadings=np.asarray(doc["loadings"], dtype=float).reshape(noise.size, m),
            factors=np.asarray(doc["factors"], dtype=float).reshape(-1, m),
            factor_var=np.asarray(doc["factor_var"], dtype=float),
            noise_var=noise,
            eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
            branch=doc["branch"],
        )


BRANCHES = ("cross-sectional", "temporal")


def _eigs(Y, branch=None):
    """Spectrum of the smaller of ``Y'Y/T`` and ``YY'/T`` plus the branch used."""
    T, n = Y.shape
    if branch is None:
        branch = "cross-sectional" if T >= n else "temporal"
    elif branch not in BRANCHES:
        raise ValidationError(f"branch must be one of {BRANCHES}, got {branch!r}")
    if branch == "cross-sectional":
        lam, V = eig_sym_desc(Y.T @ Y / T)
        return lam, (V, "cross-sectional")
    lam, V = eig_sym_desc(Y @ Y.T / T)
    return lam, (V, "temporal")


def _resolve_m(selection, lam, Y) -> int:
    T, n = Y.shape
    kappa = min(n, T)
    sel = as_selection(selection)
    if isinstance(sel, Fixed):
        m = sel.m
    elif isinstance(sel, VarianceThreshold):
        m = select_num_factors_variance(lam, sel.tau, sel.cap)
    else:
        L_max = sel.max_factors if sel.max_factors is not None else default_bic_bound(n, T)
        m = select_num_factors_bic(Y, min(L_max, kappa))
    if m < 1:
        raise ValidationError("a factor model needs at least one factor")
    if m > kappa:
        raise ValidationError(f"{m} factors exceed min(n, T)={kappa}")
    return m


def fit_local(Y, selection: Selection = VarianceThreshold(0.5), *, branch=None
              ) -> LocalFactorFit:
    """Fit the PCA factor model to one centered ``T x n`` cluster panel.

    ``branch`` forces ``"cross-sectional"`` (eigenvectors of ``Y'Y/T``) or
    ``"temporal"`` (eigenvectors of ``YY'/T``); by default the smaller matrix
    is used. Both give the same common component up to roundoff.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValidationError("cluster panel must be 2-D")
    T, n = Y.shape
    if T < 2 or n < 1:
        raise ValidationError(f"need T >= 2 and n >= 1, got T={T}, n={n}")
    lam, (V, branch) = _eigs(Y, branch)
    if lam[0] <= 0:
        raise NumericalError("zero-variance cluster: all eigenvalues vanish")
    m = _resolve_m(selection, lam, Y)
    n_pos = int(np.count_nonzero(lam > EIG_RTOL * lam[0]))
    if m > n_pos:
        raise NumericalError(
            f"{m} factors requested but only {n_pos} eigenvalues are numerically nonzero"
        )
    D = lam[:m].copy()
    if branch == "cross-sectional":
        Q = V[:, :m]
        F = Y @ Q
    else:
        F = np.sqrt(T) * V[:, :m] * np.sqrt(D)
        Q = (Y.T @ F) / D / T
    resid = Y - F @ Q.T
    noise = np.mean(resid**2, axis=0)
    return LocalFactorFit(Q, F, D, noise, lam, branch)


def within_cluster_cov(fit: LocalFactorFit) -> np.ndarray:
    """``Q diag(factor_var) Q' + diag(noise_var)``."""
    Q = fit.loadings
    S = (Q * fit.factor_var) @ Q.T
    S = 0.5 * (S + S.T)
    S[np.diag_indices_from(S)] += fit.noise_var
    return S
