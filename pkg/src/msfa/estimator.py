"""scikit-learn style wrapper around the multi-scale factor model."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ValidationError
from .global_factor import DEFAULT_MAX_DENSE_NODES, cov_to_corr, fit_global, whole_network_cov
from .layout import NetworkLayout, TimeSeriesPanel
from .local_factor import BIC, Fixed, VarianceThreshold
from .rv import rv_matrix


def _resolve_layout(layout, n_features) -> NetworkLayout:
    if layout is None:
        return NetworkLayout.from_sizes([n_features])
    if isinstance(layout, NetworkLayout):
        return layout
    layout = list(layout)
    if all(isinstance(x, (int, np.integer)) for x in layout):
        return NetworkLayout.from_sizes(layout)
    return NetworkLayout(n_features, tuple(tuple(c) for c in layout))


class MSFA(TransformerMixin, BaseEstimator):
    """Multi-scale factor analysis of a ``T x N`` panel.

    Parameters
    ----------
    layout : NetworkLayout, list of cluster sizes, list of node lists, or None
        Cluster partition of the columns. ``None`` treats all columns as one
        cluster.
    selection : {"variance", "fixed", "bic"}
        Factor-count rule applied to every cluster.
    tau : float
        Explained-variance threshold for ``selection="variance"``.
    n_factors : int
        Factors per cluster for ``selection="fixed"``.
    max_factors : int or None
        Upper bound for ``"variance"`` and ``"bic"``.
    center : bool
        Subtract column means before fitting.
    standardize : bool
        Scale columns to unit variance after centering.
    max_dense_nodes : int
        Refuse to assemble ``covariance_`` beyond this many nodes.

    Attributes
    ----------
    fit_ : GlobalFactorFit
    layout_ : NetworkLayout
    mean_, scale_ : ndarray of shape (N,)
    n_factors_ : tuple of int
    covariance_, correlation_ : ndarray of shape (N, N)
    rv_clusters_ : ndarray of shape (R, R)
    """

    def __init__(self, layout=None, selection="variance", tau=0.5, n_factors=1,
                 max_factors=None, center=True, standardize=False,
                 max_dense_nodes=DEFAULT_MAX_DENSE_NODES):
        self.layout = layout
        self.selection = selection
        self.tau = tau
        self.n_factors = n_factors
        self.max_factors = max_factors
        self.center = center
        self.standardize = standardize
        self.max_dense_nodes = max_dense_nodes

    def _selection(self):
        if self.selection == "variance":
            return VarianceThreshold(float(self.tau), self.max_factors)
        if self.selection == "fixed":
            return Fixed(int(self.n_factors))
        if self.selection == "bic":
            return BIC(self.max_factors)
        raise ValidationError(f"unknown selection {self.selection!r}")

    def _prepare(self, X, fitting):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        if not fitting and X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        if fitting:
            self.mean_ = X.mean(axis=0) if self.center else np.zeros(X.shape[1])
        Xc = X - self.mean_
        if fitting:
            if self.center:
                residue = Xc.mean(axis=0)
                self.mean_ = self.mean_ + residue
                Xc = Xc - residue
            if self.standardize:
                scale = np.sqrt(np.mean(Xc**2, axis=0))
                if np.any(scale <= 0):
                    raise ValidationError("cannot standardize a zero-variance column")
                self.scale_ = scale
            else:
                self.scale_ = np.ones(X.shape[1])
        return Xc / self.scale_

    def fit(self, X, y=None):
        self.layout_ = _resolve_layout(self.layout, np.shape(X)[1])
        Xc = self._prepare(X, fitting=True)
        self.fit_ = fit_global(TimeSeriesPanel(Xc), self.layout_, self._selection())
        self.n_factors_ = self.fit_.factors_per_cluster
        self.covariance_ = whole_network_cov(self.fit_, max_nodes=self.max_dense_nodes)
        self.correlation_ = cov_to_corr(self.covariance_)
        self.rv_clusters_ = rv_matrix(self.fit_, "cluster").values
        self.n_features_in_ = Xc.shape[1]
        return self

    def transform(self, X):
        """Project new rows onto the fitted loadings; columns follow the factor block map."""
        check_is_fitted(self, "fit_")
        Xc = self._prepare(X, fitting=False)
        return np.hstack([Xc[:, list(nodes)] @ lf.loadings
                          for lf, nodes in zip(self.fit_.local_fits, self.layout_.clusters)])

    def rv(self, level="cluster"):
        check_is_fitted(self, "fit_")
        return rv_matrix(self.fit_, level)
