"""Network hierarchy and panel data containers.

A network of ``N`` nodes is partitioned into ``R`` disjoint clusters; clusters
are grouped, possibly with overlap, into ``S`` sub-networks. Node indices are
0-based everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ValidationError


@dataclass(frozen=True)
class NetworkLayout:
    """Fixed cluster / sub-network hierarchy over ``num_nodes`` nodes.

    Parameters
    ----------
    num_nodes : int
        Total number of nodes ``N``.
    clusters : sequence of sequence of int
        Node indices of each cluster, in cluster order.
    networks : sequence of sequence of int, optional
        Cluster indices of each sub-network. Defaults to one network per
        cluster.
    cluster_names, network_names : sequence of str, optional
        Labels used in exported files.

    Construction does not validate; call :func:`validate_layout` for a report
    or :meth:`check` to raise on the first problem.
    """

    num_nodes: int
    clusters: tuple[tuple[int, ...], ...]
    networks: tuple[tuple[int, ...], ...] = ()
    cluster_names: tuple[str, ...] = ()
    network_names: tuple[str, ...] = ()

    def __post_init__(self):
        clusters = tuple(tuple(int(i) for i in c) for c in self.clusters)
        if self.networks:
            networks = tuple(tuple(int(r) for r in s) for s in self.networks)
        else:
            networks = tuple((r,) for r in range(len(clusters)))
        cnames = tuple(self.cluster_names) or tuple(f"C{r + 1}" for r in range(len(clusters)))
        nnames = tuple(self.network_names) or tuple(f"W{s + 1}" for s in range(len(networks)))
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "networks", networks)
        object.__setattr__(self, "cluster_names", cnames)
        object.__setattr__(self, "network_names", nnames)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], networks=None) -> "NetworkLayout":
        """Contiguous clusters of the given sizes."""
        clusters, start = [], 0
        for n in sizes:
            clusters.append(tuple(range(start, start + n)))
            start += n
        return cls(start, tuple(clusters), tuple(networks or ()))

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    @property
    def num_networks(self) -> int:
        return len(self.networks)

    @property
    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clusters)

    def network_nodes(self, s: int) -> np.ndarray:
        """Node indices of network ``s``, concatenated in member-cluster order."""
        return np.concatenate([np.asarray(self.clusters[r], dtype=int) for r in self.networks[s]])

    def network_dim(self, s: int) -> int:
        """``D_s``: total node count over the members of network ``s``."""
        return sum(len(self.clusters[r]) for r in self.networks[s])

    def check(self) -> "NetworkLayout":
        problems = validate_layout(self)
        if problems:
            raise ValidationError("invalid layout: " + "; ".join(problems))
        return self


def validate_layout(layout: NetworkLayout) -> list[str]:
    """Return the list of violations in ``layout``; empty when valid."""
    problems = []
    n = layout.num_nodes
    if n < 1:
        problems.append(f"num_nodes must be >= 1, got {n}")
    if not layout.clusters:
        problems.append("layout has no clusters")
    owner: dict[int, int] = {}
    for r, nodes in enumerate(layout.clusters):
        if not nodes:
            problems.append(f"cluster {r} is empty")
        for i in nodes:
            if i < 0 or i >= n:
                problems.append(f"cluster {r} references node {i} outside 0..{n - 1}")
            elif i in owner:
                problems.append(f"node {i} in two clusters ({owner[i]} and {r})")
            else:
                owner[i] = r
    for i in range(max(n, 0)):
        if i not in owner:
            problems.append(f"node {i} unassigned")
    R = len(layout.clusters)
    for s, members in enumerate(layout.networks):
        if not members:
            problems.append(f"network {s} is empty")
        for r in members:
            if r < 0 or r >= R:
                problems.append(f"network {s} references cluster {r} outside 0..{R - 1}")
    if len(layout.cluster_names) != R:
        problems.append("cluster_names length does not match clusters")
    if len(layout.network_names) != len(layout.networks):
        problems.append("network_names length does not match networks")
    return problems


@dataclass(frozen=True)
class TimeSeriesPanel:
    """``T x N`` observation matrix; row ``t`` is the observation vector at time ``t``.

    The array is copied on construction and marked read-only.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValidationError(f"panel must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("panel contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def num_samples(self) -> int:
        return self.data.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.data.shape[1]

    def check_layout(self, layout: NetworkLayout) -> None:
        if layout.num_nodes != self.num_nodes:
            raise ValidationError(
                f"panel has {self.num_nodes} columns but layout has {layout.num_nodes} nodes"
            )


def _as_array(panel) -> np.ndarray:
    return panel.data if isinstance(panel, TimeSeriesPanel) else np.asarray(panel, dtype=float)


def extract_cluster(panel, layout: NetworkLayout, r: int) -> np.ndarray:
    """Columns of ``panel`` belonging to cluster ``r``, in cluster order."""
    if not 0 <= r < layout.num_clusters:
        raise ValidationError(f"cluster index {r} out of range 0..{layout.num_clusters - 1}")
    return _as_array(panel)[:, list(layout.clusters[r])]


def center_panel(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Subtract each column's temporal mean."""
    Y = _as_array(panel)
    if Y.shape[0] < 2:
        raise ValidationError("centering needs at least 2 samples")
    Yc = Y - Y.mean(axis=0)
    # second pass removes the rounding residue of the first
    Yc -= Yc.mean(axis=0)
    return TimeSeriesPanel(Yc)


def standardize_panel(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Center and scale each column to unit variance (divisor ``T``)."""
    Y = center_panel(panel).data
    sd = np.sqrt(np.mean(Y**2, axis=0))
    if np.any(sd <= 0):
        raise ValidationError("cannot standardize a zero-variance column")
    return TimeSeriesPanel(Y / sd)
