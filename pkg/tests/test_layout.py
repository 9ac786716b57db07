import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from msfa.exceptions import ValidationError
from msfa.layout import (
    NetworkLayout, TimeSeriesPanel, center_panel, extract_cluster, standardize_panel,
    validate_layout,
)


def test_exact_partition_is_valid():
    layout = NetworkLayout(4, ((0, 1), (2, 3)), networks=((0,), (1,)))
    assert validate_layout(layout) == []


def test_overlapping_clusters_reported():
    problems = validate_layout(NetworkLayout(4, ((0, 1), (1, 2, 3))))
    assert any("node 1 in two clusters" in p for p in problems)


def test_unassigned_node_reported():
    problems = validate_layout(NetworkLayout(4, ((0, 1), (2,))))
    assert "node 3 unassigned" in problems


def test_out_of_range_and_empty_reported():
    problems = validate_layout(NetworkLayout(3, ((0, 1, 5), (), (2,)), networks=((0,), (7,), ())))
    text = " | ".join(problems)
    assert "node 5 outside" in text
    assert "cluster 1 is empty" in text
    assert "network 1 references cluster 7" in text
    assert "network 2 is empty" in text


def test_check_raises():
    with pytest.raises(ValidationError):
        NetworkLayout(2, ((0,),)).check()


def test_networks_may_share_clusters():
    layout = NetworkLayout(5, ((0, 1), (2,), (3, 4)), networks=((0, 1), (1, 2)))
    assert validate_layout(layout) == []
    assert layout.network_dim(0) == 3
    assert layout.network_dim(1) == 3
    assert list(layout.network_nodes(1)) == [2, 3, 4]


def test_default_networks_and_names():
    layout = NetworkLayout.from_sizes([2, 3])
    assert layout.networks == ((0,), (1,))
    assert layout.cluster_names == ("C1", "C2")
    assert layout.cluster_sizes == (2, 3)


def test_extract_cluster_selects_in_cluster_order():
    data = np.arange(12.0).reshape(3, 4)
    layout = NetworkLayout(4, ((3, 2), (0, 1)))
    np.testing.assert_array_equal(extract_cluster(TimeSeriesPanel(data), layout, 0), data[:, [3, 2]])


def test_extract_cluster_full_and_single():
    data = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(extract_cluster(data, NetworkLayout(3, ((0, 1, 2),)), 0), data)
    single = extract_cluster(data, NetworkLayout(3, ((0, 1), (2,))), 1)
    assert single.shape == (2, 1)
    np.testing.assert_array_equal(single[:, 0], data[:, 2])


def test_extract_cluster_out_of_range():
    with pytest.raises(ValidationError):
        extract_cluster(np.zeros((2, 2)), NetworkLayout.from_sizes([2]), 1)


def test_panel_rejects_non_finite_and_is_read_only():
    with pytest.raises(ValidationError):
        TimeSeriesPanel(np.array([[1.0, np.nan]]))
    src = np.ones((2, 2))
    p = TimeSeriesPanel(src)
    src[0, 0] = 5
    assert p.data[0, 0] == 1
    with pytest.raises(ValueError):
        p.data[0, 0] = 3


def test_panel_layout_mismatch():
    with pytest.raises(ValidationError):
        TimeSeriesPanel(np.zeros((3, 2))).check_layout(NetworkLayout.from_sizes([3]))


def test_center_examples():
    out = center_panel(TimeSeriesPanel(np.array([[1.0, 7.0], [3.0, 7.0]]))).data
    np.testing.assert_array_equal(out, [[-1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        center_panel(TimeSeriesPanel(np.ones((1, 3))))


def test_center_leaves_input_untouched():
    p = TimeSeriesPanel(np.array([[1.0], [3.0]]))
    center_panel(p)
    assert p.data[0, 0] == 1.0


def test_standardize_unit_variance():
    rng = np.random.default_rng(0)
    out = standardize_panel(TimeSeriesPanel(rng.normal(3, 5, size=(50, 4)))).data
    np.testing.assert_allclose(np.mean(out**2, axis=0), 1.0, rtol=1e-12)
    with pytest.raises(ValidationError):
        standardize_panel(TimeSeriesPanel(np.ones((4, 1))))


panels = arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
                elements=st.floats(-1e6, 1e6, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(panels)
def test_center_idempotent_and_zero_mean(data):
    once = center_panel(TimeSeriesPanel(data)).data
    twice = center_panel(TimeSeriesPanel(once)).data
    scale = max(1.0, float(np.max(np.abs(data))))
    assert np.all(np.abs(once.mean(axis=0)) <= 1e-12 * scale)
    np.testing.assert_allclose(twice, once, rtol=0, atol=1e-12 * scale)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.randoms(use_true_random=False))
def test_extracted_clusters_permute_columns(sizes, rnd):
    N = sum(sizes)
    perm = list(range(N))
    rnd.shuffle(perm)
    clusters, start = [], 0
    for n in sizes:
        clusters.append(tuple(perm[start:start + n]))
        start += n
    layout = NetworkLayout(N, tuple(clusters)).check()
    data = np.arange(3.0 * N).reshape(3, N)
    stacked = np.hstack([extract_cluster(data, layout, r) for r in range(len(sizes))])
    np.testing.assert_array_equal(np.sort(stacked, axis=1), np.sort(data, axis=1))
    np.testing.assert_array_equal(stacked, data[:, perm])
