import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from msfa.exceptions import ValidationError
from msfa.io import (
    atomic_write_text, layout_from_dict, layout_to_dict, matrix_from_bytes, matrix_to_bytes,
    read_layout, read_matrix, read_panel, write_layout, write_matrix, write_panel,
)
from msfa.layout import NetworkLayout

matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(allow_nan=False, allow_infinity=False))


@settings(max_examples=50, deadline=None)
@given(matrices)
def test_binary_round_trip_is_exact(A):
    np.testing.assert_array_equal(matrix_from_bytes(matrix_to_bytes(A)), A)


def test_binary_header_layout():
    payload = matrix_to_bytes(np.array([[1.0, 2.0, 3.0]]))
    assert payload[:4] == b"MSFA"
    assert payload[4:8] == (1).to_bytes(4, "little")
    assert payload[8:12] == (3).to_bytes(4, "little")
    assert np.frombuffer(payload[12:], "<f8").tolist() == [1.0, 2.0, 3.0]


def test_binary_rejects_bad_payloads():
    good = matrix_to_bytes(np.ones((2, 2)))
    with pytest.raises(ValidationError):
        matrix_from_bytes(b"NOPE" + good[4:])
    with pytest.raises(ValidationError):
        matrix_from_bytes(good[:-1])
    with pytest.raises(ValidationError):
        matrix_from_bytes(good[:5])


@settings(max_examples=30, deadline=None)
@given(matrices)
def test_csv_round_trip_is_exact(tmp_path_factory, A):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    write_matrix(path, A)
    np.testing.assert_array_equal(read_matrix(path), A)


def test_csv_header_is_skipped(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    np.testing.assert_array_equal(read_panel(path).data, [[1, 2], [3, 4]])


def test_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(ValidationError):
        read_matrix(path)
    path.write_text("1,2\n3\n")
    with pytest.raises(ValidationError):
        read_matrix(path)
    path.write_text("")
    with pytest.raises(ValidationError):
        read_matrix(path)


def test_panel_binary_by_extension(tmp_path):
    data = np.arange(6.0).reshape(3, 2)
    write_panel(tmp_path / "p.bin", data)
    assert (tmp_path / "p.bin").read_bytes()[:4] == b"MSFA"
    np.testing.assert_array_equal(read_panel(tmp_path / "p.bin").data, data)


def test_layout_round_trip(tmp_path):
    layout = NetworkLayout(5, ((0, 2), (1,), (3, 4)), networks=((0, 1), (1, 2)),
                           cluster_names=("a", "b", "c"), network_names=("x", "y"))
    write_layout(tmp_path / "l.json", layout)
    assert read_layout(tmp_path / "l.json") == layout
    assert layout_from_dict(layout_to_dict(layout)) == layout


def test_layout_document_shape():
    doc = layout_to_dict(NetworkLayout.from_sizes([1, 2]))
    assert doc == {"num_nodes": 3,
                   "clusters": [{"name": "C1", "nodes": [0]}, {"name": "C2", "nodes": [1, 2]}],
                   "networks": [{"name": "W1", "clusters": [0]}, {"name": "W2", "clusters": [1]}]}


def test_malformed_layout(tmp_path):
    with pytest.raises(ValidationError):
        layout_from_dict({"clusters": []})
    (tmp_path / "l.json").write_text("{not json")
    with pytest.raises(ValidationError):
        read_layout(tmp_path / "l.json")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_text(tmp_path / "sub" / "f.txt", "hello")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]
