import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stptensor import tensorio
from stptensor.oracles import dense_conv_loop
from stptensor.tensor_core import (
    ShapeError,
    as_tensor,
    contract,
    conv2d,
    conv_output_size,
    fold,
    mode_n_product,
    self_contract,
    unfold,
)

dims_st = st.lists(st.integers(1, 4), min_size=1, max_size=4)


def test_as_tensor_checks_element_count():
    T = as_tensor(range(6), [2, 3])
    assert T.shape == (2, 3) and T.dtype == np.float64
    with pytest.raises(ShapeError):
        as_tensor(range(5), [2, 3])
    with pytest.raises(ShapeError):
        as_tensor([1.0], [])


def test_unfold_matrix_is_identity():
    M = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(unfold(M, 1), M)


def test_unfold_index_layout():
    T = np.arange(24.0).reshape(2, 3, 4)
    U = unfold(T, 2)
    assert U.shape == (3, 8)
    for r in range(3):
        expected = [T[i, r, k] for i in range(2) for k in range(4)]
        np.testing.assert_array_equal(U[r], expected)
    np.testing.assert_array_equal(fold(U, 2, (2, 3, 4)), T)


def test_unfold_mode_out_of_range():
    with pytest.raises(ShapeError):
        unfold(np.zeros((2, 3)), 3)
    with pytest.raises(ShapeError):
        unfold(np.zeros((2, 3)), 0)


def test_fold_rejects_wrong_count():
    with pytest.raises(ShapeError):
        fold(np.zeros((5, 5)), 1, (2, 3, 4))


@settings(max_examples=60, deadline=None)
@given(dims=dims_st, data=st.data())
def test_fold_unfold_roundtrip(dims, data):
    n = data.draw(st.integers(1, len(dims)))
    T = np.random.default_rng(len(dims)).normal(size=dims)
    U = unfold(T, n)
    assert U.shape == (dims[n - 1], T.size // dims[n - 1])
    np.testing.assert_array_equal(fold(U, n, dims), T)


def test_contract_shapes_and_matrix_product():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(2, 3)), rng.normal(size=(3, 4))
    np.testing.assert_allclose(contract(A, B, 1), A @ B, rtol=1e-14)
    assert contract(rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 4, 5)), 2).shape == (2, 5)
    X, Y = rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2, 3))
    np.testing.assert_allclose(contract(X, Y, 2), X.reshape(2, 4) @ Y.reshape(4, 3), rtol=1e-13)
    with pytest.raises(ShapeError):
        contract(A, A, 1)


def test_self_contract():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(self_contract(M.reshape(1, 2, 2, 1), 1), [[5.0]])
    assert self_contract(np.ones((2, 3, 3, 4)), 1).shape == (2, 4)
    X = np.random.default_rng(1).normal(size=(2, 2, 2, 2))
    ref = np.zeros((2, 2))
    for i in range(2):
        for k in range(2):
            for j in range(2):
                ref[i, k] += X[i, j, j, k]
    np.testing.assert_allclose(self_contract(X, 1), ref, rtol=1e-14)
    with pytest.raises(ShapeError):
        self_contract(np.ones((2, 3, 4, 5)), 1)


def test_mode_n_product():
    rng = np.random.default_rng(2)
    T = rng.normal(size=(2, 3, 4))
    np.testing.assert_allclose(mode_n_product(T, np.eye(3), 2), T)
    A = rng.normal(size=(5, 3))
    Y = mode_n_product(T, A, 2)
    assert Y.shape == (2, 5, 4)
    np.testing.assert_allclose(Y, fold(A @ unfold(T, 2), 2, (2, 5, 4)), rtol=1e-13)
    np.testing.assert_allclose(Y, np.einsum("ijk,rj->irk", T, A), rtol=1e-13)
    with pytest.raises(ShapeError):
        mode_n_product(T, rng.normal(size=(5, 4)), 2)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d_matches_loop(stride, padding):
    rng = np.random.default_rng(stride * 10 + padding)
    X, K = rng.normal(size=(5, 6, 2)), rng.normal(size=(3, 3, 2, 4))
    Y = conv2d(X, K, stride, padding)
    assert Y.shape == (conv_output_size(5, 3, stride, padding), conv_output_size(6, 3, stride, padding), 4)
    np.testing.assert_allclose(Y, dense_conv_loop(X, K, stride, padding), rtol=1e-12, atol=1e-14)


def test_conv2d_linear_and_errors():
    rng = np.random.default_rng(3)
    X, Y, K = rng.normal(size=(4, 4, 2)), rng.normal(size=(4, 4, 2)), rng.normal(size=(3, 3, 2, 2))
    np.testing.assert_allclose(conv2d(2 * X - 3 * Y, K, 1, 1), 2 * conv2d(X, K, 1, 1) - 3 * conv2d(Y, K, 1, 1), rtol=1e-12, atol=1e-13)
    with pytest.raises(ShapeError):
        conv2d(np.ones((2, 2, 1)), np.ones((3, 3, 1, 1)))
    # batched and unbatched agree
    B = rng.normal(size=(3, 4, 4, 2))
    np.testing.assert_allclose(conv2d(B, K)[1], conv2d(B[1], K), rtol=1e-14)


def test_tensor_file_roundtrip(tmp_path):
    T = np.random.default_rng(4).normal(size=(2, 3, 4))
    buf = tensorio.dumps(T)
    assert buf[:4] == b"STPT" and buf[4] == 1 and buf[5] == 3
    np.testing.assert_array_equal(tensorio.loads(buf), T)
    tensorio.save(tmp_path / "t.stpt", T)
    np.testing.assert_array_equal(tensorio.load(tmp_path / "t.stpt"), T)


def test_tensor_file_rejects_corruption():
    buf = tensorio.dumps(np.ones((2, 2)))
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.loads(b"XXXX" + buf[4:])
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.loads(buf[:-3])
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.loads(buf[:7])
