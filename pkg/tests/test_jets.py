import numpy as np
import pytest
from hypothesis import given, strategies as st

from doakit.jets import Jet, JetDivisionError

_coeffs = st.lists(
    st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=4, max_size=4
).map(lambda v: np.array(v))


def test_truncated_product_definition():
    a = Jet(np.array([1.0, 2.0, 3.0]))
    b = Jet(np.array([4.0, 5.0, 6.0]))
    prod = a * b
    # c_k = sum_{j<=k} a_j b_{k-j}
    assert prod.coeffs.tolist() == [4.0, 13.0, 28.0]


@given(_coeffs, _coeffs)
def test_product_matches_polynomial_convolution(ca, cb):
    a, b = Jet(ca), Jet(cb)
    full = np.convolve(ca, cb)[: len(ca)]
    assert np.allclose((a * b).coeffs, full, rtol=1e-12, atol=1e-12)


@given(_coeffs, _coeffs)
def test_division_inverts_product(ca, cb):
    if abs(cb[0]) < 0.5:
        cb = cb.copy()
        cb[0] = 1.5
    a, b = Jet(ca), Jet(cb)
    q = a / b
    scale = 1.0 + np.max(np.abs(ca)) + np.max(np.abs(q.coeffs))
    assert np.allclose((q * b).coeffs, ca, rtol=1e-9, atol=1e-9 * scale)


def test_division_by_zero_constant_term():
    a = Jet(np.array([1.0, 0.0]))
    b = Jet(np.array([0.0, 1.0]))
    with pytest.raises(JetDivisionError):
        a / b


def test_scalar_coercion_and_subtraction():
    a = Jet(np.array([2.0, 1.0, 0.5]))
    assert np.allclose((a + 1.0).coeffs, [3.0, 1.0, 0.5])
    assert np.allclose((1.0 - a).coeffs, [-1.0, -1.0, -0.5])
    assert np.allclose((2.0 * a).coeffs, [4.0, 2.0, 1.0])


def test_integer_powers():
    a = Jet(np.array([1.0, 1.0, 0.0]))
    cube = a**3
    # (1+t)^3 = 1 + 3t + 3t^2 (truncated)
    assert np.allclose(cube.coeffs, [1.0, 3.0, 3.0])
    inv = a**-1
    assert np.allclose(inv.coeffs, [1.0, -1.0, 1.0])


def test_batched_coefficients():
    coeffs = np.stack([np.array([1.0, 2.0]), np.array([3.0, 4.0])], axis=1)  # (order+1, batch)
    a = Jet(coeffs)
    sq = a * a
    assert sq.coeffs.shape == (2, 2)
    assert np.allclose(sq.coeffs[:, 0], [1.0, 4.0])
    assert np.allclose(sq.coeffs[:, 1], [9.0, 24.0])


def test_order_mismatch_rejected():
    with pytest.raises(ValueError):
        Jet(np.zeros(3)) + Jet(np.zeros(4))
