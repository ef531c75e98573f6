import numpy as np
import pytest

from doakit.systems import (
    BUILTIN_NAMES,
    LiftError,
    builtin,
    lift,
    lift_set,
    parse_system,
)
from oracles import flow_derivatives_fd

ROI_BOUNDS = {
    "vdp2": ([-4.0, -10.0], [4.0, 10.0]),
    "ex2_2d": ([-2.5, -2.5], [2.5, 2.5]),
    "ex3_2d": ([-2.0, -7.0], [7.0, 2.0]),
    "sys3d": ([-4.0, -5.0, -8.5], [4.0, 5.0, 7.0]),
    "sys5d": ([-4.0, -10.0, -4.0, -5.0, -8.5], [4.0, 10.0, 4.0, 5.0, 7.0]),
}


def test_builtin_names_and_dimensions():
    dims = {"vdp2": 2, "ex2_2d": 2, "ex3_2d": 2, "sys3d": 3, "sys5d": 5}
    assert set(BUILTIN_NAMES) == set(dims)
    for name, n in dims.items():
        assert builtin(name).n == n


def test_unknown_builtin():
    with pytest.raises(KeyError, match="unknown benchmark"):
        builtin("nope")


def test_equilibrium_at_origin_for_all_builtins():
    for name in BUILTIN_NAMES:
        sys = builtin(name)
        assert np.max(np.abs(sys(np.zeros(sys.n)))) <= 1e-12


def test_vdp2_right_hand_side_values():
    sys = builtin("vdp2")
    assert np.allclose(sys(np.array([1.0, 1.0])), [1.0, -4.0])
    assert np.allclose(sys(np.array([2.0, -1.0])), [-1.0, -4.0 + 3.0 - 4.0])


def test_sys5d_coupling_term():
    # the second component must respond to x4 with coefficient -1
    sys = builtin("sys5d")
    base = sys(np.zeros(5))
    bumped = sys(np.array([0.0, 0.0, 0.0, 1.0, 0.0]))
    assert (bumped - base)[1] == pytest.approx(-1.0)


def test_nonzero_equilibrium_rejected():
    with pytest.raises(ValueError, match="nonzero at the origin"):
        parse_system("x1 + 1; x2", 2)


def test_arity_mismatch():
    from doakit.expr import ExpressionError

    with pytest.raises(ExpressionError, match="expected 3 components"):
        parse_system("x1; x2", 3)


def test_lift_at_equilibrium_is_zero():
    sys = builtin("vdp2")
    s = lift(sys, np.zeros(2), 2)
    assert np.all(s.z == 0.0) and np.all(s.zdot == 0.0)
    assert s.z.size == 6 and s.zdot.size == 6


def test_lift_vdp2_hand_computed():
    # f(1,1) = (1,-4); Jacobian [[0,1],[0,-2]] gives fdot = (-4, 8)
    sys = builtin("vdp2")
    s = lift(sys, np.array([1.0, 1.0]), 1)
    assert np.allclose(s.z, [1.0, 1.0, 1.0, -4.0])
    assert np.allclose(s.zdot, [1.0, -4.0, -4.0, 8.0])


def test_lift_shift_identity_exact():
    rng = np.random.default_rng(3)
    for name in BUILTIN_NAMES:
        sys = builtin(name)
        lo, hi = ROI_BOUNDS[name]
        X = rng.uniform(lo, hi, size=(7, sys.n))
        for d in (1, 2, 3):
            ls = lift_set(sys, X, d)
            n = sys.n
            assert ls.z.shape[1] == n * (d + 1)
            assert np.array_equal(ls.z[:, n:], ls.zdot[:, : n * d])


def test_lift_matches_flow_derivative_oracle():
    rng = np.random.default_rng(11)
    for name in BUILTIN_NAMES:
        sys = builtin(name)
        lo, hi = ROI_BOUNDS[name]
        for _ in range(4):
            x0 = rng.uniform(lo, hi)
            ls = lift_set(sys, x0.reshape(1, -1), 3)
            fd = flow_derivatives_fd(sys, x0, 3)
            for i in range(4):
                jet_i = ls.zdot[0, i * sys.n : (i + 1) * sys.n]
                err = np.linalg.norm(jet_i - fd[i]) / (1.0 + np.linalg.norm(fd[i]))
                assert err <= 1e-6, f"{name}, order {i}: rel err {err:.2e}"


def test_zero_field_lift():
    sys = parse_system("0; 0", 2, name="zero")
    ls = lift_set(sys, np.array([[1.5, -2.0]]), 2)
    assert np.all(ls.z[0, 2:] == 0.0) and np.all(ls.zdot == 0.0)
    assert np.allclose(ls.z[0, :2], [1.5, -2.0])


def test_jet_division_by_zero_reports_state():
    sys = parse_system("x1/(x2 + 1); x1", 2, name="rational")
    with pytest.raises(LiftError, match=r"x1/\(x2 \+ 1\)"):
        lift(sys, np.array([1.0, -1.0]), 2)


def test_batched_rhs_evaluation():
    sys = builtin("ex2_2d")
    X = np.array([[0.5, -1.0], [1.0, 2.0], [0.0, 0.0]])
    F = sys(X)
    for k in range(3):
        assert np.allclose(F[k], sys(X[k]))
