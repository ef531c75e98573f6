import dataclasses

import numpy as np
import pytest

from doakit.sampling import Roi, SampleSet, SimConfig, build_dataset, classify, grid, load_dataset, save_dataset
from doakit.systems import builtin, parse_system
from oracles import simulate_to_origin


@pytest.fixture(scope="module")
def vdp_roi():
    return Roi(np.array([-4.0, -10.0]), np.array([4.0, 10.0]))


def test_roi_validation():
    with pytest.raises(ValueError, match="lower < upper"):
        Roi(np.array([1.0, -1.0]), np.array([0.5, 1.0]))
    with pytest.raises(ValueError, match="origin"):
        Roi(np.array([0.5, -1.0]), np.array([2.0, 1.0]))


def test_grid_counts(vdp_roi):
    assert grid(vdp_roi, 30).shape == (900, 2)
    roi5 = Roi(-np.ones(5), np.ones(5))
    assert grid(roi5, 9).shape == (59049, 5)


def test_grid_includes_corners_1d():
    roi = Roi(np.array([-1.0]), np.array([1.0]))
    pts = grid(roi, 2)
    assert sorted(pts.ravel().tolist()) == [-1.0, 1.0]


def test_grid_overflow_guard():
    roi = Roi(-np.ones(6), np.ones(6))
    with pytest.raises(ValueError, match="exceeds"):
        grid(roi, 50)


def test_grid_lexicographic_order(vdp_roi):
    pts = grid(vdp_roi, 3)
    # first coordinate varies slowest
    assert np.all(np.diff(pts[:, 0]) >= 0)
    assert pts[0, 1] == -10.0 and pts[1, 1] == 0.0 and pts[2, 1] == 10.0


def test_classify_examples(vdp_roi):
    sys = builtin("vdp2")
    cfg = SimConfig()
    assert classify(sys, np.zeros(2), cfg, vdp_roi) == "stable"
    assert classify(sys, np.array([0.1, 0.1]), cfg, vdp_roi) == "stable"
    assert classify(sys, np.array([4.0, 10.0]), cfg, vdp_roi) == "unstable"


def test_classification_against_reference_integrator(vdp_roi):
    sys = builtin("vdp2")
    cfg = SimConfig()
    rng = np.random.default_rng(5)
    pts = rng.uniform(vdp_roi.lower * 0.9, vdp_roi.upper * 0.9, size=(12, 2))
    rule = cfg.stop_rule(vdp_roi)
    for x0 in pts:
        mine = classify(sys, x0, cfg, vdp_roi)
        ref = simulate_to_origin(sys, x0, t_max=cfg.t_max, r_conv=rule.r_converge,
                                 r_escape=rule.r_escape)
        assert (mine == "stable") == ref, f"disagreement at {x0}"


def test_timeout_counts_as_unstable():
    # pure rotation never enters the convergence ball
    sys = parse_system("x2; -x1", 2, name="rotor")
    roi = Roi(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    cfg = SimConfig(t_max=5.0)
    assert classify(sys, np.array([1.0, 0.0]), cfg, roi) == "unstable"


def test_monotone_under_tightening(vdp_roi):
    sys = builtin("vdp2")
    rng = np.random.default_rng(7)
    pts = rng.uniform(vdp_roi.lower * 0.8, vdp_roi.upper * 0.8, size=(10, 2))
    loose = SimConfig(t_max=60.0)
    for x0 in pts:
        label_loose = classify(sys, x0, loose, vdp_roi)
        for tight in (SimConfig(t_max=20.0), SimConfig(t_max=60.0, r_conv=0.01)):
            label_tight = classify(sys, x0, tight, vdp_roi)
            if label_loose == "unstable":
                assert label_tight == "unstable"


def test_equilibrium_cell_stable_for_all_builtins():
    from doakit.cli import BENCH_ROWS

    for name, row in BENCH_ROWS.items():
        sys = builtin(name)
        roi = Roi(np.array(row["config"]["roi_lower"]), np.array(row["config"]["roi_upper"]))
        pts = grid(roi, row["config"]["n_g"])
        nearest = pts[np.argmin(np.linalg.norm(pts, axis=1))]
        assert classify(sys, nearest, SimConfig(), roi) == "stable", name


def test_build_dataset_partition_and_determinism(vdp_roi):
    sys = builtin("vdp2")
    cfg = SimConfig()
    ds1 = build_dataset(sys, vdp_roi, 12, cfg)
    ds2 = build_dataset(sys, vdp_roi, 12, cfg)
    assert ds1.size == 144
    assert ds1.n_stable + ds1.n_unstable == 144
    assert np.array_equal(ds1.stable, ds2.stable)
    assert np.array_equal(ds1.unstable, ds2.unstable)
    # disjoint
    joined = {tuple(r) for r in ds1.stable} & {tuple(r) for r in ds1.unstable}
    assert not joined
    assert np.all(vdp_roi.contains(np.vstack([ds1.stable, ds1.unstable])))


def test_dataset_roundtrip_bit_exact(tmp_path, vdp_roi):
    sys = builtin("vdp2")
    cfg = SimConfig()
    ds = build_dataset(sys, vdp_roi, 10, cfg)
    csv_path, sidecar = save_dataset(ds, tmp_path / "data.csv", sys, cfg)
    loaded, meta = load_dataset(csv_path)
    assert np.array_equal(loaded.stable, ds.stable)
    assert np.array_equal(loaded.unstable, ds.unstable)
    assert loaded.grid_points_per_dim == 10
    assert meta["system"]["hash"] == sys.content_hash()
    # saving the loaded set reproduces the file byte for byte
    csv2, _ = save_dataset(loaded, tmp_path / "data2.csv", sys, cfg)
    assert csv_path.read_bytes() == csv2.read_bytes()


def test_rk4_fixed_integrator_agrees(vdp_roi):
    sys = builtin("vdp2")
    adaptive = SimConfig()
    fixed = SimConfig(integrator="rk4_fixed", step=5e-3)
    rng = np.random.default_rng(9)
    pts = rng.uniform(vdp_roi.lower * 0.7, vdp_roi.upper * 0.7, size=(8, 2))
    agree = sum(
        classify(sys, x0, adaptive, vdp_roi) == classify(sys, x0, fixed, vdp_roi) for x0 in pts
    )
    assert agree >= 7  # boundary points may differ, bulk must agree
