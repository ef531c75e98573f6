"""Command-line front end.

One key-value config file drives every stage; subcommands run the whole
loop or a single stage, and every artifact lands in the output
directory together with a manifest of content hashes.  Flags override
config keys; the DOAKIT_OUTPUT environment variable supplies the
default output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys as _sys
import time
from pathlib import Path

import numpy as np

__all__ = ["main", "load_config", "config_to_runconfig", "BENCH_ROWS"]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_VERIFIED = 2

_KNOWN_KEYS = {
    "system", "system.n", "system.params",
    "roi.lower", "roi.upper",
    "grid.points_per_dim",
    "lift.d",
    "learner.epsilon", "learner.delta",
    "loop.i_max",
    "sim.integrator", "sim.rel_tol", "sim.abs_tol", "sim.step", "sim.t_max",
    "sim.r_conv", "sim.r_div",
    "verifier.n_starts", "verifier.r0", "verifier.fd_step",
    "verifier.max_inner_iters", "verifier.local_tol", "verifier.restrict_to_roi",
    "admm.m", "admm.rho", "admm.eps_bar", "admm.max_iters",
    "volume.samples", "volume.true_grid",
    "audit.samples",
    "seed",
    "output.dir",
    "counterexample.route_by_simulation",
}


def load_config(path: str | Path, overrides: list[str] | None = None) -> dict:
    """Parse a ``key = value`` config file; unknown keys are rejected."""
    path = Path(path)
    values: dict[str, str] = {}
    errors = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            errors.append(f"{path}:{lineno}: unknown key {key!r}")
            continue
        values[key] = value
    for item in overrides or []:
        if "=" not in item:
            errors.append(f"--set {item!r}: expected key=value")
            continue
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in _KNOWN_KEYS:
            errors.append(f"--set: unknown key {key!r}")
            continue
        values[key] = value
    if errors:
        raise ValueError("config errors:\n  " + "\n  ".join(errors))
    if "output.dir" in values:
        out = Path(values["output.dir"])
        if not out.is_absolute():
            values["output.dir"] = str((path.parent / out).resolve())
    return values


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _params(text: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, value = part.split("=")
        out[name.strip()] = float(value)
    return out


def config_to_runconfig(values: dict):
    from .doa import RunConfig
    from .sampling import SimConfig
    from .verifier import VerifierConfig

    sim_kwargs = {}
    for key, name, conv in (
        ("sim.integrator", "integrator", str),
        ("sim.rel_tol", "rel_tol", float),
        ("sim.abs_tol", "abs_tol", float),
        ("sim.step", "step", float),
        ("sim.t_max", "t_max", float),
        ("sim.r_conv", "r_conv", float),
        ("sim.r_div", "r_div", float),
    ):
        if key in values:
            sim_kwargs[name] = conv(values[key])
    ver_kwargs = {}
    for key, name, conv in (
        ("verifier.n_starts", "n_starts", int),
        ("verifier.r0", "r0", float),
        ("verifier.fd_step", "fd_step", float),
        ("verifier.max_inner_iters", "max_inner_iters", int),
        ("verifier.local_tol", "local_tol", float),
        ("verifier.restrict_to_roi", "restrict_to_roi", lambda v: v.lower() in ("1", "true", "yes")),
    ):
        if key in values:
            ver_kwargs[name] = conv(values[key])
    kwargs = dict(
        system=values["system"],
        roi_lower=_floats(values["roi.lower"]),
        roi_upper=_floats(values["roi.upper"]),
        sim=SimConfig(**sim_kwargs),
        verifier=VerifierConfig(**ver_kwargs),
    )
    if "system.n" in values:
        kwargs["system_n"] = int(values["system.n"])
    if "system.params" in values:
        kwargs["system_params"] = _params(values["system.params"])
    for key, name, conv in (
        ("grid.points_per_dim", "n_g", int),
        ("lift.d", "d", int),
        ("learner.epsilon", "epsilon", float),
        ("learner.delta", "delta", float),
        ("loop.i_max", "i_max", int),
        ("admm.m", "admm_m", int),
        ("admm.rho", "admm_rho", float),
        ("admm.eps_bar", "admm_eps_bar", float),
        ("admm.max_iters", "admm_max_iters", int),
        ("volume.samples", "volume_samples", int),
        ("volume.true_grid", "true_doa_points_per_dim", int),
        ("audit.samples", "audit_samples", int),
        ("seed", "seed", int),
        ("counterexample.route_by_simulation", "route_counterexamples_by_simulation",
         lambda v: v.lower() in ("1", "true", "yes")),
    ):
        if key in values:
            kwargs[name] = conv(values[key])
    return RunConfig(**kwargs)


class _Manifest:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.entries = []

    def add(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.entries.append({"name": path.name, "sha256": digest, "bytes": path.stat().st_size})

    def write(self, extra: dict | None = None):
        payload = {"created": time.strftime("%Y-%m-%dT%H:%M:%S"), "files": self.entries}
        if extra:
            payload.update(extra)
        path = self.out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return path


def _out_dir(args, values) -> Path:
    out = args.output or values.get("output.dir") or os.environ.get("DOAKIT_OUTPUT") or "doakit-out"
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common(parser: argparse.ArgumentParser, config_required: bool = True):
    parser.add_argument("--config", required=config_required, help="key=value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--output", help="output directory (default: config, then $DOAKIT_OUTPUT)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--threads", type=int, default=os.cpu_count(),
                        help="worker threads for block solves")
    parser.add_argument("-v", "--verbose", action="store_true")


def _setup(args):
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    values = load_config(args.config, args.overrides) if args.config else {}
    cfg = config_to_runconfig(values) if values else None
    if cfg is not None and args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return values, cfg


def cmd_run(args) -> int:
    from .doa import export_contour, run, save_contour_csv

    values, cfg = _setup(args)
    out = _out_dir(args, values)
    manifest = _Manifest(out)
    report = run(cfg)
    report_path = out / "report.json"
    report.to_json(report_path)
    manifest.add(report_path)
    if report.verified:
        from .learner import load_candidate
        cand_path = out / "candidate.json"
        with open(cand_path, "w") as fh:
            json.dump(report.candidate, fh, indent=2)
            fh.write("\n")
        manifest.add(cand_path)
        cand = load_candidate(cand_path)
        sys_obj = cfg.make_system()
        if sys_obj.n >= 2:
            lines = export_contour(cand, cfg.make_roi(), sys=sys_obj)
            contour_path = save_contour_csv(lines, out / "contour.csv")
            manifest.add(contour_path)
    manifest.write({"config": values})
    print(f"verified: {report.verified}; report: {report_path}")
    if report.verified:
        print(f"estimated volume: {report.estimated_volume:.4f} +/- {3 * report.volume_std_error:.4f}")
        return EXIT_OK
    return EXIT_NOT_VERIFIED


def cmd_sample(args) -> int:
    from .sampling import build_dataset, save_dataset

    values, cfg = _setup(args)
    out = _out_dir(args, values)
    manifest = _Manifest(out)
    sys_obj = cfg.make_system()
    samples = build_dataset(sys_obj, cfg.make_roi(), cfg.n_g, cfg.sim)
    csv_path, sidecar = save_dataset(samples, out / "dataset.csv", sys_obj, cfg.sim)
    manifest.add(csv_path)
    manifest.add(sidecar)
    manifest.write({"config": values})
    print(f"dataset: {samples.n_stable} stable / {samples.n_unstable} unstable -> {csv_path}")
    return EXIT_OK


def cmd_learn(args) -> int:
    from .learner import LearnerConfig, LearnerError, learn, save_candidate
    from .sampling import load_dataset

    values, cfg = _setup(args)
    out = _out_dir(args, values)
    manifest = _Manifest(out)
    samples, meta = load_dataset(Path(args.dataset))
    if samples.n_stable == 0:
        print("error: no stable samples in the dataset", file=_sys.stderr)
        return EXIT_ERROR
    sys_obj = cfg.make_system()
    d = args.d or cfg.d
    try:
        cand = learn(sys_obj, samples, d, LearnerConfig(epsilon=cfg.epsilon, delta=cfg.delta),
                     admm_cfg=cfg.admm_config())
    except LearnerError as err:
        print(f"error: {err}", file=_sys.stderr)
        return EXIT_ERROR
    path = save_candidate(cand, out / "candidate.json",
                          config=LearnerConfig(epsilon=cfg.epsilon, delta=cfg.delta),
                          dataset_hash=meta.get("system", {}).get("hash"))
    manifest.add(path)
    manifest.write({"config": values})
    print(f"candidate: objective {cand.objective:.6g}, {cand.covered} covered -> {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .learner import load_candidate
    from .sampling import load_dataset
    from .verifier import save_trace, verify
    from .learner import ALPHA_ZERO_TOL

    values, cfg = _setup(args)
    out = _out_dir(args, values)
    manifest = _Manifest(out)
    samples, _ = load_dataset(Path(args.dataset))
    cand = load_candidate(Path(args.candidate))
    starts = None
    if cand.alpha is not None and len(cand.alpha) == samples.n_stable:
        starts = samples.stable[cand.alpha <= ALPHA_ZERO_TOL]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[0])
    res = verify(cfg.make_system(), cand, cfg.make_roi(), cfg.verifier,
                 starts=starts, train_grid=cfg.n_g, rng=rng, collect_trace=True)
    path = save_trace(res, out / "verifier.json")
    manifest.add(path)
    manifest.write({"config": values})
    print(f"gamma* = {res.gamma_star:.6g}, eta* = {res.eta_star:.6g}, verified = {res.verified}")
    return EXIT_OK if res.verified else EXIT_NOT_VERIFIED


def cmd_volume(args) -> int:
    from .doa import volume
    from .learner import load_candidate

    values, cfg = _setup(args)
    out = _out_dir(args, values)
    manifest = _Manifest(out)
    cand = load_candidate(Path(args.candidate))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[1])
    vol, se = volume(cand, cfg.make_roi(), cfg.volume_samples, rng, sys=cfg.make_system())
    path = out / "volume.json"
    with open(path, "w") as fh:
        json.dump({"volume": vol, "std_error": se, "samples": cfg.volume_samples}, fh, indent=2)
        fh.write("\n")
    manifest.add(path)
    manifest.write({"config": values})
    print(f"volume: {vol:.4f} +/- {3 * se:.4f} (3 sigma)")
    return EXIT_OK


def cmd_export(args) -> int:
    from .doa import export_contour, save_contour_csv
    from .learner import load_candidate

    values, cfg = _setup(args)
    out = _out_dir(args, values)
    manifest = _Manifest(out)
    cand = load_candidate(Path(args.candidate))
    axes = tuple(int(a) - 1 for a in args.axes.split(","))
    fixed = None
    if args.fixed:
        fixed = np.zeros(cfg.make_roi().n)
        for part in args.fixed.split(","):
            name, value = part.split("=")
            fixed[int(name.strip().lstrip("x")) - 1] = float(value)
    lines = export_contour(cand, cfg.make_roi(), sys=cfg.make_system(), axes=axes,
                           fixed=fixed, resolution=args.resolution)
    path = save_contour_csv(lines, out / "contour.csv", axes=axes)
    manifest.add(path)
    manifest.write({"config": values})
    print(f"contour: {len(lines)} polylines -> {path}")
    return EXIT_OK


#: Benchmark rows: config plus the reference results they are compared to.
BENCH_ROWS = {
    "vdp2": {
        "config": dict(system="vdp2", roi_lower=(-4.0, -10.0), roi_upper=(4.0, 10.0),
                       n_g=30, d=2, epsilon=1e-3, delta=0.15, i_max=10,
                       true_doa_points_per_dim=100),
        "reference": {"volume": 57.72, "true_volume": 66.84, "iterations": 2, "time_s": 0.093},
    },
    "ex2_2d": {
        "config": dict(system="ex2_2d", roi_lower=(-2.5, -2.5), roi_upper=(2.5, 2.5),
                       n_g=30, d=1, epsilon=1e-3, delta=0.1, i_max=10,
                       true_doa_points_per_dim=100),
        "reference": {"volume": 8.44, "true_volume": 8.736, "iterations": 1, "time_s": 0.015},
    },
    "ex3_2d": {
        "config": dict(system="ex3_2d", roi_lower=(-2.0, -7.0), roi_upper=(7.0, 2.0),
                       n_g=30, d=3, epsilon=1e-3, delta=0.1, i_max=10,
                       true_doa_points_per_dim=100),
        "reference": {"volume": 16.39, "true_volume": 17.28, "iterations": 3, "time_s": 0.273},
    },
    "sys3d": {
        "config": dict(system="sys3d", roi_lower=(-4.0, -5.0, -8.5), roi_upper=(4.0, 5.0, 7.0),
                       n_g=21, d=1, epsilon=1e-4, delta=0.1, i_max=15,
                       true_doa_points_per_dim=41),
        "reference": {"volume": 529.49, "true_volume": 888.12, "iterations": 8, "time_s": 2.830},
    },
    "sys5d": {
        "config": dict(system="sys5d", roi_lower=(-4.0, -10.0, -4.0, -5.0, -8.5),
                       roi_upper=(4.0, 10.0, 4.0, 5.0, 7.0),
                       n_g=9, d=1, epsilon=1e-2, delta=0.5, i_max=10, admm_m=2,
                       true_doa_points_per_dim=9),
        "reference": {"volume": 5087.06, "true_volume": 31754.63, "iterations": 5, "time_s": 986.67},
    },
}


def cmd_bench(args) -> int:
    from .doa import RunConfig, run

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    rows = list(BENCH_ROWS) if args.row == "all" else [args.row]
    out = Path(args.output or os.environ.get("DOAKIT_OUTPUT") or "doakit-out")
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for name in rows:
        if name not in BENCH_ROWS:
            print(f"unknown bench row {name!r}; available: {', '.join(BENCH_ROWS)}", file=_sys.stderr)
            return EXIT_ERROR
        spec_row = BENCH_ROWS[name]
        cfg = RunConfig(seed=args.seed if args.seed is not None else 0, **spec_row["config"])
        t0 = time.perf_counter()
        report = run(cfg)
        elapsed = time.perf_counter() - t0
        report.to_json(out / f"bench_{name}.json")
        ref = spec_row["reference"]
        vol = report.estimated_volume
        print(f"{name}: verified={report.verified} iterations={report.iterations_used}")
        print(f"  volume      measured={vol if vol is None else f'{vol:.2f}'}  reference={ref['volume']}")
        if report.true_doa_volume is not None:
            print(f"  true volume measured={report.true_doa_volume:.2f}  reference={ref['true_volume']}")
        print(f"  wall clock  measured={elapsed:.1f}s  reference={ref['time_s']}s (commercial solver)")
        if not report.verified:
            failures += 1
    return EXIT_OK if failures == 0 else EXIT_NOT_VERIFIED


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="doakit",
        description="Inner estimates of domains of attraction via sampled Lyapunov synthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full estimation loop")
    _common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sample", help="build and store the labeled dataset")
    _common(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("learn", help="fit a candidate from a stored dataset")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--d", type=int, help="lift order override")
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("verify", help="verify a stored candidate")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--candidate", required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("volume", help="Monte Carlo level-set volume of a candidate")
    _common(p)
    p.add_argument("--candidate", required=True)
    p.set_defaults(fn=cmd_volume)

    p = sub.add_parser("export", help="export a level-set contour slice as CSV")
    _common(p)
    p.add_argument("--candidate", required=True)
    p.add_argument("--axes", default="1,2", help="two 1-based axis indices, e.g. 1,2")
    p.add_argument("--fixed", help="fixed values for other axes, e.g. x3=0,x4=0")
    p.add_argument("--resolution", type=int, default=200)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("bench", help="replay the builtin benchmark rows")
    p.add_argument("--row", default="all", help="row name or 'all'")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=_sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
