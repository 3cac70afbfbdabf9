"""Experiment runner.

Subcommands:
  run           one instance: build, solve, write profile.csv + report.json
  reproduce     named presets with PASS/FAIL verdicts against frozen bands
  sweep         one metric against one axis, with observed-rate footer rows
  mesh-inspect  mesh diagnostics as JSON on stdout

Reports are deterministic: floats are serialized with 17 significant digits
in a fixed key order, so identical configs produce byte-identical files
except for the trailing wall_time_s entry.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import QCLabError, UnknownFamily
from .model import ChainModel, harmonic_potential, lattice_coordinates, sample_force
from .mesh import (
    CoarseMesh,
    MeshSpec,
    build_mesh,
    parse_mesh_descriptor,
    prolong,
    smoothness_profile,
)
from .cluster import ClusterRule, assemble_weight_system, solve_weights, verify_exactness
from .solve import (
    energy_cluster_functional,
    solve_atomistic,
    solve_constrained,
    solve_energy_cluster,
    solve_force_cluster,
)
from .analysis import (
    consistency_estimate,
    error_report,
    force_scaling_study,
    gradient_alternation,
    load_defect,
    smooth_mesh_consistency,
)

_METHODS = ("atomistic", "constrained", "energy-cluster", "force-cluster")


@dataclass(frozen=True)
class RunConfig:
    mesh: str | None
    N: int
    K: int | None
    r: int
    weights: str
    method: str
    force: str
    out: str


# ---------------------------------------------------------------- serialization

def _format_float(x: float) -> str:
    if np.isnan(x):
        return '"nan"'
    if np.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return "%.17g" % x


def _to_json(value, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{key}": {_to_json(entry, indent + 1)}' for key, entry in value.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_to_json(entry, indent + 1) for entry in value) + "]"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _format_float(float(value))
    if value is None:
        return "null"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(_to_json(payload) + "\n")


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray],
               footer: list[str] | None = None) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join("%.17g" % v for v in row))
    if footer:
        lines.extend(footer)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- configuration

def _load_config_file(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise QCLabError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


_CONFIG_KEYS = {
    "mesh": str, "N": int, "K": int, "r": int,
    "weights": str, "method": str, "force": str, "out": str,
}


def _merge_config(args: argparse.Namespace, need_method: bool = True,
                  need_N: bool = True) -> RunConfig:
    values: dict = {"mesh": None, "N": None, "K": None, "r": 0,
                    "weights": "exact", "method": "constrained", "force": None, "out": "."}
    if args.config:
        for key, raw in _load_config_file(args.config).items():
            if key not in _CONFIG_KEYS:
                raise QCLabError(f"unknown config key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](raw)
            except ValueError:
                raise QCLabError(f"config key {key!r} has a bad value {raw!r}") from None
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if values["N"] is None:
        if need_N:
            raise QCLabError("N is required (flag --N or config file)")
        values["N"] = 0  # never consumed: the swept axis supplies N per point
    if values["force"] is None:
        raise QCLabError("force descriptor is required (flag --force or config file)")
    if values["method"] not in _METHODS:
        raise UnknownFamily(f"unknown method {values['method']!r}; choose from {_METHODS}")
    if values["weights"] not in ("exact", "lumped"):
        raise UnknownFamily(f"unknown weight mode {values['weights']!r}")
    if need_method and values["method"] != "atomistic" and (
        values["mesh"] is None or values["K"] is None
    ):
        raise QCLabError(f"method {values['method']!r} needs --mesh and --K")
    return RunConfig(**values)


# ---------------------------------------------------------------- run pipeline

def _mesh_summary(mesh: CoarseMesh) -> dict:
    return {
        "repatoms": mesh.repatoms,
        "steps": mesh.steps,
        "h": mesh.h,
        "kappa": mesh.kappa,
    }


def _smoothness_summary(mesh: CoarseMesh) -> dict:
    profile = smoothness_profile(mesh)
    return {"coefficients": profile.coefficients, "max_abs": profile.max_abs}


def _weights_summary(mesh: CoarseMesh, rule: ClusterRule, weights) -> dict:
    system = assemble_weight_system(mesh, rule)
    return {
        "mode": weights.mode,
        "r": rule.r,
        "energy_exact": weights.energy_exact,
        "energy_lumped": weights.energy_lumped,
        "gap_max": weights.gap_max,
        "residual_max": float(np.max(np.abs(weights.residual))),
        "dominance_margin_min": float(np.min(system.dominance_margin())),
        "exactness_defect": verify_exactness(mesh, rule, weights),
    }


def _solve_summary(report) -> dict:
    return {"residual": report.residual, "reaction": report.reaction,
            "iterations": report.iterations}


def _error_summary(err) -> dict:
    return {
        "energy_norm_rel": err.energy_norm_rel,
        "energy_rel": err.energy_rel,
        "mean": err.mean,
        "consistency": err.consistency,
        "sandwich_lower": err.sandwich_lower,
        "sandwich_upper": err.sandwich_upper,
        "kappa": err.kappa,
        "predicted_band": list(err.predicted_band) if err.predicted_band else None,
        "reference_norm": err.reference_norm,
    }


def _execute(config: RunConfig) -> tuple[dict, dict[str, np.ndarray], list[str]]:
    """Solve per config; returns (report payload, profile columns, column order)."""
    started = time.perf_counter()
    model = ChainModel(N=config.N, potential=harmonic_potential(),
                       force=sample_force(config.force, config.N))
    payload: dict = {"config": {
        "mesh": config.mesh, "N": config.N, "K": config.K, "r": config.r,
        "weights": config.weights, "method": config.method, "force": config.force,
    }}
    columns: dict[str, np.ndarray] = {"x": lattice_coordinates(config.N)}
    order = ["x", "u_atomistic"]

    atomistic = solve_atomistic(model)
    columns["u_atomistic"] = atomistic.solution.values
    solves = {"atomistic": _solve_summary(atomistic)}

    mesh = None
    constrained = None
    if config.mesh is not None and config.K is not None:
        mesh = build_mesh(parse_mesh_descriptor(config.mesh, config.N, config.K))
        payload["mesh"] = _mesh_summary(mesh)
        payload["smoothness"] = _smoothness_summary(mesh)
        constrained = solve_constrained(model, mesh)
        solves["constrained"] = _solve_summary(constrained)
        columns["u_constrained"] = prolong(mesh, constrained.solution).values
        order.append("u_constrained")

    if config.method in ("energy-cluster", "force-cluster"):
        rule = ClusterRule(mesh=mesh, r=config.r)
        weights = solve_weights(assemble_weight_system(mesh, rule)).with_mode(config.weights)
        payload["weights"] = _weights_summary(mesh, rule, weights)
        if config.method == "energy-cluster":
            qc = solve_energy_cluster(model, mesh, rule, weights)
        else:
            qc = solve_force_cluster(model, mesh, rule, weights)
        solves[config.method] = _solve_summary(qc)
        columns["u_qc"] = prolong(mesh, qc.solution).values
        order.append("u_qc")
        family = config.mesh.split(":", 1)[0]
        err = error_report(model, mesh, atomistic.solution, constrained.solution,
                           qc.solution,
                           energy_cluster_functional(model, mesh, rule, weights, qc.solution),
                           family=family)
        payload["solves"] = solves
        payload["errors"] = _error_summary(err)
    else:
        payload["solves"] = solves

    payload["wall_time_s"] = time.perf_counter() - started
    return payload, columns, order


def _cmd_run(args: argparse.Namespace) -> int:
    config = _merge_config(args)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    payload, columns, order = _execute(config)
    _write_csv(out / "profile.csv", order, [columns[name] for name in order])
    _write_json(out / "report.json", payload)
    print(f"wrote {out / 'profile.csv'} and {out / 'report.json'}")
    return 0


# ---------------------------------------------------------------- presets

def _band(name: str, value: float, lo: float, hi: float, checks: dict) -> None:
    checks[name] = {"value": value, "band": [lo, hi], "pass": bool(lo <= value <= hi)}


def _preset_figure(preset: str, out: Path) -> int:
    if preset == "fig1":
        config = RunConfig(mesh="graded", N=2 ** 14, K=15, r=0, weights="exact",
                           method="energy-cluster", force="gauss:1e4,1e4", out=str(out))
        bands = {"energy_norm_rel": (0.10, 0.13), "energy_rel": (-0.16, -0.10)}
    else:
        config = RunConfig(mesh="oscillatory", N=10 ** 4, K=20, r=0, weights="exact",
                           method="energy-cluster", force="sinpi", out=str(out))
        bands = {"energy_norm_rel": (0.30, 0.36), "energy_rel": (0.08, 0.12)}
    started = time.perf_counter()
    payload, columns, order = _execute(config)
    elapsed = time.perf_counter() - started

    checks: dict = {}
    for name, (lo, hi) in bands.items():
        _band(name, payload["errors"][name], lo, hi, checks)
    checks["runtime_s"] = {"value": elapsed, "band": [0.0, 5.0], "pass": bool(elapsed < 5.0)}
    if preset == "fig2":
        # re-solve the two nodal systems to test the error sign pattern
        model = ChainModel(N=config.N, potential=harmonic_potential(),
                           force=sample_force(config.force, config.N))
        mesh = build_mesh(parse_mesh_descriptor(config.mesh, config.N, config.K))
        rule = ClusterRule(mesh=mesh, r=config.r)
        weights = solve_weights(assemble_weight_system(mesh, rule))
        alternating, pairs = gradient_alternation(
            solve_constrained(model, mesh).solution,
            solve_energy_cluster(model, mesh, rule, weights).solution)
        checks["gradient_alternation"] = {"value": pairs, "pass": bool(alternating and pairs > 0)}

    passed = all(entry["pass"] for entry in checks.values())
    wall = payload.pop("wall_time_s")
    payload["preset"] = preset
    payload["checks"] = checks
    payload["verdict"] = "PASS" if passed else "FAIL"
    payload["wall_time_s"] = wall
    _write_csv(out / "profile.csv", order, [columns[name] for name in order])
    _write_json(out / "report.json", payload)
    detail = ", ".join(f"{k}={v['value']:.6g}" for k, v in checks.items())
    print(f"{preset}: {payload['verdict']} ({detail})")
    return 0 if passed else 2


def _preset_example1(out: Path) -> int:
    table = smooth_mesh_consistency(N=2 ** 14, K_values=[8, 16, 32, 64], amplitude=0.2)
    rate = table.fit_rate()
    rates = table.rates()
    passed = rate >= 1.9
    payload = {
        "preset": "example1",
        "config": {"mesh": "smooth:0.2", "N": 2 ** 14, "K_values": [8, 16, 32, 64],
                   "force": "sinpi", "method": "constrained"},
        "h_max": table.parameters,
        "consistency": table.values,
        "pairwise_rates": rates,
        "fit_rate": rate,
        "checks": {"consistency_rate": {"value": rate, "band": [1.9, float("inf")],
                                        "pass": bool(passed)}},
        "verdict": "PASS" if passed else "FAIL",
    }
    _write_csv(out / "sweep.csv", ["K", "h_max", "consistency"],
               [np.array([8, 16, 32, 64], dtype=float), table.parameters, table.values],
               footer=["rate,%.17g" % r for r in rates])
    _write_json(out / "report.json", payload)
    print(f"example1: {payload['verdict']} (fit_rate={rate:.4f}, pairwise="
          + "/".join(f"{r:.3f}" for r in rates) + ")")
    return 0 if passed else 2


def _preset_force_scaling(out: Path) -> int:
    study = force_scaling_study(N=2 ** 12, K_values=[8, 16, 32, 64], r=1)
    at_k16 = int(np.where(study.K_values == 16)[0][0])
    ratio_gap = abs(study.ratio_measured[at_k16] / study.ratio_predicted[at_k16] - 1.0)
    scaled_rate = study.scaled_table().fit_rate()
    absolute_rate = study.absolute_table().fit_rate()
    checks: dict = {}
    checks["ratio_gap_at_K16"] = {"value": ratio_gap, "band": [0.0, 0.02],
                                  "pass": bool(ratio_gap <= 0.02)}
    checks["scaled_deviation_rate"] = {"value": scaled_rate, "band": [1.8, float("inf")],
                                       "pass": bool(scaled_rate >= 1.8)}
    passed = all(entry["pass"] for entry in checks.values())
    payload = {
        "preset": "force-scaling",
        "config": {"mesh": "uniform", "N": 2 ** 12, "K_values": [8, 16, 32, 64],
                   "r": 1, "force": "sinpi", "method": "force-cluster"},
        "K": study.K_values,
        "h": study.h_values,
        "ratio_measured": study.ratio_measured,
        "ratio_predicted": study.ratio_predicted,
        "deviation_scaled": study.deviation_scaled,
        "deviation_absolute": study.deviation_absolute,
        "scaled_deviation_rate": scaled_rate,
        "absolute_deviation_rate": absolute_rate,
        "checks": checks,
        "verdict": "PASS" if passed else "FAIL",
    }
    _write_csv(out / "sweep.csv",
               ["K", "h", "ratio_measured", "ratio_predicted",
                "deviation_scaled", "deviation_absolute"],
               [study.K_values.astype(float), study.h_values, study.ratio_measured,
                study.ratio_predicted, study.deviation_scaled, study.deviation_absolute],
               footer=["rate,%.17g" % r for r in study.scaled_table().rates()])
    _write_json(out / "report.json", payload)
    print(f"force-scaling: {payload['verdict']} (ratio_gap@K16={ratio_gap:.3e}, "
          f"scaled_rate={scaled_rate:.3f}, absolute_rate={absolute_rate:.3f})")
    return 0 if passed else 2


def _audit_meshes() -> list[tuple[str, CoarseMesh, list[int]]]:
    """(label, mesh, cluster radii to audit) triples."""
    instances: list[tuple[str, CoarseMesh, list[int]]] = []
    instances.append(("uniform-64-4", build_mesh(MeshSpec(family="uniform", N=64, K=4)),
                      [0, 1, 3, 7]))
    instances.append(("graded-4", build_mesh(MeshSpec(family="graded", N=8, K=4)), [0]))
    instances.append(("graded-6", build_mesh(MeshSpec(family="graded", N=32, K=6)), [0]))
    instances.append(("oscillatory-96-4",
                      build_mesh(MeshSpec(family="oscillatory", N=96, K=4)), [0, 1, 3]))
    base = np.array([4, 8, 16, 32, 32, 16, 8, 4])
    for m in range(4):
        steps = base * 2 ** m
        cums = np.cumsum(steps)
        reps = tuple(int(v) for v in (cums - cums[3]))
        N = int(steps.sum() // 2)
        mesh = build_mesh(MeshSpec(family="custom", N=N, K=4, indices=reps))
        instances.append((f"gradedlike-{N}", mesh, [1]))
    return instances


def _preset_weights_audit(out: Path) -> int:
    rows = []
    gap_by_size = []
    ok = True
    for label, mesh, radii in _audit_meshes():
        for r in radii:
            rule = ClusterRule(mesh=mesh, r=r)
            system = assemble_weight_system(mesh, rule)
            weights = solve_weights(system)
            margin = float(np.min(system.dominance_margin()))
            defect = verify_exactness(mesh, rule, weights)
            lumping_exact = bool(np.array_equal(weights.energy_exact, weights.energy_lumped))
            row_ok = (margin > r) and (defect <= 1e-10)
            if r == 0 or mesh.kappa == 1.0:
                row_ok = row_ok and lumping_exact
            ok = ok and row_ok
            rows.append({
                "mesh": label, "r": r, "dominance_margin_min": margin,
                "exactness_defect": defect, "gap_max": weights.gap_max,
                "residual_max": float(np.max(np.abs(weights.residual))),
                "lumped_equals_exact": lumping_exact, "pass": bool(row_ok),
            })
            if label.startswith("gradedlike"):
                gap_by_size.append((mesh.N, weights.gap_max))
    gaps = np.array([g for _, g in sorted(gap_by_size)])
    gap_rates = np.log(gaps[:-1] / gaps[1:]) / np.log(2.0)
    rate_ok = bool(np.all(gap_rates >= 0.9))
    ok = ok and rate_ok
    payload = {
        "preset": "weights-audit",
        "rows": rows,
        "lumped_gap_rates": gap_rates,
        "checks": {"gap_rate": {"value": float(np.min(gap_rates)),
                                "band": [0.9, float("inf")], "pass": rate_ok}},
        "verdict": "PASS" if ok else "FAIL",
    }
    _write_json(out / "report.json", payload)
    print(f"weights-audit: {payload['verdict']} ({len(rows)} rows, "
          f"gap rates {'/'.join(f'{r:.3f}' for r in gap_rates)})")
    return 0 if ok else 2


def _cmd_reproduce(args: argparse.Namespace) -> int:
    out = Path(args.out) / args.preset
    out.mkdir(parents=True, exist_ok=True)
    if args.preset in ("fig1", "fig2"):
        return _preset_figure(args.preset, out)
    if args.preset == "example1":
        return _preset_example1(out)
    if args.preset == "force-scaling":
        return _preset_force_scaling(out)
    return _preset_weights_audit(out)


# ---------------------------------------------------------------- sweeps

_SWEEP_PARAMS = {"consistency": "h_max", "weight-gap": "epsilon",
                 "load-defect": "h_max", "zero-force": "epsilon"}


def _sweep_point(metric: str, config: RunConfig, N: int, K: int, r: int) -> tuple[float, float]:
    """One (resolution parameter, metric value) sample."""
    model = ChainModel(N=N, potential=harmonic_potential(),
                       force=sample_force(config.force, N))
    mesh = build_mesh(parse_mesh_descriptor(config.mesh, N, K))
    if metric == "consistency":
        report = solve_constrained(model, mesh)
        return float(np.max(mesh.h)), consistency_estimate(mesh, report.solution).value
    rule = ClusterRule(mesh=mesh, r=r)
    weights = solve_weights(assemble_weight_system(mesh, rule)).with_mode(config.weights)
    if metric == "weight-gap":
        return model.epsilon, weights.gap_max
    if metric == "load-defect":
        return float(np.max(mesh.h)), load_defect(model, mesh, rule, weights.force)
    # zero-force: cluster solve of an unloaded chain must return the zero field
    unloaded = ChainModel(N=N, potential=harmonic_potential(),
                          force=sample_force("const:0", N))
    qc = solve_energy_cluster(unloaded, mesh, rule, weights)
    return model.epsilon, float(np.max(np.abs(qc.solution.values)))


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _merge_config(args, need_method=False, need_N=(args.axis != "N"))
    if config.mesh is None:
        raise QCLabError("sweep needs --mesh")
    if config.K is None and args.axis != "K":
        raise QCLabError("sweep needs --K unless K is the swept axis")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    points = [int(v) for v in args.values.split(",")]
    params = []
    values = []
    for point in points:
        N = point if args.axis == "N" else config.N
        K = point if args.axis == "K" else config.K
        r = point if args.axis == "r" else config.r
        param, value = _sweep_point(args.metric, config, N, K, r)
        params.append(param)
        values.append(value)
    params_arr = np.array(params)
    values_arr = np.array(values)
    footer = []
    if args.metric != "zero-force" and np.all(values_arr > 0.0):
        rates = np.log(values_arr[:-1] / values_arr[1:]) / np.log(
            params_arr[:-1] / params_arr[1:])
        footer = ["rate,%.17g" % r for r in rates]
    _write_csv(out / "sweep.csv", [args.axis, _SWEEP_PARAMS[args.metric], args.metric],
               [np.array(points, dtype=float), params_arr, values_arr], footer=footer)
    print(f"wrote {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------- mesh-inspect

def _cmd_mesh_inspect(args: argparse.Namespace) -> int:
    spec = parse_mesh_descriptor(args.mesh, args.N, args.K)
    mesh = build_mesh(spec)
    profile = smoothness_profile(mesh)
    max_r = int((np.min(mesh.steps) - 1) // 2)
    payload = {
        "family": spec.family,
        "N": mesh.N,
        "K": mesh.K,
        "repatoms": mesh.repatoms,
        "steps": mesh.steps,
        "h": mesh.h,
        "kappa": mesh.kappa,
        "smoothness_coefficients": profile.coefficients,
        "smoothness_max_abs": profile.max_abs,
        "max_admissible_r": max_r,
    }
    print(_to_json(payload))
    return 0


# ---------------------------------------------------------------- entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qclab",
        description="Cluster-summation coarse graining laboratory for a periodic chain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mesh", help="mesh descriptor: uniform | graded | oscillatory "
                                      "| smooth[:AMP] | custom:PATH")
        p.add_argument("--N", type=int, help="atoms per half period")
        p.add_argument("--K", type=int, help="mesh nodes per half period")
        p.add_argument("--r", type=int, help="cluster radius (default 0)")
        p.add_argument("--weights", choices=["exact", "lumped"], help="weight mode")
        p.add_argument("--method", choices=list(_METHODS), help="solver")
        p.add_argument("--force", help="force descriptor: sinpi | gauss:A,B | const:C | lin:a,b")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--config", help="key = value config file; flags override")

    run_p = sub.add_parser("run", help="solve one configured instance")
    add_common(run_p)
    run_p.set_defaults(handler=_cmd_run)

    rep_p = sub.add_parser("reproduce", help="run a named preset with PASS/FAIL bands")
    rep_p.add_argument("preset", choices=["fig1", "fig2", "example1",
                                          "force-scaling", "weights-audit"])
    rep_p.add_argument("--out", default=".", help="output directory (default .)")
    rep_p.set_defaults(handler=_cmd_reproduce)

    sweep_p = sub.add_parser("sweep", help="one metric along one axis")
    add_common(sweep_p)
    sweep_p.add_argument("--axis", choices=["K", "N", "r"], required=True)
    sweep_p.add_argument("--values", required=True, help="comma-separated axis values")
    sweep_p.add_argument("--metric", required=True,
                         choices=["consistency", "weight-gap", "load-defect", "zero-force"])
    sweep_p.set_defaults(handler=_cmd_sweep)

    inspect_p = sub.add_parser("mesh-inspect", help="mesh diagnostics as JSON")
    inspect_p.add_argument("--mesh", required=True)
    inspect_p.add_argument("--N", type=int, required=True)
    inspect_p.add_argument("--K", type=int, required=True)
    inspect_p.set_defaults(handler=_cmd_mesh_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except QCLabError as exc:
        print(_to_json({"error": {"code": exc.code, "message": str(exc)}}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
