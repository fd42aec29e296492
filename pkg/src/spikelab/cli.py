"""Single command-line entry point: every study as a subcommand.

Each subcommand assembles a config (flags, optionally overridden by a JSON
file), validates it against the published schema, runs the corresponding
module pipeline, writes machine-readable outputs with a provenance block,
and prints one PASS/FAIL line per declared check.  Exit code 0 means all
checks passed, 1 a numerical failure, 2 an invalid configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SpikelabError
from .geometry import (
    FermiChart,
    find_critical_points,
    manifold_from_spec,
    second_fundamental_form,
    transition_derivatives,
    verify_metric_expansion,
)
from .linearized_spectrum import HalfBoxGrid, assemble_linearized, kernel_report
from .profile import (
    Parameters,
    check_pohozaev_zn,
    compute_constants,
    halfspace_angular_moment,
    solve_ground_state,
)
from .reduction import fit_expansion, gradient_check, reduced_energy
from . import pde

SUBCOMMANDS = (
    "ground-state",
    "constants",
    "identity-check",
    "geometry-check",
    "landscape",
    "expansion",
    "gradient-check",
    "spectrum",
    "remainder",
    "solve",
    "continuation",
)


def _schema():
    with resources.files("spikelab.schemas").joinpath("config.json").open() as fh:
        return json.load(fh)


def _validate(command: str, config: dict) -> list:
    import jsonschema

    schema = _schema()
    node = {"$ref": f"#/$defs/{command}", "$defs": schema["$defs"]}
    validator = jsonschema.Draft202012Validator(node)
    errors = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(e.path)):
        loc = ".".join(str(x) for x in err.path) or "<config>"
        errors.append(f"{loc}: {err.message}")
    return errors


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _meta(command: str, config: dict, tolerances: dict) -> dict:
    return {
        "command": command,
        "config": config,
        "config_sha256": _config_hash(config),
        "tolerances": tolerances,
        "spikelab_version": __version__,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


class _Checks:
    def __init__(self):
        self.results = []

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        self.results.append((name, bool(ok), detail))
        tag = "PASS" if ok else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        print(f"[{tag}] {name}{suffix}")

    @property
    def all_ok(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    def to_json(self) -> list:
        return [{"name": n, "pass": ok, "detail": d} for n, ok, d in self.results]


def _profile_from(config):
    pars = Parameters(int(config.get("n", 2)), float(config["p"]))
    return solve_ground_state(
        pars,
        r_max=float(config.get("r_max", 30.0)),
        grid_step=float(config.get("grid_step", 1e-3)),
        shoot_tol=float(config.get("shoot_tol", 1e-6)),
    )


# --- subcommand pipelines ------------------------------------------------------


def _run_ground_state(config, out: Path, checks: _Checks) -> dict:
    prof = _profile_from(config)
    res = float(np.max(np.abs(prof.ode_residual())))
    tol = float(config.get("shoot_tol", 1e-6))
    checks.record("ode-residual-per-node", res < tol, f"max {res:.3e}")
    rep = compute_constants(prof) if prof.n >= 2 else None
    if rep is not None:
        h1 = rep.moments["halfspace_h1_sq"]
        up = rep.moments["halfspace_Up"]
        checks.record("nehari-identity", abs(h1 - up) / up < 1e-6, f"{abs(h1 - up) / up:.3e}")
    m = prof.r_grid >= 0.9 * prof.r_max
    tail = np.max(
        np.abs(
            prof.v[m]
            * prof.r_grid[m] ** (0.5 * (prof.n - 1))
            * np.exp(prof.r_grid[m])
            / prof.decay_c
            - 1.0
        )
    )
    checks.record("tail-constant-1pc", tail < 0.01, f"max dev {tail:.3e}")
    prof.to_csv(out / "profile.csv")
    return {
        "V0": float(prof.v[0]),
        "decay_c": prof.decay_c,
        "max_ode_residual": res,
        "tail_deviation": float(tail),
    }


def _run_constants(config, out: Path, checks: _Checks) -> dict:
    prof = _profile_from(config)
    rep = compute_constants(prof)
    checks.record(
        "pohozaev-residual", rep.pohozaev_residual < 1e-6, f"{rep.pohozaev_residual:.3e}"
    )
    checks.record("constants-positive", rep.C > 0 and rep.alpha > 0)
    payload = rep.to_json_dict()
    return payload


def _run_identity_check(config, out: Path, checks: _Checks) -> dict:
    cases = config.get("cases", [[2, 4.0], [2, 3.0], [3, 3.0]])
    results = {"moment_identity": {}, "pohozaev": {}}
    for n in (2, 3):
        lhs = halfspace_angular_moment(n, 1, 1)
        rhs = 0.5 * halfspace_angular_moment(n, 0, 3)
        rel = abs(lhs - rhs) / rhs
        results["moment_identity"][str(n)] = rel
        checks.record(f"moment-identity-n{n}", rel < 1e-8, f"{rel:.3e}")
    for n, p in cases:
        prof = solve_ground_state(Parameters(int(n), float(p)))
        residual = check_pohozaev_zn(prof)
        results["pohozaev"][f"n{n}_p{p:g}"] = residual
        checks.record(f"pohozaev-n{n}-p{p:g}", residual < 1e-6, f"{residual:.3e}")
    return results


def _run_geometry_check(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    xi = float(config.get("xi", 0.0))
    if m.ndim == 3:
        xi = (xi, 0.0)
    chart = FermiChart(m, xi)
    exp_rep = verify_metric_expansion(chart)
    checks.record("metric-identity-origin", exp_rep["g0_residual"] < 1e-10,
                  f"{exp_rep['g0_residual']:.3e}")
    checks.record("tangential-normal-block", exp_rep["g_in_max"] < 1e-6,
                  f"{exp_rep['g_in_max']:.3e}")
    checks.record("inverse-metric-slope", exp_rep["g1_slope"] >= 1.9,
                  f"{exp_rep['g1_slope']:.3f}")
    checks.record("volume-element-slope",
                  exp_rep["g3_slope"] >= 1.9 or max(exp_rep["g3_residuals"]) < 1e-6,
                  f"{exp_rep['g3_slope']:.3f}")
    checks.record("mixed-derivative-identity", exp_rep["eqG_residual"] < 1e-4,
                  f"{exp_rep['eqG_residual']:.3e}")
    trans = transition_derivatives(m, xi)
    checks.record("transition-identity", trans["identity_residual"] < 1e-10,
                  f"{trans['identity_residual']:.3e}")
    checks.record("transition-dy", trans["dy0_residual"] < 1e-6,
                  f"{trans['dy0_residual']:.3e}")
    checks.record("normal-invariance", trans["normal_invariance_residual"] < 1e-8,
                  f"{trans['normal_invariance_residual']:.3e}")

    payload = {
        "metric_expansion": {
            k: (list(v) if isinstance(v, (list, np.ndarray)) else float(v))
            for k, v in exp_rep.items()
        },
        "transition": {
            k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
            for k, v in trans.items()
        },
    }
    if m.ndim == 2:
        samples = int(config.get("landscape_samples", 256))
        rows = []
        for t in np.linspace(0.0, m.period, samples, endpoint=False):
            rep = second_fundamental_form(m, t)
            rows.append((t, rep.H, rep.dH[0]))
        _write_csv(out / "curvature_landscape.csv", "t,H,dH", rows)
        try:
            cps = find_critical_points(m)
            payload["critical_points"] = [cp.to_json_dict() for cp in cps]
            _write_json(out / "critical_points.json",
                        {"critical_points": payload["critical_points"]})
        except SpikelabError as exc:
            payload["critical_points"] = str(exc)
    return payload


def _run_landscape(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    prof = _profile_from(config)
    eps = float(config["eps"])
    count = int(config.get("xi_count", 16))
    r_cut = float(config.get("R_cut", 0.8))
    rows = []
    for t in np.linspace(0.0, m.period, count, endpoint=False):
        s = reduced_energy(m, prof, eps, float(t), R_cut=r_cut)
        rows.append((t, eps, s.J, s.gradJ[0], s.H))
    _write_csv(out / "landscape.csv", "xi_param,eps,J,gradJ,H", rows)
    js = [r[2] for r in rows]
    checks.record("landscape-finite", all(math.isfinite(v) for v in js))
    return {"count": count, "J_min": min(js), "J_max": max(js)}


def _run_expansion(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    prof = _profile_from(config)
    xi = float(config.get("xi", 0.0))
    r_cut = float(config.get("R_cut", 0.8))
    samples = [
        reduced_energy(m, prof, float(e), xi, R_cut=r_cut, want_gradient=False)
        for e in config["eps_list"]
    ]
    fit = fit_expansion(samples)
    rep = compute_constants(prof)
    rel = abs(fit.alpha_hat - rep.alpha) / rep.alpha
    checks.record("alpha-agreement-5pc", rel < 0.05, f"rel {rel:.4f}")
    checks.record("fit-quality", fit.r_squared > 0.999, f"r2 {fit.r_squared:.6f}")
    payload = fit.to_json_dict()
    payload["alpha_quadrature"] = rep.alpha
    payload["alpha_relative_error"] = rel
    payload["samples"] = [s.to_json_dict() for s in samples]
    return payload


def _run_gradient_check(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    prof = _profile_from(config)
    result = gradient_check(
        m, prof, float(config["eps"]), float(config["xi"]),
        R_cut=float(config.get("R_cut", 0.8)),
    )
    checks.record(
        "gradient-deviation-10pc", result["relative_deviation"] < 0.10,
        f"{result['relative_deviation']:.4f}",
    )
    return result


def _run_spectrum(config, out: Path, checks: _Checks) -> dict:
    n = int(config["n"])
    prof = _profile_from(config)
    grid = HalfBoxGrid(n, float(config.get("L", 14.0 if n == 2 else 15.0)),
                       float(config.get("h", 0.1 if n == 2 else 0.25)))
    op = assemble_linearized(prof, grid)
    rep = kernel_report(
        op, prof, k=int(config.get("k", 6)),
        kernel_tol=float(config.get("kernel_tol", 5e-3 if n == 2 else 1e-2)),
    )
    checks.record(
        "kernel-count", len(rep.kernel_indices) == n - 1,
        f"found {len(rep.kernel_indices)}, expected {n - 1}",
    )
    if rep.kernel_indices:
        j = rep.kernel_indices[0]
        combined = float(np.sqrt(np.sum(rep.overlaps_tangential[j] ** 2)))
        checks.record("kernel-overlap-tangential", combined > 0.99, f"{combined:.4f}")
        checks.record("kernel-overlap-normal", rep.overlaps_normal[j] < 0.2,
                      f"{rep.overlaps_normal[j]:.2e}")
    checks.record("coercivity-gap", rep.gap > 0.05, f"{rep.gap:.4f}")
    return rep.to_json_dict()


def _run_remainder(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    prof = _profile_from(config)
    d = pde.discretize(m, float(config.get("h_mesh", 0.01)))
    xi = float(config.get("xi", 0.0))
    r_cut = float(config.get("R_cut", 0.8))
    eps_list = [float(e) for e in config["eps_list"]]
    rows = []
    for e in eps_list:
        nrm = pde.remainder_norm(d, e, xi, prof, R_cut=r_cut)
        rows.append((e, nrm, math.log(e), math.log(nrm)))
    _write_csv(out / "remainder.csv", "eps,norm,log_eps,log_norm", rows)
    slope = float(np.polyfit([r[2] for r in rows], [r[3] for r in rows], 1)[0])
    predicted = 1.0 + prof.n / (prof.p / (prof.p - 1.0))
    checks.record(
        "remainder-slope-conjugate-exponent", abs(slope - predicted) <= 0.15,
        f"slope {slope:.3f} vs {predicted:.3f}",
    )
    return {"slope": slope, "predicted": predicted,
            "norms": {repr(e): r[1] for e, r in zip(eps_list, rows)}}


def _run_solve(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    prof = _profile_from(config)
    d = pde.discretize(m, float(config.get("h_mesh", 0.01)))
    eps = float(config["eps"])
    xi = float(config.get("xi", 0.0))
    u0 = pde.sample_ansatz(d, prof, eps, xi, float(config.get("R_cut", 0.8)))
    u, rep = pde.newton_solve(
        d, eps, u0, prof.p, tol=float(config.get("tol", 1e-10)), prof=prof,
    )
    checks.record("newton-converged", rep.converged, f"residual {rep.residual:.2e}")
    checks.record("positivity", float(u.values.min()) > 0.0, f"min {u.values.min():.2e}")
    _write_csv(out / "solution.csv", "x,y,u",
               np.column_stack([d.points, u.values]))
    return rep.to_json_dict()


def _run_continuation(config, out: Path, checks: _Checks) -> dict:
    m = manifold_from_spec(config["manifold"])
    prof = _profile_from(config)
    d = pde.discretize(m, float(config.get("h_mesh", 0.01)))
    xi = float(config.get("xi", 0.0))
    target = config.get("target")
    target_point = np.asarray(target, dtype=float) if target is not None else None
    reports = pde.continuation(
        d, [float(e) for e in config["eps_list"]], xi, prof,
        R_cut=float(config.get("R_cut", 0.8)), target_point=target_point,
    )
    checks.record("all-stages-converged", all(r.converged for r in reports))
    if target_point is not None:
        dists = [r.distance_to_target for r in reports]
        mono = all(b <= a + 0.5 * d.h_mesh for a, b in zip(dists, dists[1:]))
        checks.record("peak-distance-non-increasing", mono,
                      " -> ".join(f"{v:.3e}" for v in dists))
        checks.record("final-distance", dists[-1] < 0.05, f"{dists[-1]:.3e}")
    payload = {"stages": [r.to_json_dict() for r in reports]}
    for rec, r in zip(payload["stages"], reports):
        rec["energy_gap_over_eps"] = getattr(r, "energy_gap", None)
    return payload


_PIPELINES = {
    "ground-state": _run_ground_state,
    "constants": _run_constants,
    "identity-check": _run_identity_check,
    "geometry-check": _run_geometry_check,
    "landscape": _run_landscape,
    "expansion": _run_expansion,
    "gradient-check": _run_gradient_check,
    "spectrum": _run_spectrum,
    "remainder": _run_remainder,
    "solve": _run_solve,
    "continuation": _run_continuation,
}

_TOLERANCES = {
    "ode_residual": 1e-6,
    "nehari": 1e-6,
    "pohozaev": 1e-6,
    "moment_identity": 1e-8,
    "metric_origin": 1e-10,
    "mixed_derivative": 1e-4,
    "kernel_tol": 5e-3,
    "alpha_agreement": 0.05,
    "gradient_deviation": 0.10,
    "remainder_slope_band": 0.15,
    "final_peak_distance": 0.05,
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spikelab",
        description="Boundary-spike studies for the singularly perturbed Neumann problem.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    common = dict(
        config=("--config", {"type": str, "help": "JSON config overriding flags"}),
        out=("--out", {"type": str, "default": ".", "help": "output directory"}),
    )

    def add(name, flags):
        p = sub.add_parser(name)
        for flag, kw in flags:
            p.add_argument(flag, **kw)
        for flag, kw in common.values():
            p.add_argument(flag, **kw)
        return p

    num = lambda **kw: {"type": float, **kw}
    add("ground-state", [("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                         ("--r-max", num(dest="r_max", default=30.0)),
                         ("--grid-step", num(dest="grid_step", default=1e-3)),
                         ("--shoot-tol", num(dest="shoot_tol", default=1e-6))])
    add("constants", [("--n", {"type": int, "default": 2}), ("--p", num(default=4.0))])
    add("identity-check", [])
    add("geometry-check", [("--manifold", {"type": str, "default": "ellipse:2,1"}),
                           ("--xi", num(default=0.0))])
    add("landscape", [("--manifold", {"type": str, "default": "disk:1"}),
                      ("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                      ("--eps", num(default=0.05)),
                      ("--xi-count", {"type": int, "dest": "xi_count", "default": 16})])
    add("expansion", [("--manifold", {"type": str, "default": "ellipse:2,1"}),
                      ("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                      ("--xi", num(default=0.0)),
                      ("--eps-list", {"dest": "eps_list", "type": float, "nargs": "+",
                                      "default": [0.0025, 0.00375, 0.005, 0.0075, 0.01]})])
    add("gradient-check", [("--manifold", {"type": str, "default": "ellipse:2,1"}),
                           ("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                           ("--eps", num(default=0.02)), ("--xi", num(default=0.7853981633974483))])
    add("spectrum", [("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                     ("--L", num(default=14.0)), ("--h", num(default=0.1)),
                     ("--k", {"type": int, "default": 6}),
                     ("--kernel-tol", num(dest="kernel_tol", default=5e-3))])
    add("remainder", [("--manifold", {"type": str, "default": "ellipse:2,1"}),
                      ("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                      ("--h-mesh", num(dest="h_mesh", default=0.01)),
                      ("--xi", num(default=0.0)),
                      ("--eps-list", {"dest": "eps_list", "type": float, "nargs": "+",
                                      "default": [0.08, 0.06, 0.04, 0.03, 0.02]})])
    add("solve", [("--manifold", {"type": str, "default": "ellipse:2,1"}),
                  ("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                  ("--h-mesh", num(dest="h_mesh", default=0.01)),
                  ("--eps", num(default=0.05)), ("--xi", num(default=0.0)),
                  ("--tol", num(default=1e-10))])
    add("continuation", [("--manifold", {"type": str, "default": "ellipse:2,1"}),
                         ("--n", {"type": int, "default": 2}), ("--p", num(default=4.0)),
                         ("--h-mesh", num(dest="h_mesh", default=0.01)),
                         ("--xi", num(default=0.3176)),
                         ("--eps-list", {"dest": "eps_list", "type": float, "nargs": "+",
                                         "default": [0.08, 0.06, 0.045, 0.034]}),
                         ("--target", {"type": float, "nargs": 2, "default": None})])
    return ap


def _assemble_config(args: argparse.Namespace) -> dict:
    skip = {"command", "config", "out"}
    config = {
        k.replace("_", "_"): v
        for k, v in vars(args).items()
        if k not in skip and v is not None
    }
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        config.update(overrides)
    return config


def run(argv=None) -> int:
    """Execute one study; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    config = _assemble_config(args)
    errors = _validate(args.command, config)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checks = _Checks()
    try:
        payload = _PIPELINES[args.command](config, out, checks)
    except SpikelabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    result = {
        "meta": _meta(args.command, config, _TOLERANCES),
        "checks": checks.to_json(),
        "result": payload,
    }
    _write_json(out / f"{args.command.replace('-', '_')}.json", result)
    return 0 if checks.all_ok else 1


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
