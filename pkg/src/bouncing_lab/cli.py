"""Command-line front end.

Subcommands cover each stage of the pipeline plus an end-to-end run that
asserts the cross-stage index identity.  Every report embeds the effective
configuration and the tool version; identical configurations produce
byte-identical JSON.

Exit codes: 0 success, 1 solver error, 2 assertion failure (for example the
index identity), 64 malformed configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, allencahn, bouncing, geometry, jacobi, jacobitoda
from . import numerics, reports, toda

USAGE_ERROR = 64
SOLVER_ERROR = 1
ASSERTION_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_profile(spec: str) -> geometry.CurvatureProfile:
    text = spec.strip()
    if not text.startswith("{"):
        text = Path(text).read_text()
    return geometry.CurvatureProfile.from_json(json.loads(text))


def _parse_grid(spec: str):
    try:
        ns, nt = spec.lower().split("x")
        return int(ns), int(nt)
    except ValueError as exc:
        raise UsageError(f"bad --grid {spec!r}, expected NSxNT") from exc


def _fig_ext(args):
    return "svg" if args.svg else "png"


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_config(args, **extra):
    cfg = {
        "profile": json.loads(json.dumps(args.profile_json)),
        "seed": args.seed,
        "svg": bool(args.svg),
        "tool_version": __version__,
    }
    cfg.update(extra)
    return cfg


def _field_payload(field: bouncing.BouncingField) -> dict:
    return field.to_json()


def cmd_constants(args):
    consts = toda.interaction_constants()
    corr = toda.corrector_integrals()
    checks = toda.linearized_toda_checks()
    payload = {
        "config": {"seed": args.seed, "tool_version": __version__},
        "constants": consts.to_jsonable(),
        "corrector": corr,
        "linearized_toda": checks,
    }
    text = reports.dump_json(payload, _outdir(args) / "constants.json")
    print(text)
    return 0


def cmd_precheck(args):
    profile = _load_profile(args.profile)
    verdict = geometry.existence_precheck(profile, args.n)
    payload = {
        "config": _base_config(args, n=args.n),
        "verdict": verdict.value,
    }
    text = reports.dump_json(payload, _outdir(args) / "precheck.json")
    print(text)
    return 0


def cmd_geodesic_spectrum(args):
    profile = _load_profile(args.profile)
    rep = jacobi.geodesic_index(profile)
    payload = {
        "config": _base_config(args),
        "spectrum": rep.to_jsonable(),
    }
    text = reports.dump_json(payload, _outdir(args) / "geodesic_spectrum.json")
    print(text)
    return 0


def _find_field(args, profile):
    if args.sweep_seeds:
        fields = bouncing.find_bjf_sweep(profile, args.n, seeds=args.sweep_seeds,
                                         rng_seed=args.seed)
        if not fields:
            raise bouncing.CollapseError("no critical point found from any seed")
        return fields[0], fields
    return bouncing.find_bjf(profile, args.n), None


def cmd_find_bjf(args):
    profile = _load_profile(args.profile)
    field, all_fields = _find_field(args, profile)
    out = _outdir(args)
    payload = {
        "config": _base_config(args, n=args.n, sweep_seeds=args.sweep_seeds),
        "field": _field_payload(field),
    }
    if all_fields is not None:
        payload["sweep"] = [_field_payload(f) for f in all_fields]
    s, phi = field.sample(2048)
    reports.write_csv(out / "bjf_phi.csv", ["s", "phi"], [s, phi])
    reports.dump_json(payload, out / "bjf.json")
    reports.figure_profile(out / f"bjf_phi.{_fig_ext(args)}", s,
                           {"Phi": phi}, ylabel="Phi",
                           title=f"bouncing Jacobi field, n={args.n}")
    print(json.dumps({"points": payload["field"]["points"],
                      "index": field.index, "nullity": field.nullity}))
    return 0


def cmd_bjf_index(args):
    profile = _load_profile(args.profile)
    field, _ = _find_field(args, profile)
    idx, nul = bouncing.bjf_index_nullity(profile, field,
                                          cross_validate=args.cross_validate)
    payload = {
        "config": _base_config(args, n=args.n,
                               cross_validate=bool(args.cross_validate)),
        "field": _field_payload(field),
        "index": idx,
        "nullity": nul,
    }
    text = reports.dump_json(payload, _outdir(args) / "bjf_index.json")
    print(text)
    return 0


def _eps_list(args):
    if args.sweep:
        return [float(x) for x in args.sweep.split(",")]
    if args.eps is None:
        raise UsageError("need --eps or --sweep")
    return [args.eps]


def _solve_jt_runs(args, profile):
    field, _ = _find_field(args, profile)
    runs = {}
    stalls = {}
    for eps in _eps_list(args):
        try:
            runs[eps] = jacobitoda.solve_jacobi_toda(field, eps)
        except jacobitoda.ContinuationStallError as exc:
            stalls[eps] = {
                "error": str(exc),
                "last_good_eps": exc.last_good_eps,
            }
    return field, runs, stalls


def cmd_solve_jt(args, with_spectrum=False):
    profile = _load_profile(args.profile)
    field, runs, stalls = _solve_jt_runs(args, profile)
    out = _outdir(args)
    ext = _fig_ext(args)
    payload = {
        "config": _base_config(args, n=args.n, eps=args.eps, sweep=args.sweep),
        "field": _field_payload(field),
        "runs": {},
        "stalls": stalls,
    }
    for eps, sol in runs.items():
        entry = {
            "epsilon": eps,
            "alpha": sol.alpha,
            "grid_size": sol.grid.size,
            "residual_norm": sol.residual_norm,
            "glue": sol.glue.to_jsonable(),
            "outer_deviation": jacobitoda.outer_deviation(sol),
        }
        if with_spectrum:
            entry["spectrum"] = jacobitoda.jt_linearized_spectrum(sol).to_jsonable()
        payload["runs"][f"{eps:g}"] = entry
        tag = f"{eps:g}".replace(".", "p")
        h = sol.grid[1] - sol.grid[0]
        lap = (np.roll(sol.psi, -1) - 2 * sol.psi + np.roll(sol.psi, 1)) / h ** 2
        res = sol.epsilon ** 2 * (lap + profile.kappa(sol.grid) * sol.psi) \
            - toda.interaction_constants().cbar_sq * np.exp(-2 * sol.psi)
        reports.write_csv(out / f"jt_solution_{tag}.csv",
                          ["s", "psi", "residual"], [sol.grid, sol.psi, res])
        reports.figure_profile(
            out / f"jt_solution_{tag}.{ext}", sol.grid,
            {"Psi": sol.psi, "alpha*Phi": sol.alpha * field.phi(sol.grid)},
            ylabel="Psi", title=f"Jacobi-Toda profile, eps={eps:g}")
    name = "jt_spectrum.json" if with_spectrum else "jt_solution.json"
    text = reports.dump_json(payload, out / name)
    print(text[:2000])
    if stalls and not runs:
        return SOLVER_ERROR
    return 0


def cmd_jt_spectrum(args):
    return cmd_solve_jt(args, with_spectrum=True)


def _ac_solution(args, profile, field, eps, grid_spec):
    sol_jt = jacobitoda.solve_jacobi_toda(field, eps)
    metric = geometry.TubeMetric.widest(profile)
    ns, nt = grid_spec
    grid = allencahn.StripGrid(metric, ns, nt)
    approx = allencahn.build_approximation(sol_jt, grid)
    return allencahn.solve_allen_cahn(approx), sol_jt


def cmd_solve_ac(args):
    profile = _load_profile(args.profile)
    field, _ = _find_field(args, profile)
    eps = _eps_list(args)[0]
    grid_spec = _parse_grid(args.grid)
    sol, sol_jt = _ac_solution(args, profile, field, eps, grid_spec)
    rep = None
    if not args.skip_index:
        rep = allencahn.ac_morse_index(sol)
        sol.morse_index = rep.neg_count
        sol.nullity_flag = rep.zero_count > 0
    zs = allencahn.zero_set(sol)
    out = _outdir(args)
    ext = _fig_ext(args)
    grid = sol.grid
    ss, tt = np.meshgrid(grid.s, grid.t, indexing="ij")
    reports.write_csv(out / "ac_solution.csv", ["s", "t", "u"],
                      [ss.ravel(), tt.ravel(), sol.u.ravel()])
    reports.write_csv(out / "ac_zero_set.csv", ["s", "t_minus", "t_plus"],
                      [zs.s, zs.t_minus, zs.t_plus])
    payload = {
        "config": _base_config(args, n=args.n, eps=eps, grid=args.grid,
                               skip_index=bool(args.skip_index)),
        "energy": sol.energy,
        "energy_target": 2.0 * (2.0 * math.sqrt(2.0) / 3.0) * profile.length,
        "residual_norm": sol.residual_norm,
        "newton_iterations": sol.newton_iterations,
        "V_norm": sol.v_norm,
        "h_norms": {"h1": sol.h1_norm, "h2": sol.h2_norm},
        "index": sol.morse_index,
        "nullity_flag": sol.nullity_flag,
        "zero_set": {
            "components": 2,
            "t_plus_max": float(zs.t_plus.max()),
            "t_minus_min": float(zs.t_minus.min()),
            "tracking_defect": float(max(
                np.abs(zs.t_plus - eps * sol.approx.f2).max(),
                np.abs(zs.t_minus + eps * sol.approx.f2).max())),
            "tracking_scale": float(eps * math.sqrt(2.0)
                                    * np.abs(sol.approx.f2).max()),
        },
    }
    if rep is not None:
        payload["spectrum"] = rep.to_jsonable()
        payload["spectrum"].pop("projection_diagnostics", None)
        payload["projection_diagnostics"] = rep.notes.get(
            "projection_diagnostics", [])
    text = reports.dump_json(payload, out / "ac_solution.json")
    psi_line = eps * sol.approx.f2
    reports.figure_zero_set(out / f"ac_zero_set.{ext}", zs,
                            layer_ref=(grid.s, psi_line), tau=grid.tau,
                            title=f"zero set, eps={eps:g}")
    reports.figure_field(out / f"ac_field.{ext}", grid, sol.u, zs,
                         title=f"two-layer state, eps={eps:g}")
    print(text[:2000])
    return 0


def cmd_pipeline(args):
    profile = _load_profile(args.profile)
    out = _outdir(args)
    eps = _eps_list(args)[0]
    grid_spec = _parse_grid(args.grid)
    verdict = geometry.existence_precheck(profile, args.n)
    if verdict is geometry.Verdict.CANNOT_EXIST:
        reports.dump_json({"config": _base_config(args, n=args.n),
                           "verdict": verdict.value}, out / "pipeline.json")
        print("precheck: CannotExist")
        return SOLVER_ERROR
    field, _ = _find_field(args, profile)
    geo = jacobi.geodesic_index(profile)
    sol_jt = jacobitoda.solve_jacobi_toda(field, eps)
    jt_rep = jacobitoda.jt_linearized_spectrum(sol_jt)
    metric = geometry.TubeMetric.widest(profile)
    grid = allencahn.StripGrid(metric, *grid_spec)
    sol = allencahn.solve_allen_cahn(allencahn.build_approximation(sol_jt, grid))
    ac_rep = allencahn.ac_morse_index(sol)
    zs = allencahn.zero_set(sol)

    degenerate = field.nullity > 0 or jt_rep.zero_count > 0
    identity_checked = not degenerate
    identity_holds = (ac_rep.neg_count == jt_rep.neg_count + geo.neg_count
                      and ac_rep.neg_count
                      == field.n + field.index + geo.neg_count)
    audit_2n = 2 * field.n >= geo.neg_count
    payload = {
        "config": _base_config(args, n=args.n, eps=eps, grid=args.grid),
        "precheck": verdict.value,
        "field": _field_payload(field),
        "geodesic_index": geo.neg_count,
        "geodesic_nullity": geo.zero_count,
        "jt": {
            "residual_norm": sol_jt.residual_norm,
            "index": jt_rep.neg_count,
            "nullity": jt_rep.zero_count,
            "gap": jt_rep.gap,
            "glue": sol_jt.glue.to_jsonable(),
        },
        "ac": {
            "energy": sol.energy,
            "index": ac_rep.neg_count,
            "nullity": ac_rep.zero_count,
            "V_norm": sol.v_norm,
        },
        "identity": {
            "checked": identity_checked,
            "holds": bool(identity_holds),
            "ac_index": ac_rep.neg_count,
            "jt_plus_geodesic": jt_rep.neg_count + geo.neg_count,
            "n_plus_indphi_plus_indgamma":
                field.n + field.index + geo.neg_count,
            "degenerate_note": ("degenerate field or spectrum; identity "
                                "asserted only for non-degenerate inputs"
                                if degenerate else ""),
        },
        "audit_2n_ge_ind_gamma": bool(audit_2n),
    }
    reports.dump_json(payload, out / "pipeline.json")
    ext = _fig_ext(args)
    reports.figure_profile(out / f"pipeline_jt.{ext}", sol_jt.grid,
                           {"Psi": sol_jt.psi,
                            "alpha*Phi": sol_jt.alpha * field.phi(sol_jt.grid)},
                           ylabel="Psi", title=f"pipeline eps={eps:g}")
    reports.figure_zero_set(out / f"pipeline_zero_set.{ext}", zs,
                            layer_ref=(grid.s, eps * sol.approx.f2),
                            tau=grid.tau, title="pipeline zero set")
    print(json.dumps({"ac_index": ac_rep.neg_count,
                      "jt_index": jt_rep.neg_count,
                      "geodesic_index": geo.neg_count,
                      "identity_holds": bool(identity_holds),
                      "audit_2n": bool(audit_2n)}))
    if not audit_2n:
        return ASSERTION_ERROR
    if identity_checked and not identity_holds:
        return ASSERTION_ERROR
    return 0


def cmd_report(args):
    """Re-render figures from a run directory's JSON/CSV artifacts."""
    src = Path(args.input)
    out = _outdir(args)
    ext = _fig_ext(args)
    made = []
    jt_csvs = sorted(src.glob("jt_solution_*.csv"))
    for path in jt_csvs:
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        name = path.stem
        reports.figure_profile(out / f"{name}.{ext}", data[:, 0],
                               {"Psi": data[:, 1]}, ylabel="Psi", title=name)
        made.append(f"{name}.{ext}")
    zs_path = src / "ac_zero_set.csv"
    if zs_path.exists():
        data = np.loadtxt(zs_path, delimiter=",", skiprows=1)

        class _ZS:
            s, t_minus, t_plus = data[:, 0], data[:, 1], data[:, 2]
        reports.figure_zero_set(out / f"ac_zero_set.{ext}", _ZS,
                                title="zero set (re-rendered)")
        made.append(f"ac_zero_set.{ext}")
    bjf_path = src / "bjf_phi.csv"
    if bjf_path.exists():
        data = np.loadtxt(bjf_path, delimiter=",", skiprows=1)
        reports.figure_profile(out / f"bjf_phi.{ext}", data[:, 0],
                               {"Phi": data[:, 1]}, ylabel="Phi",
                               title="bouncing Jacobi field (re-rendered)")
        made.append(f"bjf_phi.{ext}")
    print(json.dumps({"rendered": made}))
    if not made:
        raise UsageError(f"no renderable artifacts found in {src}")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="bouncing-lab",
                description="Bouncing Jacobi fields, Jacobi-Toda profiles and "
                            "two-layer states on a geodesic tube")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, profile=True, n=True, eps=False, grid=None):
        if profile:
            sp.add_argument("--profile", required=True,
                            help="inline JSON or path to a profile file")
        if n:
            sp.add_argument("--n", type=int, required=True,
                            help="number of field minimums")
        if eps:
            sp.add_argument("--eps", type=float, default=None)
            sp.add_argument("--sweep", default=None,
                            help="comma-separated eps list")
        if grid:
            sp.add_argument("--grid", default=grid, help="NSxNT strip grid")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--svg", action="store_true",
                        help="render figures as SVG instead of PNG")
        sp.add_argument("--sweep-seeds", type=int, default=0,
                        help="enumerate critical points from this many seeds")

    sp = sub.add_parser("constants", help="layer interaction constants report")
    sp.add_argument("--out", default="out")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--svg", action="store_true")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("precheck", help="existence screening")
    common(sp)
    sp.set_defaults(func=cmd_precheck)

    sp = sub.add_parser("geodesic-spectrum", help="index/nullity of the geodesic")
    common(sp, n=False)
    sp.set_defaults(func=cmd_geodesic_spectrum)

    sp = sub.add_parser("find-bjf", help="locate a bouncing Jacobi field")
    common(sp)
    sp.set_defaults(func=cmd_find_bjf)

    sp = sub.add_parser("bjf-index", help="index/nullity of the located field")
    common(sp)
    sp.add_argument("--cross-validate", action="store_true",
                    help="recompute the index from the broken quadratic form")
    sp.set_defaults(func=cmd_bjf_index)

    sp = sub.add_parser("solve-jt", help="solve the Jacobi-Toda equation")
    common(sp, eps=True)
    sp.set_defaults(func=cmd_solve_jt)

    sp = sub.add_parser("jt-spectrum", help="solve and report the linearized spectrum")
    common(sp, eps=True)
    sp.set_defaults(func=cmd_jt_spectrum)

    sp = sub.add_parser("solve-ac", help="solve the two-layer state")
    common(sp, eps=True, grid="256x96")
    sp.add_argument("--skip-index", action="store_true",
                    help="skip the 2D eigensolve")
    sp.set_defaults(func=cmd_solve_ac)

    sp = sub.add_parser("pipeline", help="end-to-end run with index identity")
    common(sp, eps=True, grid="256x96")
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("report", help="re-render figures from artifacts")
    sp.add_argument("--input", required=True, help="run directory")
    sp.add_argument("--out", default="out")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--svg", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    if hasattr(args, "profile"):
        try:
            args.profile_json = (json.loads(args.profile)
                                 if args.profile.strip().startswith("{")
                                 else {"path": args.profile})
        except json.JSONDecodeError as exc:
            print(f"usage error: bad profile JSON: {exc}", file=sys.stderr)
            return USAGE_ERROR
    else:
        args.profile_json = None
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (bouncing.CollapseError, bouncing.NonexistenceError,
            bouncing.OrbitEscapeError, jacobitoda.ContinuationStallError,
            jacobitoda.GluingRegimeError, allencahn.LayerCollapseError,
            allencahn.ZeroSetTopologyError, numerics.EigensolverError,
            numerics.IndeterminateInertiaError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return SOLVER_ERROR


if __name__ == "__main__":
    sys.exit(main())
