"""Config-driven experiment runner.

Subcommands: exponents, reduce, conformalize, split, pipeline, sweep.
Reports are deterministic JSON (same config + seed => same bytes on one
platform); CSV series get a header row; stage wall-clock goes to stderr and a
timings.json sidecar, never into the report.  Exit codes: 0 all checks
passed, 1 an invariant check failed, 2 usage/config error, 3 numerical stage
error.  COCYCLEKIT_THREADS controls the per-point thread pool.
"""

import argparse
import os
import sys
import time

import numpy as np

from cocyclekit import __version__, report as rep
from cocyclekit._kernels import BACKEND
from cocyclekit.cocycle import estimate_exponents, product_bounded_diagnostic
from cocyclekit.config import load_config
from cocyclekit.conformal import conformalize_constant, conformalize_function
from cocyclekit.errors import CocycleKitError, ConfigError
from cocyclekit.lyapnorm import NormConfig
from cocyclekit.reduction import (
    conjugate_near_isometry,
    isometric_conjugate,
    reduce_cocycle,
)
from cocyclekit.splitting import (
    conformal_splitting_pipeline,
    default_horizons,
    estimate_bundles,
    gap_profile,
    restrict,
)


def _gap_horizons(cfg):
    if cfg.horizons:
        return np.asarray(cfg.horizons, dtype=np.int64)
    return default_horizons(min(cfg.horizon, 128))


def _exponent_stage(report):
    stage = {
        "lambda_plus_upper": report.lambda_plus_upper,
        "lambda_plus_est": report.lambda_plus_est,
        "lambda_minus_lower": report.lambda_minus_lower,
        "lambda_minus_est": report.lambda_minus_est,
        "horizon": report.horizon,
        "sample_count": report.sample_count,
        "seed": report.seed,
        "ks": report.ks,
        "a_k": report.a_k,
        "b_k": report.b_k,
    }
    if report.exact is not None:
        stage["exact"] = rep.to_jsonable(report.exact)
    return stage


def cmd_exponents(cfg, checks, full):
    exp = estimate_exponents(cfg.cocycle, cfg.base, cfg.horizon, cfg.count, cfg.seed)
    bd = product_bounded_diagnostic(
        cfg.cocycle, cfg.base, min(cfg.horizon, 128), cfg.count, cfg.seed
    )
    checks.add_bool(
        "exponent_order", exp.lambda_minus_est <= exp.lambda_plus_est + 1e-12,
        detail={"lambda_plus": exp.lambda_plus_est, "lambda_minus": exp.lambda_minus_est},
    )
    checks.add_bool(
        "fekete_upper_bounds_estimate",
        exp.lambda_plus_upper <= exp.lambda_plus_est + 1e-12,
    )
    checks.add_bool(
        "fekete_lower_bounds_estimate",
        exp.lambda_minus_lower >= exp.lambda_minus_est - 1e-12,
    )
    if exp.exact is not None:
        checks.add(
            "fekete_upper_vs_exact",
            exp.exact.lambda_plus - exp.lambda_plus_upper, 1e-9,
        )
    return {"exponents": _exponent_stage(exp), "product_bounded": rep.to_jsonable(bd)}, []


def _reduction_stage(res, full):
    stage = {
        "epsilon": res.epsilon,
        "perturbation_size": res.perturbation_size,
        "perturbation_bound": res.perturbation_bound(),
        "p_spectrum": list(res.p_spectrum_range),
        "p_containment": list(res.p_containment()),
        "invariance_residual": res.invariance_residual,
        "preservation_defect": res.preservation_defect,
        "slack": res.slack,
        "max_norm_a": res.max_norm_a,
        "points": len(res.points),
        "truncations": [pr.r.truncation_used for pr in res.points],
    }
    if full:
        stage["per_point"] = [
            {
                "point": rep.to_jsonable(pr.point),
                "a": pr.a,
                "p": pr.p,
                "a_tilde": pr.a_tilde,
                "gram_r": pr.r.gram,
                "gram_q": pr.q.gram,
                "residual": pr.residual,
            }
            for pr in res.points
        ]
    return stage


def _reduce_checks(cfg, checks, res, iso, near):
    tol = cfg.tolerances
    checks.add("invariance_residual", res.invariance_residual, tol.invariance_residual)
    lo, hi = res.p_containment()
    checks.add_bool(
        "p_spectrum_containment",
        lo < res.p_spectrum_range[0] and res.p_spectrum_range[1] < hi,
        detail={"spectrum": list(res.p_spectrum_range), "interval": [lo, hi]},
    )
    checks.add("perturbation_size_vs_bound", res.perturbation_size, res.perturbation_bound())
    checks.add("metric_preservation", res.preservation_defect, tol.preservation)
    u_tol = tol.orthogonality_defect + res.slack
    checks.add("orthogonality_defect_u", iso.max_defect, u_tol)
    checks.add("det_u_unimodular", max(abs(m - 1.0) for m in iso.det_mods), u_tol)
    blo, bhi = near.sv_containment()
    checks.add_bool(
        "b_singular_values_containment",
        blo < near.sv_range[0] and near.sv_range[1] < bhi,
        detail={"range": list(near.sv_range), "interval": [blo, bhi]},
    )


def cmd_reduce(cfg, checks, full):
    res = reduce_cocycle(
        cfg.cocycle, cfg.base, cfg.norm, cfg.count, cfg.seed,
        residual_tol=cfg.tolerances.invariance_residual, strict=cfg.strict,
    )
    iso = isometric_conjugate(res, cfg.norm, defect_tol=cfg.tolerances.orthogonality_defect)
    near = conjugate_near_isometry(
        cfg.cocycle, cfg.base, cfg.norm, cfg.count, cfg.seed, check_hypothesis=False
    )
    _reduce_checks(cfg, checks, res, iso, near)
    stages = {
        "reduction": _reduction_stage(res, full),
        "isometry": {
            "max_defect": iso.max_defect,
            "defects": list(iso.defects),
            "det_mods": list(iso.det_mods),
        },
        "near_isometry": {
            "sv_range": list(near.sv_range),
            "sv_containment": list(near.sv_containment()),
            "slack": near.slack,
        },
    }
    if full:
        stages["isometry"]["u"] = [rep.to_jsonable(u) for u in iso.u_mats]
        stages["near_isometry"]["b"] = [rep.to_jsonable(b) for b in near.b_mats]
    return stages, []


def cmd_conformalize(cfg, checks, full, mode):
    tol = cfg.tolerances
    if mode == "constant":
        res = conformalize_constant(
            cfg.cocycle, cfg.base, cfg.norm, cfg.count, cfg.seed,
            horizon=cfg.horizon, gap_tol=tol.exponent_gap, strict=cfg.strict,
        )
        checks.add("exponent_gap", abs(res.exponent_gap), tol.exponent_gap)
    else:
        res = conformalize_function(
            cfg.cocycle, cfg.base, cfg.norm, cfg.count, cfg.seed,
            horizon=cfg.horizon, strict=cfg.strict,
        )
        checks.add("rescaled_exponent_gap", abs(res.exponent_gap), 0.5 * cfg.norm.epsilon)
    checks.add("conformality_defect", res.conformality_defect, tol.conformality)
    checks.add("invariance_residual", res.inner.invariance_residual, tol.invariance_residual)
    stage = {
        "mode": res.mode,
        "lambda": rep.to_jsonable(res.lam),
        "conformality_defect": res.conformality_defect,
        "exponent_gap": res.exponent_gap,
        "inner": _reduction_stage(res.inner, False),
    }
    if full:
        stage["a_tilde"] = [rep.to_jsonable(a) for a in res.a_tilde]
        stage["points"] = [rep.to_jsonable(pr.point) for pr in res.inner.points]
    return {"conformal": stage}, []


def _gap_stage(gp):
    return {
        "horizons": gp.horizons,
        "log_min_ratios": gp.log_min_ratios,
        "slopes": gp.slopes,
        "intercepts": gp.intercepts,
        "threshold": gp.threshold,
        "dominated": [bool(x) for x in gp.dominated],
        "cuts": list(gp.cuts()),
    }


def _gap_csv(gp):
    rows = []
    with np.errstate(over="ignore"):
        for j, n in enumerate(gp.horizons):
            for i in range(gp.log_min_ratios.shape[0]):
                log_ratio = float(gp.log_min_ratios[i, j])
                rows.append([int(n), i + 1, float(np.exp(log_ratio)), log_ratio])
    return ("gap_profile.csv", ["horizon", "index", "min_ratio", "log_min_ratio"], rows)


def cmd_split(cfg, checks, full):
    tol = cfg.tolerances
    gp = gap_profile(
        cfg.cocycle, cfg.base, _gap_horizons(cfg), cfg.count, cfg.seed,
        threshold=tol.slope_threshold,
    )
    stages = {"gap": _gap_stage(gp)}
    files = [_gap_csv(gp)]
    cuts = gp.cuts()
    checks.add_bool("gap_profile_ratios_nonnegative", bool((gp.log_min_ratios >= -1e-12).all()))
    if not cuts:
        stages["bundles"] = {"partition": [cfg.cocycle.dim], "note": "no dominated index"}
        return stages, files
    horizon = cfg.bundle_horizon or gp.predicted_horizon()
    est = estimate_bundles(
        cfg.cocycle, cfg.base, cuts, horizon, cfg.count, cfg.seed, angle_tol=tol.angle
    )
    checks.add("bundle_invariance_defect", est.max_defect, tol.angle)
    ortho = max(
        float(np.linalg.norm(f.T @ f - np.eye(f.shape[1]), 2))
        for frames in est.frames
        for f in frames
    )
    checks.add("frame_orthonormality", ortho, 1e-10)
    checks.add_bool(
        "bundle_transversality",
        est.min_transversality is None or est.min_transversality > 0.0,
        detail=est.min_transversality,
    )
    blocks_stage = []
    for pt in est.points:
        blocks, residuals = restrict(cfg.cocycle, cfg.base, cuts, horizon, pt)
        blocks_stage.append({
            "point": rep.to_jsonable(pt),
            "residuals": list(residuals),
            "blocks": [rep.to_jsonable(b) for b in blocks] if full else None,
        })
    stages["bundles"] = {
        "partition": [int(x) for x in np.diff((0,) + cuts + (cfg.cocycle.dim,))],
        "horizon": int(horizon),
        "max_defect": est.max_defect,
        "min_transversality": est.min_transversality,
        "restricted": blocks_stage,
    }
    if full:
        stages["bundles"]["frames"] = [
            [rep.to_jsonable(f) for f in frames] for frames in est.frames
        ]
    return stages, files


def cmd_pipeline(cfg, checks, full, mode):
    tol = cfg.tolerances
    mode_py = mode.replace("-", "_")
    result = conformal_splitting_pipeline(
        cfg.cocycle, cfg.base, cfg.norm, mode_py, cfg.count, cfg.seed,
        horizons=_gap_horizons(cfg), slope_threshold=tol.slope_threshold,
        angle_tol=tol.angle, bundle_horizon=cfg.bundle_horizon,
        conf_horizon=cfg.conf_horizon, strict=cfg.strict,
    )
    k = len(result.partition)
    checks.add("bundle_invariance_defect", result.invariance_defect, tol.angle)
    checks.add(
        "conformality_defects", max(result.conformality_defects), tol.conformality
    )
    if k > 1:
        checks.add_bool(
            "adapted_margins_above_one",
            all(m > 1.0 for m in result.adapted_margins),
            detail=list(result.adapted_margins),
        )
        checks.add_bool(
            "finest_partition_matches_flags",
            result.partition == tuple(np.diff((0,) + result.gap.cuts() + (cfg.cocycle.dim,))),
        )
    checks.add_bool("exponent_ordering", result.ordering_ok)
    checks.add("det_consistency", result.det_consistency, tol.det_consistency)
    stage = {
        "mode": result.mode,
        "partition": list(result.partition),
        "lambdas": result.lambdas,
        "invariance_defect": result.invariance_defect,
        "min_transversality": result.min_transversality,
        "adapted_epsilons": result.adapted_epsilons,
        "adapted_margins": result.adapted_margins,
        "conformality_defects": list(result.conformality_defects),
        "det_consistency": result.det_consistency,
        "ordering_ok": result.ordering_ok,
    }
    if result.lambdas_adapted is not None:
        stage["lambdas_adapted"] = result.lambdas_adapted
    if full:
        stage["points"] = [rep.to_jsonable(p) for p in result.points]
        stage["frames"] = [[rep.to_jsonable(f) for f in fr] for fr in result.frames]
        stage["assembled_grams"] = [rep.to_jsonable(g) for g in result.assembled_grams]
        stage["assembled_atilde"] = [rep.to_jsonable(a) for a in result.assembled_atilde]
    return {"gap": _gap_stage(result.gap), "pipeline": stage}, [_gap_csv(result.gap)]


def cmd_sweep(cfg, checks, full, param, values):
    if len(values) < 2:
        raise ConfigError("sweep needs at least 2 values")
    tol = cfg.tolerances
    rows = []
    if param == "epsilon":
        header = [
            "epsilon", "perturbation_size", "invariance_residual",
            "orthogonality_defect", "p_eig_min", "p_eig_max", "slack", "atilde_delta",
        ]
        prev = None
        for eps in values:
            norm_cfg = NormConfig(
                epsilon=float(eps), truncation=cfg.norm.truncation, guard=cfg.norm.guard
            )
            res = reduce_cocycle(
                cfg.cocycle, cfg.base, norm_cfg, cfg.count, cfg.seed,
                residual_tol=tol.invariance_residual,
                check_hypothesis=False, strict=cfg.strict,
            )
            iso = isometric_conjugate(res, norm_cfg, defect_tol=tol.orthogonality_defect)
            cur = [pr.a_tilde for pr in res.points]
            delta = 0.0
            if prev is not None:
                delta = max(
                    float(np.linalg.norm(a - b, 2)) for a, b in zip(cur, prev)
                )
            prev = cur
            checks.add(f"invariance_residual[eps={eps}]",
                       res.invariance_residual, tol.invariance_residual)
            rows.append([
                float(eps), res.perturbation_size, res.invariance_residual,
                iso.max_defect, res.p_spectrum_range[0], res.p_spectrum_range[1],
                res.slack, delta,
            ])
    else:  # horizon
        d = cfg.cocycle.dim
        header = ["horizon"] + [f"slope_{i}" for i in range(1, d)]
        for h in values:
            gp = gap_profile(
                cfg.cocycle, cfg.base, default_horizons(int(h)), cfg.count, cfg.seed,
                threshold=tol.slope_threshold,
            )
            checks.add_bool(
                f"gap_profile_ratios_nonnegative[horizon={int(h)}]",
                bool((gp.log_min_ratios >= -1e-12).all()),
            )
            rows.append([int(h)] + [float(s) for s in gp.slopes])
    stage = {"param": param, "values": list(values), "header": header, "rows": rows}
    return {"sweep": stage}, [(f"sweep_{param}.csv", header, rows)]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cocyclekit",
        description="Lyapunov metrics, almost-isometric reduction and conformal "
        "splittings for matrix cocycles over explicit base dynamics.",
    )
    parser.add_argument("--version", action="version", version=f"cocyclekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--full", action="store_true", help="include per-point matrices")
        p.add_argument("--strict", action="store_true",
                       help="force a common fixed Gram truncation for tight slack")

    common(sub.add_parser("exponents", help="uniform exponent estimates and bounds"))
    common(sub.add_parser("reduce", help="metric-preserving perturbation and conjugates"))
    p = sub.add_parser("conformalize", help="conformal perturbation (Corollaries 1-2)")
    common(p)
    p.add_argument("--mode", choices=["constant", "function"], required=True)
    common(sub.add_parser("split", help="dominated splitting detection and bundles"))
    p = sub.add_parser("pipeline", help="block-conformal splitting pipeline")
    common(p)
    p.add_argument("--mode", choices=["uniquely-ergodic", "minimal"], required=True)
    p = sub.add_parser("sweep", help="parameter sweep emitting a CSV series")
    common(p)
    p.add_argument("--param", choices=["epsilon", "horizon"], required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated list, e.g. 0.5,0.3,0.2,0.1")
    return parser


_COMMANDS = {
    "exponents": cmd_exponents,
    "reduce": cmd_reduce,
    "conformalize": cmd_conformalize,
    "split": cmd_split,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config, seed=args.seed, out_dir=args.out,
            full=args.full or None, strict=args.strict,
        )
    except ConfigError as exc:
        print(f"cocyclekit: {exc}", file=sys.stderr)
        return 2

    checks = rep.Checks()
    extra = {}
    if args.command == "conformalize":
        extra["mode"] = args.mode
    elif args.command == "pipeline":
        extra["mode"] = args.mode
    elif args.command == "sweep":
        extra["param"] = args.param
        try:
            extra["values"] = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            print(f"cocyclekit: invalid --values {args.values!r}", file=sys.stderr)
            return 2

    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    try:
        stages, files = _COMMANDS[args.command](cfg, checks, cfg.full, **extra)
    except ConfigError as exc:
        print(f"cocyclekit: {exc}", file=sys.stderr)
        return 2
    except CocycleKitError as exc:
        error_report = {
            "command": args.command,
            "config": cfg.resolved,
            "kernel_backend": BACKEND,
            "error": {"type": type(exc).__name__, "message": str(exc)},
            "verdict": "error",
        }
        rep.write_json(os.path.join(out_dir, f"{args.command}_report.json"), error_report)
        print(f"cocyclekit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    elapsed = time.perf_counter() - started

    document = rep.run_report(args.command, cfg.resolved, stages, checks, BACKEND)
    report_path = os.path.join(out_dir, f"{args.command}_report.json")
    rep.write_json(report_path, document)
    for name, header, rows in files:
        rep.write_csv(os.path.join(out_dir, name), header, rows)
    rep.write_json(os.path.join(out_dir, "timings.json"),
                   {"command": args.command, "seconds": elapsed})
    if cfg.verbosity != "quiet":
        print(
            f"cocyclekit {args.command}: {document['verdict']} "
            f"({len(checks.items)} checks, {elapsed:.2f}s) -> {report_path}",
            file=sys.stderr,
        )
    return 0 if checks.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
