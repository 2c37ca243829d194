"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import SPEC_VERSION, __version__, causal, expsim, switch
from .sdpcore import SolverError, export_sdpa, standardize

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


class ValidationError(ValueError):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(args, inputs=(), outputs=()) -> dict:
    """Everything needed to rerun a command: argv, config, versions, input hashes."""
    config = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    return {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "spec_version": SPEC_VERSION,
        "package_version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }


def _write_sidecar(path, man):
    Path(str(path) + ".manifest.json").write_text(json.dumps(man, indent=1))


def _emit(payload: dict):
    json.dump(payload, sys.stdout, indent=1, default=_json_default)
    sys.stdout.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _visibility(v: float) -> float:
    if not 0.0 <= v <= 1.0:
        raise ValidationError(f"visibility must lie in [0, 1], got {v}")
    return v


def _load_table(path) -> switch.ProbabilityTable:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        table = switch.ProbabilityTable.from_csv(path)
    else:
        table = switch.ProbabilityTable.from_json(path)
    return table.validate()


def _table_from_args(args) -> tuple[switch.ProbabilityTable, list]:
    if (args.probs is None) == (args.visibility is None):
        raise ValidationError("give exactly one of --probs or --visibility")
    if args.probs is not None:
        return _load_table(args.probs), [args.probs]
    return switch.ideal_table(_visibility(args.visibility)), []


def bar_rows(table: switch.ProbabilityTable) -> list[dict]:
    """One row per bar of a per-setting outcome histogram."""
    rows = []
    for x, y, z, a, b, c in np.ndindex(switch.TABLE_SHAPE):
        rows.append({"setting": f"{x}{y}{z}", "outcome": f"{a}{b}{c}", "x": x, "y": y, "z": z,
                     "a": a, "b": b, "c": c, "p": repr(float(table.values[x, y, z, a, b, c]))})
    return rows


def _write_csv(path, rows, fields):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


# -- commands -------------------------------------------------------------------

def cmd_probs(args) -> int:
    table = switch.ideal_table(_visibility(args.visibility))
    out = Path(args.out)
    bars = Path(args.csv) if args.csv else out.with_name(out.stem + "_bars.csv")
    man = manifest(args, outputs=[out, bars])
    table.to_json(out, visibility=args.visibility, manifest=man)
    _write_csv(bars, bar_rows(table), ["setting", "outcome", "x", "y", "z", "a", "b", "c", "p"])
    _write_sidecar(bars, man)
    _emit({"table": str(out), "bars": str(bars), "setting_sums_max_dev":
           float(np.max(np.abs(table.setting_sums() - 1)))})
    return EXIT_OK


def cmd_certify(args) -> int:
    table, inputs = _table_from_args(args)
    report = causal.certify(table, switch.build_instruments("Alice"))
    payload = report.to_dict()
    outputs = [args.out] if args.out else []
    payload["manifest"] = manifest(args, inputs, outputs)
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1, default=_json_default))
    _emit(payload)
    return EXIT_OK


def derive_inequality(table: switch.ProbabilityTable):
    A = switch.build_instruments("Alice")
    problem = causal.build_primal(table, A)
    result = causal.solve_primal(problem)
    if not np.isfinite(result.eta_star):
        raise SolverError("robustness is unbounded for this table; no inequality is violated")
    alpha = causal.extract_inequality(problem, result.solution)
    check = causal.verify_certificate(causal.extract_certificate(problem, result.solution, alpha), A)
    return alpha, result, check


def cmd_inequality(args) -> int:
    table, inputs = _table_from_args(args)
    alpha, result, check = derive_inequality(table)
    verification = {"valid": check.ok, "violations": check.violations,
                    "min_eigenvalue": check.min_eigenvalue,
                    "normalization_residual": check.normalization_residual}
    summary = {"eta_star": result.eta_star, "S_ref": alpha.S_ref,
               "S_uniform": causal.evaluate_S(alpha, switch.ProbabilityTable.uniform()),
               "verification": verification}
    man = manifest(args, inputs, [args.out])
    alpha.to_json(args.out, eta_star=result.eta_star, verification=verification, manifest=man)
    _emit({**summary, "alpha": str(args.out)})
    return EXIT_OK if check.ok else EXIT_VALIDATION


def _load_alpha(path) -> causal.InequalityCoefficients:
    return causal.InequalityCoefficients.from_json(Path(path))


def cmd_simulate(args) -> int:
    alpha = _load_alpha(args.alpha)
    V = _visibility(args.visibility)
    cfg = expsim.ExperimentConfig(args.counts, V, args.seed, args.samples)
    table = switch.ideal_table(V)
    extra = {}
    if args.target_std is not None:
        n, result = expsim.calibrate_counts(table, alpha, args.target_std, cfg)
        extra["calibrated_mean_counts"] = n
    else:
        result = expsim.monte_carlo_S(table, alpha, cfg)
    outputs = [p for p in (args.out, args.export_counts) if p]
    payload = {**result.to_dict(), **extra, "manifest": manifest(args, [args.alpha], outputs)}
    if args.export_counts:
        expsim.export_counts(expsim.sample_counts(table, result.config, 0), args.export_counts)
        _write_sidecar(args.export_counts, payload["manifest"])
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1, default=_json_default))
    _emit(payload)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    alpha = _load_alpha(args.alpha)
    counts = expsim.ingest_counts(args.counts)
    freq = expsim.frequencies(counts)
    S = causal.evaluate_S(alpha, freq)
    _emit({"S": S, "total_counts": int(counts.counts.sum()),
           "manifest": manifest(args, [args.alpha, args.counts])})
    return EXIT_OK


def sweep_point(V: float, alpha: causal.InequalityCoefficients, A) -> dict:
    table = switch.ideal_table(V)
    report = causal.certify(table, A)
    return {"V": V, "S": causal.evaluate_S(alpha, table), "eta_star": report.eta_star,
            "verdict": report.verdict}


def verdict_threshold(lo: float, hi: float, A, tol: float = 1e-7) -> float:
    """Bisect for the visibility where the verdict switches to indefinite order."""
    def indefinite(v):
        return causal.certify(switch.ideal_table(v), A).verdict == causal.VERDICT_INDEFINITE
    if indefinite(lo) or not indefinite(hi):
        raise ValidationError(f"verdict does not flip inside [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if indefinite(mid):
            hi = mid
        else:
            lo = mid
    return hi


def cmd_sweep_visibility(args) -> int:
    lo, hi = _visibility(args.start), _visibility(args.stop)
    if args.steps < 2:
        raise ValidationError("--steps must be at least 2")
    A = switch.build_instruments("Alice")
    if args.alpha:
        alpha, inputs = _load_alpha(args.alpha), [args.alpha]
    else:
        alpha, inputs = derive_inequality(switch.ideal_table())[0], []
    rows = [sweep_point(float(v), alpha, A) for v in np.linspace(lo, hi, args.steps)]
    summary = {"points": len(rows)}
    verdicts = [r["verdict"] for r in rows]
    flips = [i for i in range(1, len(rows)) if verdicts[i] != verdicts[i - 1]]
    if flips and verdicts[flips[0]] == causal.VERDICT_INDEFINITE:
        v_star = verdict_threshold(rows[flips[0] - 1]["V"], rows[flips[0]]["V"], A)
        eta = causal.certify(switch.ideal_table(v_star), A).eta_star
        summary.update({"V_star": v_star, "eta_star_at_V_star": eta})
    out = Path(args.out)
    fields = ["V", "S", "eta_star", "verdict"]
    _write_csv(out, [{k: (repr(float(r[k])) if k != "verdict" else r[k]) for k in fields} for r in rows], fields)
    man = manifest(args, inputs, [out])
    man["summary"] = summary
    _write_sidecar(out, man)
    _emit({**summary, "csv": str(out)})
    return EXIT_OK


def cmd_export_sdpa(args) -> int:
    table, inputs = _table_from_args(args)
    problem = causal.build_primal(table, switch.build_instruments("Alice"))
    export_sdpa(standardize(problem), args.out)
    _write_sidecar(args.out, manifest(args, inputs, [args.out]))
    _emit({"sdpa": str(args.out), "constraints": len(problem.constraints), "blocks": len(problem.blocks) + 2})
    return EXIT_OK


def cmd_fidelity(args) -> int:
    ideal = switch.build_instruments("Alice")
    if args.synthesize:
        states = expsim.depolarized_states(ideal, args.synthesize)
        expsim.states_to_json(states, args.measured)
    states = expsim.states_from_json(args.measured)
    values = expsim.fidelity_report(states, ideal)
    _emit({"order": [f"({a}|{x})" for a, x in expsim.FIDELITY_ORDER], "fidelities": values,
           "manifest": manifest(args, [args.measured])})
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def _table_source(p):
    p.add_argument("--probs", help="probability table (JSON, or CSV by suffix)")
    p.add_argument("--visibility", type=float, help="use the switch table at this visibility")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchcert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probs", help="switch probability table and per-bar CSV")
    p.add_argument("--visibility", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="bar CSV path (default: <out>_bars.csv)")
    p.set_defaults(func=cmd_probs)

    p = sub.add_parser("certify", help="robustness SDP, inequality and verdict")
    _table_source(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("inequality", help="derive and verify a tailored inequality")
    _table_source(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inequality)

    p = sub.add_parser("simulate", help="Monte Carlo finite-statistics estimate of S")
    p.add_argument("--alpha", required=True)
    p.add_argument("--visibility", type=float, default=1.0)
    p.add_argument("--counts", type=float, default=expsim.DEFAULT_MEAN_COUNTS, help="mean counts per setting")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=expsim.DEFAULT_MC_SAMPLES)
    p.add_argument("--target-std", type=float, help="calibrate counts to reach this S_std")
    p.add_argument("--export-counts", help="write the counts of sample 0 to this CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="S of an inequality on a count file")
    p.add_argument("--alpha", required=True)
    p.add_argument("--counts", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-visibility", help="S, eta* and verdict across visibilities")
    p.add_argument("--from", dest="start", type=float, default=0.0)
    p.add_argument("--to", dest="stop", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--alpha", help="fixed inequality (default: derived from the V=1 table)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_visibility)

    p = sub.add_parser("export-sdpa", help="write the robustness SDP in sparse SDPA format")
    _table_source(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_sdpa)

    p = sub.add_parser("fidelity", help="fidelities of measured Choi states with Alice's instruments")
    p.add_argument("--measured", required=True, help="JSON file of four states")
    p.add_argument("--synthesize", type=float, nargs=4, metavar="F",
                   help="first write depolarised states with these fidelities to --measured")
    p.set_defaults(func=cmd_fidelity)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
