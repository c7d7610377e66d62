"""Command-line entry point: ``python -m lambdacover <command> ...``.

Every command writes its outputs plus a ``manifest.json`` holding the merged
settings and the SHA-256 of each output. ``--from-manifest`` re-runs a command
from such a file.

Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .tree import DomainError, Params

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


# settings --------------------------------------------------------------------------------

DEFAULTS = {
    "simulate": {"lambda": None, "depth": None, "family": "raw", "samples": 1000, "seed": 0,
                 "states": "boundary", "out": "out/simulate"},
    "compare": {"a": None, "b": None, "column": "rescaled", "threshold": 0.10, "out": None},
    "ladder": {"lambda": 0.5, "depth": 10, "levels": "", "samples": 1000, "seed": 0,
               "states": "boundary", "out": "out/ladder"},
    "gaussian": {"lambda": 0.5, "depth": 8, "samples": 10000, "seed": 0, "out": "out/gaussian"},
    "table": {"lambdas": "0.5,1,1.5,2,3", "depths": "4:9", "cover_depths": "5:9", "samples": 200,
              "seed": 0, "out": "out/table"},
    "trace-check": {"lambda": 0.5, "depth": 5, "tolerance": 1e-9, "out": "out/trace-check"},
    "oracle": {"lambda": 0.5, "depth": 2, "samples": 0, "seed": 0, "out": "out/oracle"},
}

TYPES = {"lambda": float, "depth": int, "samples": int, "seed": int, "threshold": float, "tolerance": float}

REQUIRED = {"simulate": ("lambda", "depth"), "compare": ("a", "b")}


def _coerce(key, value):
    if value is None:
        return None
    conv = TYPES.get(key, str)
    try:
        return conv(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc


def merge_settings(command: str, flags: dict, config_path=None) -> dict:
    """Flags over config file over defaults."""
    merged = dict(DEFAULTS[command])
    if config_path:
        cp = configparser.ConfigParser()
        if not cp.read(config_path, encoding="utf-8"):
            raise UsageError(f"cannot read config file {config_path}")
        if cp.has_section(command):
            for key, value in cp.items(command):
                key = key.replace("-", "_")
                if key in merged:
                    merged[key] = value
    for key, value in flags.items():
        if key in merged and value is not None:
            merged[key] = value
    merged = {k: _coerce(k, v) for k, v in merged.items()}
    for key in REQUIRED.get(command, ()):
        if merged.get(key) is None:
            raise UsageError(f"{command}: --{key} is required")
    return merged


def config_hash(command: str, settings: dict) -> str:
    body = {k: v for k, v in settings.items() if k != "out"}
    blob = json.dumps({"command": command, "settings": body}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, settings: dict, outputs: list[Path]) -> Path:
    manifest = {
        "command": command,
        "settings": settings,
        "version": __version__,
        "config_hash": config_hash(command, settings),
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_csv(path: Path, columns, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    return path


def _params(s: dict) -> Params:
    try:
        return Params(s["lambda"], s["depth"])
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


def _range(text: str) -> list[int]:
    try:
        if ":" in text:
            a, b = text.split(":")
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad depth range {text!r}") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}") from exc


def _summary(label: str, x: np.ndarray) -> dict:
    from .analysis import p_norm

    out = {"label": label, "count": int(len(x)), "mean": float(np.mean(x)),
           "stderr": float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan}
    for p in (1, 2):
        est = p_norm(x, p)
        out[f"norm{p}"] = est.value
        out[f"norm{p}_se"] = est.stderr
    return out


# commands --------------------------------------------------------------------------------


def cmd_simulate(s: dict, out: Path, workers: int) -> list[Path]:
    from .limit import CoverSampleSet, rescale_array, sample_tilde_cover, write_samples_csv
    from .walk import RunRecord, sample_coupled_cover, sample_tree_cover, write_runs_csv

    p = _params(s)
    fam = s["family"]
    if fam not in ("raw", "bar", "tilde"):
        raise UsageError(f"--family must be raw, bar or tilde, not {fam!r}")
    if s["samples"] < 1:
        raise UsageError("--samples must be positive")
    if p.n < 1:
        raise UsageError("--depth must be at least 1")
    if fam == "raw":
        taus, jumps = sample_tree_cover(p, s["samples"], s["seed"], workers)
    elif fam == "bar":
        _, taus, _, jumps = sample_coupled_cover(p, s["samples"], s["seed"], workers, with_jumps=True)
    else:
        tails = s["states"] == "boundary"
        if tails and p.lam >= 1:
            raise UsageError("boundary states need lambda < 1; use --states leaves")
        taus, jumps = sample_tilde_cover(p, s["samples"], s["seed"], workers, boundary_tails=tails,
                                         with_jumps=True)
    recs = [RunRecord(s["seed"], i, fam, p.lam, p.n, float(t), int(k)) for i, (t, k) in enumerate(zip(taus, jumps))]
    resc = rescale_array(taus, fam, p)
    sset = CoverSampleSet(fam, p.lam, p.n, s["seed"], taus, resc)
    runs = out / "runs.csv"
    samples = out / "samples.csv"
    write_runs_csv(runs, recs)
    write_samples_csv(samples, [sset])
    summary = {"raw": _summary("tau", taus), "rescaled": _summary("rescaled", resc)}
    summ = _write_json(out / "summary.json", summary)
    r = summary["raw"]
    print(f"{fam} n={p.n} lambda={p.lam}: mean tau {r['mean']:.6g} +- {r['stderr']:.3g} "
          f"(rescaled mean {summary['rescaled']['mean']:.6g}, L2 {summary['rescaled']['norm2']:.6g})")
    return [runs, samples, summ]


def cmd_compare(s: dict, out: Path | None, workers: int) -> list[Path]:
    from .analysis import ks_critical_value, ks_two_sample
    from .limit import read_samples_csv

    def load(path):
        try:
            sets = read_samples_csv(path)
        except FileNotFoundError as exc:
            raise ValidationFailure(f"no such file {path}") from exc
        except ValueError as exc:
            raise ValidationFailure(str(exc)) from exc
        col = s["column"]
        if col not in ("tau", "rescaled"):
            raise UsageError("--column must be tau or rescaled")
        return np.concatenate([getattr(x, col) for x in sets])

    a, b = load(s["a"]), load(s["b"])
    stat = ks_two_sample(a, b)
    report = {"a": s["a"], "b": s["b"], "column": s["column"], "ks": stat, "n_a": len(a), "n_b": len(b),
              "critical_1pct": ks_critical_value(len(a), len(b), 0.01),
              "critical_5pct": ks_critical_value(len(a), len(b), 0.05),
              "threshold": s["threshold"], "pass": bool(stat < s["threshold"])}
    print(f"KS {stat:.4f} (n={len(a)}, m={len(b)}; 1% critical {report['critical_1pct']:.4f}); "
          f"{'pass' if report['pass'] else 'fail'} at {s['threshold']}")
    if out is None:
        return []
    return [_write_json(out / "compare.json", report)]


def cmd_ladder(s: dict, out: Path, workers: int) -> list[Path]:
    from .limit import SAMPLE_COLUMNS, LadderSpec, sample_limit_cover

    p = _params(s)
    levels = tuple(_range(s["levels"])) if s["levels"] else ()
    spec = LadderSpec(p.lam, p.n, levels, s["samples"], s["seed"], s["states"] == "boundary")
    times = sample_limit_cover(spec, workers)

    def rows():
        for i in range(len(times)):
            for k, m in enumerate(spec.levels):
                t = repr(float(times[i, k]))
                yield {"family": "tilde", "lambda": repr(p.lam), "n": p.n, "level": m, "seed": spec.seed,
                       "index": i, "tau": t, "rescaled": t}

    csv_path = _write_csv(out / "ladder.csv", SAMPLE_COLUMNS, rows())
    means = times.mean(axis=0)
    ses = times.std(axis=0, ddof=1) / math.sqrt(len(times))
    stats = {"levels": list(spec.levels), "means": means.tolist(), "stderr": ses.tolist(),
             "increments": np.diff(means).tolist(), "monotone_paths": 1.0}
    js = _write_json(out / "ladder.json", stats)
    for m, mu, se in zip(spec.levels, means, ses):
        print(f"level {m:2d}: mean {mu:.5g} +- {se:.2g}")
    return [csv_path, js]


def cmd_gaussian(s: dict, out: Path, workers: int) -> list[Path]:
    from .gaussian import estimate_esup, gamma2_upper

    p = _params(s)
    if s["samples"] < 100:
        raise UsageError("--samples must be at least 100")
    est = estimate_esup(p, s["samples"], s["seed"])
    g2 = gamma2_upper(p)
    payload = json.loads(est.to_json())
    payload["gamma2_upper"] = g2
    js = _write_json(out / "esup.json", payload)
    print(f"E sup eta on T_{p.n}: {est.estimate:.5f} +- {est.stderr:.5f}; gamma2 upper bound {g2:.5f}")
    return [js]


def cmd_table(s: dict, out: Path, workers: int) -> list[Path]:
    from .analysis import growth_rate_plot_data, regime_table, svg_plot

    lambdas = _floats(s["lambdas"])
    depths = _range(s["depths"])
    cdepths = _range(s["cover_depths"])
    if any(l <= 0 for l in lambdas):
        raise UsageError("lambdas must be positive")
    rows = regime_table(lambdas, depths, s["samples"], s["seed"], workers, cover_depths=cdepths)
    js = _write_json(out / "table.json", [r.as_dict() for r in rows])
    cols = ("lambda", "regime", "resistance_rate", "conductance_rate", "cover_rate",
            "resistance_pass", "conductance_pass", "cover_pass")
    table_csv = _write_csv(out / "table.csv", cols, (
        {"lambda": repr(r.lam), "regime": r.regime, "resistance_rate": repr(r.resistance_rate),
         "conductance_rate": repr(r.conductance_rate), "cover_rate": repr(r.cover_rate),
         "resistance_pass": r.passed["resistance"], "conductance_pass": r.passed["conductance"],
         "cover_pass": r.passed["cover"]} for r in rows))
    growth = [(r.lam, math.exp(r.cover_rate)) for r in rows]
    g_csv = _write_csv(out / "growth.csv", ("lambda", "exp_rate"),
                       ({"lambda": repr(l), "exp_rate": repr(g)} for l, g in growth))
    svg = out / "growth.svg"
    svg.write_text(svg_plot({"fitted": ([g[0] for g in growth], [g[1] for g in growth])},
                            "lambda", "exp(rate)", "geometric growth of the mean cover time", logy=True),
                   encoding="utf-8")
    for r in rows:
        flags = " ".join(f"{k}:{'ok' if v else 'off'}" for k, v in r.passed.items())
        print(f"lambda={r.lam:<4} {r.regime:<11} R {r.resistance_rate:+.3f} C {r.conductance_rate:+.3f} "
              f"cover {r.cover_rate:+.3f}  {flags}")
    return [js, table_csv, g_csv, svg]


def cmd_trace_check(s: dict, out: Path, workers: int) -> list[Path]:
    from .limit import build_tilde_chain
    from .network import ResistanceSolver, build_tree_network, trace_with_report
    from .tree import bar_set, level, metric_d

    p = _params(s)
    if p.n < 1:
        raise UsageError("--depth must be at least 1")
    net = build_tree_network(p)
    full = ResistanceSolver(net)
    results = {}
    for name, keep in (("bar", bar_set(p.n)), ("leaves", level(p.n)), ("root+leaves", [level(0)[0]] + level(p.n))):
        traced, rep = trace_with_report(net, keep)
        idx = net.indices_of(keep)
        before = full.matrix(idx)
        after = ResistanceSolver(traced).matrix(np.arange(len(keep)))
        mask = before > 0
        dev = float(np.max(np.abs(after[mask] - before[mask]) / before[mask])) if mask.any() else 0.0
        results[name] = {"kept": len(keep), "max_relative_deviation": dev, "max_fill": rep.max_fill,
                         "asymmetry": rep.asymmetry}
    if p.lam < 1:
        tilde = build_tilde_chain(p)
        solver = ResistanceSolver(tilde)
        mat = solver.matrix(np.arange(len(tilde)))
        dev = 0.0
        for i, x in enumerate(tilde.vertices):
            for j in range(i + 1, len(tilde)):
                d = metric_d(x, tilde.vertices[j], p)
                dev = max(dev, abs(mat[i, j] - d) / d)
        results["boundary"] = {"kept": len(tilde), "max_relative_deviation": dev}
    worst = max(r["max_relative_deviation"] for r in results.values())
    results["worst"] = worst
    results["pass"] = bool(worst <= s["tolerance"])
    js = _write_json(out / "trace_check.json", results)
    print(f"trace check on T_{p.n}: max relative resistance deviation {worst:.3g}")
    if not results["pass"]:
        raise ValidationFailure(f"deviation {worst:.3g} exceeds {s['tolerance']}")
    return [js]


def cmd_oracle(s: dict, out: Path, workers: int) -> list[Path]:
    from .network import COVER_DP_CAP, build_tree_network, exact_expected_cover_time
    from .tree import ROOT
    from .walk import sample_tree_cover

    p = _params(s)
    net = build_tree_network(p)
    if len(net) > COVER_DP_CAP:
        raise ValidationFailure(f"T_{p.n} has {len(net)} vertices; the exact oracle stops at {COVER_DP_CAP}")
    exact = exact_expected_cover_time(net, ROOT)
    payload = {"lambda": p.lam, "n": p.n, "exact_mean_cover_time": exact}
    if s["samples"] > 0:
        taus, _ = sample_tree_cover(p, s["samples"], s["seed"], workers)
        se = float(taus.std(ddof=1) / math.sqrt(len(taus)))
        payload.update({"samples": s["samples"], "seed": s["seed"], "mc_mean": float(taus.mean()), "mc_stderr": se,
                        "z": (float(taus.mean()) - exact) / se})
    js = _write_json(out / "oracle.json", payload)
    print(f"exact E tau_cov on T_{p.n} (lambda={p.lam}) = {exact!r}")
    return [js]


COMMANDS: dict[str, Callable] = {
    "simulate": cmd_simulate, "compare": cmd_compare, "ladder": cmd_ladder, "gaussian": cmd_gaussian,
    "table": cmd_table, "trace-check": cmd_trace_check, "oracle": cmd_oracle,
}


# argument parsing ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lambdacover", description="Cover times of biased walks on binary trees.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--from-manifest", metavar="FILE", help="re-run the command recorded in a manifest")
    ap.add_argument("--out-dir", metavar="DIR", help="output directory when re-running a manifest")
    ap.add_argument("--workers", type=int, default=1, help="threads (never changes results)")
    sub = ap.add_subparsers(dest="command")

    def common(p, lam=True, depth=True, samples=True, seed=True, out=True):
        p.add_argument("--config", help="INI file; the section named after the command is read")
        if lam:
            p.add_argument("--lambda", dest="lambda", type=float)
        if depth:
            p.add_argument("--depth", type=int)
        if samples:
            p.add_argument("--samples", type=int)
        if seed:
            p.add_argument("--seed", type=int)
        if out:
            p.add_argument("--out")
        p.add_argument("--workers", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("simulate", help="sample cover times of one process family")
    common(p)
    p.add_argument("--family", choices=("raw", "bar", "tilde"))
    p.add_argument("--states", choices=("boundary", "leaves"), help="state space of the tilde chain")

    p = sub.add_parser("compare", help="two-sample KS distance between sample files")
    common(p, lam=False, depth=False, samples=False, seed=False)
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--column", choices=("tau", "rescaled"))
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("ladder", help="nested cover times of the boundary chain")
    common(p)
    p.add_argument("--levels", help="comma list or a:b range")
    p.add_argument("--states", choices=("boundary", "leaves"))

    p = sub.add_parser("gaussian", help="expected supremum of the tree Gaussian field and gamma2 bound")
    common(p)

    p = sub.add_parser("table", help="growth-rate regime table")
    common(p, lam=False, depth=False)
    p.add_argument("--lambdas")
    p.add_argument("--depths")
    p.add_argument("--cover-depths", dest="cover_depths")

    p = sub.add_parser("trace-check", help="resistance preservation under trace")
    common(p, samples=False, seed=False)
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("oracle", help="exact expected cover time of a small tree")
    common(p)
    return ap


def run(command: str, settings: dict, workers: int = 1) -> list[Path]:
    out = Path(settings["out"]) if settings.get("out") else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    outputs = COMMANDS[command](settings, out, workers)
    if out is not None:
        write_manifest(out, command, settings, outputs)
    return outputs


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.from_manifest:
            data = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
            command, settings = data["command"], dict(data["settings"])
            if args.out_dir:
                settings["out"] = args.out_dir
        else:
            if not args.command:
                ap.print_usage(sys.stderr)
                return EXIT_USAGE
            command = args.command
            flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "workers",
                                                                         "from_manifest", "out_dir")}
            settings = merge_settings(command, flags, getattr(args, "config", None))
        run(command, settings, max(1, args.workers))
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationFailure, DomainError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
