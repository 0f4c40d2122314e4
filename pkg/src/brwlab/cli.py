"""Command-line front end: ``brwlab <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime error (including an
unwritable output path), 3 failed built-in check.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from typing import Sequence

from . import __version__
from . import experiments as ex
from .brw.moments import exact_second_moment_dary
from .brw.profiles import critical_constants
from .crem_cascade import cascade_measure

SUBCOMMANDS = ("simulate", "second-moment", "phase-scan", "universality", "fractional", "kahane", "critical-fit",
               "good-env", "crem", "cascade", "constants")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brwlab", description="Branching random walk partition functions and experiments.")
    p.add_argument("--version", action="version", version=f"brwlab {__version__}")
    sub = p.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--out", help="CSV output path; a manifest is written next to it")
        s.add_argument("--stdout", action="store_true", help="write CSV rows to standard output")
        s.add_argument("--quiet", action="store_true", help="suppress progress on standard error")
        s.add_argument("--seed", type=int)
        s.add_argument("--replicas", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--d", type=int)
        s.add_argument("--n", type=_int_list, help="depth or comma-separated depths")
        s.add_argument("--beta", type=_float_list, help="inverse temperature(s), comma-separated")
        s.add_argument("--alpha", type=float)
        s.add_argument("--n0", type=_int_list)
        s.add_argument("--a", type=float)
        s.add_argument("--profile", help="linear | constant | table:<path>")
        if name == "cascade":
            s.add_argument("--masses", help="write the first replica's interval masses to this CSV")
    return p


def load_config(args: argparse.Namespace) -> ex.ExperimentConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ex.ConfigError(f"cannot read config: {exc}") from exc
        data = json.loads(text) if text.strip() else {}
        if not isinstance(data, dict):
            raise ex.ConfigError("config must be a JSON object")
    for key in ("seed", "replicas", "workers", "d", "n", "beta", "alpha", "n0", "a", "profile"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    if "workers" not in data and os.environ.get("BRWLAB_WORKERS"):
        data["workers"] = os.environ["BRWLAB_WORKERS"]
    return ex.ExperimentConfig.from_dict(data)


def _constants(cfg: ex.ExperimentConfig) -> tuple[ex.ScanResult, str]:
    cc = critical_constants(cfg.branching)
    res = ex.ScanResult("constants", cfg.config_hash, cfg.seed)
    res.add(0, cc.beta_c, "beta_c", cc.beta_c)
    res.add(0, cc.beta_2, "beta_2", cc.beta_2)
    return res, f"beta_c={cc.beta_c:.10f}\nbeta_2={cc.beta_2:.10f}"


def _second_moment(cfg: ex.ExperimentConfig) -> tuple[ex.ScanResult, str]:
    if not cfg.deterministic:
        raise ex.ConfigError("the exact second moment needs a deterministic d-ary tree")
    res = ex.ScanResult("second-moment", cfg.config_hash, cfg.seed)
    spec = cfg.profile_spec()
    lines = []
    for beta in cfg.beta or (0.0,):
        for n in cfg.n:
            v = exact_second_moment_dary(cfg.d, n, beta, spec.at(n))
            res.add(n, beta, "second_moment_exact", v)
            lines.append(f"{v:.10f}" if len(cfg.n) * len(cfg.beta or (0,)) == 1 else f"n={n} beta={beta:g}: {v:.10f}")
    return res, "\n".join(lines)


def dispatch(command: str, cfg: ex.ExperimentConfig, args: argparse.Namespace, progress) -> tuple:
    """Run one subcommand; returns (results, human summary, check passed, extra outputs)."""
    extra: dict = {}
    if command == "constants":
        res, text = _constants(cfg)
        return [res], text, True, extra
    if command == "second-moment":
        res, text = _second_moment(cfg)
        return [res], text, True, extra
    if command == "simulate":
        res, dump = ex.simulate(cfg, progress)
        extra["replicas"] = dump
        return [res], ex.summarize_rows(res.rows()), True, extra
    if command == "phase-scan":
        res = ex.phase_scan_l2(cfg, progress)
        labels = "\n".join(f"{k}: {v}" for k, v in res.labels.items())
        return [res], ex.summarize_rows(res.rows()) + "\n" + labels, True, extra
    if command == "universality":
        res = ex.universality_gap(cfg, progress)
        trend = "\n".join(f"beta={b:g}: gap decreasing with separated CIs: {ex.gap_decreasing(res, b)}"
                          for b in cfg.beta if len(cfg.n) > 1)
        return [res], ex.summarize_rows(res.rows()) + ("\n" + trend if trend else ""), True, extra
    if command == "fractional":
        res = ex.fractional_moment_scan(cfg, progress)
        labels = "\n".join(f"{k}: {v:.10g}" for k, v in res.labels.items())
        return [res], ex.summarize_rows(res.rows()) + "\n" + labels, True, extra
    if command == "kahane":
        records, res = ex.kahane_check(cfg, progress)
        lines = [f"n={r.n} beta={r.beta:g} a={r.a:g}: E[Wbar^a]={r.mean_bar:.6g} E[W^a]={r.mean_hom:.6g} "
                 f"diff={r.difference:.3g} stderr={r.stderr:.2g} {'PASS' if r.passed else 'FAIL'}" for r in records]
        return [res], "\n".join(lines), all(r.passed for r in records), extra
    if command == "critical-fit":
        cd = ex.critical_decay_fit(cfg, progress)
        text = (f"slope={cd.slope:.6f} +/- {cd.fit.stderr_slope:.3f} (r^2={cd.fit.r_squared:.4f})\n"
                + "\n".join(f"n={n}: median Wbar={m:.6g} median sqrt(n) Wbar={s:.6g}"
                            for n, m, s in zip(cd.ns, cd.medians, cd.scaled_medians)))
        return [cd.scan], text, True, extra
    if command == "good-env":
        res = ex.good_env_mass(cfg, progress)
        ok = all(v for k, v in res.labels.items() if k.startswith("K_decreasing"))
        labels = "\n".join(f"{k}: {v}" for k, v in res.labels.items())
        return [res], ex.summarize_rows(res.rows()) + "\n" + labels, ok, extra
    if command == "crem":
        res = ex.crem_scan(cfg, progress)
        return [res], ex.summarize_rows(res.rows()) + f"\ncrem_beta_c={res.labels['crem_beta_c']:.10f}", True, extra
    if command == "cascade":
        res = ex.cascade_scan(cfg, progress)
        if args.masses:
            extra["masses"] = cascade_measure(cfg.n[-1], cfg.beta[0], cfg.seed)
        return [res], ex.summarize_rows(res.rows()), True, extra
    raise UsageError(f"unknown subcommand {command!r}")


def _write_outputs(out: str, fh, results, cfg, command, started, duration, extra) -> None:
    counts = {}
    for i, r in enumerate(results):
        counts[r.experiment] = counts.get(r.experiment, 0) + r.write_csv(fh, header=i == 0)
    manifest = {
        "subcommand": command, "config": cfg.to_dict(), "config_hash": cfg.config_hash,
        "tool_version": __version__, "timestamp": started, "duration_s": round(duration, 3), "rows": counts,
    }
    with open(out + ".manifest.json", "w") as mf:
        json.dump(manifest, mf, indent=2, sort_keys=True)
        mf.write("\n")
    if "replicas" in extra:
        with open(out + ".replicas.jsonl", "w") as rf:
            for rec in extra["replicas"]:
                rf.write(json.dumps(rec, sort_keys=True) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG

    def progress(msg: str) -> None:
        if not args.quiet:
            print(f"[brwlab] {msg}", file=sys.stderr, flush=True)

    try:
        cfg = load_config(args)
    except (ValueError, TypeError) as exc:
        print(f"brwlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    with contextlib.ExitStack() as stack:
        fh = None
        if args.out:
            try:
                fh = stack.enter_context(open(args.out, "w", newline=""))
            except OSError as exc:
                print(f"brwlab: cannot write output: {exc}", file=sys.stderr)
                return EXIT_RUNTIME
        try:
            results, text, passed, extra = dispatch(args.command, cfg, args, progress)
        except UsageError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        except ValueError as exc:
            print(f"brwlab: config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (RuntimeError, ArithmeticError, MemoryError) as exc:
            print(f"brwlab: runtime error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        duration = time.perf_counter() - t0
        try:
            if fh is not None:
                _write_outputs(args.out, fh, results, cfg, args.command, started, duration, extra)
            if "masses" in extra:
                extra["masses"].to_csv(args.masses, range(extra["masses"].m + 1))
        except OSError as exc:
            print(f"brwlab: cannot write output: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    if args.stdout:
        for i, r in enumerate(results):
            r.write_csv(sys.stdout, header=i == 0)
        print(text, file=sys.stderr)
    else:
        print(text)
    if not passed:
        print("brwlab: check failed", file=sys.stderr)
        return EXIT_CHECK
    progress(f"done in {duration:.1f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
