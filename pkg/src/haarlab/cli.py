"""Batch runner: ``haarlab {measure,czd,weak11,reproduce}``.

Every command writes CSV files (header row, 17 significant digits) into
``--out`` together with ``manifest.json``.  Each CSV starts with ``#`` lines
recording the tool version, the config hash, the seed and the depth.

Exit codes: 0 success, 1 a verification failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__, studies
from .czd import RegimeError, decompose, verify
from .func import SimpleFunction
from .measure import build_lebesgue, diagnostics, measure_from_json
from .ops import BATTERIES, operator_from_json, threads_from_env, weak11_estimate

STUDIES = tuple(studies.STUDY_NOTES)


class ConfigError(ValueError):
    pass


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


def render_csv(rows: Sequence[dict[str, Any]], meta: dict[str, Any]) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {_fmt(v)}\n")
    cols: list[str] = []
    for row in rows:
        cols.extend(c for c in row if c not in cols)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


def read_csv(text: str) -> list[dict[str, str]]:
    """Parse a CSV written by this tool, skipping the metadata lines."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class Output:
    def __init__(self, out: Path, command: str, config_hash: str, seed: int, depth: int | None):
        self.out = out
        self.meta = {"tool": f"haarlab {__version__}", "command": command, "config_sha256": config_hash, "seed": seed, "depth": depth}
        self.files: dict[str, str] = {}

    def write(self, name: str, rows: Sequence[dict[str, Any]], **extra: Any) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(render_csv(rows, {**self.meta, **extra}))
        self.files[name] = str(extra.get("note", ""))

    def finish(self, status: str, **extra: Any) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        manifest = {**self.meta, "status": status, "files": self.files, **extra}
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config(path: str | None) -> tuple[dict[str, Any], str]:
    if path is None:
        return {}, hashlib.sha256(b"{}").hexdigest()
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg, hashlib.sha256(raw).hexdigest()


def _measure(cfg: dict[str, Any], depth: int | None):
    spec = cfg.get("measure", cfg if "kind" in cfg else None)
    if spec is None:
        raise ConfigError("config has no 'measure'")
    try:
        return measure_from_json(spec, depth)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad measure spec: {exc}") from exc


def _ordered_map(fn: Callable[[Any], Any], items: Iterable[Any]) -> list[Any]:
    """Map preserving input order, with up to HAARLAB_THREADS workers."""
    items = list(items)
    workers = threads_from_env()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- commands


def cmd_measure(cfg: dict[str, Any], args, out: Output) -> int:
    mu = _measure(cfg, args.depth)
    upto = cfg.get("upto_gen")
    t_values = tuple(float(t) for t in cfg.get("t_values", (1.0,)))
    rep = diagnostics(mu, None if upto is None else int(upto), t_values)
    out.meta["depth"] = mu.depth
    out.write("diagnostics.csv", rep.rows(), note="per-generation m-monotonicity, doubling and growth")
    levels = [{"generation": k, "total": float(mu.level(k).sum()), "min_positive": float(np.min(mu.level(k)[mu.level(k) > 0])), "max": float(mu.level(k).max()), "zero_cubes": int(np.sum(mu.level(k) == 0))} for k in range(mu.depth + 1)]
    out.write("masses.csv", levels, note="mass summary per generation")
    out.finish("ok", c_inc=rep.c_inc, c_dec=rep.c_dec, c_doub=rep.c_doub)
    return 0


def _czd_cases(cfg: dict[str, Any], mu, seed: int) -> list[tuple[str, SimpleFunction, float]]:
    cases = []
    funcs = cfg.get("functions", [])
    lams = cfg.get("lambdas", [])
    for i, fs in enumerate(funcs):
        try:
            f = SimpleFunction.from_json(fs, mu.dim)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad function {i}: {exc}") from exc
        for lam in fs.get("lambdas", lams):
            cases.append((f"f{i}", f, float(lam)))
    rnd = cfg.get("random")
    if rnd:
        rng = np.random.default_rng([seed, 7])
        for i in range(int(rnd.get("count", 10))):
            f = studies.random_function(rng, mu.dim, mu.depth)
            root = float(np.sum(np.abs(f.values) * mu.level(mu.depth))) / mu.total
            cases.append((f"random{i}", f, root * float(rng.uniform(1.05, 20.0)) + 1e-12))
    if not cases:
        raise ConfigError("czd config needs 'functions' with 'lambdas' or a 'random' block")
    return cases


def cmd_czd(cfg: dict[str, Any], args, out: Output) -> int:
    mu = _measure(cfg, args.depth)
    out.meta["depth"] = mu.depth
    p_list = tuple(int(p) for p in cfg.get("p_list", (1, 2, 3)))
    cases = _czd_cases(cfg, mu, args.seed)

    def run(case):
        name, f, lam = case
        dec = decompose(f, lam, mu)
        return name, lam, dec, verify(dec, f, mu, p_list)

    results = _ordered_map(run, cases)
    rows = []
    for name, lam, dec, rep in results:
        for c in rep.checks:
            rows.append({"case": name, "lambda": lam, "cubes": len(dec.maximal_cubes), "check": c.name, "bound": c.bound, "measured": c.measured, "pass": c.passed})
    out.write("czd.csv", rows, note="decomposition checks per (f, lambda)")
    ok = all(rep.passed for *_, rep in results)
    out.finish("pass" if ok else "fail", failures=sum(not rep.passed for *_, rep in results))
    return 0 if ok else 1


def cmd_weak11(cfg: dict[str, Any], args, out: Output) -> int:
    mu = _measure(cfg, args.depth)
    out.meta["depth"] = mu.depth
    ops = cfg.get("operators") or ([cfg["operator"]] if "operator" in cfg else None)
    if not ops:
        raise ConfigError("weak11 config needs 'operator' or 'operators'")
    battery = cfg.get("battery", "all")
    if battery not in BATTERIES:
        raise ConfigError(f"unknown battery {battery!r}")
    per_gen = int(cfg.get("per_generation", 8))
    gens = cfg.get("generations")
    rows, summary, errors = [], [], 0
    for spec in ops:
        name = spec.get("name", spec.get("op", "?"))
        try:
            op = operator_from_json(spec, mu, args.seed)
            rep = weak11_estimate(op, mu, battery, args.seed, per_gen, gens)
        except ValueError as exc:
            if "unknown operator" in str(exc) or "unknown coefficient" in str(exc) or "unknown Haar" in str(exc):
                raise ConfigError(str(exc)) from exc
            print(f"haarlab: operator {name}: {exc}", file=sys.stderr)
            summary.append({"operator": name, "max_ratio": float("nan"), "ceiling": float("nan"), "witness": "", "tested": 0, "error": str(exc)})
            errors += 1
            continue
        for r in rep.rows():
            rows.append({"operator": name, **r})
        summary.append({"operator": name, "max_ratio": rep.max_ratio, "ceiling": rep.ceiling if rep.ceiling is not None else float("nan"), "witness": f"{rep.witness_family}@{rep.witness_cube}", "tested": rep.tested, "error": ""})
    out.write("weak11.csv", rows, battery=battery, note="per-generation max weak ratio")
    out.write("weak11_summary.csv", summary, battery=battery, note="max ratio and theoretical ceiling")
    out.finish("fail" if errors else "ok")
    return 1 if errors else 0


def _reproduce(study: str, depth: int | None, seed: int, out: Output) -> None:
    if study in studies.SPLIT_STUDIES:
        kind = studies.SPLIT_STUDIES[study]
        n = depth or 20
        out.meta["depth"] = n
        rows = studies.ems_table(kind, n, min(18, n - 2))
        out.write(f"{study}_ems.csv", rows, max_rel_err=max(max(r["rel_err_chain"], r["rel_err_sibling"]) for r in rows), note="brute-force m-ratios vs closed forms")
        out.write(f"{study}_classification.csv", studies.classification_rows(kind, n), note="per-generation classification constants")
    elif study == "r2_nonstandard":
        n = depth or 8
        out.meta["depth"] = n
        out.write("r2_nonstandard.csv", studies.r2_table(12, n), note="standardness and multiplier ratio per block")
    elif study == "paraproduct":
        n = depth or 20
        out.meta["depth"] = n
        rows = studies.paraproduct_l2_rows(500, seed)
        out.write("paraproduct_l2.csv", rows, max_ratio=max(r["ratio"] for r in rows), note="L2 output over 2 Carleson norm times L2 input")
        gens = range(6, min(16, n - 1) + 1)
        nec = [{"measure": "formula_a", **r} for r in studies.adjoint_paraproduct_necessity(studies.split_measure("formula_a", n), gens)]
        nec += [{"measure": "lebesgue", **r} for r in studies.adjoint_paraproduct_necessity(build_lebesgue(1, n), gens)]
        out.write("paraproduct_adjoint_necessity.csv", nec, note="weak ratio of the adjoint paraproduct on the necessity pair")
    elif study == "square":
        n = depth or 20
        out.meta["depth"] = n
        rows = studies.square_rows(n, seed)
        out.write("square.csv", rows, max_ratio=max(r["ratio_lower_bound"] for r in rows), note="square function weak ratios")
    else:
        raise ConfigError(f"unknown study {study!r}; choose from {', '.join(STUDIES)}")


def cmd_reproduce(cfg: dict[str, Any], args, out: Output) -> int:
    study = args.study or cfg.get("study")
    if study is None:
        raise ConfigError("reproduce needs --study")
    targets = STUDIES if study == "all" else (study,)
    for s in targets:
        _reproduce(s, args.depth, args.seed, out)
    out.finish("ok", studies={s: studies.STUDY_NOTES[s] for s in targets})
    return 0


COMMANDS = {"measure": cmd_measure, "czd": cmd_czd, "weak11": cmd_weak11, "reproduce": cmd_reproduce}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="haarlab", description="Dyadic harmonic analysis experiments on non-doubling measures.")
    p.add_argument("--version", action="version", version=f"haarlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", default="haarlab_out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--depth", type=int, default=None, help="override the tree depth")
        if name == "reproduce":
            sp.add_argument("--study", choices=STUDIES + ("all",))
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    if args.seed < 0 or args.seed >= 2**64:
        print("haarlab: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.depth is not None and args.depth < 1:
        print("haarlab: --depth must be positive", file=sys.stderr)
        return 2
    try:
        cfg, digest = _load_config(args.config)
        if "seed" in cfg and args.seed == 0:
            args.seed = int(cfg["seed"])
        out = Output(Path(args.out), args.command, digest, args.seed, args.depth)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, RegimeError) as exc:
        print(f"haarlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
