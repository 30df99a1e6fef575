"""Command-line experiment runner: ``skeptic coin``, ``skeptic asset`` and
``skeptic verify``.

Settings come from built-in defaults, then an optional JSON config file
(``--config``), then command-line flags; flags win.  Output goes to
``--output-dir``, else ``$SKEPTIC_OUTPUT_DIR``, else ``./skeptic_out``.
Every output file starts with the resolved config, the library version and
the RNG algorithm, and holds nothing time- or machine-dependent, so the
same config always produces the same bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import block_rate_target, growth_report, markov_rate_target, write_csv
from .asset import (
    EmbeddingError,
    asset_growth_report,
    brownian_embedded_games,
    embed_levels,
    fbm_path,
    load_price_csv,
    nesting_violations,
    nested_counts,
)
from .game import save_bits
from .sources import RNG_ALGORITHM, generate
from .specs import SpecError, parse, parse_source, parse_strategy
from .strategies import BetaBinomial, BlockPredictor, MarkovPredictor, Mixture

OUTPUT_ENV = "SKEPTIC_OUTPUT_DIR"

# keys that change where or how fast a run happens but not what it computes
_NOT_RECORDED = ("output_dir", "workers", "config")

COIN_DEFAULTS = {
    "source": None,
    "strategy": None,
    "rho": 0.5,
    "n": None,
    "seed": 0,
    "reps": 1,
    "first_checkpoint": 6,
    "format": "csv",
    "experiment_id": "coin",
}
ASSET_DEFAULTS = {
    "H": None,
    "input": None,
    "T": 1.0,
    "k": "4..12",
    "n_grid": 1 << 22,
    "refine": None,
    "sampler": "auto",
    "reps": 1,
    "seed": 0,
    "format": "csv",
    "experiment_id": "asset",
    "export_bits": False,
}
VERIFY_DEFAULTS = {"seed": 0, "format": "csv", "experiment_id": "verify"}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# config plumbing


def _parse_k_range(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(k) for k in text]
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        ks = list(range(int(lo), int(hi) + 1))
    else:
        ks = [int(x) for x in text.split(",")]
    if not ks or min(ks) < 1:
        raise ValueError(f"bad level range {text!r}")
    return ks


def _int_expr(text) -> int:
    """Integer flag that also accepts ``2^22`` and ``1e5``."""
    text = str(text).strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    value = float(text)
    if value != int(value):
        raise argparse.ArgumentTypeError(f"not an integer: {text}")
    return int(value)


def _resolve(defaults: dict, args: argparse.Namespace, command: str) -> dict:
    cfg = dict(defaults)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        section = loaded.get(command, loaded)
        unknown = set(section) - set(defaults) - set(_NOT_RECORDED)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
        cfg.update(section)
    for key in list(defaults) + ["workers"]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["output_dir"] = args.output_dir or cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or "skeptic_out"
    cfg.setdefault("workers", 1)
    cfg["workers"] = int(cfg["workers"] or 1)
    return cfg


def _recorded(cfg: dict, command: str) -> dict:
    out = {k: v for k, v in cfg.items() if k not in _NOT_RECORDED}
    return {"command": command, "config": out, "version": __version__, "rng": RNG_ALGORITHM}


def _header(meta: dict) -> list[str]:
    return [
        "skeptic " + meta["version"] + " " + meta["command"],
        "rng: " + meta["rng"],
        "config: " + json.dumps(meta["config"], sort_keys=True),
    ]


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else float(format(v, ".12g"))
    return v


def _write(out_dir: Path, stem: str, rows: list[dict], meta: dict, fmt: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        target = out_dir / f"{stem}.json"
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_clean({"meta": meta, "rows": rows}), fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        target = out_dir / f"{stem}.csv"
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            write_csv(rows, fh, _header(meta))
    return target


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _table(rows: list[dict], cols: Sequence[str]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return "nan" if not math.isfinite(v) else f"{v:.6g}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(x[i]) for x in cells)) if cells else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(x.ljust(w) for x, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


# --------------------------------------------------------------------------
# coin


def _strategy_target(spec_text: str, source, rho: float) -> float:
    """Limiting rate of a strategy on an analytic source, or nan."""
    if source.kind == "from_bits":
        return float("nan")
    spec = parse(spec_text)
    pred = parse_strategy(spec_text, rho)
    try:
        if isinstance(pred, BetaBinomial):
            return markov_rate_target(source, 0, rho)
        if isinstance(pred, MarkovPredictor):
            return markov_rate_target(source, pred.params.k, rho)
        if isinstance(pred, BlockPredictor):
            return block_rate_target(source, pred.k, rho)
        if isinstance(pred, Mixture) and spec.name == "block":
            return block_rate_target(source, pred.predictors[0].k, rho)
        if isinstance(pred, Mixture):
            k_max = int(spec.args[0]) if spec.args else 8
            cands = [markov_rate_target(source, k, rho) for k in range(1, k_max + 1)]
            cands += [block_rate_target(source, k, rho) for k in range(1, k_max + 1)]
            return max(cands)
    except ValueError:
        return float("nan")
    return float("nan")


def _coin_job(job) -> list[dict]:
    cfg, rep = job
    source = parse_source(cfg["source"], cfg["seed"])
    rho = float(cfg["rho"])
    path = generate(source, int(cfg["n"]), rep)
    rows = []
    for spec_text in cfg["strategy"]:
        pred = parse_strategy(spec_text, rho)
        target = _strategy_target(spec_text, source, rho)
        # without an analytic target the residual is taken against the empirical main term
        report = growth_report(pred, path, rho, target if math.isfinite(target) else None, name=spec_text, first_checkpoint=int(cfg["first_checkpoint"]))
        report.diagnostics = {"replication": rep}
        rows.extend(report.rows(cfg["experiment_id"]))
    return rows


def cmd_coin(cfg: dict) -> int:
    if not cfg.get("source"):
        raise UsageError("coin needs --source")
    if not cfg.get("strategy"):
        raise UsageError("coin needs at least one --strategy")
    if cfg.get("n") is None:
        raise UsageError("coin needs --n")
    if isinstance(cfg["strategy"], str):
        cfg["strategy"] = [cfg["strategy"]]
    cfg["n"] = int(cfg["n"])
    if cfg["n"] < 1:
        raise UsageError("--n must be positive")
    # validate every spec before doing any work
    parse_source(cfg["source"], cfg["seed"])
    for s in cfg["strategy"]:
        parse_strategy(s, float(cfg["rho"]))
    reps = int(cfg["reps"])
    results = _map(_coin_job, [(cfg, r) for r in range(reps)], cfg["workers"])
    rows = [row for part in results for row in part]
    meta = _recorded(cfg, "coin")
    out = Path(cfg["output_dir"])
    _write(out, "coin_growth", rows, meta, cfg["format"])
    summary = []
    n = cfg["n"]
    for s in cfg["strategy"]:
        finals = [r for r in rows if r["strategy"] == s and r["n"] == n]
        rates = np.array([r["log_capital"] / n for r in finals])
        summary.append(
            {
                "experiment_id": cfg["experiment_id"],
                "strategy": s,
                "n": n,
                "log_capital": float(np.mean([r["log_capital"] for r in finals])),
                "target_rate": finals[0]["target_rate"],
                "residual": float(np.mean([r["residual"] for r in finals])),
                "diagnostic_rate": float(rates.mean()),
                "diagnostic_rate_sd": float(rates.std(ddof=1)) if rates.size > 1 else 0.0,
                "diagnostic_reps": reps,
            }
        )
    _write(out, "coin_summary", summary, meta, cfg["format"])
    view = [{"strategy": r["strategy"], "rate": r["diagnostic_rate"], "target": r["target_rate"], "reps": reps} for r in summary]
    print(_table(view, ["strategy", "rate", "target", "reps"]))
    return 0


# --------------------------------------------------------------------------
# asset


def _asset_games(cfg: dict, rep: int):
    """Embedded games for one replication, plus the nominal H.

    The level below the requested range is added for the nested-count
    check, and the level above it for the ``n_{k+1} / n_k`` diagnostic
    (except with the exact sampler, whose cost grows fourfold per level).
    """
    ks = _parse_k_range(cfg["k"])
    below = [min(ks) - 1] if min(ks) > 1 else []
    if cfg.get("input"):
        path = load_price_csv(cfg["input"])
        H = float(cfg["H"]) if cfg.get("H") is not None else None
        return embed_levels(path, below + ks + [max(ks) + 1]), H
    H = float(cfg["H"])
    sampler = cfg["sampler"]
    if sampler == "auto":
        sampler = "exact" if H == 0.5 else "path"
    if sampler == "exact":
        if H != 0.5:
            raise UsageError("the exact sampler exists only for H = 0.5")
        return brownian_embedded_games(below + ks, float(cfg["T"]), int(cfg["seed"]), rep), H
    path = fbm_path(H, float(cfg["T"]), int(cfg["n_grid"]), int(cfg["seed"]), rep)
    refine = int(cfg.get("refine") or 0)
    return embed_levels(path, below + ks + [max(ks) + 1], refine_levels=refine, seed=int(cfg["seed"]) * 1000003 + rep), H


def _asset_job(job):
    cfg, rep = job
    try:
        games, H = _asset_games(cfg, rep)
    except EmbeddingError as exc:
        return {"error": f"replication {rep}: {exc}"}
    ks = _parse_k_range(cfg["k"])
    bad = nesting_violations(nested_counts(games))
    rows = [dict(r, replication=rep) for r in asset_growth_report(games, H, levels=ks)]
    bits = {k: games[k].bits for k in ks} if cfg.get("export_bits") else None
    return {"rows": rows, "nesting": bad, "bits": bits}


_LEVEL_COLS = ("rate_markov1", "rate_block2", "rate_beta", "q1_over_n", "r1", "r0", "L_over_TV", "ratio_n", "ratio_m11", "ratio_m00", "ratio_m01", "ratio_m10")


def cmd_asset(cfg: dict) -> int:
    if cfg.get("input") is None and cfg.get("H") is None:
        raise UsageError("asset needs --H or --input")
    if cfg.get("H") is not None and not 0.0 < float(cfg["H"]) < 1.0:
        raise UsageError("--H must lie in (0, 1)")
    if cfg["sampler"] not in ("auto", "path", "exact"):
        raise UsageError("--sampler must be auto, path or exact")
    try:
        ks = _parse_k_range(cfg["k"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    reps = 1 if cfg.get("input") else int(cfg["reps"])
    results = _map(_asset_job, [(cfg, r) for r in range(reps)], cfg["workers"])
    errors = [r["error"] for r in results if "error" in r]
    if errors:
        for e in errors:
            print(f"embedding failed: {e}", file=sys.stderr)
        return 4
    meta = _recorded(cfg, "asset")
    out = Path(cfg["output_dir"])
    level_rows = []
    for res in results:
        for r in res["rows"]:
            row = {
                "experiment_id": cfg["experiment_id"],
                "strategy": "markov(1)|block(2,all)",
                "n": r["n_k"],
                "log_capital": r["rate_markov1"] * r["n_k"],
                "target_rate": r.get("target_markov1", float("nan")),
                "residual": r["rate_markov1"] * r["n_k"] - r.get("target_markov1", float("nan")) * r["n_k"],
            }
            for key, val in r.items():
                if key not in ("n_k",):
                    row[f"diagnostic_{key}"] = val
            level_rows.append(row)
    _write(out, "asset_levels", level_rows, meta, cfg["format"])
    summary = []
    for k in ks:
        sel = [r for res in results for r in res["rows"] if r["k"] == k]
        row = {"k": k, "reps": len(sel), "n_k_median": float(np.median([r["n_k"] for r in sel]))}
        for col in _LEVEL_COLS:
            vals = np.array([r.get(col, np.nan) for r in sel], dtype=float)
            row[f"{col}_median"] = float(np.nanmedian(vals)) if np.isfinite(vals).any() else float("nan")
        row["target_markov1"] = sel[0].get("target_markov1", float("nan"))
        row["target_block2"] = sel[0].get("target_block2", float("nan"))
        summary.append(row)
    summary_rows = [
        {
            "experiment_id": cfg["experiment_id"],
            "strategy": "markov(1)|block(2,all)",
            "n": int(s["n_k_median"]),
            "log_capital": s["rate_markov1_median"] * s["n_k_median"],
            "target_rate": s["target_markov1"],
            "residual": (s["rate_markov1_median"] - s["target_markov1"]) * s["n_k_median"],
            **{f"diagnostic_{key}": v for key, v in s.items() if key != "n_k_median"},
        }
        for s in summary
    ]
    _write(out, "asset_summary", summary_rows, meta, cfg["format"])
    if cfg.get("export_bits"):
        for rep, res in enumerate(results):
            for k, bits in res["bits"].items():
                save_bits(bits, out / f"asset_bits_rep{rep}_k{k}.txt")
    view = [
        {
            "k": s["k"],
            "n_k": s["n_k_median"],
            "markov1": s["rate_markov1_median"],
            "block2": s["rate_block2_median"],
            "target_m1": s["target_markov1"],
            "target_b2": s["target_block2"],
            "ratio_n": s["ratio_n_median"],
            "L/TV": s["L_over_TV_median"],
        }
        for s in summary
    ]
    print(_table(view, ["k", "n_k", "markov1", "block2", "target_m1", "target_b2", "ratio_n", "L/TV"]))
    nesting = [f"replication {rep}: {msg}" for rep, res in enumerate(results) for msg in res["nesting"]]
    if nesting:
        for msg in nesting:
            print(f"nested-count identity violated: {msg}", file=sys.stderr)
        return 3
    print(f"nested-count identities hold on {reps} path(s) at levels {ks[0]}..{ks[-1]}")
    return 0


# --------------------------------------------------------------------------
# verify


def cmd_verify(cfg: dict) -> int:
    from .verify import run_checks

    results = run_checks(int(cfg["seed"]))
    rows = []
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        rows.append(
            {
                "experiment_id": cfg["experiment_id"],
                "strategy": name,
                "n": 0,
                "log_capital": float("nan"),
                "target_rate": float("nan"),
                "residual": float("nan"),
                "diagnostic_pass": ok,
                "diagnostic_detail": detail,
            }
        )
    _write(Path(cfg["output_dir"]), "verify_report", rows, _recorded(cfg, "verify"), cfg["format"])
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} invariants hold")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--output-dir", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./skeptic_out)")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--experiment-id", dest="experiment_id")

    parser = argparse.ArgumentParser(prog="skeptic", description="Bayesian betting strategies in coin-tossing and asset games.")
    parser.add_argument("--version", action="version", version=f"skeptic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    coin = sub.add_parser("coin", parents=[common], help="play strategies against a bit source")
    coin.add_argument("--source", help="e.g. bernoulli(0.5), periodic(01), markov_chain(0.1,0.9), bits(0110), file(x.txt)")
    coin.add_argument("--strategy", action="append", help="e.g. beta(1,1), block(2,all,1), markov(1,1,1), universal(6); repeatable")
    coin.add_argument("--rho", type=float)
    coin.add_argument("--n", type=_int_expr, help="number of rounds")
    coin.add_argument("--reps", type=int)
    coin.add_argument("--first-checkpoint", dest="first_checkpoint", type=int, help="first checkpoint is 2**this")
    coin.add_argument("--workers", type=int)

    asset = sub.add_parser("asset", parents=[common], help="embedded coin-tossing game on price paths")
    asset.add_argument("--H", type=float, help="Hurst exponent of synthesized paths")
    asset.add_argument("--input", help="CSV of time,price rows instead of synthesized paths")
    asset.add_argument("--T", type=float)
    asset.add_argument("--k", help="grid levels, e.g. 4..12 or 4,6,8")
    asset.add_argument("--n-grid", dest="n_grid", type=_int_expr, help="time steps per synthesized path (power of two)")
    asset.add_argument("--refine", type=int, help="rounds of random midpoint refinement")
    asset.add_argument("--sampler", choices=("auto", "path", "exact"), help="exact is available for H = 0.5 only")
    asset.add_argument("--reps", type=int)
    asset.add_argument("--workers", type=int)
    asset.add_argument("--export-bits", dest="export_bits", action="store_const", const=True, help="also write each level's bits")

    sub.add_parser("verify", parents=[common], help="run the invariant battery")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = {"coin": COIN_DEFAULTS, "asset": ASSET_DEFAULTS, "verify": VERIFY_DEFAULTS}[args.command]
    try:
        cfg = _resolve(defaults, args, args.command)
        if args.command == "coin":
            return cmd_coin(cfg)
        if args.command == "asset":
            return cmd_asset(cfg)
        return cmd_verify(cfg)
    except SpecError as exc:
        parser.exit(2, f"skeptic {args.command}: error: {exc}\n")
    except (UsageError, ValueError, OSError) as exc:
        parser.exit(2, f"skeptic {args.command}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
