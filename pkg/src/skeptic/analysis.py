"""Growth-rate bookkeeping: empirical main terms, pairwise strategy
comparisons and the universal-rate check.

Rates are final log capital divided by ``n`` at the last checkpoint.  A
residual is the log capital minus its leading ``n * D(.||.)`` term; it
should stay within a constant multiple of ``log n``, and
``residual_ratio`` reports the largest ``|residual| / log n`` seen over
the checkpoints.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import rel_entr

from .game import Predictor, as_path, kl_vec, run_game
from .sources import (
    BitSource,
    block_distribution,
    context_conditionals,
    entropy_rate,
    generate,
)
from .strategies import (
    BetaBinomial,
    BlockPredictor,
    ConstantPredictor,
    MarkovPredictor,
    Mixture,
    shift_combined_block,
    universal,
)
from .game import capital_closed_form

__all__ = [
    "CSV_COLUMNS",
    "GrowthReport",
    "ComparisonReport",
    "checkpoints",
    "main_term",
    "growth_report",
    "compare_block2_base",
    "compare_markov_orders",
    "block_markov_average_check",
    "homogeneity",
    "markov_rate_target",
    "block_rate_target",
    "universal_rate",
    "write_csv",
]

CSV_COLUMNS = ("experiment_id", "strategy", "n", "log_capital", "target_rate", "residual")


def checkpoints(n: int, first: int = 6) -> np.ndarray:
    """``2**first, 2**(first+1), ...`` up to ``n``, always ending with ``n``."""
    pts = [1 << j for j in range(first, max(n.bit_length(), first))]
    pts = [p for p in pts if p < n]
    return np.array(pts + [n], dtype=np.int64) if n > 0 else np.zeros(0, np.int64)


def _log_n(n: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(np.asarray(n, dtype=float), 2.0))


def _binary_div(p, q) -> np.ndarray:
    """Elementwise binary divergence that tolerates ``q`` in ``{0, 1}``
    whenever ``p`` equals it."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)


def _pattern_probs(k: int, rho: float) -> np.ndarray:
    ones = np.array([bin(c).count("1") for c in range(1 << k)])
    return rho**ones * (1.0 - rho) ** (k - ones)


# --------------------------------------------------------------------------
# leading terms


def _markov_main(path, k: int, rho: float) -> float:
    q = as_path(path).markov_counts(k)
    tot = q.sum(axis=1)
    used = tot > 0
    r = q[used, 1] / tot[used]
    return float((tot[used] * _binary_div(r, rho)).sum())


def _block_main(path, k: int, shift: int, rho: float) -> float:
    m = as_path(path).block_counts(k, shift)
    nb = m.sum()
    if nb == 0:
        return 0.0
    return float(nb * rel_entr(m / nb, _pattern_probs(k, rho)).sum())


def main_term(predictor: Predictor, path, rho: float) -> float:
    """Leading ``n D`` term of the log capital of ``predictor`` on ``path``.

    Known for beta-binomial, Markov and block predictors, and for mixtures
    of these, whose main term is the largest one among the components.
    """
    path = as_path(path)
    if isinstance(predictor, BetaBinomial):
        return path.n * float(_binary_div(path.s / max(path.n, 1), rho))
    if isinstance(predictor, MarkovPredictor):
        return _markov_main(path, predictor.params.k, rho)
    if isinstance(predictor, BlockPredictor):
        return _block_main(path, predictor.k, predictor.shift, rho)
    if isinstance(predictor, ConstantPredictor):
        return 0.0
    if isinstance(predictor, Mixture):
        return max(main_term(p, path, rho) for p in predictor.predictors)
    raise TypeError(f"no main term known for {predictor!r}")


# --------------------------------------------------------------------------
# reports


@dataclass
class GrowthReport:
    """Log capital of one strategy at the checkpoints.

    ``reference`` is what the log capital is compared with: ``n * target``
    when an analytic rate is known, otherwise the empirical main term.
    """

    strategy: str
    n: np.ndarray
    log_capital: np.ndarray
    reference: np.ndarray
    target_rate: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def residual(self) -> np.ndarray:
        return self.log_capital - self.reference

    @property
    def main_rate(self) -> float:
        return float(self.log_capital[-1] / self.n[-1])

    @property
    def residual_ratio(self) -> float:
        return float(np.max(np.abs(self.residual) / _log_n(self.n)))

    def rows(self, experiment_id: str) -> list[dict]:
        out = []
        for i, n in enumerate(self.n):
            row = {
                "experiment_id": experiment_id,
                "strategy": self.strategy,
                "n": int(n),
                "log_capital": float(self.log_capital[i]),
                "target_rate": self.target_rate,
                "residual": float(self.residual[i]),
            }
            row.update({f"diagnostic_{k}": v for k, v in self.diagnostics.items()})
            out.append(row)
        return out


def growth_report(
    predictor: Predictor,
    path,
    rho: float,
    target_rate: Optional[float] = None,
    name: Optional[str] = None,
    first_checkpoint: int = 6,
) -> GrowthReport:
    """Play ``predictor`` against ``path`` and tabulate the log capital at
    log-spaced checkpoints against ``n * target_rate`` (or the empirical
    main term when no target is given)."""
    path = as_path(path)
    proc = run_game(predictor, path, rho)
    pts = checkpoints(path.n, first_checkpoint)
    logk = proc.log_capital[pts]
    if target_rate is None:
        ref = np.array([main_term(predictor, path[: int(n)], rho) for n in pts])
        target = float("nan")
    else:
        ref = pts * float(target_rate)
        target = float(target_rate)
    return GrowthReport(name or predictor.name, pts, logk, ref, target)


@dataclass
class ComparisonReport:
    """``gap = log K^A - log K^B`` at the checkpoints against its analytic
    main term."""

    strategies: tuple
    n: np.ndarray
    gap: np.ndarray
    analytic: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def residual(self) -> np.ndarray:
        return self.gap - self.analytic

    @property
    def residual_ratio(self) -> float:
        return float(np.max(np.abs(self.residual) / _log_n(self.n)))

    @property
    def gap_rate(self) -> float:
        return float(self.gap[-1] / self.n[-1])

    @property
    def analytic_rate(self) -> float:
        return float(self.analytic[-1] / self.n[-1])

    def rows(self, experiment_id: str) -> list[dict]:
        name = f"{self.strategies[0]}-{self.strategies[1]}"
        out = []
        for i, n in enumerate(self.n):
            row = {
                "experiment_id": experiment_id,
                "strategy": name,
                "n": int(n),
                "log_capital": float(self.gap[i]),
                "target_rate": float(self.analytic[i] / n),
                "residual": float(self.residual[i]),
            }
            row.update({f"diagnostic_{k}": v for k, v in self.diagnostics.items()})
            out.append(row)
        return out


def _compare(a: Predictor, b: Predictor, path, rho: float, analytic_fn, pts) -> ComparisonReport:
    la = run_game(a, path, rho).log_capital[pts]
    lb = run_game(b, path, rho).log_capital[pts]
    analytic = np.array([analytic_fn(path[: int(n)]) for n in pts])
    return ComparisonReport((a.name, b.name), pts, la - lb, analytic)


def compare_block2_base(path, rho: float, a: float = 1.0, b: float = 1.0, dirichlet=1.0) -> ComparisonReport:
    """Length-2 block strategy (shift 0) against the beta-binomial strategy
    that only looks at the number of ones.

    The analytic gap is ``(n/2) D(p_hat || rho_hat)`` where ``p_hat`` is the
    empirical law of the pairs and ``rho_hat`` the product law built from
    the overall frequency of ones.
    """
    path = as_path(path)
    if path.n % 2:
        raise ValueError("compare_block2_base needs an even number of rounds")

    def analytic(prefix):
        nb = prefix.n // 2
        if nb == 0:
            return 0.0
        m = prefix.block_counts(2, 0)
        xbar = prefix.s / prefix.n
        rho_hat = np.array([(1 - xbar) ** 2, (1 - xbar) * xbar, xbar * (1 - xbar), xbar**2])
        p_hat = m / nb
        if (rho_hat > 0).all():
            return nb * kl_vec(p_hat, rho_hat / rho_hat.sum())
        return float(nb * rel_entr(p_hat, rho_hat).sum())

    pts = checkpoints(path.n)
    pts = pts - pts % 2
    return _compare(BlockPredictor(2, 0, rho, dirichlet), BetaBinomial(a, b), path, rho, analytic, pts)


def compare_markov_orders(path, rho: float, k: int, a: float = 1.0, b: float = 1.0) -> ComparisonReport:
    """Markov order ``k`` against order ``k - 1``.

    With ``N`` the counts of rounds after the first ``k``, the analytic gap is
    ``sum_{i, ctx} N_{i ctx} D(r_{i ctx} || r_ctx)``: how much the extra,
    oldest context bit ``i`` sharpens the prediction.  It is never negative.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    path = as_path(path)

    def analytic(prefix):
        q = prefix.markov_counts(k).reshape(2, 1 << (k - 1), 2)
        child = q.sum(axis=2)
        parent = q.sum(axis=0)
        ptot = parent.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            r_child = np.where(child > 0, q[..., 1] / np.maximum(child, 1), 0.0)
            r_parent = np.where(ptot > 0, parent[:, 1] / np.maximum(ptot, 1), 0.0)
            # empty contexts give 0 * inf in the discarded branch
            terms = np.where(child > 0, child * _binary_div(r_child, r_parent[None, :]), 0.0)
        return float(terms.sum())

    return _compare(MarkovPredictor(k, rho, a, b), MarkovPredictor(k - 1, rho, a, b), path, rho, analytic, checkpoints(path.n))


def homogeneity(path, k: int) -> float:
    """Largest total-variation distance between the empirical ``k``-block
    laws of two different shifts (0 for ``k = 1``)."""
    path = as_path(path)
    laws = []
    for s in range(k):
        m = path.block_counts(k, s)
        laws.append(m / max(m.sum(), 1))
    worst = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            worst = max(worst, 0.5 * float(np.abs(laws[i] - laws[j]).sum()))
    return worst


def block_markov_average_check(path, rho: float, k: int, a: float = 1.0, b: float = 1.0, dirichlet=1.0) -> dict:
    """Compare the shift-combined block strategy of length ``k`` with the
    average of the Markov strategies of orders ``0 .. k-1``.

    Returns the per-round residual together with the homogeneity
    diagnostic; the residual is expected to vanish when the shift-wise
    block laws agree.
    """
    path = as_path(path)
    block = capital_closed_form(shift_combined_block(k, rho, dirichlet), path, rho)
    markov = [capital_closed_form(MarkovPredictor(i, rho, a, b), path, rho) for i in range(k)]
    avg = float(np.mean(markov))
    return {
        "k": k,
        "n": path.n,
        "log_capital_block": block,
        "log_capital_markov": markov,
        "markov_average": avg,
        "residual": block - avg,
        "residual_per_round": abs(block - avg) / max(path.n, 1),
        "homogeneity_tv": homogeneity(path, k),
    }


# --------------------------------------------------------------------------
# analytic targets on sources


def markov_rate_target(source: BitSource, k: int, rho: float) -> float:
    """Limiting per-round log capital (nats) of the order-``k`` Markov
    strategy on a stationary source."""
    weight, cond = context_conditionals(source, k)
    used = weight > 0
    return float((weight[used] * _binary_div(cond[used], rho)).sum())


def block_rate_target(source: BitSource, k: int, rho: float) -> float:
    """Limiting per-round log capital (nats) of a length-``k`` block strategy."""
    law = block_distribution(source, k)
    return float(rel_entr(law, _pattern_probs(k, rho)).sum()) / k


def universal_rate(source: BitSource, n: int, k_max: int = 6, replication: int = 0) -> dict:
    """Per-round base-2 log capital of the universal mixture at ``rho = 1/2``
    against ``1 - H`` of the source."""
    target = 1.0 - entropy_rate(source)
    path = generate(source, n, replication)
    logk = capital_closed_form(universal(k_max, 0.5), path, 0.5)
    rate = logk / n / np.log(2.0)
    rate = float(rate)
    return {"n": n, "k_max": k_max, "rate_bits": rate, "target_bits": target, "deviation": abs(rate - target)}


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(rows: Sequence[dict], fh, header_lines: Iterable[str] = ()) -> None:
    """Write rows as CSV with the fixed leading columns, then any
    ``diagnostic_*`` columns in sorted order.  ``header_lines`` are emitted
    first as ``#`` comments."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    extra = sorted({k for r in rows for k in r} - set(CSV_COLUMNS))
    cols = list(CSV_COLUMNS) + extra
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
