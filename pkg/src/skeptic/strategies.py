"""Bayesian predictors: beta-binomial, block (Dirichlet-multinomial),
Markovian, and capital-weighted mixtures of these.

Every predictor gives per-round probabilities along a whole path in one
vectorised pass (``probabilities``), a direct single-prefix evaluation
(``predict``) and the path probability ``log_prob`` from which the
closed-form capital follows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import betaln, gammaln, logsumexp, xlog1py, xlogy

from .game import (
    GameConfig,
    Predictor,
    as_path,
    capital_closed_form,
    context_codes,
    risk_neutral_log_prob,
    capital_from_probabilities,
)

__all__ = [
    "BetaBinomialParams",
    "BlockStrategyParams",
    "MarkovStrategyParams",
    "MixtureWeights",
    "ConstantPredictor",
    "BetaBinomial",
    "BlockPredictor",
    "MarkovPredictor",
    "Mixture",
    "shift_combined_block",
    "universal",
    "beta_binomial_predict",
    "block_predict",
    "block_capital_closed_form",
    "markov_predict",
    "markov_capital_closed_form",
    "mixture_predict",
    "mixture_capital",
]


def running_counts(keys: np.ndarray, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each position ``i``: how many ``j < i`` share ``keys[i]``, and how
    many of those have ``bits[j] == 1``."""
    n = keys.size
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    xs = np.asarray(bits, dtype=np.int64)[order]
    idx = np.arange(n)
    starts = np.empty(n, dtype=bool)
    starts[0] = True
    starts[1:] = ks[1:] != ks[:-1]
    first = np.maximum.accumulate(np.where(starts, idx, 0))
    before = np.cumsum(xs) - xs
    total = np.empty(n, np.int64)
    ones = np.empty(n, np.int64)
    total[order] = idx - first
    ones[order] = before - before[first]
    return total, ones


def _pattern_code(bits) -> int:
    c = 0
    for b in bits:
        c = (c << 1) | int(b)
    return c


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class BetaBinomialParams:
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("beta hyperparameters must be positive")


@dataclass(frozen=True)
class MarkovStrategyParams:
    k: int = 1
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("Markov order must be >= 0")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("beta hyperparameters must be positive")


@dataclass(frozen=True, eq=False)
class BlockStrategyParams:
    """Block length ``k``, shift in ``[0, k)`` and Dirichlet weights.

    ``dirichlet`` may be a scalar (same weight for every pattern), an array
    of length ``2**k`` indexed by the pattern read as a binary number, or a
    mapping from pattern strings such as ``"101"`` to weights.
    """

    k: int = 2
    shift: int = 0
    dirichlet: object = 1.0
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("block length must be >= 1")
        if not 0 <= self.shift < self.k:
            raise ValueError(f"shift must lie in [0, {self.k}), got {self.shift}")
        d = self.dirichlet
        if isinstance(d, Mapping):
            w = np.empty(1 << self.k)
            w.fill(np.nan)
            for pattern, val in d.items():
                if len(pattern) != self.k:
                    raise ValueError(f"pattern {pattern!r} is not of length {self.k}")
                w[int(pattern, 2)] = val
            if np.isnan(w).any():
                raise ValueError("dirichlet mapping must cover every pattern")
        else:
            w = np.broadcast_to(np.asarray(d, dtype=float), (1 << self.k)).copy()
        if not (w > 0).all():
            raise ValueError("Dirichlet weights must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def c(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class MixtureWeights:
    """Initial account sizes of the universal mixture.

    ``block[k-1]`` and ``markov[k-1]`` are the capitals given to block length
    ``k`` and Markov order ``k``.  Whatever is left of the unit capital is
    held as cash.
    """

    block: tuple
    markov: tuple

    @classmethod
    def geometric(cls, k_max: int) -> "MixtureWeights":
        w = tuple(2.0 ** -(k + 1) for k in range(1, k_max + 1))
        return cls(w, w)

    @property
    def k_max(self) -> int:
        return max(len(self.block), len(self.markov))

    def __post_init__(self):
        if any(w <= 0 for w in self.block + self.markov):
            raise ValueError("mixture weights must be positive")
        if sum(self.block) > 0.5 + 1e-12 or sum(self.markov) > 0.5 + 1e-12:
            raise ValueError("each half of the mixture may hold at most 1/2")


# --------------------------------------------------------------------------
# predictors


class ConstantPredictor(Predictor):
    """Always predicts ``p``; with ``p = rho`` it never bets."""

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        self.p = float(p)
        self.name = f"const({self.p:g})"

    def predict(self, prefix) -> float:
        return self.p

    def probabilities(self, path) -> np.ndarray:
        return np.full(as_path(path).n, self.p)

    def log_prob(self, path) -> float:
        path = as_path(path)
        with np.errstate(divide="ignore"):
            return float(xlogy(path.s, self.p) + xlog1py(path.n - path.s, -self.p))


class BetaBinomial(Predictor):
    """``p_n = (a + s_{n-1}) / (a + b + n - 1)``."""

    def __init__(self, a: float = 1.0, b: float = 1.0):
        self.params = BetaBinomialParams(a, b)
        self.name = f"beta({a:g},{b:g})"

    def predict(self, prefix) -> float:
        prefix = as_path(prefix)
        a, b = self.params.a, self.params.b
        return (a + prefix.s) / (a + b + prefix.n)

    def probabilities(self, path) -> np.ndarray:
        x = as_path(path).bits.astype(np.int64)
        a, b = self.params.a, self.params.b
        s_prev = np.cumsum(x) - x
        return (a + s_prev) / (a + b + np.arange(x.size))

    def log_prob(self, path) -> float:
        path = as_path(path)
        a, b = self.params.a, self.params.b
        return float(betaln(a + path.s, b + path.n - path.s) - betaln(a, b))


class MarkovPredictor(Predictor):
    """Order-``k`` Markovian predictor: a beta posterior mean per context of
    the last ``k`` bits.  The first ``k`` rounds predict ``rho`` (no bet)."""

    def __init__(self, k: int = 1, rho: float = 0.5, a: float = 1.0, b: float = 1.0):
        GameConfig(rho)
        self.params = MarkovStrategyParams(k, a, b)
        self.rho = rho
        self.name = f"markov({k},{a:g},{b:g})"

    def predict(self, prefix) -> float:
        prefix = as_path(prefix)
        k, a, b = self.params.k, self.params.a, self.params.b
        x = prefix.bits
        n = x.size
        if n < k:
            return self.rho
        ctx = tuple(x[n - k :]) if k else ()
        q1 = q0 = 0
        for i in range(k, n):
            if tuple(x[i - k : i]) == ctx:
                if x[i]:
                    q1 += 1
                else:
                    q0 += 1
        return (q1 + a) / (q1 + q0 + a + b)

    def probabilities(self, path) -> np.ndarray:
        x = as_path(path).bits
        k, a, b = self.params.k, self.params.a, self.params.b
        p = np.full(x.size, self.rho)
        if x.size > k:
            codes = context_codes(x, k)[k:]
            total, ones = running_counts(codes, x[k:])
            p[k:] = (ones + a) / (total + a + b)
        return p

    def log_prob(self, path) -> float:
        path = as_path(path)
        k, a, b = self.params.k, self.params.a, self.params.b
        head = path[: min(k, path.n)]
        lp = risk_neutral_log_prob(head, self.rho)
        q = path.markov_counts(k)
        lp += float((betaln(q[:, 1] + a, q[:, 0] + b) - betaln(a, b)).sum())
        return float(lp)


class BlockPredictor(Predictor):
    """Dirichlet-multinomial predictor on non-overlapping ``k``-blocks that
    start after ``shift`` rounds.

    Inside a block the prediction is the exact conditional of the next bit
    given the completed-block counts and the bits already seen in the
    current block.  The first ``shift`` rounds predict ``rho``.
    """

    def __init__(self, k: int = 2, shift: int = 0, rho: float = 0.5, dirichlet=1.0):
        GameConfig(rho)
        self.params = BlockStrategyParams(k, shift, dirichlet)
        self.rho = rho
        self.name = f"block({k},{shift})"
        w = self.params.weights
        # table[(1 << j) + code] = total weight of patterns extending the j-bit prefix `code`
        table = np.zeros(2 << k)
        for j in range(k + 1):
            table[(1 << j) : (2 << j)] = w.reshape(1 << j, -1).sum(axis=1)
        self._prefix_weight = table

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def shift(self) -> int:
        return self.params.shift

    def predict(self, prefix) -> float:
        prefix = as_path(prefix)
        k, shift = self.k, self.shift
        if prefix.n < shift:
            return self.rho
        body = prefix.bits[shift:]
        nb, j = divmod(body.size, k)
        partial = body[nb * k :]
        with_one = 0
        with_prefix = 0
        for b in range(nb):
            block = body[b * k : (b + 1) * k]
            if np.array_equal(block[:j], partial):
                with_prefix += 1
                with_one += int(block[j])
        code = _pattern_code(partial)
        num = with_one + self._prefix_weight[(2 << j) + 2 * code + 1]
        den = with_prefix + self._prefix_weight[(1 << j) + code]
        return float(num / den)

    def probabilities(self, path) -> np.ndarray:
        x = as_path(path).bits
        k, shift = self.k, self.shift
        p = np.full(x.size, self.rho)
        body = x[shift:].astype(np.int64)
        length = body.size
        if length == 0:
            return p
        nblocks = -(-length // k)
        padded = np.zeros(nblocks * k, np.int64)
        padded[:length] = body
        blocks = padded.reshape(nblocks, k)
        codes = np.zeros_like(blocks)
        for j in range(1, k):
            codes[:, j] = 2 * codes[:, j - 1] + blocks[:, j - 1]
        offset = np.arange(k)
        keys = ((1 << offset) + codes).reshape(-1)[:length]
        ones_key = ((2 << offset) + 2 * codes + 1).reshape(-1)[:length]
        total, ones = running_counts(keys, body)
        table = self._prefix_weight
        p[shift:] = (ones + table[ones_key]) / (total + table[keys])
        return p

    def log_prob(self, path) -> float:
        path = as_path(path)
        k, shift = self.k, self.shift
        lp = risk_neutral_log_prob(path[: min(shift, path.n)], self.rho)
        body = path.bits[shift:]
        nb, rem = divmod(body.size, k)
        w = self.params.weights
        c = self.params.c
        m = path.block_counts(k, shift)
        lp += gammaln(c) - gammaln(nb + c) + float((gammaln(m + w) - gammaln(w)).sum())
        if rem:
            code = _pattern_code(body[nb * k :])
            extending = m.reshape(1 << rem, -1).sum(axis=1)[code]
            lp += np.log((extending + self._prefix_weight[(1 << rem) + code]) / (nb + c))
        return float(lp)


class Mixture(Predictor):
    """Capital-weighted combination of Bayesian predictors.

    Account ``i`` starts with ``weights[i]`` and follows predictor ``i``;
    unallocated capital ``1 - sum(weights)`` is held as cash.  The combined
    capital is the sum of the accounts, so the combined predictor is the
    posterior average of the component predictions.
    """

    def __init__(self, components: Sequence[tuple[float, Predictor]], rho: float = 0.5, name: str = "mixture"):
        GameConfig(rho)
        if not components:
            raise ValueError("mixture needs at least one component")
        weights = np.array([w for w, _ in components], dtype=float)
        if (weights <= 0).any():
            raise ValueError("mixture weights must be positive")
        total = weights.sum()
        if total > 1.0 + 1e-12:
            raise ValueError(f"mixture weights sum to {total} > 1")
        self.weights = weights
        self.predictors = [p for _, p in components]
        self.cash = max(0.0, 1.0 - float(total))
        self.rho = rho
        self.name = name

    def _accounts(self):
        log_w = list(np.log(self.weights))
        preds = list(self.predictors)
        if self.cash > 1e-15:
            log_w.append(np.log(self.cash))
            preds.append(ConstantPredictor(self.rho))
        return np.array(log_w), preds

    def probabilities(self, path) -> np.ndarray:
        path = as_path(path)
        log_w, preds = self._accounts()
        probs = np.empty((len(preds), path.n))
        log_acc = np.empty((len(preds), path.n))
        for i, pred in enumerate(preds):
            probs[i] = pred.probabilities(path)
            log_acc[i] = log_w[i] + capital_from_probabilities(probs[i], path, self.rho).log_capital[:-1]
        post = np.exp(log_acc - logsumexp(log_acc, axis=0))
        return np.where(post > 0, post * np.nan_to_num(probs), 0.0).sum(axis=0)

    def log_prob(self, path) -> float:
        log_w, preds = self._accounts()
        return float(logsumexp([lw + pr.log_prob(path) for lw, pr in zip(log_w, preds)]))

    def component_log_capitals(self, path) -> np.ndarray:
        """Closed-form log-capital of each component started from 1 (cash excluded)."""
        return np.array([capital_closed_form(p, path, self.rho) for p in self.predictors])


def shift_combined_block(k: int, rho: float = 0.5, dirichlet=1.0) -> Mixture:
    """Block strategy of length ``k`` over all shifts, ``1/k`` capital each."""
    comps = [(1.0 / k, BlockPredictor(k, a, rho, dirichlet)) for a in range(k)]
    return Mixture(comps, rho, name=f"block({k},all)")


def universal(
    k_max: int = 8,
    rho: float = 0.5,
    weights: Optional[MixtureWeights] = None,
    a: float = 1.0,
    b: float = 1.0,
    dirichlet=1.0,
) -> Mixture:
    """Truncated mixture of block strategies (length 1..k_max, all shifts)
    and Markov strategies (order 1..k_max)."""
    weights = weights or MixtureWeights.geometric(k_max)
    comps = []
    for k, w in enumerate(weights.block, start=1):
        comps.extend((w / k, BlockPredictor(k, s, rho, dirichlet)) for s in range(k))
    for k, w in enumerate(weights.markov, start=1):
        comps.append((w, MarkovPredictor(k, rho, a, b)))
    return Mixture(comps, rho, name=f"universal({weights.k_max})")


# --------------------------------------------------------------------------
# functional surface


def beta_binomial_predict(params: BetaBinomialParams, prefix) -> float:
    return BetaBinomial(params.a, params.b).predict(prefix)


def block_predict(params: BlockStrategyParams, rho: float, prefix) -> float:
    return BlockPredictor(params.k, params.shift, rho, params.weights).predict(prefix)


def block_capital_closed_form(params: BlockStrategyParams, prefix, rho: float) -> float:
    return capital_closed_form(BlockPredictor(params.k, params.shift, rho, params.weights), prefix, rho)


def markov_predict(params: MarkovStrategyParams, rho: float, prefix) -> float:
    return MarkovPredictor(params.k, rho, params.a, params.b).predict(prefix)


def markov_capital_closed_form(params: MarkovStrategyParams, prefix, rho: float) -> float:
    return capital_closed_form(MarkovPredictor(params.k, rho, params.a, params.b), prefix, rho)


def mixture_predict(weights: Sequence[float], components: Sequence[Predictor], rho: float, prefix) -> float:
    return Mixture(list(zip(weights, components)), rho).predict(prefix)


def mixture_capital(weights: Sequence[float], components: Sequence[Predictor], path, rho: float) -> float:
    """``log(cash + sum_i w_i K^i_n)`` from the component closed forms."""
    return capital_closed_form(Mixture(list(zip(weights, components)), rho), path, rho)
