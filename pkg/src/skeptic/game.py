"""Coin-tossing game protocol, Bayesian betting and capital processes.

A round of the game: the bettor stakes ``bet``, the outcome is a bit ``x``
and the capital moves by ``bet * (x - rho)``.  A Bayesian
bettor derives the stake from a predictive probability ``p`` of the next
bit; the resulting capital is the likelihood ratio of the predictor's
distribution to the i.i.d. Bernoulli(``rho``) measure.

All capital arithmetic is carried out in the log domain.  ``-inf`` marks
ruin (zero capital).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp, rel_entr

__all__ = [
    "PathPrefix",
    "as_path",
    "GameConfig",
    "Predictor",
    "CapitalProcess",
    "FiniteDistribution",
    "ContractViolation",
    "NotPrudentError",
    "bet_fraction",
    "split_bets",
    "BayesianStrategy",
    "strategy_from_distribution",
    "run_game",
    "capital_from_probabilities",
    "run_bets",
    "risk_neutral_log_prob",
    "capital_closed_form",
    "distribution_from_strategy",
    "expected_log_capital",
    "kl",
    "kl_vec",
    "load_bits",
    "save_bits",
]


class ContractViolation(ValueError):
    """A predictor produced a value outside [0, 1]."""


class NotPrudentError(ValueError):
    """A betting strategy can drive capital negative on some path."""

    def __init__(self, path: str, capital: float):
        self.path = path
        self.capital = capital
        super().__init__(f"capital {capital!r} < 0 on path {path!r}")


# --------------------------------------------------------------------------
# paths


class PathPrefix:
    """Finite 0/1 outcome sequence ``x_1 ... x_n``.

    The bits are stored as a read-only ``int8`` array.  ``s`` is the number
    of ones.
    """

    __slots__ = ("bits", "_s")

    def __init__(self, bits: Iterable[int] | np.ndarray | str = ()):
        if isinstance(bits, str):
            arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(bits)
            if arr.dtype == bool:
                arr = arr.astype(np.int8)
        arr = np.array(arr, dtype=np.int8).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ValueError("outcomes must be 0 or 1")
        arr.setflags(write=False)
        self.bits = arr
        self._s = None

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @property
    def s(self) -> int:
        if self._s is None:
            self._s = int(self.bits.sum(dtype=np.int64))
        return self._s

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, item):
        if isinstance(item, slice):
            return PathPrefix(self.bits[item])
        return int(self.bits[item])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PathPrefix):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __str__(self) -> str:
        return (self.bits + ord("0")).astype(np.uint8).tobytes().decode("ascii")

    def __repr__(self) -> str:
        text = str(self)
        if len(text) > 40:
            text = text[:37] + "..."
        return f"PathPrefix({text!r}, n={self.n})"

    def append(self, bit: int) -> "PathPrefix":
        return PathPrefix(np.append(self.bits, np.int8(bit)))

    def block_counts(self, k: int, shift: int = 0) -> np.ndarray:
        """Counts of each k-pattern among complete non-overlapping blocks
        starting at index ``shift``.  Pattern index reads the block as a
        binary number, first bit most significant."""
        body = self.bits[shift:]
        nb = body.size // k
        blocks = body[: nb * k].reshape(nb, k).astype(np.int64)
        codes = blocks @ (1 << np.arange(k - 1, -1, -1, dtype=np.int64))
        return np.bincount(codes, minlength=1 << k)

    def markov_counts(self, k: int) -> np.ndarray:
        """Overlapping transition counts, shape ``(2**k, 2)``: row is the
        preceding k-context, column the next bit (``[:, 1]`` counts context-then-one)."""
        if self.n <= k:
            return np.zeros((1 << k, 2), dtype=np.int64)
        codes = context_codes(self.bits, k)[k:]
        flat = np.bincount(2 * codes + self.bits[k:], minlength=2 << k)
        return flat.reshape(-1, 2)


def as_path(path) -> PathPrefix:
    return path if isinstance(path, PathPrefix) else PathPrefix(path)


def context_codes(bits: np.ndarray, k: int) -> np.ndarray:
    """For each position i the integer code of ``bits[i-k:i]`` (oldest bit
    most significant).  Positions ``i < k`` get the code of the available
    suffix and should be masked by the caller."""
    bits = np.asarray(bits, dtype=np.int64)
    codes = np.zeros(bits.size, dtype=np.int64)
    for lag in range(1, min(k, bits.size) + 1):
        codes[lag:] += bits[:-lag] << (lag - 1)
    return codes


# --------------------------------------------------------------------------
# configuration and predictors


@dataclass(frozen=True)
class GameConfig:
    rho: float = 0.5
    initial_capital: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.initial_capital != 1.0:
            raise ValueError("initial capital is fixed at 1")


class Predictor:
    """Sequential predictor of the next bit.

    Subclasses implement :meth:`predict` (probability that ``x_n = 1`` given
    the prefix ``x_1 ... x_{n-1}``), :meth:`probabilities` (all of them along
    a path at once), or both.  Predictors that also know the probability
    of a whole path implement :meth:`log_prob`, which gives the closed-form
    capital.
    """

    name = "predictor"

    def predict(self, prefix) -> float:
        prefix = as_path(prefix)
        return float(self.probabilities(prefix.append(0))[-1])

    def probabilities(self, path) -> np.ndarray:
        path = as_path(path)
        return np.array([self.predict(path[:i]) for i in range(path.n)], dtype=float)

    def log_prob(self, path) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no closed form")

    def __repr__(self) -> str:
        return self.name


@dataclass
class CapitalProcess:
    """Log-capital after each round, starting from 0 before the first bit."""

    log_capital: np.ndarray
    ruined_at: Optional[int] = None

    @property
    def n(self) -> int:
        return self.log_capital.size - 1

    @property
    def final(self) -> float:
        return float(self.log_capital[-1])

    @property
    def capital(self) -> np.ndarray:
        return np.exp(self.log_capital)

    def rate(self, base: float = np.e) -> float:
        if self.n == 0:
            return 0.0
        return self.final / self.n / np.log(base)


# --------------------------------------------------------------------------
# Bayesian betting


def bet_fraction(p, rho):
    """Fraction of current capital bet on ``x_n = 1``: ``(p - rho) / (rho (1 - rho))``."""
    return (np.asarray(p, dtype=float) - rho) / (rho * (1.0 - rho))


def split_bets(p, rho):
    """Per-unit-capital stakes ``(M^1, M^0)`` on ``x_n = 1`` and ``x_n = 0``.

    A ticket on ``x_n = 1`` costs ``rho`` and pays 1; a ticket on ``x_n = 0``
    costs ``1 - rho``.  The stakes spend exactly the current capital.
    """
    p = np.asarray(p, dtype=float)
    return p / rho, (1.0 - p) / (1.0 - rho)


class BayesianStrategy:
    """Betting rule ``bet = capital * (p - rho) / (rho (1 - rho))``.

    Called as ``strategy(prefix, capital)``.  Zero capital, or an undefined
    conditional probability, yields a zero bet.
    """

    def __init__(self, predictor, rho: float):
        GameConfig(rho)
        self.predictor = predictor
        self.rho = rho

    def __call__(self, prefix, capital: float) -> float:
        if capital <= 0.0:
            return 0.0
        p = self.predictor.predict(prefix)
        if not np.isfinite(p):
            return 0.0
        return float(capital * bet_fraction(p, self.rho))

    def split(self, prefix, capital: float) -> tuple[float, float]:
        if capital <= 0.0:
            return 0.0, 0.0
        m1, m0 = split_bets(self.predictor.predict(prefix), self.rho)
        return float(capital * m1), float(capital * m0)


def strategy_from_distribution(q, rho: float) -> BayesianStrategy:
    """The Bayesian strategy induced by a distribution or predictor ``q``."""
    return BayesianStrategy(q, rho)


def _check_probabilities(p: np.ndarray, upto: int) -> None:
    head = p[:upto]
    bad = ~((head >= 0.0) & (head <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ContractViolation(f"predictor returned p={head[i]!r} at round {i + 1}")


def run_game(predictor, path, rho: float) -> CapitalProcess:
    """Play the Bayesian strategy of ``predictor`` against ``path``.

    Each round the capital is staked via :func:`split_bets` and multiplied
    by ``M^1`` if the bit is 1 and by ``M^0`` otherwise.
    """
    path = as_path(path)
    p = np.asarray(predictor.probabilities(path), dtype=float)
    return capital_from_probabilities(p, path, rho)


def capital_from_probabilities(p: np.ndarray, path, rho: float) -> CapitalProcess:
    """Capital process of the Bayesian bets given per-round predictions ``p``."""
    GameConfig(rho)
    path = as_path(path)
    x = path.bits
    if p.shape != (path.n,):
        raise ContractViolation(f"expected {path.n} probabilities, got shape {p.shape}")
    m1, m0 = split_bets(p, rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(x == 1, m1, m0)
        steps = np.log(factor)
    ruined = np.isneginf(steps) | (factor <= 0.0)
    ruined_at = int(np.flatnonzero(ruined)[0]) + 1 if ruined.any() else None
    # values after ruin are never used, so they may be anything
    _check_probabilities(p, ruined_at if ruined_at is not None else path.n)
    log_k = np.empty(path.n + 1)
    log_k[0] = 0.0
    if ruined_at is None:
        np.cumsum(steps, out=log_k[1:])
    else:
        np.cumsum(steps[: ruined_at - 1], out=log_k[1:ruined_at])
        log_k[ruined_at:] = -np.inf
    return CapitalProcess(log_k, ruined_at)


def run_bets(strategy: Callable, path, rho: float) -> np.ndarray:
    """Linear capital of an arbitrary betting rule, initial value first.

    ``strategy(prefix, capital)`` returns the bet; the update is the bare
    protocol ``capital += bet * (x - rho)``.
    """
    path = as_path(path)
    k = np.empty(path.n + 1)
    k[0] = 1.0
    for i in range(path.n):
        m = strategy(path[:i], k[i])
        k[i + 1] = k[i] + m * (path.bits[i] - rho)
    return k


# --------------------------------------------------------------------------
# closed forms


def risk_neutral_log_prob(path, rho: float) -> float:
    path = as_path(path)
    return path.s * np.log(rho) + (path.n - path.s) * np.log1p(-rho)


def capital_closed_form(q, path, rho: float) -> float:
    """``log Q(path) - s log rho - (n - s) log(1 - rho)``; ``-inf`` when ``Q(path) = 0``."""
    GameConfig(rho)
    path = as_path(path)
    lp = q.log_prob(path)
    if lp == -np.inf:
        return -np.inf
    return float(lp - risk_neutral_log_prob(path, rho))


# --------------------------------------------------------------------------
# finite distributions and the strategy <-> distribution correspondence


def _code(prefix: PathPrefix) -> int:
    c = 0
    for b in prefix.bits:
        c = (c << 1) | int(b)
    return c


class FiniteDistribution(Predictor):
    """Consistent family ``Q_0 .. Q_N`` of distributions on ``{0,1}^n``.

    ``levels[n]`` has length ``2**n``; entry ``c`` is the probability of the
    prefix whose binary reading (first bit most significant) is ``c``.
    """

    name = "finite"

    def __init__(self, levels: Sequence[np.ndarray], atol: float = 1e-12):
        self.levels = [np.asarray(v, dtype=float) for v in levels]
        if not self.levels or self.levels[0].shape != (1,):
            raise ValueError("levels[0] must be the single empty-prefix mass")
        if abs(self.levels[0][0] - 1.0) > atol:
            raise ValueError("Q_0(empty) must be 1")
        for n, v in enumerate(self.levels):
            if v.shape != (1 << n,):
                raise ValueError(f"level {n} must have length {1 << n}")
            if (v < 0).any():
                raise ValueError(f"negative mass at level {n}")
            if n and not np.allclose(v[0::2] + v[1::2], self.levels[n - 1], rtol=0, atol=atol):
                raise ValueError(f"consistency fails between levels {n - 1} and {n}")

    @property
    def horizon(self) -> int:
        return len(self.levels) - 1

    @classmethod
    def from_conditionals(cls, cond: Callable[[PathPrefix], float], horizon: int):
        """Build ``Q`` from a conditional ``p(x_n = 1 | prefix)``."""
        levels = [np.ones(1)]
        for n in range(horizon):
            prev = levels[-1]
            nxt = np.empty(2 * prev.size)
            for c in range(prev.size):
                prefix = PathPrefix([(c >> (n - 1 - j)) & 1 for j in range(n)])
                p = cond(prefix) if prev[c] > 0 else 0.5
                nxt[2 * c] = prev[c] * (1.0 - p)
                nxt[2 * c + 1] = prev[c] * p
            levels.append(nxt)
        return cls(levels)

    @classmethod
    def from_predictor(cls, predictor: Predictor, horizon: int):
        return cls.from_conditionals(predictor.predict, horizon)

    def prob(self, prefix) -> float:
        prefix = as_path(prefix)
        return float(self.levels[prefix.n][_code(prefix)])

    def log_prob(self, path) -> float:
        q = self.prob(path)
        return float(np.log(q)) if q > 0 else -np.inf

    def predict(self, prefix) -> float:
        prefix = as_path(prefix)
        if prefix.n >= self.horizon:
            raise ValueError("prefix at or beyond the horizon")
        denom = self.prob(prefix)
        if denom <= 0.0:
            return float("nan")
        return float(self.levels[prefix.n + 1][2 * _code(prefix) + 1] / denom)


def distribution_from_strategy(strategy: Callable, rho: float, horizon: int, atol: float = 1e-12) -> FiniteDistribution:
    """Distribution ``Q`` whose Bayesian strategy is ``strategy``.

    Walks the full binary tree to depth ``horizon``.  Raises
    :class:`NotPrudentError` naming the first path on which capital turns
    negative.
    """
    GameConfig(rho)
    levels = [np.ones(1)]
    capital = np.ones(1)
    for n in range(horizon):
        prev_q, prev_k = levels[-1], capital
        q = np.zeros(2 * prev_q.size)
        k = np.zeros(2 * prev_q.size)
        for c in range(prev_q.size):
            if prev_k[c] <= 0.0:
                continue
            prefix = PathPrefix([(c >> (n - 1 - j)) & 1 for j in range(n)])
            m = strategy(prefix, prev_k[c])
            for bit in (0, 1):
                kk = prev_k[c] + m * (bit - rho)
                if kk < -atol * max(1.0, prev_k[c]):
                    raise NotPrudentError(str(prefix.append(bit)), kk)
                k[2 * c + bit] = max(kk, 0.0)
            frac = m / prev_k[c]
            q[2 * c + 1] = rho * prev_q[c] * (1.0 + frac * (1.0 - rho))
            q[2 * c] = (1.0 - rho) * prev_q[c] * (1.0 - frac * rho)
        levels.append(np.maximum(q, 0.0))
        capital = k
    return FiniteDistribution(levels, atol=max(atol, 1e-9))


def expected_log_capital(q: FiniteDistribution, strategy: Callable, rho: float) -> float:
    """``E^Q log K_N`` over all ``2**N`` paths; ``-inf`` if some path of
    positive ``Q`` mass ruins the strategy."""
    n = q.horizon
    total = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        path = PathPrefix(bits)
        mass = q.prob(path)
        if mass == 0.0:
            continue
        kn = run_bets(strategy, path, rho)[-1]
        if kn <= 0.0:
            return -np.inf
        total += mass * np.log(kn)
    return total


# --------------------------------------------------------------------------
# Kullback divergence


def kl(p: float, q: float) -> float:
    """Binary Kullback divergence ``D(p || q)`` in nats, ``0 log 0 = 0``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    return float(rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q))


def kl_vec(p, q, atol: float = 1e-12) -> float:
    """``sum_j p_j log(p_j / q_j)`` for probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if (q <= 0).any():
        raise ValueError("q must be strictly positive")
    if (p < 0).any() or abs(p.sum() - 1.0) > atol or abs(q.sum() - 1.0) > atol:
        raise ValueError("arguments must be probability vectors")
    return float(rel_entr(p, q).sum())


# --------------------------------------------------------------------------
# bit files


def save_bits(path, file) -> None:
    """Write a path as a text file of ``0``/``1`` characters, 80 per line."""
    text = str(as_path(path))
    lines = [text[i : i + 80] for i in range(0, len(text), 80)]
    with open(file, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_bits(file) -> PathPrefix:
    """Read a bit file; whitespace and ``#`` comment lines are ignored."""
    chunks = []
    with open(file, encoding="ascii") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                chunks.append("".join(line.split()))
    return PathPrefix("".join(chunks))
