"""Outcome sequences: seeded bit generators with known stationary statistics.

Random streams use NumPy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(replication,))`` so that every replication
index gets an independent, reproducible stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .game import PathPrefix

__all__ = [
    "RNG_ALGORITHM",
    "BitSource",
    "SourceStats",
    "NonErgodicError",
    "bernoulli",
    "markov_chain",
    "periodic",
    "from_bits",
    "rng_for",
    "generate",
    "stationary_distribution",
    "entropy_rate",
    "block_distribution",
    "context_conditionals",
    "source_stats",
]

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence(seed, spawn_key=(replication,))"


class NonErgodicError(ValueError):
    """The Markov chain over contexts is not irreducible."""


@dataclass(frozen=True)
class BitSource:
    """One of ``bernoulli``, ``markov_chain``, ``periodic`` or ``from_bits``.

    For ``markov_chain`` the ``table`` holds ``P(x_t = 1 | context)`` for the
    ``2**order`` contexts, context read as a binary number with the oldest
    bit most significant.
    """

    kind: str
    p: float = 0.5
    table: tuple = ()
    pattern: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.kind == "bernoulli":
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("bernoulli probability must lie in [0, 1]")
        elif self.kind == "markov_chain":
            size = len(self.table)
            if size == 0 or size & (size - 1):
                raise ValueError("transition table length must be a power of two")
            if any(not 0.0 <= t <= 1.0 for t in self.table):
                raise ValueError("transition probabilities must lie in [0, 1]")
        elif self.kind in ("periodic", "from_bits"):
            if not self.pattern or set(self.pattern) - {"0", "1"}:
                raise ValueError("pattern must be a non-empty 0/1 string")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @property
    def order(self) -> int:
        return len(self.table).bit_length() - 1

    def describe(self) -> str:
        if self.kind == "bernoulli":
            return f"bernoulli({self.p:g})"
        if self.kind == "markov_chain":
            return "markov_chain(" + ",".join(f"{t:g}" for t in self.table) + ")"
        if self.kind == "periodic":
            return f"periodic({self.pattern})"
        return f"bits({len(self.pattern)} bits)"

    def with_seed(self, seed: int) -> "BitSource":
        return BitSource(self.kind, self.p, self.table, self.pattern, seed)


@dataclass(frozen=True)
class SourceStats:
    entropy_rate: float
    stationary_dist: np.ndarray


def bernoulli(p: float, seed: int = 0) -> BitSource:
    return BitSource("bernoulli", p=p, seed=seed)


def markov_chain(table, seed: int = 0) -> BitSource:
    return BitSource("markov_chain", table=tuple(float(t) for t in table), seed=seed)


def periodic(pattern: str) -> BitSource:
    return BitSource("periodic", pattern=pattern)


def from_bits(bits) -> BitSource:
    return BitSource("from_bits", pattern=str(PathPrefix(bits)))


def rng_for(seed: int, replication: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(replication,))
    return np.random.Generator(np.random.PCG64(ss))


def generate(source: BitSource, n: int, replication: int = 0) -> PathPrefix:
    """First ``n`` bits of the source; the same seed and replication give
    the same bits."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if source.kind in ("periodic", "from_bits"):
        pat = np.frombuffer(source.pattern.encode(), np.uint8) - ord("0")
        if source.kind == "from_bits":
            if n > pat.size:
                raise ValueError(f"source holds only {pat.size} bits")
            return PathPrefix(pat[:n])
        return PathPrefix(np.resize(pat, n))
    rng = rng_for(source.seed, replication)
    if source.kind == "bernoulli":
        return PathPrefix(rng.random(n) < source.p)
    # markov chain: initial context from the stationary law, then transitions
    k = source.order
    pi = stationary_distribution(source)
    ctx = int(rng.choice(pi.size, p=pi))
    head = [(ctx >> (k - 1 - j)) & 1 for j in range(k)][:n]
    u = rng.random(max(n - k, 0))
    table = source.table
    mask = (1 << k) - 1
    out = np.empty(u.size, np.int8)
    for i, ui in enumerate(u.tolist()):
        bit = 1 if ui < table[ctx] else 0
        out[i] = bit
        ctx = ((ctx << 1) | bit) & mask
    return PathPrefix(np.concatenate([np.array(head, np.int8), out]))


def _transition_matrix(source: BitSource) -> np.ndarray:
    k = source.order
    size = 1 << k
    mask = size - 1
    t = np.zeros((size, size))
    for c, p1 in enumerate(source.table):
        t[c, ((c << 1) | 1) & mask] += p1
        t[c, (c << 1) & mask] += 1.0 - p1
    return t


def stationary_distribution(source: BitSource) -> np.ndarray:
    """Stationary law of the ``order``-bit context of a Markov chain source."""
    if source.kind != "markov_chain":
        raise ValueError("stationary_distribution needs a markov_chain source")
    t = _transition_matrix(source)
    ncomp, _ = connected_components(t > 0, directed=True, connection="strong")
    if ncomp != 1:
        raise NonErgodicError(f"chain over contexts has {ncomp} communicating classes")
    size = t.shape[0]
    a = np.vstack([t.T - np.eye(size), np.ones(size)])
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(a, rhs, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _h2(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.nan_to_num(h)


def entropy_rate(source: BitSource) -> float:
    """Entropy rate in bits per symbol."""
    if source.kind == "bernoulli":
        return float(_h2(source.p))
    if source.kind == "periodic":
        return 0.0
    if source.kind == "markov_chain":
        pi = stationary_distribution(source)
        return float(pi @ _h2(source.table))
    raise ValueError(f"no analytic entropy rate for {source.kind} sources")


def block_distribution(source: BitSource, m: int) -> np.ndarray:
    """Stationary law of ``m`` consecutive bits, indexed by the pattern read
    as a binary number (first bit most significant)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if source.kind == "bernoulli":
        dist = np.ones(1)
        for _ in range(m):
            dist = np.stack([dist * (1 - source.p), dist * source.p], axis=1).reshape(-1)
        return dist
    if source.kind == "periodic":
        pat = source.pattern
        length = len(pat)
        dist = np.zeros(1 << m)
        reps = pat * (m // length + 2)
        for start in range(length):
            code = int(reps[start : start + m], 2) if m else 0
            dist[code] += 1.0 / length
        return dist
    if source.kind == "markov_chain":
        k = source.order
        pi = stationary_distribution(source)
        if m <= k:
            return pi.reshape(1 << m, -1).sum(axis=1)
        dist = pi
        mask = (1 << k) - 1
        p1 = np.asarray(source.table)
        for _ in range(m - k):
            ctx = np.arange(dist.size) & mask
            dist = np.stack([dist * (1 - p1[ctx]), dist * p1[ctx]], axis=1).reshape(-1)
        return dist
    raise ValueError(f"no analytic block law for {source.kind} sources")


def context_conditionals(source: BitSource, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Stationary probability of each ``k``-context and ``P(1 | context)``
    (``nan`` for contexts of probability zero)."""
    joint = block_distribution(source, k + 1).reshape(-1, 2)
    weight = joint.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = joint[:, 1] / weight
    return weight, cond


def source_stats(source: BitSource, m: Optional[int] = None) -> SourceStats:
    """Entropy rate and the stationary law of ``m``-blocks (``m`` defaults to
    the chain order, pattern length, or 1)."""
    if m is None:
        m = source.order if source.kind == "markov_chain" else (len(source.pattern) if source.kind == "periodic" else 1)
    return SourceStats(entropy_rate(source), block_distribution(source, m))
