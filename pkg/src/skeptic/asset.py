"""Continuous-time asset game embedded into coin tossing.

A price path is read on the nested dyadic log-price grids ``eta_k = 2**-k``
anchored at ``log S(0)``.  A trading time is the first time the
(piecewise-linear) log-price reaches the grid level above or below the last
one; the bit records the direction.  Because the grids are nested and the
level index is computed as ``floor(z * 2**k)`` on one shared array ``z``,
every level is consistent with every other one exactly, not just up to
rounding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .game import PathPrefix, kl
from .sources import rng_for
from .strategies import BlockPredictor, MarkovPredictor
from .game import capital_closed_form

__all__ = [
    "PricePath",
    "EmbeddedGame",
    "NestedCounts",
    "VariationStats",
    "EmbeddingError",
    "fbm_path",
    "fgn_covariance",
    "refine",
    "load_price_csv",
    "embed",
    "embed_levels",
    "coarsen",
    "brownian_embedded_games",
    "nested_counts",
    "nesting_violations",
    "rho_for_level",
    "markov_target",
    "asset_growth_report",
]


class EmbeddingError(RuntimeError):
    pass


@dataclass
class PricePath:
    times: np.ndarray
    log_price: np.ndarray
    H: Optional[float] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.log_price = np.asarray(self.log_price, dtype=float)
        if self.times.shape != self.log_price.shape or self.times.ndim != 1:
            raise ValueError("times and log_price must be 1-d and of equal length")
        if self.times.size < 2:
            raise ValueError("a price path needs at least two points")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.log_price)):
            raise ValueError("log prices must be finite")

    @property
    def price(self) -> np.ndarray:
        return np.exp(self.log_price)

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class EmbeddedGame:
    """Coin-tossing game read off a path at grid level ``k``."""

    k: int
    levels: np.ndarray  # grid index of log S(t_i) - log S(0), starting with 0
    trading_times: np.ndarray

    @property
    def eta(self) -> float:
        return 2.0 ** -self.k

    @property
    def delta(self) -> float:
        return float(np.expm1(self.eta))

    @property
    def rho_delta(self) -> float:
        return 1.0 / (2.0 + self.delta)

    @property
    def bits(self) -> np.ndarray:
        return (np.diff(self.levels) > 0).astype(np.int8)

    @property
    def n(self) -> int:
        return int(self.levels.size - 1)

    def path(self) -> PathPrefix:
        return PathPrefix(self.bits)


@dataclass
class VariationStats:
    total_variation: float
    net_move: float
    growth_ratio: float = float("nan")


@dataclass
class NestedCounts:
    """Count tables of one embedded game.

    ``pairs[i, j]`` is the number of overlapping pairs ``(x_{t-1} x_t) = (i j)``;
    ``blocks`` and ``shifted_blocks`` count complete non-overlapping pairs
    starting at round 1 and round 2.
    """

    k: int
    n: int
    q1: int
    q0: int
    pairs: np.ndarray
    blocks: np.ndarray
    shifted_blocks: np.ndarray
    first_bit: int
    last_bit: int
    variation: VariationStats = field(default=None)


# --------------------------------------------------------------------------
# path synthesis


def fgn_covariance(H: float, n: int) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    j = np.arange(n, dtype=float)
    h2 = 2.0 * H
    return 0.5 * (np.abs(j + 1) ** h2 - 2.0 * j**h2 + np.abs(j - 1) ** h2)


def _fgn_circulant(H: float, n: int, rng: np.random.Generator) -> Optional[np.ndarray]:
    gamma = fgn_covariance(H, n + 1)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.rfft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    m = row.size
    # Hermitian Gaussian spectrum; irfft gives a real sequence with circulant covariance
    z = rng.standard_normal(lam.size) + 1j * rng.standard_normal(lam.size)
    z[0] = rng.standard_normal() * np.sqrt(2.0)
    z[-1] = rng.standard_normal() * np.sqrt(2.0)
    w = np.sqrt(lam * m / 2.0) * z
    return np.fft.irfft(w, n=m)[:n]


def _fgn_cholesky(H: float, n: int, rng: np.random.Generator) -> np.ndarray:
    gamma = fgn_covariance(H, n)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    chol = np.linalg.cholesky(gamma[idx])
    return chol @ rng.standard_normal(n)


def fbm_path(H: float, T: float = 1.0, n_grid: int = 2**16, seed: int = 0, replication: int = 0, method: str = "auto") -> PricePath:
    """Fractional Brownian motion on ``n_grid`` equal steps of ``[0, T]``,
    normalised so that ``Var B_H(T) = 1``.

    Exact Gaussian synthesis by circulant embedding of the increment
    covariance; falls back to a dense Cholesky factorisation if the
    embedding is not non-negative definite.
    """
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    if n_grid < 1 or n_grid & (n_grid - 1):
        raise ValueError("n_grid must be a power of two")
    rng = rng_for(seed, replication)
    incr = None
    if method in ("auto", "circulant"):
        incr = _fgn_circulant(H, n_grid, rng)
        if incr is None and method == "circulant":
            raise EmbeddingError("circulant embedding is not non-negative definite")
    if incr is None:
        try:
            incr = _fgn_cholesky(H, n_grid, rng)
        except np.linalg.LinAlgError as exc:
            raise EmbeddingError(f"fBM synthesis failed for H={H}, n_grid={n_grid}") from exc
    b = np.empty(n_grid + 1)
    b[0] = 0.0
    np.cumsum(incr, out=b[1:])
    b *= float(n_grid) ** -H
    return PricePath(np.linspace(0.0, T, n_grid + 1), b, H)


def _midpoint_sd(H: float, h: float) -> float:
    """Conditional sd of the midpoint of a segment of relative length ``h``
    given both endpoints (unit variance at the horizon)."""
    return float(np.sqrt(h ** (2 * H) * (4.0**-H - 0.25)))


def _refine_arrays(t: np.ndarray, y: np.ndarray, H: float, T: float, levels: int, rng: np.random.Generator):
    for _ in range(levels):
        h = (t[1] - t[0]) / T
        mid = 0.5 * (y[:-1] + y[1:]) + _midpoint_sd(H, h) * rng.standard_normal(y.size - 1)
        ny = np.empty(2 * y.size - 1)
        ny[0::2] = y
        ny[1::2] = mid
        nt = np.empty_like(ny)
        nt[0::2] = t
        nt[1::2] = 0.5 * (t[:-1] + t[1:])
        t, y = nt, ny
    return t, y


def refine(path: PricePath, levels: int, seed: int = 0, H: Optional[float] = None) -> PricePath:
    """Insert ``levels`` rounds of random midpoints.

    Each midpoint is Gaussian given its two neighbours, with the
    conditional law of fractional Brownian motion restricted to that pair.
    Exact for ``H = 1/2`` (Brownian bridge); for other ``H`` it keeps the
    local increment variance but ignores longer-range correlation.
    """
    H = H if H is not None else path.H
    if H is None:
        raise ValueError("refinement needs a Hurst exponent")
    t, y = _refine_arrays(path.times, path.log_price, H, path.T, levels, rng_for(seed, 1 << 20))
    return PricePath(t, y, H)


def load_price_csv(file) -> PricePath:
    """Read ``time,price`` rows (an optional header line is skipped)."""
    times, prices = [], []
    with open(file, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                t, p = float(row[0]), float(row[1])
            except ValueError:
                if not times:
                    continue
                raise
            times.append(t)
            prices.append(p)
    prices = np.asarray(prices)
    if (prices <= 0).any():
        raise ValueError("prices must be positive")
    return PricePath(np.asarray(times), np.log(prices))


# --------------------------------------------------------------------------
# embedding


def _hits(t: np.ndarray, u: np.ndarray):
    """Integer levels crossed by the piecewise-linear curve through
    ``(t, u)``, in order, with crossing times.  Levels touched at a sample
    point appear once per adjacent segment."""
    u0, u1 = u[:-1], u[1:]
    up = u1 >= u0
    lo = np.where(up, np.ceil(u0), np.ceil(u1))
    hi = np.where(up, np.floor(u1), np.floor(u0))
    cnt = np.maximum(hi - lo + 1, 0).astype(np.int64)
    total = int(cnt.sum())
    seg = np.repeat(np.arange(u0.size), cnt)
    offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    start = np.where(up, lo, hi)[seg]
    step = np.where(up, 1, -1)[seg]
    lev = start + step * offs
    du = (u1 - u0)[seg]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(du != 0, (lev - u0[seg]) / du, 0.0)
    times = t[:-1][seg] + frac * (t[1:] - t[:-1])[seg]
    return lev.astype(np.int64), times


class _LevelTracker:
    """Accumulates the de-duplicated level sequence of one grid across chunks."""

    def __init__(self, k: int, t0: float):
        self.k = k
        self.last = 0
        self.levels = [np.zeros(1, np.int64)]
        self.times = [np.array([t0])]

    def feed(self, t: np.ndarray, z: np.ndarray):
        u = z * float(2**self.k)
        lev, times = _hits(t, u)
        if lev.size == 0:
            return
        keep = np.empty(lev.size, dtype=bool)
        keep[0] = lev[0] != self.last
        keep[1:] = lev[1:] != lev[:-1]
        lev, times = lev[keep], times[keep]
        if lev.size:
            jumps = np.abs(np.diff(np.concatenate([[self.last], lev])))
            if jumps.max() != 1:
                raise EmbeddingError(f"level {self.k}: non-adjacent grid move")
            self.last = int(lev[-1])
            self.levels.append(lev)
            self.times.append(times)

    def game(self) -> EmbeddedGame:
        return EmbeddedGame(self.k, np.concatenate(self.levels), np.concatenate(self.times))


def embed(path: PricePath, k: int) -> EmbeddedGame:
    """Embedded coin-tossing game at grid level ``k`` (``eta = 2**-k``)."""
    return embed_levels(path, [k])[k]


def embed_levels(
    path: PricePath,
    ks: Iterable[int],
    refine_levels: int = 0,
    seed: int = 0,
    chunk: int = 1 << 14,
) -> dict[int, EmbeddedGame]:
    """Embed one path at several grid levels.

    With ``refine_levels > 0`` the path is refined by random midpoints on the
    fly, chunk by chunk, so the refined path is never held in memory; all
    levels see the same refined path.
    """
    ks = sorted(set(int(k) for k in ks))
    z = path.log_price - path.log_price[0]
    t = path.times
    trackers = [_LevelTracker(k, float(t[0])) for k in ks]
    nseg = t.size - 1
    for ci, start in enumerate(range(0, nseg, chunk)):
        stop = min(start + chunk, nseg)
        tc, zc = t[start : stop + 1], z[start : stop + 1]
        if refine_levels:
            if path.H is None:
                raise ValueError("refinement needs a Hurst exponent")
            tc, zc = _refine_arrays(tc, zc, path.H, path.T, refine_levels, rng_for(seed, (1 << 20) + ci))
        for tr in trackers:
            tr.feed(tc, zc)
    return {tr.k: tr.game() for tr in trackers}


def refine_levels_for(H: float, n_grid: int, k_max: int, max_step: float = 0.25) -> int:
    """Number of midpoint rounds needed so that the increment standard
    deviation is at most ``max_step * 2**-k_max``."""
    levels = 0
    while (n_grid * 2**levels) ** -H > max_step * 2.0**-k_max:
        levels += 1
    return levels


def coarsen(game: EmbeddedGame) -> EmbeddedGame:
    """The game one level coarser, read off this one.

    A coarse grid line is every second fine grid line, so the coarse
    trading times are the fine ones that land on an even level.
    """
    even = game.levels % 2 == 0
    lev = game.levels[even] // 2
    times = game.trading_times[even]
    keep = np.empty(lev.size, dtype=bool)
    keep[0] = True
    keep[1:] = lev[1:] != lev[:-1]
    return EmbeddedGame(game.k - 1, lev[keep], times[keep])


def _exit_time_table(size: int = 4097, t_max: float = 8.0):
    # P(tau > t) for Brownian motion leaving (-1, 1) from 0
    t = np.linspace(0.0, t_max, size)[1:]
    j = np.arange(200)[:, None]
    odd = 2 * j + 1
    surv = (4.0 / np.pi) * np.sum((-1.0) ** j / odd * np.exp(-(odd**2) * np.pi**2 * t / 8.0), axis=0)
    cdf = np.concatenate([[0.0], np.clip(1.0 - surv, 0.0, 1.0)])
    cdf = np.maximum.accumulate(cdf)
    return cdf, np.concatenate([[0.0], t])


_EXIT_TABLE = None


def _exit_times(u: np.ndarray) -> np.ndarray:
    """Inverse-CDF samples of the exit time of standard Brownian motion from
    ``(-1, 1)``.  The far tail uses the leading exponential term."""
    global _EXIT_TABLE
    if _EXIT_TABLE is None:
        _EXIT_TABLE = _exit_time_table()
    cdf, t = _EXIT_TABLE
    out = np.interp(u, cdf, t)
    tail = u > cdf[-2]
    if tail.any():
        out[tail] = -8.0 / np.pi**2 * np.log(np.pi / 4.0 * (1.0 - u[tail]))
    return out


def brownian_embedded_games(ks: Iterable[int], T: float = 1.0, seed: int = 0, replication: int = 0) -> dict[int, EmbeddedGame]:
    """Embedded games of standard Brownian motion on ``[0, T]``, scaled so
    that ``Var B(T) = 1``, sampled exactly at the finest requested level.

    At level ``k`` the walk of grid hits is a fair +-1 walk whose waiting
    times are i.i.d. ``T * eta**2 * tau`` with ``tau`` the exit time from
    ``(-1, 1)``.  No price path is discretised, so no level can be skipped.
    Coarser levels come from :func:`coarsen`.
    """
    ks = sorted(set(int(k) for k in ks))
    k_max = ks[-1]
    rng = rng_for(seed, replication)
    scale = T * 4.0**-k_max
    batch = int(1.2 * 4.0**k_max) + 1024
    steps, waits = [], []
    elapsed = 0.0
    while True:
        w = _exit_times(rng.random(batch)) * scale
        cum = elapsed + np.cumsum(w)
        inside = int(np.searchsorted(cum, T, side="right"))
        steps.append(np.where(rng.random(inside) < 0.5, -1, 1))
        waits.append(cum[:inside])
        if inside < batch:
            break
        elapsed = float(cum[-1])
    levels = np.concatenate([[0], np.cumsum(np.concatenate(steps))]).astype(np.int64)
    times = np.concatenate([[0.0], np.concatenate(waits)])
    game = EmbeddedGame(k_max, levels, times)
    out = {k_max: game}
    for k in range(k_max - 1, ks[0] - 1, -1):
        game = coarsen(game)
        out[k] = game
    return {k: out[k] for k in ks}


# --------------------------------------------------------------------------
# counts, nested-count identities, growth rates


def rho_for_level(k: int) -> float:
    return 1.0 / (2.0 + float(np.expm1(2.0**-k)))


def _counts(game: EmbeddedGame) -> NestedCounts:
    x = game.bits.astype(np.int64)
    n = x.size
    pairs = np.bincount(2 * x[:-1] + x[1:], minlength=4).reshape(2, 2) if n > 1 else np.zeros((2, 2), np.int64)
    path = PathPrefix(x)
    blocks = path.block_counts(2, 0).reshape(2, 2) if n else np.zeros((2, 2), np.int64)
    shifted = path.block_counts(2, 1).reshape(2, 2) if n > 1 else np.zeros((2, 2), np.int64)
    q1 = int(x.sum())
    tv = n * game.eta
    return NestedCounts(
        k=game.k,
        n=n,
        q1=q1,
        q0=n - q1,
        pairs=pairs,
        blocks=blocks,
        shifted_blocks=shifted,
        first_bit=int(x[0]) if n else -1,
        last_bit=int(x[-1]) if n else -1,
        variation=VariationStats(tv, (2 * q1 - n) * game.eta),
    )


def nested_counts(games: dict[int, EmbeddedGame]) -> dict[int, NestedCounts]:
    """Count tables per level, with ``n_{k+1} / n_k`` filled in where the
    next level is present."""
    out = {k: _counts(g) for k, g in sorted(games.items())}
    for k, c in out.items():
        nxt = out.get(k + 1)
        if nxt is not None and c.n:
            c.variation.growth_ratio = nxt.n / c.n
    return out


def nesting_violations(counts: dict[int, NestedCounts]) -> list[str]:
    """Levels where the ``11``/``00`` block counts differ from the coarser
    level's up/down counts.  Empty means every identity holds exactly."""
    bad = []
    for k, c in counts.items():
        prev = counts.get(k - 1)
        if prev is None:
            continue
        if c.blocks[1, 1] != prev.q1:
            bad.append(f"k={k}: m11={c.blocks[1, 1]} != q1(k-1)={prev.q1}")
        if c.blocks[0, 0] != prev.q0:
            bad.append(f"k={k}: m00={c.blocks[0, 0]} != q0(k-1)={prev.q0}")
    return bad


def markov_target(H: float) -> float:
    """Limiting first-order Markov growth rate ``D(2**(1 - 1/H) || 1/2)``."""
    return kl(2.0 ** (1.0 - 1.0 / H), 0.5)


def asset_growth_report(
    games: dict[int, EmbeddedGame],
    H: Optional[float] = None,
    a: float = 1.0,
    b: float = 1.0,
    dirichlet=1.0,
    levels: Optional[Iterable[int]] = None,
) -> list[dict]:
    """Per-level growth rates of the first-order Markov strategy and the
    shift-combined length-2 block strategy, played at ``rho_delta``, plus the
    regularity diagnostics and theoretical targets.

    ``levels`` restricts the rows; the other games still feed the
    ``n_{k+1} / n_k`` ratio.
    """
    counts = nested_counts(games)
    wanted = set(games) if levels is None else set(levels)
    rows = []
    for k, game in sorted(games.items()):
        if k not in wanted:
            continue
        c = counts[k]
        if c.n == 0:
            raise EmbeddingError(f"level {k}: embedded game has no rounds")
        rho = game.rho_delta
        bits = game.path()
        log_m = capital_closed_form(MarkovPredictor(1, rho, a, b), bits, rho)
        log_b = np.logaddexp(
            capital_closed_form(BlockPredictor(2, 0, rho, dirichlet), bits, rho),
            capital_closed_form(BlockPredictor(2, 1, rho, dirichlet), bits, rho),
        ) - np.log(2.0)
        log_0 = _beta_log_capital(c, rho)
        nxt = counts.get(k + 1)
        q = c.pairs
        row = {
            "k": k,
            "n_k": c.n,
            "rho_delta": rho,
            "rate_markov1": log_m / c.n,
            "rate_block2": log_b / c.n,
            "rate_beta": log_0 / c.n,
            "q1_over_n": c.q1 / c.n,
            "r1": q[1, 1] / max(q[1].sum(), 1),
            "r0": q[0, 1] / max(q[0].sum(), 1),
            "L_over_TV": c.variation.net_move / c.variation.total_variation,
        }
        if H is not None:
            target = markov_target(H)
            row["target_markov1"] = target
            row["target_block2"] = target / 2.0
            row["ratio_n"] = nxt.n / (2 ** (1.0 / H) * c.n) if nxt is not None else float("nan")
        for i in (0, 1):
            for j in (0, 1):
                row[f"ratio_m{i}{j}"] = 2 * c.blocks[i, j] / q[i, j] if q[i, j] else float("nan")
                row[f"ratio_mt{i}{j}"] = 2 * c.shifted_blocks[i, j] / q[i, j] if q[i, j] else float("nan")
        rows.append(row)
    return rows


def _beta_log_capital(c: NestedCounts, rho: float) -> float:
    from scipy.special import betaln

    return float(betaln(1 + c.q1, 1 + c.q0) - c.q1 * np.log(rho) - c.q0 * np.log1p(-rho))
