"""The invariant battery behind ``skeptic verify``.

Each check returns ``(name, passed, detail)``.  Sizes are chosen so the
whole battery runs in well under a minute; the test suite repeats the same
checks at full scale.
"""

from __future__ import annotations

import itertools

import numpy as np

from .asset import brownian_embedded_games, coarsen, embed_levels, fbm_path, nesting_violations, nested_counts
from .game import (
    FiniteDistribution,
    PathPrefix,
    capital_closed_form,
    distribution_from_strategy,
    expected_log_capital,
    kl_vec,
    run_game,
    strategy_from_distribution,
)
from .sources import generate, markov_chain, rng_for
from .strategies import BetaBinomial, BlockPredictor, MarkovPredictor, shift_combined_block, universal

__all__ = ["run_checks", "random_distribution", "kl_identity_gap"]


def _families(rho: float):
    yield BetaBinomial(1, 1)
    yield BetaBinomial(0.5, 0.5)
    for k in range(1, 5):
        yield MarkovPredictor(k, rho)
        for s in range(k):
            yield BlockPredictor(k, s, rho)
    yield shift_combined_block(3, rho)
    yield universal(4, rho)


def random_distribution(horizon: int, rng: np.random.Generator, zeros: float = 0.0) -> FiniteDistribution:
    """A random consistent ``Q`` with independent uniform conditionals; with
    ``zeros > 0`` that fraction of conditionals is pushed to 0 or 1."""
    levels = [np.ones(1)]
    for n in range(horizon):
        p = rng.random(1 << n)
        if zeros:
            hit = rng.random(p.size) < zeros
            p[hit] = np.round(p[hit])
        prev = levels[-1]
        nxt = np.empty(2 * prev.size)
        nxt[0::2] = prev * (1.0 - p)
        nxt[1::2] = prev * p
        levels.append(nxt)
    return FiniteDistribution(levels)


def kl_identity_gap(p1, p2, q, lam) -> tuple[float, float, float]:
    """Both sides of the mixture identity for divergences and their
    difference."""
    pbar = lam * p1 + (1 - lam) * p2
    lhs = lam * kl_vec(p1, q) + (1 - lam) * kl_vec(p2, q) - kl_vec(pbar, q)
    rhs = lam * kl_vec(p1, pbar) + (1 - lam) * kl_vec(p2, pbar)
    return lhs, rhs, abs(lhs - rhs)


def _check_oracle(rng):
    worst = 0.0
    for rho in (1 / 3, 0.45, 0.5):
        for _ in range(3):
            bits = PathPrefix(rng.random(800) < rng.uniform(0.2, 0.8))
            for pred in _families(rho):
                inc = run_game(pred, bits, rho).final
                closed = capital_closed_form(pred, bits, rho)
                worst = max(worst, abs(inc - closed))
    return worst <= 1e-9, f"max |incremental - closed form| = {worst:.3g}"


def _check_examples(rng):
    got = [
        np.exp(run_game(BetaBinomial(), "11", 0.5).final),
        np.exp(run_game(BetaBinomial(), "10", 0.5).final),
        np.exp(capital_closed_form(BetaBinomial(), "1111", 0.5)),
        np.exp(capital_closed_form(BlockPredictor(2, 0, 0.5), "1111", 0.5)),
        MarkovPredictor(1, 0.5).predict(PathPrefix("0101")),
    ]
    want = [4 / 3, 2 / 3, 16 / 5, 1.6, 1 / 3]
    err = max(abs(g - w) for g, w in zip(got, want))
    return err <= 1e-12, f"max error on hand-computed capitals = {err:.3g}"


def _check_bijection(rng):
    worst = 0.0
    horizon = 6
    cases = [random_distribution(horizon, rng, zeros=0.2) for _ in range(3)]
    cases += [FiniteDistribution.from_predictor(p, horizon) for p in (BetaBinomial(), MarkovPredictor(1, 0.5), BlockPredictor(2, 1, 0.5))]
    for q in cases:
        back = distribution_from_strategy(strategy_from_distribution(q, 0.5), 0.5, horizon)
        for a, b in zip(q.levels, back.levels):
            worst = max(worst, float(np.abs(a - b)[a > 0].max(initial=0.0)))
    return worst <= 1e-12, f"max round-trip error = {worst:.3g}"


def _check_optimality(rng):
    horizon, rho = 5, 0.5
    margin = np.inf
    for _ in range(3):
        q = random_distribution(horizon, rng)
        own = expected_log_capital(q, strategy_from_distribution(q, rho), rho)
        for j in range(10):
            alt = random_distribution(horizon, rng, zeros=0.1)
            if j % 2:
                # a close neighbour of q: the sharpest competitor
                eps = 10.0 ** rng.uniform(-3, -1)
                alt = FiniteDistribution([(1 - eps) * a + eps * b for a, b in zip(q.levels, alt.levels)])
            other = expected_log_capital(q, strategy_from_distribution(alt, rho), rho)
            margin = min(margin, own - other)
    return margin >= -1e-12, f"min E log K(own) - E log K(alternative) = {margin:.3g}"


def _check_prudence(rng):
    horizon = 10
    worst = np.inf
    paths = [PathPrefix(bits) for bits in itertools.product((0, 1), repeat=horizon)]
    for rho in (1 / 3, 0.5):
        for pred in (MarkovPredictor(2, rho), BlockPredictor(3, 1, rho), universal(2, rho)):
            for p in paths:
                worst = min(worst, float(run_game(pred, p, rho).log_capital.min()))
    return np.isfinite(worst), f"smallest log capital over all {1 << horizon} paths = {worst:.3g}"


def _check_kl(rng):
    worst = 0.0
    negative = False
    for _ in range(1000):
        d = int(rng.integers(2, 6))
        p1, p2, q = rng.dirichlet(np.ones(d), size=3)
        lhs, rhs, gap = kl_identity_gap(p1, p2, q, rng.random())
        worst = max(worst, gap)
        negative |= lhs < -1e-15 or rhs < -1e-15
    return worst <= 1e-12 and not negative, f"max |lhs - rhs| = {worst:.3g}"


def _check_nesting(rng):
    bad = []
    for H in (0.4, 0.5, 0.6, 0.7):
        for rep in range(3):
            games = embed_levels(fbm_path(H, 1.0, 1 << 12, seed=11, replication=rep), range(3, 8))
            bad += nesting_violations(nested_counts(games))
    for rep in range(3):
        bad += nesting_violations(nested_counts(brownian_embedded_games(range(3, 10), seed=11, replication=rep)))
    return not bad, "no violations" if not bad else "; ".join(bad[:3])


def _check_coarsen(rng):
    games = embed_levels(fbm_path(0.6, 1.0, 1 << 12, seed=5), range(3, 8))
    ok = all(np.array_equal(coarsen(games[k]).levels, games[k - 1].levels) for k in range(4, 8))
    return ok, "coarsened fine levels equal direct embedding" if ok else "mismatch"


def _check_determinism(rng):
    src = markov_chain([0.9, 0.5, 0.5, 0.5], seed=7)
    a = generate(src, 5000, 3)
    b = generate(src, 5000, 3)
    c = generate(src, 5000, 4)
    ok = a == b and a != c
    return ok, "same seed and replication give the same bits" if ok else "generator not reproducible"


CHECKS = [
    ("oracle equality", _check_oracle),
    ("hand-computed capitals", _check_examples),
    ("distribution/strategy round trip", _check_bijection),
    ("Bayesian optimality", _check_optimality),
    ("prudence", _check_prudence),
    ("divergence mixture identity", _check_kl),
    ("nested-count identities", _check_nesting),
    ("level coarsening", _check_coarsen),
    ("seeded generation", _check_determinism),
]


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    out = []
    for i, (name, fn) in enumerate(CHECKS):
        try:
            ok, detail = fn(rng_for(seed, i))
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
