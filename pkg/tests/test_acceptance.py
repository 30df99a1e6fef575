"""Acceptance suite: one test per numbered criterion.

Run with ``pytest tests/test_acceptance.py -v``.  The terminal summary lists
one PASS/FAIL line per criterion together with the measured numbers.
"""

import subprocess
import sys

import numpy as np
import pytest

from skeptic.analysis import markov_rate_target, universal_rate
from skeptic.asset import (
    asset_growth_report,
    brownian_embedded_games,
    embed_levels,
    fbm_path,
    nesting_violations,
    markov_target,
    nested_counts,
)
from skeptic.game import (
    FiniteDistribution,
    PathPrefix,
    capital_closed_form,
    distribution_from_strategy,
    expected_log_capital,
    kl,
    run_game,
    strategy_from_distribution,
)
from skeptic.sources import generate, markov_chain, periodic, rng_for
from skeptic.strategies import BetaBinomial, BlockPredictor, MarkovPredictor, universal
from skeptic.verify import kl_identity_gap, random_distribution

RHOS = (1 / 3, 0.5, 0.45)


def _families(rho):
    yield BetaBinomial()
    for k in range(1, 5):
        yield MarkovPredictor(k, rho)
        for shift in range(k):
            yield BlockPredictor(k, shift, rho)
    yield universal(4, rho)


@pytest.mark.acceptance(1, "incremental capital equals the closed form")
def test_oracle_equality(report):
    rng = rng_for(101, 0)
    worst = 0.0
    for i in range(100):
        rho = RHOS[i % 3]
        path = PathPrefix(rng.random(2000) < rng.uniform(0.1, 0.9))
        for pred in _families(rho):
            worst = max(worst, abs(run_game(pred, path, rho).final - capital_closed_form(pred, path, rho)))
    report(f"max |incremental - closed form| = {worst:.3g} over 100 paths x 16 strategies")
    assert worst <= 1e-9


def _distributions(horizon, rng):
    qs = [random_distribution(horizon, rng), random_distribution(horizon, rng, zeros=0.3)]
    qs.append(FiniteDistribution.from_predictor(MarkovPredictor(1, 0.5), horizon))
    return qs


@pytest.mark.acceptance(2, "distribution/strategy round trip and Bayesian optimality")
def test_bijection_and_optimality(report):
    rng = rng_for(102, 0)
    worst_trip = 0.0
    margin = np.inf
    alternatives = 0
    for horizon in range(1, 11):
        for rho in (1 / 3, 0.5):
            for q in _distributions(horizon, rng):
                back = distribution_from_strategy(strategy_from_distribution(q, rho), rho, horizon)
                for a, b in zip(q.levels, back.levels):
                    worst_trip = max(worst_trip, float(np.abs(a - b).max()))
        q = random_distribution(horizon, rng)
        rho = RHOS[horizon % 3]
        own = expected_log_capital(q, strategy_from_distribution(q, rho), rho)
        for j in range(50):
            alt = random_distribution(horizon, rng, zeros=0.1 if j % 3 == 0 else 0.0)
            if j % 2:
                eps = 10.0 ** rng.uniform(-4, -1)
                alt = FiniteDistribution([(1 - eps) * a + eps * b for a, b in zip(q.levels, alt.levels)])
            # the alternative is a Bayesian strategy, hence prudent
            distribution_from_strategy(strategy_from_distribution(alt, rho), rho, horizon)
            margin = min(margin, own - expected_log_capital(q, strategy_from_distribution(alt, rho), rho))
            alternatives += 1
    report(f"max round-trip error = {worst_trip:.3g}; min optimality margin = {margin:.3g} over {alternatives} alternatives")
    assert worst_trip <= 1e-12
    assert margin >= -1e-12


@pytest.mark.acceptance(3, "beta-binomial growth law at frequency 0.75")
def test_growth_law(report):
    n = 1 << 16
    path = PathPrefix("1101" * (n // 4))
    logk = run_game(BetaBinomial(), path, 0.5).log_capital
    main = n * kl(0.75, 0.5)
    ns = 1 << np.arange(6, 17)
    fracs = np.array([path[:m].s / m for m in ns])
    ratios = np.abs(logk[ns] - ns * np.array([kl(f, 0.5) for f in fracs])) / np.log(ns)
    err = abs(logk[n] - main)
    report(f"|log K - n kl| = {err:.3f}, bound 12 log n = {12 * np.log(n):.1f}, max residual/log n = {ratios.max():.3f}")
    assert err <= 12 * np.log(n)


@pytest.mark.acceptance(4, "alternating path: Markov order 1 versus count-only strategy")
def test_alternating_exploit(report):
    n = 1 << 14
    path = generate(periodic("01"), n)
    markov = run_game(MarkovPredictor(1, 0.5), path, 0.5).final / n
    count_only = run_game(BetaBinomial(), path, 0.5).final / n
    report(f"Markov-1 rate = {markov:.5f} nats (log 2 = {np.log(2):.5f}); beta(1,1) rate = {count_only:.5f}")
    assert abs(markov - np.log(2)) <= 0.02 * np.log(2)
    assert abs(count_only) <= 0.01


@pytest.mark.acceptance(5, "Markov orders 2 > 1 > 0 on an order-2 source")
def test_order_dominance(report):
    src = markov_chain([0.9, 0.5, 0.5, 0.5], seed=105)
    n = 100_000
    rates = np.zeros((20, 3))
    for r in range(20):
        path = generate(src, n, r)
        rates[r] = [capital_closed_form(MarkovPredictor(k, 0.5), path, 0.5) / n for k in range(3)]
    mean = rates.mean(axis=0)
    targets = np.array([markov_rate_target(src, k, 0.5) for k in range(3)])
    report("mean rates " + ", ".join(f"M{k}={m:.5f}" for k, m in enumerate(mean)))
    report("targets    " + ", ".join(f"M{k}={t:.5f}" for k, t in enumerate(targets)))
    assert mean[2] > mean[1] > mean[0]
    assert np.all(np.abs(mean - targets) <= 0.1 * targets)


@pytest.mark.acceptance(6, "universal mixture reaches 1 - entropy")
def test_universal_rate(report):
    src = markov_chain([0.1, 0.9], seed=106)
    res = [universal_rate(src, 200_000, 6, replication=r) for r in range(10)]
    mean = float(np.mean([r["rate_bits"] for r in res]))
    target = res[0]["target_bits"]
    report(f"mean rate = {mean:.5f} bits, target = {target:.5f}, deviation = {abs(mean - target):.5f}")
    assert abs(mean - target) <= 0.03
    assert abs(target - (1 - 0.46900)) < 1e-5


@pytest.mark.acceptance(7, "nested block counts equal coarser up/down counts")
def test_nested_counts(report):
    bad = []
    checked = 0
    for H in (0.4, 0.5, 0.6, 0.7):
        for r in range(50):
            games = embed_levels(fbm_path(H, 1.0, 1 << 14, seed=107, replication=r), range(3, 11))
            counts = nested_counts(games)
            bad += nesting_violations(counts)
            checked += 2 * (len(counts) - 1)
    report(f"{checked} identities checked, {len(bad)} violations")
    assert bad == []


def _median_rows(rows):
    keys = ("rate_markov1", "rate_block2", "ratio_n", "ratio_m11", "ratio_m00", "ratio_m01", "ratio_m10")
    out = {}
    for key in keys:
        values = np.array([r[key] for r in rows], dtype=float)
        # the exact sampler has no finer level, so its ratio_n is NaN throughout
        out[key] = float(np.median(values[np.isfinite(values)])) if np.isfinite(values).any() else float("nan")
    return out


@pytest.mark.acceptance(8, "embedded asset game rates at H = 2/3 and H = 1/2")
def test_asset_rates(report):
    rows = []
    for r in range(20):
        games = embed_levels(fbm_path(2 / 3, 1.0, 1 << 22, seed=108, replication=r), range(11, 14))
        rows += asset_growth_report(games, 2 / 3, levels=[12])
    med = _median_rows(rows)
    target = markov_target(2 / 3)
    report(f"H=2/3 k=12 median Markov-1 = {med['rate_markov1']:.5f} (target {target:.5f}), block-2 = {med['rate_block2']:.5f} (target {target / 2:.5f})")
    report("H=2/3 median regularity ratios: " + ", ".join(f"{k}={med[k]:.3f}" for k in ("ratio_n", "ratio_m11", "ratio_m00", "ratio_m01", "ratio_m10")))

    flat = []
    for r in range(20):
        games = brownian_embedded_games(range(11, 13), seed=208, replication=r)
        flat += asset_growth_report(games, 0.5, levels=[12])
    half = _median_rows(flat)
    report(f"H=1/2 k=12 median Markov-1 = {half['rate_markov1']:.2e}, block-2 = {half['rate_block2']:.2e}")

    for rate, goal in ((med["rate_markov1"], target), (med["rate_block2"], target / 2)):
        assert 0.5 * goal <= rate <= 1.5 * goal
    assert half["rate_markov1"] <= 0.01 and half["rate_block2"] <= 0.01


@pytest.mark.acceptance(9, "divergence mixture identity")
def test_kl_identity(report):
    rng = rng_for(109, 0)
    worst = 0.0
    for _ in range(10_000):
        p1, p2, q = rng.random(3)
        lam = rng.random()
        worst = max(worst, kl_identity_gap(np.array([p1, 1 - p1]), np.array([p2, 1 - p2]), np.array([q, 1 - q]), lam)[2])
    report(f"max |lhs - rhs| = {worst:.3g} over 10^4 draws")
    assert worst <= 1e-12


COMMANDS = {
    "verify": ["verify", "--seed", "3"],
    "coin": ["coin", "--source", "markov_chain(0.9,0.5,0.5,0.5)", "--strategy", "universal(3)", "--strategy", "markov(2)", "--n", "20000", "--reps", "2", "--seed", "3"],
    "asset": ["asset", "--H", "0.6", "--k", "4..8", "--n-grid", "2^14", "--reps", "2", "--seed", "3"],
}


@pytest.mark.acceptance(10, "byte-identical outputs across runs")
def test_determinism(tmp_path, report):
    for name, args in COMMANDS.items():
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}_{run}"
            proc = subprocess.run([sys.executable, "-m", "skeptic", *args, "--output-dir", str(out)], capture_output=True)
            assert proc.returncode == 0, proc.stderr.decode()
            outputs.append((proc.stdout, {f.name: f.read_bytes() for f in sorted(out.iterdir())}))
        assert outputs[0][1], f"{name} wrote no files"
        assert outputs[0] == outputs[1], f"{name} output differs between runs"
        report(f"{name}: {len(outputs[0][1])} files and stdout identical")
