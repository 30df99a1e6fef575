import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skeptic.analysis import (
    block_markov_average_check,
    block_rate_target,
    checkpoints,
    compare_block2_base,
    compare_markov_orders,
    growth_report,
    homogeneity,
    main_term,
    markov_rate_target,
    universal_rate,
    write_csv,
)
from skeptic.game import PathPrefix, kl_vec
from skeptic.sources import bernoulli, generate, markov_chain, periodic
from skeptic.strategies import BetaBinomial, BlockPredictor, MarkovPredictor


def test_checkpoints():
    assert checkpoints(64).tolist() == [64]
    assert checkpoints(1000).tolist() == [64, 128, 256, 512, 1000]
    assert checkpoints(10).tolist() == [10]


def test_block2_vs_base_on_fair_coin():
    path = generate(bernoulli(0.5, seed=1), 1 << 16)
    rep = compare_block2_base(path, 0.5)
    assert abs(rep.gap_rate) < 1e-3
    assert rep.residual_ratio < 3


def test_block2_vs_base_on_alternating_path():
    path = generate(periodic("01"), 1 << 12)
    rep = compare_block2_base(path, 0.5)
    # every pair is "01", while the product law puts 1/4 on each pair
    nb = path.n // 2
    assert rep.analytic[-1] == pytest.approx(nb * kl_vec([0, 1, 0, 0], [0.25] * 4))
    assert rep.gap_rate == pytest.approx(rep.analytic_rate, abs=0.01)
    assert rep.residual_ratio < 3
    with pytest.raises(ValueError):
        compare_block2_base(path[:11], 0.5)


def test_self_comparison_is_zero():
    path = generate(bernoulli(0.3, seed=2), 3000)
    rep = compare_markov_orders(path, 0.5, 1)
    assert np.all(rep.analytic >= 0)
    # identical strategies
    from skeptic.analysis import _compare

    same = _compare(BetaBinomial(), BetaBinomial(), path, 0.5, lambda p: 0.0, checkpoints(path.n))
    assert np.all(same.gap == 0.0)


def test_markov_orders_without_order_two_structure():
    path = generate(markov_chain([0.2, 0.7], seed=3), 100_000)
    rep = compare_markov_orders(path, 0.5, 2)
    assert rep.analytic_rate < 2e-4
    assert rep.residual_ratio < 5


def test_markov_orders_with_order_two_structure():
    src = markov_chain([0.9, 0.5, 0.5, 0.5], seed=4)
    path = generate(src, 100_000)
    rep = compare_markov_orders(path, 0.5, 2)
    expected = markov_rate_target(src, 2, 0.5) - markov_rate_target(src, 1, 0.5)
    assert rep.gap_rate == pytest.approx(expected, rel=0.1)
    assert rep.residual_ratio < 5


@settings(max_examples=40, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=300), k=st.integers(1, 4))
def test_markov_gap_main_term_nonnegative(bits, k):
    rep = compare_markov_orders(bits, 0.5, k)
    assert np.all(rep.analytic >= -1e-12)


def test_block_markov_average():
    fair = block_markov_average_check(generate(bernoulli(0.5, seed=5), 100_000), 0.5, 2)
    assert fair["residual_per_round"] <= 0.01
    src = markov_chain([0.9, 0.2, 0.5, 0.4, 0.7, 0.1, 0.3, 0.6], seed=6)
    res = block_markov_average_check(generate(src, 100_000), 0.5, 3)
    assert res["residual_per_round"] <= 0.02
    assert res["homogeneity_tv"] < 0.03


def test_block_length_one_is_markov_order_zero():
    path = generate(bernoulli(0.7, seed=7), 5000)
    res = block_markov_average_check(path, 0.5, 1)
    assert res["residual"] == pytest.approx(0.0, abs=1e-9)
    assert homogeneity(path, 1) == 0.0


def test_targets_on_sources():
    src = markov_chain([0.9, 0.5, 0.5, 0.5])
    m = [markov_rate_target(src, k, 0.5) for k in range(3)]
    assert m[0] < m[1] < m[2]
    assert m[2] == pytest.approx(0.0575100, abs=1e-6)
    assert block_rate_target(periodic("01"), 2, 0.5) == pytest.approx(np.log(2) / 2)


def test_universal_rate_small():
    res = universal_rate(periodic("01"), 1 << 12, 2)
    assert res["target_bits"] == 1.0
    assert res["rate_bits"] > 0.95
    fair = universal_rate(bernoulli(0.5, seed=8), 1 << 14, 3)
    assert abs(fair["rate_bits"]) < 0.01


def test_growth_report_residuals():
    path = PathPrefix("110" * 4000)
    rep = growth_report(MarkovPredictor(2, 0.5), path, 0.5)
    assert rep.residual_ratio < 3
    assert rep.main_rate == pytest.approx(main_term(MarkovPredictor(2, 0.5), path, 0.5) / path.n, abs=0.01)
    rep = growth_report(BlockPredictor(3, 0, 0.5), path, 0.5, target_rate=np.log(8) / 3)
    # one pattern carries all the mass: the Dirichlet penalty is (2**3 - 1) log(#blocks) - log Gamma(8)
    nb = rep.n // 3
    penalty = 7 * np.log(nb) - np.log(5040.0)
    gap = np.abs(rep.residual + penalty)
    assert np.all(np.diff(gap) < 0) and gap[-1] < 0.01


def test_csv_schema():
    rep = growth_report(BetaBinomial(), "1101" * 50, 0.5, target_rate=0.1)
    rep.diagnostics = {"replication": 0}
    buf = io.StringIO()
    write_csv(rep.rows("exp1"), buf, ["hello"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "experiment_id,strategy,n,log_capital,target_rate,residual,diagnostic_replication"
    assert lines[2].startswith("exp1,\"beta(1,1)\",64,")
