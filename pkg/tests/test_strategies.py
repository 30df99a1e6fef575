import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from skeptic.game import PathPrefix, capital_closed_form, kl, run_game
from skeptic.strategies import (
    BetaBinomial,
    BetaBinomialParams,
    BlockPredictor,
    BlockStrategyParams,
    ConstantPredictor,
    MarkovPredictor,
    MarkovStrategyParams,
    Mixture,
    MixtureWeights,
    beta_binomial_predict,
    block_capital_closed_form,
    block_predict,
    markov_capital_closed_form,
    markov_predict,
    mixture_capital,
    mixture_predict,
    running_counts,
    shift_combined_block,
    universal,
)


def random_path(n, seed, p=0.5):
    return PathPrefix(np.random.default_rng(seed).random(n) < p)


def test_param_validation():
    with pytest.raises(ValueError):
        BetaBinomialParams(0, 1)
    with pytest.raises(ValueError):
        MarkovStrategyParams(1, 1, -1)
    with pytest.raises(ValueError):
        BlockStrategyParams(2, 2)
    with pytest.raises(ValueError):
        BlockStrategyParams(2, 0, {"11": 1.0})
    params = BlockStrategyParams(2, 0, {"00": 1, "01": 2, "10": 3, "11": 4})
    assert params.weights.tolist() == [1, 2, 3, 4] and params.c == 10
    with pytest.raises(ValueError):
        MixtureWeights((0.4, 0.2), (0.1,))


def test_beta_binomial_examples():
    assert beta_binomial_predict(BetaBinomialParams(1, 1), "") == 0.5
    assert beta_binomial_predict(BetaBinomialParams(1, 1), "111") == pytest.approx(0.8)
    assert beta_binomial_predict(BetaBinomialParams(1, 3), "0") == pytest.approx(0.2)


def test_block_examples():
    unit = BlockStrategyParams(2, 0, 1.0)
    assert block_predict(unit, 0.5, "") == 0.5
    assert block_predict(unit, 0.5, "11") == pytest.approx(3 / 5)
    assert np.exp(block_capital_closed_form(unit, "1111", 0.5)) == pytest.approx(1.6, abs=1e-13)
    assert block_capital_closed_form(unit, "1", 0.5) == pytest.approx(0.0, abs=1e-15)


def test_block_shift_rounds_do_not_bet():
    pred = BlockPredictor(3, 2, 0.4)
    p = pred.probabilities("0111010")
    assert p[0] == p[1] == 0.4


def test_block_length_one_is_beta_binomial():
    path = random_path(500, 1, 0.7)
    params = BlockStrategyParams(1, 0, {"1": 2.0, "0": 0.5})
    blk = BlockPredictor(1, 0, 0.5, params.weights)
    assert np.allclose(blk.probabilities(path), BetaBinomial(2.0, 0.5).probabilities(path), atol=1e-15)


def test_markov_examples():
    one = MarkovStrategyParams(1, 1, 1)
    assert markov_predict(one, 0.5, "1") == 0.5
    # "0101": context "1" was followed by 0 exactly once (the pair at positions 2-3)
    assert markov_predict(one, 0.5, "0101") == pytest.approx(1 / 3)
    assert markov_predict(one, 0.3, "") == 0.3
    assert markov_capital_closed_form(MarkovStrategyParams(2), "01", 0.5) == 0.0


def test_markov_order_zero_is_beta_binomial():
    path = random_path(400, 2)
    assert np.allclose(MarkovPredictor(0, 0.5, 2, 3).probabilities(path), BetaBinomial(2, 3).probabilities(path))


def test_markov_alternating_growth():
    path = PathPrefix("01" * 5)
    inc = run_game(MarkovPredictor(1, 0.5), path, 0.5).final
    assert inc == pytest.approx(markov_capital_closed_form(MarkovStrategyParams(1), path, 0.5), abs=1e-12)
    assert inc > 0


@pytest.mark.parametrize("rho", [1 / 3, 0.45, 0.5])
def test_vectorised_matches_direct(rho):
    path = random_path(120, 5, 0.6)
    for pred in (BetaBinomial(), MarkovPredictor(2, rho), BlockPredictor(3, 1, rho), universal(2, rho)):
        direct = np.array([pred.predict(path[:i]) for i in range(path.n)])
        assert np.allclose(pred.probabilities(path), direct, atol=1e-13, rtol=0)


@pytest.mark.parametrize("rho", [1 / 3, 0.45, 0.5])
def test_closed_forms_match_incremental(rho):
    path = random_path(2000, 7, 0.55)
    preds = [BetaBinomial(0.5, 0.5), MarkovPredictor(3, rho, 0.5, 2.0), universal(3, rho)]
    preds += [BlockPredictor(k, s, rho, 0.5) for k in (1, 2, 4) for s in range(k)]
    for pred in preds:
        assert abs(run_game(pred, path, rho).final - capital_closed_form(pred, path, rho)) <= 1e-9


def test_block_nonuniform_prior_closed_form():
    # explicit Dirichlet-multinomial product at a block boundary
    w = np.array([0.5, 1.0, 1.5, 2.0])
    path = PathPrefix("110100111110")
    m = path.block_counts(2, 0)
    c = w.sum()
    ones = np.array([0, 1, 1, 2])
    rho = 0.4
    expect = gammaln(c) - gammaln(m.sum() + c) + np.sum(gammaln(m + w) - gammaln(w))
    expect -= np.sum(m * (ones * np.log(rho) + (2 - ones) * np.log(1 - rho)))
    assert capital_closed_form(BlockPredictor(2, 0, rho, w), path, rho) == pytest.approx(expect, abs=1e-12)


def test_strict_probabilities_no_ruin():
    path = PathPrefix("1" * 300)
    for pred in (MarkovPredictor(2, 0.5), BlockPredictor(3, 0, 0.5), BetaBinomial()):
        p = pred.probabilities(path)
        assert np.all((p > 0) & (p < 1))


def test_mixture_examples():
    path = random_path(300, 9)
    comp = MarkovPredictor(1, 0.5)
    assert mixture_capital([1.0], [comp], path, 0.5) == pytest.approx(capital_closed_form(comp, path, 0.5), abs=1e-12)

    class Sure(ConstantPredictor):
        pass

    # K^1 = 2 and K^2 = 0 on "1": combined capital 1
    logk = mixture_capital([0.5, 0.5], [Sure(1.0), Sure(0.0)], "1", 0.5)
    assert logk == pytest.approx(0.0, abs=1e-15)
    assert mixture_predict([0.5, 0.5], [Sure(1.0), Sure(0.0)], 0.5, "") == 0.5
    with pytest.raises(ValueError):
        Mixture([], 0.5)


def test_mixture_incremental_equals_sum_of_accounts():
    path = random_path(2000, 11, 0.4)
    mix = universal(4, 0.45)
    inc = run_game(mix, path, 0.45).final
    accounts = [np.log(w) + capital_closed_form(p, path, 0.45) for w, p in zip(mix.weights, mix.predictors)]
    total = np.logaddexp.reduce(accounts + [np.log(mix.cash)])
    assert inc == pytest.approx(total, abs=1e-9)


def test_universal_weights():
    w = MixtureWeights.geometric(8)
    assert sum(w.block) == pytest.approx(0.5 - 2.0**-9)
    mix = universal(3, 0.5)
    # block lengths 1..3 with all shifts, Markov orders 1..3
    assert len(mix.predictors) == 6 + 3
    assert mix.cash == pytest.approx(1 - 2 * sum(MixtureWeights.geometric(3).block))


def test_shift_combined_close_to_best_shift():
    path = PathPrefix(("0" + "011") * 400)
    combined = capital_closed_form(shift_combined_block(3, 0.5), path, 0.5)
    each = [capital_closed_form(BlockPredictor(3, s, 0.5), path, 0.5) for s in range(3)]
    assert max(each) - np.log(3) - 1e-12 <= combined <= max(each)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.9])
def test_beta_growth_law(p):
    # deterministic path whose running frequency tends to p
    n = 1 << 14
    i = np.arange(1, n + 1)
    bits = (np.floor(i * p) - np.floor((i - 1) * p)).astype(int)
    path = PathPrefix(bits)
    logk = run_game(BetaBinomial(), path, 0.5).log_capital
    ns = 1 << np.arange(6, 15)
    main = np.array([m * kl(PathPrefix(bits[:m]).s / m, 0.5) for m in ns])
    ratio = np.abs(logk[ns] - main) / np.log(ns)
    assert ratio.max() <= 2.0


def test_running_counts():
    keys = np.array([0, 1, 0, 0, 1, 2])
    bits = np.array([1, 0, 0, 1, 1, 1])
    total, ones = running_counts(keys, bits)
    assert total.tolist() == [0, 0, 1, 2, 1, 0]
    assert ones.tolist() == [0, 0, 1, 1, 0, 0]


def test_naive_odd_round_factor_overspends():
    """An odd-round factor that divides by (n - 1 + c) after n complete
    pairs stakes more than the current capital, so it is not a Bayesian
    strategy; the exact conditional divides by (n + c).
    At even rounds both agree with the pair-count product."""
    rho = 0.5
    path = PathPrefix("1101001110")
    nb = path.n // 2
    m = path.block_counts(2, 0)
    c = 4.0
    m1, m0 = m[2] + m[3], m[0] + m[1]
    naive = [(m1 + 2) / (rho * (nb - 1 + c)), (m0 + 2) / ((1 - rho) * (nb - 1 + c))]
    spent = rho * naive[0] + (1 - rho) * naive[1]
    assert spent == pytest.approx((nb + c) / (nb - 1 + c))
    assert spent > 1.0
    pred = BlockPredictor(2, 0, rho)
    p = pred.predict(path)
    assert p == pytest.approx((m1 + 2) / (nb + c))
    even = capital_closed_form(pred, path, rho)
    odd = capital_closed_form(pred, path.append(1), rho)
    assert odd - even == pytest.approx(np.log(p / rho), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(bits=st.lists(st.integers(0, 1), max_size=200), k=st.integers(1, 4), shift_seed=st.integers(0, 3), rho=st.floats(0.1, 0.9))
def test_block_oracle_property(bits, k, shift_seed, rho):
    pred = BlockPredictor(k, shift_seed % k, rho)
    assert abs(run_game(pred, bits, rho).final - capital_closed_form(pred, bits, rho)) <= 1e-9 * max(1, len(bits))


@settings(max_examples=40, deadline=None)
@given(bits=st.lists(st.integers(0, 1), max_size=200), k=st.integers(0, 4), rho=st.floats(0.1, 0.9))
def test_markov_oracle_property(bits, k, rho):
    pred = MarkovPredictor(k, rho)
    assert abs(run_game(pred, bits, rho).final - capital_closed_form(pred, bits, rho)) <= 1e-9 * max(1, len(bits))
