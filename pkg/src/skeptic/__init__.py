"""Bayesian betting strategies for game-theoretic coin tossing, and their
use on price paths through the embedded coin-tossing game."""

__version__ = "0.1.0"

from .game import (  # noqa: E402
    CapitalProcess,
    FiniteDistribution,
    GameConfig,
    PathPrefix,
    Predictor,
    capital_closed_form,
    distribution_from_strategy,
    kl,
    kl_vec,
    run_game,
    strategy_from_distribution,
)
from .strategies import (  # noqa: E402
    BetaBinomial,
    BlockPredictor,
    MarkovPredictor,
    Mixture,
    shift_combined_block,
    universal,
)

__all__ = [
    "__version__",
    "CapitalProcess",
    "FiniteDistribution",
    "GameConfig",
    "PathPrefix",
    "Predictor",
    "capital_closed_form",
    "distribution_from_strategy",
    "kl",
    "kl_vec",
    "run_game",
    "strategy_from_distribution",
    "BetaBinomial",
    "BlockPredictor",
    "MarkovPredictor",
    "Mixture",
    "shift_combined_block",
    "universal",
]
