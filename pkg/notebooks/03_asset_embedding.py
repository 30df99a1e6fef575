# %% [markdown]
# # From a price path to a coin-tossing game
#
# Place limit orders on a log-price grid of spacing `2**-k`.  Each time the
# price reaches a neighbouring grid line, record 1 for up and 0 for down.
# This turns a continuous path into a sequence of bits played at odds
# `rho = 1 / (2 + exp(eta) - 1)`.
#
# Halving the spacing nests the games: two consecutive up moves on the finer
# grid are exactly one up move on the coarser grid.  Paths that are rougher
# or smoother than Brownian motion leave a Markov signature that a bettor can
# exploit.

# %%
import numpy as np

from skeptic.asset import (
    asset_growth_report,
    brownian_embedded_games,
    embed_levels,
    fbm_path,
    nesting_violations,
    markov_target,
    nested_counts,
)

# %% [markdown]
# ## The nested counts hold exactly

# %%
path = fbm_path(0.6, 1.0, 1 << 14, seed=3)
games = embed_levels(path, range(3, 11))
print("violations:", nesting_violations(nested_counts(games)))

# %% [markdown]
# ## Smooth paths trend, Brownian paths do not
#
# For a path of Hurst exponent 2/3 the probability of continuing in the same
# direction tends to `2**(1 - 1/H)`.  A first-order Markov bettor then earns
# about `markov_target(H)` nats per round.  For Brownian motion the walk of
# grid hits is a fair random walk and the rate is zero.

# %%
smooth = embed_levels(fbm_path(2 / 3, 1.0, 1 << 20, seed=4), range(9, 12))
for row in asset_growth_report(smooth, 2 / 3, levels=[10]):
    print(f"H=2/3 k={row['k']}: markov1 {row['rate_markov1']:.4f} block2 {row['rate_block2']:.4f} target {markov_target(2 / 3):.4f}")

brownian = brownian_embedded_games(range(9, 11), seed=4)
for row in asset_growth_report(brownian, 0.5, levels=[10]):
    print(f"H=1/2 k={row['k']}: markov1 {row['rate_markov1']:+.2e} block2 {row['rate_block2']:+.2e}")

# %% [markdown]
# At a finite grid the smooth path's rate still sits above its limit.  The
# limit assumes regular scaling of the number of rounds between levels, so
# the command-line tool reports `n_{k+1} / (2**(1/H) n_k)` next to every rate.
