# %% [markdown]
# # Betting on a coin that is not quite fair
#
# A bettor starts with capital 1 and, before each bit, stakes money on the
# outcome at fixed odds `rho`.  Every Bayesian bettor is described by a
# predictor: the probability it assigns to the next bit.  Its capital after
# `n` rounds equals the likelihood ratio between the predictor's law and
# i.i.d. Bernoulli(`rho`).
#
# This walkthrough plays a few predictors against simple sequences.

# %%
import numpy as np

from skeptic import BetaBinomial, MarkovPredictor, PathPrefix, run_game
from skeptic.game import capital_closed_form, kl
from skeptic.sources import generate, markov_chain, periodic

# %% [markdown]
# ## Counting heads is blind to alternation
#
# On `0101...` the head frequency is exactly one half, so a bettor that only
# counts heads (the beta-binomial predictor) has nothing to exploit.  A
# first-order Markov predictor sees that every `0` is followed by `1`.

# %%
n = 1 << 14
alternating = generate(periodic("01"), n)
for pred in (BetaBinomial(), MarkovPredictor(1, 0.5)):
    rate = run_game(pred, alternating, 0.5).final / n
    print(f"{pred!r:40s} rate {rate:+.5f} nats per round")
print("log 2 =", np.log(2))

# %% [markdown]
# ## Capital tracks a divergence
#
# On a path whose running head frequency is 3/4, the beta-binomial capital
# grows like `n * D(3/4 || 1/2)`.  The gap to that leading term is the price
# of not knowing the frequency in advance; it grows only like `log n`.

# %%
path = PathPrefix("1101" * (n // 4))
logk = run_game(BetaBinomial(), path, 0.5).log_capital
for m in (64, 1024, n):
    gap = logk[m] - m * kl(0.75, 0.5)
    print(f"n={m:6d}  log K={logk[m]:10.3f}  gap={gap:7.3f}  gap/log n={gap / np.log(m):6.3f}")

# %% [markdown]
# ## Longer memory pays on a source with longer memory
#
# This source emits 1 with probability 0.9 after `00` and is fair otherwise.
# Each added order of memory raises the rate.

# %%
src = markov_chain([0.9, 0.5, 0.5, 0.5], seed=1)
bits = generate(src, 100_000)
for k in range(3):
    print(f"order {k}: {capital_closed_form(MarkovPredictor(k, 0.5), bits, 0.5) / bits.n:.5f} nats per round")
