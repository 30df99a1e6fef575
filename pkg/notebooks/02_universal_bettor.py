# %% [markdown]
# # One bettor for every stationary source
#
# Split the starting capital over block strategies of every length and
# Markov strategies of every order, with geometrically decreasing weights.
# The mixture never trails its best account by more than a constant, so in
# base-2 units its rate approaches `1 - H`, where `H` is the entropy rate.

# %%
from skeptic.analysis import universal_rate
from skeptic.sources import bernoulli, entropy_rate, markov_chain, periodic

# %%
sources = {
    "fair coin": bernoulli(0.5, seed=2),
    "sticky chain": markov_chain([0.1, 0.9], seed=2),
    "alternating": periodic("01"),
}
for name, src in sources.items():
    res = universal_rate(src, 200_000, k_max=6)
    print(f"{name:13s} entropy {entropy_rate(src):.4f}  rate {res['rate_bits']:.4f}  target {res['target_bits']:.4f}")

# %% [markdown]
# The fair coin leaves nothing to win.  The alternating sequence is fully
# predictable, so capital nearly doubles each round.  The sticky chain sits in
# between, at one minus its entropy.
