# %% [markdown]
# # The simulator against the exact solver
#
# The round-by-round simulator knows nothing about Markov chains.  Under
# idealized feedback it should land on the closed-form values within its
# batch-means confidence interval.  Round counts are kept small so the
# script runs in about a minute; raise ROUNDS for tighter intervals.

# %%
from pncarq.atoms import builtin_cross_atom
from pncarq.markov import th1, th2, th3
from pncarq.simulator import SimConfig, run

ROUNDS = 60_000

for p in (0.9, 0.7):
    atom = builtin_cross_atom(p)
    for label, kw, exact in (("tracking", {}, th1(p, p)),
                             ("coupled", {"coupling": "coupled"}, th2(p, p)),
                             ("no store", {"tracking": "off"}, th3(p))):
        s = run(SimConfig(atom, rounds=ROUNDS, warmup=2_000, **kw))
        print(f"p={p} {label:>8}: sim {s.throughput_per_round:.4f} +- {s.ci95:.4f}, exact {exact:.4f}")

# %% [markdown]
# With idealized feedback the window size is irrelevant: the source always
# learns the exact delivery state and restarts from the left boundary.

# %%
for W in (1, 4, 16):
    s = run(SimConfig(builtin_cross_atom(0.75), W=W, rounds=ROUNDS, warmup=2_000))
    print(f"W={W:>2}: {s.throughput_per_round:.4f}, wasteful retransmissions {s.wasteful}")
