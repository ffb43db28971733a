# %% [markdown]
# # Paying for feedback: window size and ACK frequency
#
# Real ACKs cost airtime (a K-byte header plus a W-bit bitmap) and can be
# lost.  Sending one every N coded receptions amortizes the header; a large
# window avoids stalls while ACKs are pending.  The overhead budget turns
# into concrete bounds on N and W.

# %%
from pncarq.atoms import builtin_cross_atom
from pncarq.markov import th1
from pncarq.optimizer import OverheadBudget, overhead_e1, pick_n, w_upper_bound
from pncarq.simulator import SimConfig, degradation, run

K, D = 30, 600
budget = OverheadBudget()
N = pick_n(budget.e1_header, K, D)
W_max = w_upper_bound(budget.e1, N, K, D)
print(f"N = {N}, W_max = {W_max}, feedback overhead of W=170 at p=1: "
      f"{overhead_e1(170, N, K, D, 1.0):.2%}")

# %% [markdown]
# The tuned setting against the naive one (ACK after every reception, W=1).

# %%
ROUNDS = 40_000
for p in (0.9, 0.75, 0.57):
    atom = builtin_cross_atom(p)
    tuned = run(SimConfig(atom, mode="realistic", W=170, N=4, rounds=ROUNDS, warmup=2_000))
    naive = run(SimConfig(atom, mode="realistic", W=1, N=1, rounds=ROUNDS, warmup=2_000))
    bench = th1(p, p)
    print(f"p={p}: benchmark {bench:.3f}, W=170/N=4 {tuned.throughput_per_round:.3f} "
          f"({degradation(tuned.throughput_per_round, bench):.1%} below), "
          f"W=1/N=1 {naive.throughput_per_round:.3f}, "
          f"wasteful share {tuned.wasteful_fraction:.1%}")

# %% [markdown]
# The full search lives behind `pncarq optimize`; see the README for the
# command line.
