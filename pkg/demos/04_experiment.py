"""Run a small size-and-power study with the simulation lab.

Uses desk-scale designs (n=120, p=30, 25 replications) so the whole
script finishes in about a minute on one core.  Rows print as CSV; feed
larger versions of this to the CLI via `regcpt simulate`.
"""

from regcpt.simlab import (SimDesign, jump_vector, run_power_experiment,
                           run_size_experiment)
from regcpt.testing import TestConfig

n, p, reps = 120, 30, 25
cfg = TestConfig(alpha=0.05, B=100, seed=0)

null_design = SimDesign(n=n, p=p, s=5, active_pool=(1, 30), seed=0)
size_rep = run_size_experiment(null_design, cfg, reps=reps)
print(f"size: rejected {size_rep.rejection_rate:.0%} at nominal 5% "
      f"({size_rep.reps} reps, {size_rep.wall_time:.1f}s)")

print("\npower sweep over jump scale C:")
for C in (0.5, 1.0, 2.0, 4.0):
    delta = tuple(jump_vector(C, p, n))
    design = SimDesign(n=n, p=p, s=5, active_pool=(1, 30),
                       cpts=((n // 2, delta),), seed=0)
    rep = run_power_experiment(design, cfg, reps=reps, group_mode="S",
                               jump_C=C)
    loc = "-" if rep.localization is None else f"{rep.localization:.3f}"
    print(f"  C={C:3.1f}: reject {rep.rejection_rate:.0%}, "
          f"mean |t_hat - t0| = {loc}")

print("\nlast report as CSV:")
print(rep.csv_row())
