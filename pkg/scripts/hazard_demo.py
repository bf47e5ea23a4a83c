"""
Constrained vs unconstrained training on the hazard gridworld
=============================================================

The reward peaks just inside a block of hazard cells.  The unconstrained
agent parks in the hazard; the CVaR-constrained agent stops at its edge and
keeps most of the return while staying within the cost budget.

Full 300-epoch runs take several minutes per agent on one core; pass a
smaller epoch count for a quick look:

    python scripts/hazard_demo.py 60
"""

import sys
from dataclasses import replace

import numpy as np

from latentsafe.config import RunConfig
from latentsafe.harness import train_run

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300
cfg = RunConfig()

runs = {
    "safe": train_run(cfg, epochs=epochs),
    "sac": train_run(replace(cfg, train=cfg.train.unconstrained()), epochs=epochs),
}

# average over the final stretch of episodes
tail = max(epochs // 6, 1)
budget = cfg.train.risk.d
for name, res in runs.items():
    s = res.stats[-tail:]
    ret = np.mean([r["return"] for r in s])
    cost = np.mean([r["cost"] for r in s])
    print(f"{name:5s} return {ret:7.2f}  discounted cost {cost:6.3f}  (budget {budget})  "
          f"kappa {s[-1]['kappa']:.3f}")
