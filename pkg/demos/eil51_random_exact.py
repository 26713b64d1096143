"""Random regions solved exactly on eil51, one run per seed.

Each run starts from random insertion and stops after five iterations in a
row without improvement. The known optimum of eil51 is 426.
"""

import sys

from regionopt.bench import gap
from regionopt.heuristics import make_rng, random_insertion_tsp
from regionopt.instance import bundled_instance
from regionopt.orchestrator import OrchestratorConfig, run

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
m = bundled_instance("eil51")
for seed in seeds:
    start = random_insertion_tsp(m, make_rng(seed))
    cfg = OrchestratorConfig(decomposer="random", reconstructor="exact", active_cap=20, seed=seed)
    res = run(m, cfg, initial=start)
    improved = sum(1 for t in res.trace if t.local_delta is not None and t.local_delta < 0)
    print(f"seed {seed}: {res.initial_objective:.0f} -> {res.best_objective:.0f} "
          f"(gap {gap(res.best_objective, 426):.3f}%) in {res.iterations} iterations, "
          f"{improved} improving, {res.elapsed:.1f}s, stop: {res.termination}")
