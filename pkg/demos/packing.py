"""Bin packing and multiple knapsack from their greedy starts.

The bin packing instance is random; the knapsack instance uses the
generator's recipe (capacities 100..500, weights and values 1..100).
"""

from regionopt.bench import generate_mkp
from regionopt.heuristics import make_rng
from regionopt.instance import Metadata
from regionopt.orchestrator import OrchestratorConfig, run
from regionopt.solution import check_feasible

rng = make_rng(1)
weights = rng.integers(10, 60, size=80).tolist()
bpp = Metadata(name="bpp80", problem="bpp", num=80, weights=weights, capacity=100)
lower = -(-sum(weights) // 100)

for name, m, rec in [("bpp", bpp, "exact"), ("mkp", generate_mkp(60, 5, seed=3), "exact")]:
    res = run(m, OrchestratorConfig(decomposer="heuristic", reconstructor=rec, active_cap=15,
                                    rejection_threshold=8, time_limit=60))
    assert check_feasible(m, res.best).feasible
    extra = f" (volume bound {lower})" if name == "bpp" else ""
    print(f"{name}: {res.initial_objective:.0f} -> {res.best_objective:.0f}{extra}, "
          f"{res.iterations} iterations, stop: {res.termination}")
