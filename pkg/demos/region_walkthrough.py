"""Walk through one improvement step by hand on a 10-city ring.

The tour visits the ring in order except for a detour 5 -> 4 -> 8 -> 6 -> 7.
We free the nodes 4, 6, 7, 8, look at the compressed region, solve it
exactly and splice the result back into the tour.
"""

import numpy as np

from regionopt.decomposition import ActiveSelection, static_runs
from regionopt.instance import Metadata
from regionopt.prompts import build_reconstructor_prompt
from regionopt.reconstruction import exact
from regionopt.solution import Solution, objective
from regionopt.subproblem import compress, integrate, local_objective

ang = np.linspace(0, 2 * np.pi, 10, endpoint=False)
ring = Metadata(name="ring", problem="tsp", num=10, xs=np.round(100 * np.cos(ang)),
                ys=np.round(100 * np.sin(ang)))
tour = Solution.tour([0, 1, 2, 3, 5, 4, 8, 6, 7, 9])
print("starting tour", tour.routes[0], "length", objective(ring, tour))

active = [4, 6, 7, 8]
sel = ActiveSelection(tuple(active), static_runs(ring, tour, active))
print("static runs:", sel.static_runs)

sub = compress(ring, tour, sel)
print("local node -> global node:", dict(enumerate(sub.id_map)))
for fp in sub.fixed_paths:
    print(f"fixed path between local {fp.entry} and {fp.exit}: global run {fp.run}, cost {fp.cost}")

# This is what an agent would be asked to solve.
print()
print(build_reconstructor_prompt(sub).user)
print()

local = exact(sub)
before, after = local_objective(sub, sub.local_solution), local_objective(sub, local)
print("local tour", local.routes[0], f"cost {before} -> {after}")

new = integrate(local, sub, tour)
print("new tour", new.routes[0], "length", objective(ring, new))
assert objective(ring, tour) - objective(ring, new) == before - after
