"""Fast constructive heuristics used for the starting solution."""

from __future__ import annotations

import numpy as np

from .errors import InfeasibleInstanceError
from .instance import Metadata, nint
from .solution import Solution


def make_rng(seed: int) -> np.random.Generator:
    """The project-wide generator: PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def _require(m: Metadata, *problems):
    if m.problem not in problems:
        raise ValueError(f"expected a {'/'.join(problems)} instance, got {m.problem}")


def random_insertion_tsp(m: Metadata, rng: np.random.Generator) -> Solution:
    """Insert nodes in random order, each at its cheapest position.

    The returned tour is rotated to start at node 0.
    """
    _require(m, "tsp")
    xy = m.coords
    order = rng.permutation(m.num)
    tour = [int(order[0])]
    pts = xy[[tour[0]]]
    for v in order[1:]:
        v = int(v)
        if len(tour) == 1:
            tour.append(v)
            pts = xy[tour]
            continue
        nxt = np.roll(pts, -1, axis=0)
        d_in = nint(np.hypot(*(pts - xy[v]).T))
        d_out = np.roll(d_in, -1)
        d_old = nint(np.hypot(*(pts - nxt).T))
        pos = int(np.argmin(d_in + d_out - d_old)) + 1
        tour.insert(pos, v)
        pts = np.insert(pts, pos, xy[v], axis=0)
    start = tour.index(0)
    return Solution.tour(tour[start:] + tour[:start])


def greedy_nn_cvrp(m: Metadata, rng: np.random.Generator | None = None) -> Solution:
    """Nearest-neighbour route construction under the capacity limit.

    Each route is extended by the closest unvisited customer whose demand
    still fits; a new route is opened when none does. Ties go to the lowest
    node index. ``rng`` is accepted for interface symmetry and unused.
    """
    _require(m, "cvrp")
    demand = np.asarray(m.demand, dtype=float)
    if (demand > m.capacity).any():
        worst = int(np.argmax(demand))
        raise InfeasibleInstanceError(
            f"demand {m.demand[worst]} of node {worst} exceeds capacity {m.capacity}")
    xy = m.coords
    unvisited = np.array([v for v in range(m.num) if v != m.depot], dtype=int)
    routes = []
    while unvisited.size:
        route, load, here = [m.depot], 0, m.depot
        while True:
            fits = unvisited[demand[unvisited] + load <= m.capacity]
            if not fits.size:
                break
            d = nint(np.hypot(*(xy[fits] - xy[here]).T))
            here = int(fits[np.argmin(d)])
            route.append(here)
            load += m.demand[here]
            unvisited = unvisited[unvisited != here]
        route.append(m.depot)
        routes.append(tuple(route))
    return Solution("cvrp", routes=routes)


def ffd_pack(m: Metadata) -> Solution:
    """First-fit decreasing.

    Bin packing sorts by weight, the knapsack variant by value density
    (value / weight); ties go to the lower item index. Bins are opened on
    demand; knapsack items that fit nowhere stay unassigned.
    """
    _require(m, "bpp", "mkp")
    w = np.asarray(m.weights, dtype=float)
    if m.problem == "bpp":
        if (w > m.capacity).any():
            worst = int(np.argmax(w))
            raise InfeasibleInstanceError(f"item {worst} is heavier than a bin")
        order = sorted(range(m.num), key=lambda i: (-m.weights[i], i))
        residual = np.full(m.num, float(m.capacity))
        groups: list[list[int]] = [[] for _ in range(m.num)]
        used = 0
        for i in order:
            k = int(np.flatnonzero(residual[:used + 1] >= w[i])[0])
            used = max(used, k + 1)
            residual[k] -= w[i]
            groups[k].append(i)
        return Solution("bpp", groups=groups[:used])

    v = np.asarray(m.values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        density = np.where(w > 0, v / np.where(w > 0, w, 1), np.inf)
    order = sorted(range(m.num), key=lambda i: (-density[i], i))
    residual = np.asarray(m.capacity, dtype=float)
    groups = [[] for _ in m.capacity]
    left = []
    for i in order:
        fits = np.flatnonzero(residual >= w[i])
        if fits.size:
            residual[fits[0]] -= w[i]
            groups[fits[0]].append(i)
        else:
            left.append(i)
    return Solution("mkp", groups=groups, unassigned=left)


def initial_solution(m: Metadata, rng: np.random.Generator) -> Solution:
    """The default starting heuristic for each problem family."""
    if m.problem == "tsp":
        return random_insertion_tsp(m, rng)
    if m.problem == "cvrp":
        return greedy_nn_cvrp(m, rng)
    return ffd_pack(m)
