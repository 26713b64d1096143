"""Random instance and solution generators shared by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from regionopt.heuristics import initial_solution, make_rng
from regionopt.instance import Metadata
from regionopt.solution import Solution

PROBLEMS = ("tsp", "cvrp", "bpp", "mkp")


def random_instance(problem: str, rng: np.random.Generator, n: int | None = None,
                    span: int = 1000) -> Metadata:
    n = int(rng.integers(4, 30)) if n is None else n
    kw = dict(name=f"rand-{problem}", problem=problem, num=n)
    if problem in ("tsp", "cvrp"):
        kw.update(xs=rng.integers(0, span, n).tolist(), ys=rng.integers(0, span, n).tolist())
    if problem == "cvrp":
        demand = rng.integers(1, 30, n).tolist()
        demand[0] = 0
        kw.update(depot=0, demand=demand, capacity=int(rng.integers(30, 100)))
    if problem == "bpp":
        kw.update(weights=rng.integers(1, 50, n).tolist(), capacity=60)
    if problem == "mkp":
        k = int(rng.integers(1, 4))
        kw.update(weights=rng.integers(1, 50, n).tolist(), values=rng.integers(1, 50, n).tolist(),
                  capacity=rng.integers(40, 150, k).tolist())
    return Metadata(**kw)


def random_solution(m: Metadata, rng: np.random.Generator) -> Solution:
    """A random feasible solution (not the constructive heuristic's)."""
    if m.problem == "tsp":
        return Solution.tour(rng.permutation(m.num).tolist())
    if m.problem == "cvrp":
        order = [int(v) for v in rng.permutation(range(1, m.num))]
        routes, cur, load = [], [], 0
        for v in order:
            if load + m.demand[v] > m.capacity or (cur and rng.random() < 0.2):
                routes.append((0, *cur, 0))
                cur, load = [], 0
            cur.append(v)
            load += m.demand[v]
        if cur:
            routes.append((0, *cur, 0))
        return Solution("cvrp", routes=routes)
    if m.problem == "bpp":
        groups, loads = [], []
        for v in rng.permutation(m.num).tolist():
            fits = [k for k in range(len(groups)) if loads[k] + m.weights[v] <= m.capacity]
            if fits and rng.random() < 0.8:
                k = fits[int(rng.integers(len(fits)))]
            else:
                groups.append([])
                loads.append(0)
                k = len(groups) - 1
            groups[k].append(v)
            loads[k] += m.weights[v]
        return Solution("bpp", groups=groups)
    groups = [[] for _ in m.capacity]
    loads = [0] * len(m.capacity)
    left = []
    for v in rng.permutation(m.num).tolist():
        k = int(rng.integers(len(groups) + 1))
        if k < len(groups) and loads[k] + m.weights[v] <= m.capacity[k]:
            groups[k].append(v)
            loads[k] += m.weights[v]
        else:
            left.append(v)
    return Solution("mkp", groups=groups, unassigned=left)


def random_triple(problem: str, seed: int, cap: int | None = None, n: int | None = None):
    """(instance, feasible solution, rng) with the solution either random or constructive."""
    rng = make_rng(seed)
    m = random_instance(problem, rng, n=n)
    s = random_solution(m, rng) if rng.random() < 0.5 else initial_solution(m, rng)
    return m, s, rng


def corrupt(m: Metadata, s: Solution, kind: str, rng: np.random.Generator) -> Solution | None:
    """Inject one fault of ``kind`` ("missing", "duplicate", "capacity_exceeded").

    Returns None when this (m, s) cannot host the fault without also
    triggering another violation kind.
    """
    if m.problem == "tsp":
        tour = list(s.routes[0])
        if kind == "missing":
            del tour[int(rng.integers(len(tour)))]
        elif kind == "duplicate":
            tour.insert(int(rng.integers(len(tour) + 1)), tour[int(rng.integers(len(tour)))])
        else:
            return None
        return Solution.tour(tour)
    if m.problem == "cvrp":
        routes = [list(r) for r in s.routes]
        if kind == "missing":
            k = int(rng.integers(len(routes)))
            del routes[k][int(rng.integers(1, len(routes[k]) - 1))]
        elif kind == "duplicate":
            v = int(rng.integers(1, m.num))
            routes.append([0, v, 0])
        else:
            loads = [sum(m.demand[v] for v in r) for r in routes]
            pairs = [(a, b) for a in range(len(routes)) for b in range(a + 1, len(routes))
                     if loads[a] + loads[b] > m.capacity]
            if not pairs:
                return None
            a, b = pairs[int(rng.integers(len(pairs)))]
            routes[a] = routes[a][:-1] + routes[b][1:]
            del routes[b]
        return Solution("cvrp", routes=routes)
    groups = [list(g) for g in s.groups]
    left = set(s.unassigned)
    placed = [k for k, g in enumerate(groups) if g]
    if kind == "missing":
        if not placed:
            return None
        k = placed[int(rng.integers(len(placed)))]
        del groups[k][int(rng.integers(len(groups[k])))]
    elif kind == "duplicate":
        if not placed:
            return None
        src = placed[int(rng.integers(len(placed)))]
        v = groups[src][int(rng.integers(len(groups[src])))]
        if m.problem == "bpp":
            groups.append([v])
        else:
            free = [k for k in range(len(groups)) if k != src
                    and sum(m.weights[u] for u in groups[k]) + m.weights[v] <= m.capacity[k]]
            if not free:
                return None
            groups[free[0]].append(v)
    else:
        k = int(rng.integers(len(groups)))
        cap = m.capacity if m.problem == "bpp" else m.capacity[k]
        load = sum(m.weights[v] for v in groups[k])
        donors = [(j, v) for j, g in enumerate(groups) if j != k for v in g]
        donors += [(None, v) for v in sorted(left)]
        order = rng.permutation(len(donors))
        for i in order:
            if load > cap:
                break
            j, v = donors[i]
            if j is None:
                left.discard(v)
            else:
                groups[j].remove(v)
            groups[k].append(v)
            load += m.weights[v]
        if load <= cap:
            return None
    return Solution(m.problem, groups=groups, unassigned=left)


# -- independent oracles for compressed routing subproblems ------------------

def tsp_blocks(sub):
    """Rigid blocks of a local tsp: (a, b) for each fixed path, (v,) for free nodes."""
    pair = {}
    for fp in sub.fixed_paths:
        if fp.entry != fp.exit:
            pair[fp.entry], pair[fp.exit] = fp.exit, fp.entry
    blocks, seen = [], set()
    for v in range(sub.local_meta.num):
        if v in seen:
            continue
        w = pair.get(v)
        blocks.append((v, w) if w is not None else (v,))
        seen.update((v, w) if w is not None else (v,))
    return blocks


def _fp_cost(sub):
    return sum(fp.cost for fp in sub.fixed_paths)


def brute_tsp(sub) -> int:
    """Minimum local tour cost over every block order and orientation.

    All (order, orientation) combinations are scored at once with numpy;
    the first block is held fixed since tours are cyclic and reversible.
    """
    d = np.asarray(sub.dist)
    blocks = tsp_blocks(sub)
    first, rest = blocks[0], blocks[1:]
    if not rest:
        return _fp_cost(sub)
    k = len(rest)
    pairs = [i for i, b in enumerate(rest) if len(b) == 2]
    ends = np.array([[(b[0], b[-1]), (b[-1], b[0])] for b in rest])  # [block, flip, in/out]
    perms = np.array(list(itertools.permutations(range(k))))          # (P, k)
    by_block = np.zeros((2 ** len(pairs), k), dtype=int)              # (F, k) flip per block
    for j, bits in enumerate(itertools.product((0, 1), repeat=len(pairs))):
        by_block[j, pairs] = bits
    best = None
    for fb in by_block:
        f = fb[perms]                                                  # flip per slot
        enter, leave = ends[perms, f, 0], ends[perms, f, 1]
        cost = d[first[-1], enter[:, 0]] + d[leave[:, -1], first[0]]
        cost = cost + d[leave[:, :-1], enter[:, 1:]].sum(axis=1)
        c = int(cost.min())
        best = c if best is None or c < best else best
    return best + _fp_cost(sub)


def brute_cvrp(sub) -> int:
    """Minimum local cvrp cost over every giant tour split into depot-to-depot routes.

    Blocks are free customers and fixed paths between two customers (either
    orientation). A customer ending a fixed path from the depot must sit at
    a route end, where that path replaces its depot edge.
    """
    meta = sub.local_meta
    d = np.asarray(sub.dist)
    to_depot, inner = {}, {}
    for fp in sub.fixed_paths:
        if fp.entry == fp.exit:
            continue
        if 0 in (fp.entry, fp.exit):
            to_depot[fp.exit if fp.entry == 0 else fp.entry] = fp
        else:
            inner[fp.entry] = inner[fp.exit] = fp
    blocks, seen = [], set()
    for v in range(1, meta.num):
        if v not in seen:
            fp = inner.get(v)
            b = (fp.entry, fp.exit) if fp else (v,)
            blocks.append(b)
            seen.update(b)

    def route_cost(bs):
        nodes = [v for b in bs for v in b]
        load = sum(meta.demand[v] for v in nodes)
        c = sum(inner[b[0]].cost for b in bs if len(b) == 2)
        load += sum(inner[b[0]].demand for b in bs if len(b) == 2)
        c += sum(d[a[-1], b[0]] for a, b in zip(bs, bs[1:]))
        used = 0
        ends = [nodes[0]] if len(nodes) == 1 else [nodes[0], nodes[-1]]
        for v in ends:
            if v in to_depot:
                c += to_depot[v].cost
                load += to_depot[v].demand
                used += 1
            else:
                c += d[0, v]
        if len(nodes) == 1:
            c += d[nodes[0], 0]
        return c, load, used

    best = None
    for perm in itertools.permutations(blocks):
        for flips in itertools.product(*[(0, 1) if len(b) == 2 else (0,) for b in perm]):
            seq = [b[::-1] if f else b for b, f in zip(perm, flips)]
            for cuts in itertools.product((0, 1), repeat=len(seq) - 1):
                routes, cur = [], [seq[0]]
                for b, c in zip(seq[1:], cuts):
                    if c:
                        routes.append(cur)
                        cur = []
                    cur.append(b)
                routes.append(cur)
                total, used = 0, 0
                for r in routes:
                    c, load, u = route_cost(r)
                    if load > meta.capacity:
                        break
                    total += c
                    used += u
                else:
                    if used == len(to_depot) and (best is None or total < best):
                        best = total
    return int(best)


def enumeration_size(sub) -> int:
    blocks = tsp_blocks(sub)
    pairs = sum(1 for b in blocks[1:] if len(b) == 2)
    return math.factorial(len(blocks) - 1) * 2 ** pairs


def segment_selection(m: Metadata, s: Solution, rng, max_active=8, max_segments=3):
    """Active nodes drawn as a few contiguous stretches of the current routes."""
    from regionopt.decomposition import ActiveSelection, eligible_elements, static_runs
    order = eligible_elements(m, s)
    active: list[int] = []
    for _ in range(int(rng.integers(1, max_segments + 1))):
        room = max_active - len(active)
        if room <= 0:
            break
        length = int(rng.integers(1, room + 1))
        start = int(rng.integers(len(order)))
        for v in order[start:start + length]:
            if v not in active and len(active) < max_active:
                active.append(v)
    return ActiveSelection(tuple(active), static_runs(m, s, active))


def cvrp_blocks(sub) -> int:
    """Number of customer blocks the cvrp oracle permutes."""
    inner = sum(1 for fp in sub.fixed_paths if fp.entry != fp.exit and 0 not in (fp.entry, fp.exit))
    return sub.local_meta.num - 1 - inner


def worse_local_reply(m, s, active):
    """A feasible ``<sol>`` reply for the region ``active`` that is strictly worse."""
    from regionopt.decomposition import ActiveSelection, static_runs
    from regionopt.subproblem import check_local_feasible, compress, local_objective
    sub = compress(m, s, ActiveSelection(tuple(active), static_runs(m, s, active)))
    base = local_objective(sub, sub.local_solution)
    n = sub.local_meta.num
    for perm in itertools.permutations(range(1, n)):
        cand = Solution.tour((0,) + perm)
        if check_local_feasible(sub, cand).feasible and local_objective(sub, cand) > base:
            route = ",".join(map(str, cand.routes[0] + (0,)))
            return f"<sol><route>{route}</route></sol>"
    raise AssertionError("no worse local tour")
