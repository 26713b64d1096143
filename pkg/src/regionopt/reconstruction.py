"""Solving a compressed subproblem: heuristic, exact and agent-driven.

All strategies work on local ids and return solutions that pass
:func:`~regionopt.subproblem.check_local_feasible`.

``exact`` enumerates tiny tsp subproblems directly and otherwise solves a
MILP with HiGHS (two-index routing model with lazily added subtour and
rounded-capacity cuts, assignment models for packing). It declines with
:class:`CapabilityError` when the active count is above its threshold or
the solver cannot prove optimality in time.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .errors import CapabilityError, StrategyError, SolutionParseError, TransportError
from .solution import Solution, parse_solution
from .subproblem import SubProblem, check_local_feasible, local_objective

log = logging.getLogger(__name__)

STRATEGIES = ("heuristic", "exact", "llm")
DEFAULT_REVISIONS = 3
DEFAULT_EXACT_THRESHOLD = 50
ENUMERATION_UNITS = 7
MILP_TIME_LIMIT = 120.0


@dataclass(frozen=True)
class ExperienceRecord:
    attempt: str
    parsed: Solution | None
    feasible: bool
    violations: tuple[str, ...]
    round: int


@dataclass(frozen=True)
class ReconstructionOutcome:
    solution: Solution | None
    experience: tuple[ExperienceRecord, ...] = ()
    strategy: str = "heuristic"
    rounds_used: int = 0


def reconstruct(strategy: str, sub: SubProblem, rng=None, agent=None,
                budget: int = DEFAULT_REVISIONS,
                exact_threshold: int = DEFAULT_EXACT_THRESHOLD) -> ReconstructionOutcome:
    """Run one reconstruction strategy on ``sub``."""
    if strategy == "heuristic":
        return ReconstructionOutcome(heuristic(sub), strategy="heuristic")
    if strategy == "exact":
        if sub.n_active > exact_threshold:
            raise CapabilityError(
                f"exact reconstruction handles at most {exact_threshold} active elements, "
                f"got {sub.n_active}")
        return ReconstructionOutcome(exact(sub), strategy="exact")
    if strategy == "llm":
        return llm_revise(sub, agent, budget)
    raise ValueError(f"unknown reconstruction strategy {strategy!r}")


# -- heuristic ---------------------------------------------------------------

def _fixed_pairs(sub):
    return set(sub.pair_index)


def _two_opt(seq, d, fixed, closed):
    """First-improvement 2-opt on ``seq``; edges in ``fixed`` are never cut.

    For open sequences both ends stay in place.
    """
    seq = list(seq)
    n = len(seq)
    if n < 4:
        return seq
    improved = True
    while improved:
        improved = False
        last = n if closed else n - 1
        for i in range(1, n - 1):
            a, b = seq[i - 1], seq[i]
            if frozenset((a, b)) in fixed:
                continue
            for j in range(i + 1, last):
                c, e = seq[j], seq[(j + 1) % n]
                if closed and (j + 1) % n == i - 1:
                    continue
                if frozenset((c, e)) in fixed:
                    continue
                delta = d[a][c] + d[b][e] - d[a][b] - d[c][e]
                if delta < 0:
                    seq[i:j + 1] = seq[i:j + 1][::-1]
                    b = seq[i]
                    improved = True
    return seq


def _route_load(sub, route):
    meta = sub.local_meta
    fps = sub.fixed_paths
    load = sum(meta.demand[v] for v in route if v != 0)
    return load + sum(fps[i].demand for i in _fixed_in(sub, route))


def _fixed_in(sub, route):
    idx = sub.pair_index
    seen = []
    for u, v in zip(route, route[1:]):
        i = idx.get(frozenset((u, v)))
        if i is not None and i not in seen:
            seen.append(i)
    return seen


def _relocate(sub, routes):
    """Move single free customers to their cheapest feasible position."""
    d = sub.dist
    meta = sub.local_meta
    fixed = _fixed_pairs(sub)
    ends = {v for fp in sub.fixed_paths if fp.entry != fp.exit for v in (fp.entry, fp.exit)}
    routes = [list(r) for r in routes]
    improved = True
    while improved:
        improved = False
        loads = [_route_load(sub, r) for r in routes]
        for k, r in enumerate(routes):
            for pos in range(1, len(r) - 1):
                v = r[pos]
                if v in ends:
                    continue
                a, b = r[pos - 1], r[pos + 1]
                gain = d[a][v] + d[v][b] - d[a][b]
                best = None
                for k2, r2 in enumerate(routes):
                    if k2 != k and loads[k2] + meta.demand[v] > meta.capacity:
                        continue
                    for q in range(len(r2) - 1):
                        x, y = r2[q], r2[q + 1]
                        if k2 == k and (q == pos - 1 or q == pos):
                            continue
                        if frozenset((x, y)) in fixed:
                            continue
                        cost = d[x][v] + d[v][y] - d[x][y]
                        if cost < gain and (best is None or cost < best[0]):
                            best = (cost, k2, q)
                if best is not None:
                    _, k2, q = best
                    del r[pos]
                    if k2 == k and q > pos:
                        q -= 1
                    routes[k2].insert(q + 1, v)
                    improved = True
                    break
            if improved:
                break
    return [tuple(r) for r in routes if len(r) > 2]


def _best_fit(sub: SubProblem) -> Solution:
    meta = sub.local_meta
    bulky = {b.item for b in sub.bulky_items}
    groups = [[v for v in g if v in bulky] for g in sub.local_solution.groups]
    active = [v for v in range(meta.num) if v not in bulky]
    w = meta.weights
    if meta.problem == "bpp":
        caps = [meta.capacity] * len(groups)
        order = sorted(active, key=lambda i: (-w[i], i))
    else:
        caps = list(meta.capacity)
        order = sorted(active, key=lambda i: (-(meta.values[i] / w[i]) if w[i] else -math.inf, i))
    loads = [sum(w[v] for v in g) for g in groups]
    left = []
    for i in order:
        fits = [(caps[k] - loads[k] - w[i], k) for k in range(len(groups))
                if loads[k] + w[i] <= caps[k]]
        if fits:
            k = min(fits)[1]
        elif meta.problem == "bpp":
            groups.append([])
            caps.append(meta.capacity)
            loads.append(0)
            k = len(groups) - 1
        else:
            left.append(i)
            continue
        groups[k].append(i)
        loads[k] += w[i]
    return Solution(meta.problem, groups=groups, unassigned=left)


def heuristic(sub: SubProblem) -> Solution:
    """Descent: 2-opt (plus relocation for cvrp) or best-fit reinsertion."""
    start = sub.local_solution
    if sub.problem == "tsp":
        seq = _two_opt(start.routes[0], sub.dist, _fixed_pairs(sub), closed=True)
        new = Solution.tour(seq)
    elif sub.problem == "cvrp":
        routes = [tuple(_two_opt(r, sub.dist, _fixed_pairs(sub), closed=False))
                  for r in start.routes]
        routes = _relocate(sub, routes)
        routes = [tuple(_two_opt(r, sub.dist, _fixed_pairs(sub), closed=False)) for r in routes]
        new = Solution("cvrp", routes=routes)
    else:
        new = _best_fit(sub)
    if not check_local_feasible(sub, new).feasible:
        return start
    if local_objective(sub, new) <= local_objective(sub, start):
        return new
    return start


# -- exact -------------------------------------------------------------------

def exact(sub: SubProblem) -> Solution:
    """A provably optimal local solution."""
    if sub.problem == "tsp":
        units = _units(sub)
        if len(units) <= 2:
            return sub.local_solution
        if len(units) <= ENUMERATION_UNITS:
            return _enumerate_tsp(sub, units)
        return _routing_milp(sub)
    if sub.problem == "cvrp":
        return _routing_milp(sub)
    return _packing_milp(sub)


def _units(sub):
    """Rigid pieces of a tsp tour: ``(entry, exit)`` of each fixed path, or ``(v, v)``."""
    seen = set()
    units = []
    partner = {}
    for fp in sub.fixed_paths:
        if fp.entry != fp.exit:
            partner[fp.entry] = fp.exit
            partner[fp.exit] = fp.entry
    for v in range(sub.local_meta.num):
        if v in seen:
            continue
        w = partner.get(v, v)
        seen.update((v, w))
        units.append((v, w))
    return units


def _enumerate_tsp(sub, units):
    d = sub.dist
    first, rest = units[0], units[1:]
    best_cost, best = None, None
    for perm in itertools.permutations(rest):
        for flips in itertools.product(*[(False, True) if u[0] != u[1] else (False,)
                                         for u in perm]):
            seq = [first]
            for u, f in zip(perm, flips):
                seq.append(u[::-1] if f else u)
            cost = sum(d[a[1]][b[0]] for a, b in zip(seq, seq[1:])) + d[seq[-1][1]][first[0]]
            if best_cost is None or cost < best_cost:
                best_cost, best = cost, seq
    tour = []
    for a, b in best:
        tour.extend((a,) if a == b else (a, b))
    return Solution.tour(tour)


def _solve(c, integrality, lb, ub, rows, cols, vals, rlo, rhi, time_limit=MILP_TIME_LIMIT):
    n = len(c)
    cons = []
    if rlo:
        A = coo_matrix((vals, (rows, cols)), shape=(len(rlo), n)).tocsr()
        cons.append(LinearConstraint(A, rlo, rhi))
    if time_limit <= 0:
        raise CapabilityError("exact reconstruction ran out of time")
    res = milp(c, integrality=integrality, bounds=Bounds(lb, ub), constraints=cons,
               options={"mip_rel_gap": 0.0, "time_limit": time_limit})
    if res.status != 0 or res.x is None:
        raise CapabilityError(f"MILP not solved to optimality: {res.message}")
    return res.x


class _Rows:
    """Sparse row builder for ``lo <= A x <= hi``."""

    def __init__(self):
        self.rows, self.cols, self.vals, self.lo, self.hi = [], [], [], [], []

    def add(self, coef: dict, lo, hi):
        r = len(self.lo)
        for j, a in coef.items():
            self.rows.append(r)
            self.cols.append(j)
            self.vals.append(a)
        self.lo.append(lo)
        self.hi.append(hi)

    def args(self):
        return self.rows, self.cols, self.vals, self.lo, self.hi


def _routing_milp(sub: SubProblem, time_limit: float = MILP_TIME_LIMIT) -> Solution:
    """Two-index model; fixed paths are constant edges joining their ends.

    Cuts ``x(delta(S)) >= 2 * ceil(demand(S) / capacity)`` (or ``>= 2`` for
    tsp) are separated over connected components, first on the LP
    relaxation and then on integer solutions until none is violated.
    """
    deadline = time.monotonic() + time_limit
    meta = sub.local_meta
    cvrp = sub.problem == "cvrp"
    n = meta.num
    d = sub.dist
    paths = [fp for fp in sub.fixed_paths if fp.entry != fp.exit]
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    col = {e: k for k, e in enumerate(edges)}
    fdeg = [0] * n
    for fp in paths:
        fdeg[fp.entry] += 1
        fdeg[fp.exit] += 1

    c = [float(d[i][j]) for i, j in edges]
    lb = [0.0] * len(edges)
    ub = [2.0 if cvrp and i == 0 else 1.0 for i, _ in edges]
    rows = _Rows()
    for v in range(1 if cvrp else 0, n):
        coef = {col[(min(u, v), max(u, v))]: 1.0 for u in range(n) if u != v}
        rows.add(coef, 2 - fdeg[v], 2 - fdeg[v])
    q = [0] * n
    if cvrp:
        k_col = len(edges)
        c.append(0.0)
        lb.append(1.0)
        ub.append(float(n))
        coef = {col[(0, u)]: 1.0 for u in range(1, n)}
        coef[k_col] = -2.0
        rows.add(coef, -fdeg[0], -fdeg[0])
        # interior demand of a fixed path rides on one of its customer ends
        q = list(meta.demand)
        for fp in paths:
            q[fp.exit if fp.entry == 0 else fp.entry] += fp.demand

    def need(S):
        if not cvrp:
            return 2
        return 2 * max(1, math.ceil(sum(q[v] for v in S) / meta.capacity - 1e-9))

    def separate(x, integral):
        """Violated cuts over the components of the support graph."""
        adj = [[] for _ in range(n)]
        for k, (i, j) in enumerate(edges):
            if x[k] > 1e-6:
                adj[i].append(j)
                adj[j].append(i)
        for fp in paths:
            adj[fp.entry].append(fp.exit)
            adj[fp.exit].append(fp.entry)
        candidates = _components(adj, n, skip=0 if cvrp else None)
        if cvrp:
            candidates += _greedy_sets(x, edges, paths, n, need)
        found, seen = 0, set()
        for S in candidates:
            key = frozenset(S)
            if key in seen or (not cvrp and len(S) == n):
                continue
            seen.add(key)
            coef = {col[(min(u, v), max(u, v))]: 1.0 for u in S for v in range(n) if v not in S}
            fixed = sum(1 for fp in paths if (fp.entry in S) != (fp.exit in S))
            lhs = sum(x[j] for j in coef) + fixed
            if lhs < need(S) - 1e-6:
                rows.add(coef, need(S) - fixed, math.inf)
                cut_sets.append(S)
                found += 1
        return found

    cut_sets: list[set] = []

    for integral in (False, True):
        integrality = [1 if integral else 0] * len(c)
        for _ in range(1000):
            x = _solve(c, integrality, lb, ub, *rows.args(),
                       time_limit=deadline - time.monotonic())
            if not separate(x, integral):
                break
        else:
            raise CapabilityError("routing MILP did not converge")
        if cvrp:
            # the LP cuts strengthen a compact flow model solved once
            x = _cvrp_flow(sub, edges, q, paths, cut_sets, need, deadline)
            break
    return _extract(sub, edges, np.rint(x[:len(edges)]).astype(int), paths)


def _cvrp_flow(sub, edges, q, paths, cut_sets, need, deadline):
    """Single-commodity flow model; returns undirected edge multiplicities.

    Arc ``i -> j`` carries the load still on board; each fixed path is a
    pseudo-arc usable in one of its two directions.
    """
    n = sub.local_meta.num
    cap = sub.local_meta.capacity
    d = sub.dist
    arcs = [(i, j, None) for i in range(n) for j in range(n) if i != j]
    for p, fp in enumerate(paths):
        arcs += [(fp.entry, fp.exit, p), (fp.exit, fp.entry, p)]
    na = len(arcs)
    # variables: arc use [0, na), arc flow [na, 2 na)
    c = [float(d[i][j]) if p is None else 0.0 for i, j, p in arcs] + [0.0] * na
    lb = [0.0] * (2 * na)
    ub = [1.0] * na + [float(cap)] * na
    for k, (i, j, _) in enumerate(arcs):
        if j == 0:
            ub[na + k] = 0.0
    rows = _Rows()
    out_of = [[] for _ in range(n)]
    into = [[] for _ in range(n)]
    for k, (i, j, _) in enumerate(arcs):
        out_of[i].append(k)
        into[j].append(k)
    for v in range(1, n):
        rows.add({k: 1.0 for k in out_of[v]}, 1, 1)
        rows.add({k: 1.0 for k in into[v]}, 1, 1)
        flow = {na + k: 1.0 for k in into[v]}
        for k in out_of[v]:
            flow[na + k] = -1.0
        rows.add(flow, q[v], q[v])
    depot = {k: 1.0 for k in out_of[0]}
    for k in into[0]:
        depot[k] = -1.0
    rows.add(depot, 0, 0)
    rows.add({k: 1.0 for k in out_of[0]}, 1, math.inf)
    for p in range(len(paths)):
        rows.add({k: 1.0 for k, a in enumerate(arcs) if a[2] == p}, 1, 1)
    for k, (i, j, _) in enumerate(arcs):
        top = cap - (q[i] if i else 0)
        rows.add({na + k: 1.0, k: -float(top)}, -math.inf, 0)
        if j:
            rows.add({na + k: 1.0, k: -float(q[j])}, 0, math.inf)
    for S in cut_sets:
        leaving = {k: 1.0 for k, (i, j, _) in enumerate(arcs) if i in S and j not in S}
        rows.add(leaving, need(S) / 2, math.inf)
    integrality = [1] * na + [0] * na
    y = _solve(c, integrality, lb, ub, *rows.args(), time_limit=deadline - time.monotonic())
    col = {e: k for k, e in enumerate(edges)}
    x = np.zeros(len(edges))
    for k, (i, j, p) in enumerate(arcs):
        if p is None and y[k] > 0.5:
            x[col[(min(i, j), max(i, j))]] += 1
    return x


def _greedy_sets(x, edges, paths, n, need):
    """Customer sets grown from each seed by strongest attachment (cvrp only).

    Every prefix of each growth order whose boundary looks too thin is kept
    as a candidate for a rounded-capacity cut.
    """
    w = np.zeros((n, n))
    for k, (i, j) in enumerate(edges):
        w[i, j] = w[j, i] = x[k]
    for fp in paths:
        w[fp.entry, fp.exit] += 1
        w[fp.exit, fp.entry] += 1
    degree = w.sum(axis=1)
    out = []
    for seed in range(1, n):
        S = [seed]
        inside = np.zeros(n, dtype=bool)
        inside[seed] = True
        attach = w[seed].copy()
        internal = 0.0
        while len(S) < n - 2:
            cand = np.where(inside, -1.0, attach)
            cand[0] = -1.0
            j = int(np.argmax(cand))
            if cand[j] <= 1e-6:
                break
            internal += attach[j]
            S.append(j)
            inside[j] = True
            attach += w[j]
            boundary = degree[S].sum() - 2 * internal
            if boundary < need(S) - 1e-6:
                out.append(set(S))
    return out


def _components(adj, n, skip=None):
    seen = {skip} if skip is not None else set()
    out = []
    for s in range(n):
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        out.append(set(comp))
    return out


def _extract(sub, edges, x, paths):
    n = sub.local_meta.num
    incident = [[] for _ in range(n)]
    ends = []
    for k, (i, j) in enumerate(edges):
        for _ in range(x[k]):
            ends.append((i, j))
    for fp in paths:
        ends.append((fp.entry, fp.exit))
    for e, (i, j) in enumerate(ends):
        incident[i].append(e)
        incident[j].append(e)
    used = set()

    def walk(start):
        seq, here = [start], start
        while True:
            nxt = next((e for e in incident[here] if e not in used), None)
            if nxt is None:
                return seq
            used.add(nxt)
            i, j = ends[nxt]
            here = j if i == here else i
            seq.append(here)
            if here == start:
                return seq

    if sub.problem == "tsp":
        tour = walk(0)
        return Solution.tour(tour[:-1])
    routes = []
    while any(e not in used for e in incident[0]):
        routes.append(tuple(walk(0)))
    return Solution("cvrp", routes=routes)


def _packing_milp(sub: SubProblem) -> Solution:
    meta = sub.local_meta
    bulky = {b.item: b.group for b in sub.bulky_items}
    items = range(meta.num)
    w = meta.weights
    mkp = sub.problem == "mkp"
    n_groups = len(meta.capacity) if mkp else len(sub.local_solution.groups)
    caps = list(meta.capacity) if mkp else [meta.capacity] * n_groups
    x = {key: j for j, key in enumerate(itertools.product(items, range(n_groups)))}
    nx = len(x)
    c = [(-meta.values[i] if mkp else 0.0) for i, _ in x]
    lb = [0.0] * nx
    ub = [1.0] * nx
    for (i, k), j in x.items():
        if i in bulky:
            lb[j] = ub[j] = 1.0 if bulky[i] == k else 0.0
    rows = _Rows()
    if not mkp:
        y0 = nx
        c += [1.0] * n_groups
        lb += [0.0] * n_groups
        ub += [1.0] * n_groups
        # interchangeable (unpinned) bins are opened in order
        free = [g for g in range(n_groups) if g not in bulky.values()]
        for g, h in zip(free, free[1:]):
            rows.add({y0 + g: -1.0, y0 + h: 1.0}, -math.inf, 0.0)
        for i in items:
            if not w[i]:
                for k in range(n_groups):
                    rows.add({x[(i, k)]: 1.0, y0 + k: -1.0}, -math.inf, 0.0)
    for i in items:
        coef = {x[(i, k)]: 1.0 for k in range(n_groups)}
        rows.add(coef, 0.0 if mkp else 1.0, 1.0)
    for k in range(n_groups):
        coef = {x[(i, k)]: float(w[i]) for i in items if w[i]}
        hi = float(caps[k])
        if not mkp:
            coef[y0 + k] = -float(caps[k])
            hi = 0.0
        if coef:
            rows.add(coef, -math.inf, hi)
    sol = np.rint(_solve(c, [1] * len(c), lb, ub, *rows.args())).astype(int)
    groups = [[i for i in items if sol[x[(i, k)]]] for k in range(n_groups)]
    if mkp:
        packed = {v for g in groups for v in g}
        return Solution("mkp", groups=groups, unassigned=[i for i in items if i not in packed])
    return Solution("bpp", groups=groups)


# -- llm ---------------------------------------------------------------------

def llm_revise(sub: SubProblem, agent, budget: int = DEFAULT_REVISIONS) -> ReconstructionOutcome:
    """Prompt, check, and re-prompt with the failed attempts up to ``budget`` times."""
    from .prompts import build_reconstructor_prompt

    if agent is None:
        raise StrategyError("the llm reconstructor needs an agent")
    experience: list[ExperienceRecord] = []
    for rnd in range(budget + 1):
        prompt = build_reconstructor_prompt(sub, experience)
        try:
            reply = agent.ask(prompt)
        except TransportError as exc:
            log.warning("reconstructor agent unavailable: %s", exc)
            break
        try:
            parsed = parse_solution(reply, sub.problem, num=sub.local_meta.num)
        except SolutionParseError as exc:
            experience.append(ExperienceRecord(reply, None, False,
                                               (f"Malformed solution: {exc}",), rnd))
            continue
        report = check_local_feasible(sub, parsed)
        details = tuple(v.detail for v in report.violations)
        experience.append(ExperienceRecord(reply, parsed, report.feasible, details, rnd))
        if report.feasible:
            return ReconstructionOutcome(parsed, tuple(experience), "llm", rnd + 1)
    return ReconstructionOutcome(None, tuple(experience), "llm", len(experience))
