"""Compressing the active region into a small local instance and back.

Routing
    Each static run is replaced by a *fixed path* between its two end nodes.
    The end nodes stay visible in the local instance; the path's interior
    contributes only its length and (cvrp) the demand of its interior nodes.
    A fixed path must be traversed as one edge between its ends, in either
    direction. For cvrp only the routes that contain active nodes take part;
    local node 0 is always the depot.

Packing
    The static items of each participating group are fused into one *bulky
    item* pinned to that group. For bpp the participating groups are those
    holding an active item, and the local solution may open new bins. For mkp
    every knapsack participates.

Local ids are allocated in visiting order, so the local solution mirrors the
current global one and :func:`integrate` applied to it is the identity.
Local and global objectives move by exactly the same amount.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .decomposition import ActiveSelection
from .errors import DegenerateSubproblemError, IntegrationError
from .instance import Metadata, distance_matrix, path_length
from .solution import (FeasibilityReport, Solution, Violation, check_feasible,
                       cvrp_structure, objective, route_customers)


@dataclass(frozen=True)
class FixedPath:
    """A condensed static run between local nodes ``entry`` and ``exit``."""

    entry: int
    exit: int
    cost: int
    demand: float
    run: tuple[int, ...]
    reversible: bool = True
    kind = "fixed_path"


@dataclass(frozen=True)
class BulkyItem:
    """The static items of one group, fused and pinned to local ``group``."""

    item: int
    group: int
    weight: float
    value: float
    members: tuple[int, ...]
    kind = "bulky_item"


@dataclass(frozen=True)
class SubProblem:
    local_meta: Metadata
    local_solution: Solution
    constraints: tuple
    id_map: tuple
    touched: tuple[int, ...]
    active: frozenset
    anchor: int | None = None

    @property
    def problem(self) -> str:
        return self.local_meta.problem

    @property
    def fixed_paths(self) -> list[FixedPath]:
        return [c for c in self.constraints if c.kind == "fixed_path"]

    @property
    def bulky_items(self) -> list[BulkyItem]:
        return [c for c in self.constraints if c.kind == "bulky_item"]

    @cached_property
    def dist(self) -> list[list[int]]:
        return distance_matrix(self.local_meta).tolist()

    @cached_property
    def pair_index(self) -> dict[frozenset, int]:
        """Unordered end-node pair -> index into ``fixed_paths`` (non-trivial paths)."""
        return {frozenset((fp.entry, fp.exit)): i
                for i, fp in enumerate(self.fixed_paths) if fp.entry != fp.exit}

    @property
    def n_active(self) -> int:
        return len(self.active)


# -- compress ----------------------------------------------------------------

def compress(m: Metadata, s: Solution, sel: ActiveSelection) -> SubProblem:
    if not sel.active:
        raise DegenerateSubproblemError("cannot compress an empty active set")
    if m.problem == "tsp":
        return _compress_tsp(m, s, sel)
    if m.problem == "cvrp":
        return _compress_cvrp(m, s, sel)
    return _compress_packing(m, s, sel)


def _runs_of(seq, active):
    """Maximal non-active runs of ``seq`` (no wrap-around)."""
    runs, cur = [], []
    for v in seq:
        if v in active:
            if cur:
                runs.append(tuple(cur))
            cur = []
        else:
            cur.append(v)
    if cur:
        runs.append(tuple(cur))
    return runs


def _routing_meta(m, name, nodes, **extra):
    return Metadata(name=name, problem=m.problem, num=len(nodes),
                    xs=[m.xs[v] for v in nodes], ys=[m.ys[v] for v in nodes], **extra)


def _compress_tsp(m, s, sel):
    tour = s.routes[0]
    active = frozenset(sel.active)
    ends = {v for run in sel.static_runs for v in (run[0], run[-1])}
    nodes = [v for v in tour if v in active or v in ends]
    local = {v: i for i, v in enumerate(nodes)}
    constraints = tuple(
        FixedPath(local[run[0]], local[run[-1]], path_length(m, run), 0, run)
        for run in sel.static_runs)
    meta = _routing_meta(m, f"{m.name}-local", nodes)
    return SubProblem(meta, Solution.tour(range(len(nodes))), constraints, tuple(nodes),
                      touched=(0,), active=active, anchor=tour[0])


def _compress_cvrp(m, s, sel):
    active = frozenset(sel.active)
    touched = tuple(k for k, r in enumerate(s.routes) if active.intersection(r))
    nodes = [m.depot]
    local = {m.depot: 0}
    constraints = []
    routes = []
    for k in touched:
        r = s.routes[k]
        runs = _runs_of(r, active)
        ends = {v for run in runs for v in (run[0], run[-1])}
        seq = []
        for v in r:
            if (v in active or v in ends) and v not in local:
                local[v] = len(nodes)
                nodes.append(v)
            if v in active or v in ends:
                seq.append(local[v])
        routes.append(tuple(seq))
        for run in runs:
            if run == (m.depot,):
                continue
            constraints.append(FixedPath(
                local[run[0]], local[run[-1]], path_length(m, run),
                sum(m.demand[v] for v in run[1:-1]), run))
    meta = _routing_meta(m, f"{m.name}-local", nodes, depot=0, capacity=m.capacity,
                         demand=[m.demand[v] for v in nodes])
    return SubProblem(meta, Solution("cvrp", routes=routes), tuple(constraints), tuple(nodes),
                      touched=touched, active=active)


def _compress_packing(m, s, sel):
    active = frozenset(sel.active)
    if m.problem == "mkp":
        touched = tuple(range(len(m.capacity)))
    else:
        touched = tuple(k for k, g in enumerate(s.groups) if active.intersection(g))
    id_map: list = []
    weights, values, constraints = [], [], []
    for lg, k in enumerate(touched):
        static = tuple(v for v in s.groups[k] if v not in active)
        if static:
            w = sum(m.weights[v] for v in static)
            val = sum(m.values[v] for v in static) if m.problem == "mkp" else 0
            constraints.append(BulkyItem(len(id_map), lg, w, val, static))
            id_map.append(static)
            weights.append(w)
            values.append(val)
    local = {}
    for v in sorted(active):
        local[v] = len(id_map)
        id_map.append(v)
        weights.append(m.weights[v])
        values.append(m.values[v] if m.problem == "mkp" else 0)
    groups = []
    for lg, k in enumerate(touched):
        g = [b.item for b in constraints if b.group == lg]
        g += [local[v] for v in s.groups[k] if v in active]
        groups.append(g)
    if m.problem == "mkp":
        meta = Metadata(name=f"{m.name}-local", problem="mkp", num=len(id_map),
                        weights=weights, values=values,
                        capacity=[m.capacity[k] for k in touched])
        unassigned = [local[v] for v in s.unassigned if v in active]
    else:
        meta = Metadata(name=f"{m.name}-local", problem="bpp", num=len(id_map),
                        weights=weights, capacity=m.capacity)
        unassigned = []
    return SubProblem(meta, Solution(m.problem, groups=groups, unassigned=unassigned),
                      tuple(constraints), tuple(id_map), touched=touched, active=active)


# -- local evaluation --------------------------------------------------------

def walk_edges(sub: SubProblem, local: Solution):
    """Per route, the edges ``(u, v, fixed_path_index | None)`` in travel order.

    An edge joining the two ends of a fixed path counts as that path the
    first time it is seen; any later one is an ordinary edge.
    """
    closed = sub.problem == "tsp"
    index = sub.pair_index
    used = set()
    out = []
    for r in local.routes:
        pairs = list(zip(r, r[1:]))
        if closed and len(r) > 1:
            pairs.append((r[-1], r[0]))
        edges = []
        for u, v in pairs:
            i = index.get(frozenset((u, v)))
            if i is not None and i not in used:
                used.add(i)
                edges.append((u, v, i))
            else:
                edges.append((u, v, None))
        out.append(edges)
    return out


def local_objective(sub: SubProblem, local: Solution):
    """Objective of a local solution; equals the global objective of the touched region."""
    if sub.problem in ("bpp", "mkp"):
        return objective(sub.local_meta, local)
    d = sub.dist
    fps = sub.fixed_paths
    total = sum(fp.cost for fp in fps if fp.entry == fp.exit)
    n = sub.local_meta.num
    for edges in walk_edges(sub, local):
        for u, v, i in edges:
            if i is not None:
                total += fps[i].cost
            elif 0 <= u < n and 0 <= v < n:
                total += d[u][v]
    return total


def check_local_feasible(sub: SubProblem, local: Solution) -> FeasibilityReport:
    """Global-style checks on local ids plus the compression constraints."""
    meta = sub.local_meta
    if local.problem != meta.problem:
        return check_feasible(meta, local)
    out: list[Violation] = []
    if sub.problem in ("tsp", "cvrp"):
        if sub.problem == "tsp":
            out += check_feasible(meta, local).violations
        else:
            out += cvrp_structure(meta, local)
        fps = sub.fixed_paths
        hit = {i for edges in walk_edges(sub, local) for *_, i in edges if i is not None}
        broken = [fps[i] for i in range(len(fps)) if fps[i].entry != fps[i].exit and i not in hit]
        for fp in broken:
            out.append(Violation(
                "constraint_broken",
                f"Fixed path ({fp.entry},{fp.exit}) must be visited consecutively, "
                "with no additional points permitted between them",
                (fp.entry, fp.exit)))
        if sub.problem == "cvrp":
            for k, (r, edges) in enumerate(zip(local.routes, walk_edges(sub, local))):
                load = sum(meta.demand[v] for v in route_customers(meta, r) if 0 <= v < meta.num)
                load += sum(fps[i].demand for *_, i in edges if i is not None)
                if load > meta.capacity:
                    out.append(Violation(
                        "capacity_exceeded",
                        f"Route {k} load {load:g} exceeds capacity {meta.capacity:g}", (k,)))
        return FeasibilityReport(tuple(out))

    out += check_feasible(meta, local).violations
    label = "bin" if sub.problem == "bpp" else "knapsack"
    where = {v: k for k, g in enumerate(local.groups) for v in g}
    for b in sub.bulky_items:
        if where.get(b.item) != b.group:
            out.append(Violation(
                "constraint_broken",
                f"Bulky item {b.item} must stay in {label}_{b.group}", (b.item,)))
    return FeasibilityReport(tuple(out))


# -- integrate ---------------------------------------------------------------

def _expand_route(sub, edges, start):
    ids = sub.id_map
    fps = sub.fixed_paths
    out = [ids[start]]
    for u, v, i in edges:
        if i is None:
            out.append(ids[v])
        else:
            run = fps[i].run if u == fps[i].entry else fps[i].run[::-1]
            out.extend(run[1:])
    return out


def integrate(local_new: Solution, sub: SubProblem, global_solution: Solution) -> Solution:
    """Splice a feasible local solution back into ``global_solution``."""
    report = check_local_feasible(sub, local_new)
    if not report.feasible:
        raise IntegrationError(report)
    problem = sub.problem
    if problem == "tsp":
        route = local_new.routes[0]
        edges = walk_edges(sub, local_new)[0]
        tour = _expand_route(sub, edges, route[0])
        if len(tour) > 1:
            tour = tour[:-1]
        k = tour.index(sub.anchor)
        return Solution.tour(tour[k:] + tour[:k])

    if problem == "cvrp":
        depot = sub.id_map[0]
        new = [tuple(_expand_route(sub, edges, r[0]))
               for r, edges in zip(local_new.routes, walk_edges(sub, local_new))]
        new = [r for r in new if len(r) > 2 or any(v != depot for v in r)]
        routes = list(global_solution.routes)
        slots = list(sub.touched)
        for slot, r in zip(slots, new):
            routes[slot] = r
        drop = set(slots[len(new):])
        routes = [r for k, r in enumerate(routes) if k not in drop] + new[len(slots):]
        return Solution("cvrp", routes=routes)

    def expand(group):
        out = []
        for v in group:
            mapped = sub.id_map[v]
            out.extend(mapped if isinstance(mapped, tuple) else (mapped,))
        return out

    groups = [list(g) for g in global_solution.groups]
    local_groups = [expand(g) for g in local_new.groups]
    for lg, k in enumerate(sub.touched):
        groups[k] = local_groups[lg] if lg < len(local_groups) else []
    groups += [g for g in local_groups[len(sub.touched):] if g]
    if problem == "mkp":
        keep = {v for v in global_solution.unassigned if v not in sub.active}
        keep.update(sub.id_map[v] for v in local_new.unassigned)
        return Solution("mkp", groups=groups, unassigned=keep)
    return Solution("bpp", groups=groups)
