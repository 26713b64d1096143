"""Choosing the active region of the current solution.

A decomposition splits the elements of a solution into an *active* part,
which the reconstruction step may rearrange freely, and *static* runs that
stay as they are. Three strategies are available: ``random``, ``heuristic``
(detour cost for routing, fill level / value density for packing) and
``llm`` (ask an agent).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSubproblemError, StrategyError, TransportError
from .instance import Metadata, nint
from .solution import Solution

log = logging.getLogger(__name__)

DEFAULT_CAP = 20
MAX_CAP = 50
STRATEGIES = ("random", "heuristic", "llm")


@dataclass(frozen=True)
class ActiveSelection:
    """Active element ids plus the static runs left around them.

    Routing: ``static_runs`` are the maximal runs of non-active nodes in visit
    order (one tour with wrap-around for tsp, each route depot to depot for
    cvrp). Packing: one tuple of non-active items per group; for mkp a final
    extra tuple holds the non-active unassigned items.
    """

    active: tuple[int, ...]
    static_runs: tuple[tuple[int, ...], ...]


def eligible_elements(m: Metadata, s: Solution) -> list[int]:
    """Elements that may become active (the tsp anchor and the depot never do)."""
    if m.problem == "tsp":
        return list(s.routes[0][1:])
    if m.problem == "cvrp":
        return [v for r in s.routes for v in r if v != m.depot]
    return list(range(m.num))


def static_runs(m: Metadata, s: Solution, active) -> tuple[tuple[int, ...], ...]:
    active = set(active)
    if m.problem == "tsp":
        tour = s.routes[0]
        pos = [i for i, v in enumerate(tour) if v in active]
        if not pos:
            return (tuple(tour),)
        runs = [tuple(tour[pos[-1] + 1:]) + tuple(tour[:pos[0]])]
        for a, b in zip(pos, pos[1:]):
            if b > a + 1:
                runs.append(tuple(tour[a + 1:b]))
        return tuple(runs)
    if m.problem == "cvrp":
        runs = []
        for r in s.routes:
            cur: list[int] = []
            for v in r:
                if v in active:
                    if cur:
                        runs.append(tuple(cur))
                    cur = []
                else:
                    cur.append(v)
            if cur:
                runs.append(tuple(cur))
        return tuple(runs)
    runs = [tuple(v for v in g if v not in active) for g in s.groups]
    if m.problem == "mkp":
        runs.append(tuple(sorted(v for v in s.unassigned if v not in active)))
    return tuple(runs)


def _select(m, s, active) -> ActiveSelection:
    if not active:
        raise DegenerateSubproblemError("no eligible element to activate")
    return ActiveSelection(tuple(active), static_runs(m, s, active))


def _random(eligible, k, rng):
    picked = rng.choice(len(eligible), size=k, replace=False)
    return sorted(eligible[i] for i in picked)


def _detour_costs(m: Metadata, s: Solution) -> dict[int, int]:
    """dist(prev, v) + dist(v, next) - dist(prev, next) for every routed node."""
    xy = m.coords
    costs = {}
    for r in s.routes:
        if m.problem == "tsp":
            nodes = np.asarray(r, dtype=int)
            prev, nxt = np.roll(nodes, 1), np.roll(nodes, -1)
        else:
            nodes = np.asarray(r[1:-1], dtype=int)
            prev, nxt = np.asarray(r[:-2], dtype=int), np.asarray(r[2:], dtype=int)
        if not nodes.size:
            continue

        def d(a, b):
            return nint(np.hypot(*(xy[a] - xy[b]).T))

        detour = d(prev, nodes) + d(nodes, nxt) - d(prev, nxt)
        costs.update(zip(nodes.tolist(), detour.tolist()))
    return costs


def _heuristic(m: Metadata, s: Solution, eligible, k):
    if m.is_routing:
        costs = _detour_costs(m, s)
        ranked = sorted(eligible, key=lambda v: (-costs[v], v))
        return sorted(ranked[:k])
    if m.problem == "bpp":
        loads = [(sum(m.weights[v] for v in g), gi) for gi, g in enumerate(s.groups) if g]
        picked: list[int] = []
        for _, gi in sorted(loads):
            for v in s.groups[gi]:
                if len(picked) < k:
                    picked.append(v)
        return sorted(picked)

    def density(i):
        return m.values[i] / m.weights[i] if m.weights[i] else float("inf")

    packed = sorted((v for g in s.groups for v in g), key=lambda i: (density(i), i))
    spare = sorted(s.unassigned, key=lambda i: (-density(i), i))
    n_in = min(len(spare), k // 2)
    n_out = min(len(packed), k - n_in)
    n_in = min(len(spare), k - n_out)
    return sorted(packed[:n_out] + spare[:n_in])


def parse_active_reply(text: str) -> tuple[int, ...]:
    """Ids listed in the first ``<sub>`` block, deduplicated in order.

    >>> parse_active_reply("Here you go: <sub>7, 7, 9</sub> hope it helps")
    (7, 9)
    """
    found = re.search(r"<sub>(.*?)</sub>", text, re.S)
    if found is None:
        return ()
    out: list[int] = []
    for part in found.group(1).split(","):
        part = part.strip()
        if re.fullmatch(r"-?\d+", part) and int(part) not in out:
            out.append(int(part))
    return tuple(out)


def _llm(m, s, eligible, k, agent):
    from .prompts import build_decomposer_prompt

    if agent is None:
        raise StrategyError("the llm decomposer needs an agent")
    allowed = set(eligible)
    prompt = build_decomposer_prompt(m, s, k)
    for attempt in range(2):
        try:
            reply = agent.ask(prompt)
        except TransportError as exc:
            raise StrategyError(f"decomposer agent unavailable: {exc}") from exc
        picked = [v for v in parse_active_reply(reply) if v in allowed][:k]
        if picked:
            return picked
        log.info("decomposer reply had no usable ids (attempt %d)", attempt + 1)
    return None


def decompose(strategy: str, m: Metadata, s: Solution, cap: int = DEFAULT_CAP,
              rng: np.random.Generator | None = None, agent=None) -> ActiveSelection:
    """Pick at most ``cap`` active elements of ``s`` with the named strategy.

    An ``llm`` reply without usable ids is retried once, then replaced by a
    random pick.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown decomposition strategy {strategy!r}")
    if cap < 1:
        raise ValueError("cap must be at least 1")
    eligible = eligible_elements(m, s)
    k = min(cap, len(eligible))
    if k == 0:
        raise DegenerateSubproblemError("no eligible element to activate")
    if strategy == "heuristic":
        return _select(m, s, _heuristic(m, s, eligible, k))
    if strategy == "llm":
        picked = _llm(m, s, eligible, k, agent)
        if picked:
            return _select(m, s, picked)
    if rng is None:
        raise ValueError("random decomposition needs an rng")
    return _select(m, s, _random(eligible, k, rng))
