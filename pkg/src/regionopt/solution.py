"""Solutions, objective values, feasibility reports and the XML wire format.

Routing solutions are node sequences. A TSP solution holds a single *open*
tour ``(a0, ..., an-1)``; closure back to ``a0`` is implied. CVRP routes are
stored with the depot at both ends. Packing solutions hold one sorted item
tuple per bin or knapsack, and MKP solutions additionally track the set of
unassigned items.

Every problem is minimised internally, so the objective of an MKP solution
is the *negated* packed value. :func:`reported_objective` flips it back.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ShapeError, SolutionParseError
from .instance import Metadata, path_length

VIOLATION_KINDS = (
    "missing",
    "duplicate",
    "capacity_exceeded",
    "bad_endpoints",
    "constraint_broken",
    "malformed",
)


@dataclass(frozen=True)
class Solution:
    problem: str
    routes: tuple[tuple[int, ...], ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()
    unassigned: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "routes", tuple(tuple(int(v) for v in r) for r in self.routes))
        # Group contents are sets; keeping them sorted makes equality meaningful.
        set_(self, "groups", tuple(tuple(sorted(int(v) for v in g)) for g in self.groups))
        set_(self, "unassigned", frozenset(int(v) for v in self.unassigned))

    @classmethod
    def tour(cls, nodes: Iterable[int]) -> "Solution":
        return cls("tsp", routes=(tuple(nodes),))

    @property
    def nodes(self) -> list[int]:
        """All node ids on all routes, in order (depot repeats included)."""
        return [v for r in self.routes for v in r]

    def replace(self, **changes) -> "Solution":
        fields = dict(problem=self.problem, routes=self.routes, groups=self.groups,
                      unassigned=self.unassigned)
        fields.update(changes)
        return Solution(**fields)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def reason(self) -> str:
        """Violation details, one per line (the text fed back to agents)."""
        return "\n".join(v.detail for v in self.violations)

    def __add__(self, other: "FeasibilityReport") -> "FeasibilityReport":
        return FeasibilityReport(self.violations + other.violations)


def _ids(ids) -> str:
    return ", ".join(str(i) for i in sorted(ids))


def _fmt(x):
    return int(x) if float(x).is_integer() else x


def coverage_violations(expected: Iterable[int], seen: list[int], noun: str,
                        missing_verb: str) -> list[Violation]:
    """Missing / duplicate / unknown ids of ``seen`` against ``expected``."""
    expected = set(expected)
    counts = Counter(seen)
    out = []
    unknown = [v for v in counts if v not in expected]
    missing = expected - set(counts)
    dup = [v for v, c in counts.items() if c > 1 and v in expected]
    if missing:
        out.append(Violation("missing", f"Missing {missing_verb} {noun}(s): {_ids(missing)}",
                             tuple(sorted(missing))))
    if dup:
        out.append(Violation("duplicate", f"Duplicate {noun}(s): {_ids(dup)}", tuple(sorted(dup))))
    if unknown:
        out.append(Violation("constraint_broken", f"Invalid {noun} index(es): {_ids(unknown)}",
                             tuple(sorted(unknown))))
    return out


def route_customers(m: Metadata, route: tuple[int, ...]) -> list[int]:
    return [v for v in route if v != m.depot]


def cvrp_structure(m: Metadata, s: Solution) -> list[Violation]:
    """Endpoint and coverage checks for CVRP routes (no capacity)."""
    out = []
    bad_ends = [k for k, r in enumerate(s.routes)
                if len(r) < 2 or r[0] != m.depot or r[-1] != m.depot]
    if bad_ends:
        out.append(Violation("bad_endpoints",
                             f"Route(s) {_ids(bad_ends)} must start and end at the depot {m.depot}",
                             tuple(bad_ends)))
    mid = [k for k, r in enumerate(s.routes) if m.depot in r[1:-1]]
    if mid:
        out.append(Violation("bad_endpoints",
                             f"Route(s) {_ids(mid)} return to the depot mid-route", tuple(mid)))
    seen = [v for r in s.routes for v in route_customers(m, r)]
    customers = [v for v in range(m.num) if v != m.depot]
    out += coverage_violations(customers, seen, "node", "visit")
    return out


def check_feasible(m: Metadata, s: Solution) -> FeasibilityReport:
    """All constraint violations of ``s``; never raises for bad content."""
    if s.problem != m.problem:
        return FeasibilityReport((Violation(
            "malformed", f"Solution is for {s.problem}, instance is {m.problem}"),))
    out: list[Violation] = []
    if m.problem == "tsp":
        if len(s.routes) != 1:
            out.append(Violation("bad_endpoints",
                                 f"A TSP solution must be a single tour, got {len(s.routes)}"))
        out += coverage_violations(range(m.num), s.nodes, "node", "visit")
    elif m.problem == "cvrp":
        out += cvrp_structure(m, s)
        for k, r in enumerate(s.routes):
            load = sum(m.demand[v] for v in route_customers(m, r) if 0 <= v < m.num)
            if load > m.capacity:
                out.append(Violation("capacity_exceeded",
                                     f"Route {k} load {_fmt(load)} exceeds capacity {_fmt(m.capacity)}",
                                     (k,)))
    else:
        out += packing_violations(m, s)
    return FeasibilityReport(tuple(out))


def packing_violations(m: Metadata, s: Solution) -> list[Violation]:
    out = []
    label = "Bin" if m.problem == "bpp" else "Knapsack"
    seen = [v for g in s.groups for v in g]
    if m.problem == "mkp":
        seen += sorted(s.unassigned)
        if len(s.groups) > len(m.capacity):
            extra = tuple(range(len(m.capacity), len(s.groups)))
            out.append(Violation("constraint_broken", f"Unknown knapsack index(es): {_ids(extra)}",
                                 extra))
    elif s.unassigned:
        out.append(Violation("constraint_broken", "Every item must be packed in a bin",
                             tuple(sorted(s.unassigned))))
    out += coverage_violations(range(m.num), seen, "item", "packed")
    for k, g in enumerate(s.groups):
        if m.problem == "mkp" and k >= len(m.capacity):
            continue
        cap = m.capacity[k] if m.problem == "mkp" else m.capacity
        load = sum(m.weights[v] for v in g if 0 <= v < m.num)
        if load > cap:
            out.append(Violation("capacity_exceeded",
                                 f"{label} {k} weight {_fmt(load)} exceeds capacity {_fmt(cap)}", (k,)))
    return out


def _check_shape(m: Metadata, s: Solution):
    if s.problem != m.problem:
        raise ShapeError(f"solution is for {s.problem}, instance is {m.problem}")
    ids = s.nodes if m.is_routing else [v for g in s.groups for v in g]
    bad = [v for v in ids if not 0 <= v < m.num]
    if bad:
        raise ShapeError(f"ids out of range: {_ids(set(bad))}")
    if m.problem == "tsp" and len(s.routes) != 1:
        raise ShapeError("a TSP solution is a single tour")
    if m.problem == "mkp" and len(s.groups) > len(m.capacity):
        raise ShapeError("more groups than knapsacks")


def objective(m: Metadata, s: Solution):
    """Internal (minimised) objective value of ``s``."""
    _check_shape(m, s)
    if m.problem == "tsp":
        return path_length(m, s.routes[0], closed=True)
    if m.problem == "cvrp":
        return sum(path_length(m, r) for r in s.routes)
    if m.problem == "bpp":
        return sum(1 for g in s.groups if g)
    return -sum(m.values[v] for g in s.groups for v in g)


def reported_objective(m: Metadata, value):
    """Natural-sign objective: packed value for mkp, the same number otherwise."""
    return -value if m.problem == "mkp" else value


# -- XML-like wire format ----------------------------------------------------

_GROUP_TAG = {"bpp": "bin", "mkp": "knapsack"}


def serialize_solution(s: Solution) -> str:
    """Render ``s`` as a ``<sol>`` block.

    >>> print(serialize_solution(Solution("cvrp", routes=[(0, 2, 3, 0), (0, 1, 0)])))
    <sol>
     <route>0,2,3,0</route>
     <route>0,1,0</route>
    </sol>
    """
    lines = ["<sol>"]
    if s.problem in ("tsp", "cvrp"):
        for r in s.routes:
            seq = list(r) + [r[0]] if s.problem == "tsp" and r else list(r)
            lines.append(f" <route>{','.join(map(str, seq))}</route>")
    else:
        tag = _GROUP_TAG[s.problem]
        for k, g in enumerate(s.groups):
            lines.append(f" <{tag}_{k}>{','.join(map(str, g))}</{tag}_{k}>")
    lines.append("</sol>")
    return "\n".join(lines)


_SOL = re.compile(r"<sol>(.*?)</sol>", re.S)
_TAG = re.compile(r"<(/?)([A-Za-z_][A-Za-z_0-9]*)>")
_INTS = re.compile(r"\s*-?\d+\s*(?:,\s*-?\d+\s*)*")


def extract_block(text: str, tag: str) -> str | None:
    """Inner text of the first ``<tag>...</tag>`` block, or None."""
    found = re.search(rf"<{tag}>(.*?)</{tag}>", text, re.S)
    return found.group(1) if found else None


def _int_list(body: str, tag: str) -> list[int]:
    if not body.strip():
        return []
    if not _INTS.fullmatch(body):
        raise SolutionParseError(f"<{tag}> must hold comma-separated integers, got {body.strip()!r}")
    return [int(p) for p in body.split(",")]


def parse_solution(text: str, problem: str, num: int | None = None) -> Solution:
    """Read the first ``<sol>`` block in ``text`` (surrounding prose is ignored).

    For mkp, passing ``num`` fills ``unassigned`` with the items not packed.
    """
    found = _SOL.search(text)
    if found is None:
        raise SolutionParseError("no <sol>...</sol> block found")
    body = found.group(1)
    expected = _GROUP_TAG.get(problem, "route")
    entries: list[tuple[int, list[int]]] = []
    open_tag = None
    for tok in _TAG.finditer(body):
        closing, name = tok.group(1) == "/", tok.group(2)
        if not closing:
            if open_tag is not None:
                raise SolutionParseError(f"<{name}> opened inside <{open_tag[0]}>")
            if expected == "route":
                if name != "route":
                    raise SolutionParseError(f"unexpected tag <{name}> in a {problem} solution")
                index = len(entries)
            else:
                m = re.fullmatch(rf"{expected}_(\d+)", name)
                if m is None:
                    raise SolutionParseError(f"unexpected tag <{name}> in a {problem} solution")
                index = int(m.group(1))
            open_tag = (name, index, tok.end())
        else:
            if open_tag is None or open_tag[0] != name:
                raise SolutionParseError(f"unbalanced closing tag </{name}>")
            entries.append((open_tag[1], _int_list(body[open_tag[2]:tok.start()], name)))
            open_tag = None
    if open_tag is not None:
        raise SolutionParseError(f"<{open_tag[0]}> is never closed")
    if expected == "route":
        routes = [seq for _, seq in entries]
        if problem == "tsp":
            routes = [r[:-1] if len(r) > 1 and r[0] == r[-1] else r for r in routes]
        return Solution(problem, routes=routes)
    if len({i for i, _ in entries}) != len(entries):
        raise SolutionParseError(f"repeated <{expected}_i> index")
    size = max((i for i, _ in entries), default=-1) + 1
    groups: list[list[int]] = [[] for _ in range(size)]
    for i, seq in entries:
        groups[i] = seq
    unassigned = frozenset()
    if problem == "mkp" and num is not None:
        packed = {v for g in groups for v in g}
        unassigned = frozenset(v for v in range(num) if v not in packed)
    return Solution(problem, groups=groups, unassigned=unassigned)


def parse_and_check(m: Metadata, text: str) -> tuple[Solution | None, FeasibilityReport]:
    """Parse an agent reply and score it; parse failures become a report."""
    try:
        s = parse_solution(text, m.problem, num=m.num)
    except SolutionParseError as exc:
        return None, FeasibilityReport((Violation("malformed", f"Malformed solution: {exc}"),))
    return s, check_feasible(m, s)
