"""Problem instances: the :class:`Metadata` record, parsers and distances.

Four problem families are supported:

* ``tsp``  -- symmetric Euclidean travelling salesman,
* ``cvrp`` -- capacitated vehicle routing with one depot,
* ``bpp``  -- one-dimensional bin packing,
* ``mkp``  -- multiple (0-1) knapsack.

Instances are read from TSPLIB / CVRPLIB text files (``EUC_2D`` only) or from
the JSON layout below, where a key is mandatory (M), optional (o) or forbidden
(blank) for each problem::

    key        tsp  cvrp  bpp  mkp
    name        M    M     M    M
    type        M    M     M    M
    num         M    M     M    M
    depot            M
    x, y        M    M
    weights                M    M
    values                      M
    capacity         M     M    M     (list of integers for mkp)
    demand           M
    link        o    o

Routing distances follow the TSPLIB ``EUC_2D`` convention: the Euclidean
distance rounded to the nearest integer, halves rounded up.

>>> m = parse_instance('{"name": "t", "type": "tsp", "num": 2, '
...                    '"x": [0, 3], "y": [0, 4]}', "json")
>>> distance(m, 0, 1)
5
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, SchemaError, UnsupportedFormatError

PROBLEMS = ("tsp", "cvrp", "bpp", "mkp")
ROUTING = ("tsp", "cvrp")
PACKING = ("bpp", "mkp")

_REQUIRED = {
    "tsp": {"name", "type", "num", "x", "y"},
    "cvrp": {"name", "type", "num", "depot", "x", "y", "capacity", "demand"},
    "bpp": {"name", "type", "num", "weights", "capacity"},
    "mkp": {"name", "type", "num", "weights", "values", "capacity"},
}
_OPTIONAL = {"tsp": {"link"}, "cvrp": {"link"}, "bpp": set(), "mkp": set()}
_ALL_KEYS = set().union(*_REQUIRED.values(), *_OPTIONAL.values())


def _tuple(values, cast=float):
    return None if values is None else tuple(cast(v) for v in values)


def _number(v):
    """Keep integers as ``int`` so that packing arithmetic stays exact."""
    if isinstance(v, bool):
        raise TypeError("boolean is not a number")
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return int(v) if v.is_integer() else v


@dataclass(frozen=True)
class Metadata:
    """An immutable problem instance.

    ``num`` counts nodes for routing problems (depot included) and items for
    packing problems. ``capacity`` is a scalar except for ``mkp``, where it
    holds one entry per knapsack.
    """

    name: str
    problem: str
    num: int
    depot: int | None = None
    xs: tuple[float, ...] | None = None
    ys: tuple[float, ...] | None = None
    weights: tuple | None = None
    values: tuple | None = None
    capacity: int | float | tuple | None = None
    demand: tuple | None = None
    links: tuple[tuple[int, int], ...] | None = field(default=None)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "xs", _tuple(self.xs))
        set_(self, "ys", _tuple(self.ys))
        set_(self, "weights", _tuple(self.weights, _number))
        set_(self, "values", _tuple(self.values, _number))
        set_(self, "demand", _tuple(self.demand, _number))
        if isinstance(self.capacity, (list, tuple)):
            set_(self, "capacity", _tuple(self.capacity, _number))
        elif self.capacity is not None:
            set_(self, "capacity", _number(self.capacity))
        if self.links is not None:
            set_(self, "links", tuple((int(a), int(b)) for a, b in self.links))
        self._validate()

    def _validate(self):
        p = self.problem
        if p not in PROBLEMS:
            raise SchemaError(f"unknown problem type {p!r}", key="type")
        if not isinstance(self.num, int) or isinstance(self.num, bool) or self.num < 1:
            raise SchemaError(f"num must be a positive integer, got {self.num!r}", key="num")
        present = {
            "depot": self.depot is not None,
            "x": self.xs is not None,
            "y": self.ys is not None,
            "weights": self.weights is not None,
            "values": self.values is not None,
            "capacity": self.capacity is not None,
            "demand": self.demand is not None,
            "link": self.links is not None,
        }
        for key, there in present.items():
            if key in _REQUIRED[p] and not there:
                raise SchemaError(f"missing mandatory key {key!r} for {p}", key=key)
            if there and key not in _REQUIRED[p] | _OPTIONAL[p]:
                raise SchemaError(f"key {key!r} is not allowed for {p}", key=key)
        per_element = {"x": self.xs, "y": self.ys, "weights": self.weights,
                       "values": self.values, "demand": self.demand}
        for key, seq in per_element.items():
            if seq is not None and len(seq) != self.num:
                raise SchemaError(
                    f"{key!r} has {len(seq)} entries, expected num={self.num}", key=key)
        for key in ("weights", "values", "demand"):
            seq = per_element[key]
            if seq is not None and any(v < 0 for v in seq):
                raise SchemaError(f"{key!r} must be nonnegative", key=key)
        if p == "mkp":
            if not isinstance(self.capacity, tuple) or len(self.capacity) < 1:
                raise SchemaError("mkp capacity must be a non-empty list", key="capacity")
            caps = self.capacity
        elif self.capacity is not None:
            if isinstance(self.capacity, tuple):
                raise SchemaError(f"{p} capacity must be a scalar", key="capacity")
            caps = (self.capacity,)
        else:
            caps = ()
        if any(c <= 0 for c in caps):
            raise SchemaError("capacities must be positive", key="capacity")
        if p == "cvrp":
            if not isinstance(self.depot, int) or not 0 <= self.depot < self.num:
                raise SchemaError(f"depot {self.depot!r} out of range", key="depot")
            if self.demand[self.depot] != 0:
                raise SchemaError("depot demand must be 0", key="demand")
        if self.links is not None:
            for a, b in self.links:
                if not (0 <= a < self.num and 0 <= b < self.num):
                    raise SchemaError(f"link ({a}, {b}) out of range", key="link")

    @property
    def is_routing(self) -> bool:
        return self.problem in ROUTING

    @property
    def n_groups(self) -> int | None:
        """Number of knapsacks (mkp); ``None`` when unbounded or n/a."""
        return len(self.capacity) if self.problem == "mkp" else None

    @cached_property
    def coords(self) -> np.ndarray:
        if not self.is_routing:
            raise ValueError(f"{self.problem} instances have no coordinates")
        return np.column_stack([np.asarray(self.xs), np.asarray(self.ys)])


def nint(x):
    """Nearest integer, halves rounded up (TSPLIB ``nint``)."""
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def distance(m: Metadata, i: int, j: int) -> int:
    """Rounded Euclidean distance between nodes ``i`` and ``j``."""
    if not m.is_routing:
        raise ValueError("distance() needs a routing instance")
    for k in (i, j):
        if not 0 <= k < m.num:
            raise IndexError(f"node {k} out of range 0..{m.num - 1}")
    dx = m.xs[i] - m.xs[j]
    dy = m.ys[i] - m.ys[j]
    return int(math.floor(math.sqrt(dx * dx + dy * dy) + 0.5))


def distance_matrix(m: Metadata, nodes: Sequence[int] | None = None) -> np.ndarray:
    """Integer distance matrix over ``nodes`` (all nodes by default)."""
    pts = m.coords if nodes is None else m.coords[np.asarray(nodes, dtype=int)]
    diff = pts[:, None, :] - pts[None, :, :]
    return nint(np.sqrt((diff ** 2).sum(axis=-1)))


def path_length(m: Metadata, seq: Sequence[int], closed: bool = False) -> int:
    """Sum of rounded edge lengths along ``seq`` (optionally back to the start)."""
    if len(seq) < 2:
        return 0
    idx = np.asarray(seq, dtype=int)
    a = m.coords[idx]
    b = np.roll(a, -1, axis=0) if closed else a[1:]
    if not closed:
        a = a[:-1]
    return int(nint(np.sqrt(((a - b) ** 2).sum(axis=1))).sum())


# -- parsing -----------------------------------------------------------------

def parse_instance(raw: str, format: str) -> Metadata:
    """Parse ``raw`` text given as ``"tsplib"``, ``"cvrplib"`` or ``"json"``."""
    if format == "json":
        return _parse_json(raw)
    if format in ("tsplib", "cvrplib"):
        return _parse_tsplib(raw, cvrp=(format == "cvrplib"))
    raise UnsupportedFormatError(f"unknown instance format {format!r}")


def _parse_json(raw: str) -> Metadata:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object")
    unknown = set(doc) - _ALL_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise SchemaError(f"unknown key {key!r}", key=key)
    if "type" not in doc:
        raise SchemaError("missing mandatory key 'type'", key="type")
    problem = str(doc["type"]).lower()
    if problem not in PROBLEMS:
        raise SchemaError(f"unknown problem type {doc['type']!r}", key="type")
    for key in sorted(_REQUIRED[problem]):
        if key not in doc:
            raise SchemaError(f"missing mandatory key {key!r} for {problem}", key=key)
    for key in doc:
        if key not in _REQUIRED[problem] | _OPTIONAL[problem]:
            raise SchemaError(f"key {key!r} is not allowed for {problem}", key=key)
    try:
        return Metadata(
            name=str(doc["name"]),
            problem=problem,
            num=doc["num"],
            depot=doc.get("depot"),
            xs=doc.get("x"),
            ys=doc.get("y"),
            weights=doc.get("weights"),
            values=doc.get("values"),
            capacity=doc.get("capacity"),
            demand=doc.get("demand"),
            links=doc.get("link"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise ParseError(f"bad value: {exc}") from exc


_SECTIONS = {"NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"}


def _parse_tsplib(raw: str, cvrp: bool) -> Metadata:
    header: dict[str, str] = {}
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, line in enumerate(raw.splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        if text == "EOF":
            break
        word = text.split()[0].rstrip(":")
        if word in _SECTIONS:
            current = word
            sections[current] = []
            continue
        if current is None or (":" in text and not text[0].isdigit() and text[0] != "-"):
            if ":" not in text:
                raise ParseError(f"expected 'KEY : VALUE', got {text!r}", line=lineno)
            key, _, value = text.partition(":")
            header[key.strip().upper()] = value.strip()
            current = None
            continue
        sections[current].append((lineno, text.split()))

    fmt = "CVRPLIB" if cvrp else "TSPLIB"
    for key in ("DIMENSION", "EDGE_WEIGHT_TYPE") + (("CAPACITY",) if cvrp else ()):
        if key not in header:
            raise ParseError(f"{fmt} header lacks {key}", field=key)
    ewt = header["EDGE_WEIGHT_TYPE"].upper()
    if ewt != "EUC_2D":
        raise UnsupportedFormatError(f"EDGE_WEIGHT_TYPE {ewt} is not supported (only EUC_2D)")
    kind = header.get("TYPE", "CVRP" if cvrp else "TSP").split()[0].upper()
    if kind != ("CVRP" if cvrp else "TSP"):
        raise UnsupportedFormatError(f"TYPE {kind} cannot be read as {fmt}")
    try:
        n = int(header["DIMENSION"])
    except ValueError:
        raise ParseError("DIMENSION is not an integer", field="DIMENSION") from None

    def table(name, width):
        if name not in sections:
            raise ParseError(f"{fmt} document lacks {name}", field=name)
        out = {}
        for lineno, parts in sections[name]:
            if len(parts) != width:
                raise ParseError(f"expected {width} columns, got {len(parts)}", line=lineno, field=name)
            try:
                idx = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError:
                raise ParseError(f"non-numeric entry {' '.join(parts)!r}", line=lineno, field=name) from None
            if not 1 <= idx <= n or idx in out:
                raise ParseError(f"bad or repeated node id {idx}", line=lineno, field=name)
            out[idx] = vals
        if len(out) != n:
            raise ParseError(f"{name} has {len(out)} entries, DIMENSION is {n}", field=name)
        return [out[i] for i in range(1, n + 1)]

    coords = table("NODE_COORD_SECTION", 3)
    xs = [c[0] for c in coords]
    ys = [c[1] for c in coords]
    name = header.get("NAME", "unnamed")
    if not cvrp:
        return Metadata(name=name, problem="tsp", num=n, xs=xs, ys=ys)

    try:
        capacity = _number(float(header["CAPACITY"]))
    except ValueError:
        raise ParseError("CAPACITY is not numeric", field="CAPACITY") from None
    demand = [_number(d[0]) for d in table("DEMAND_SECTION", 2)]
    depots = []
    for lineno, parts in sections.get("DEPOT_SECTION", []):
        for p in parts:
            try:
                v = int(p)
            except ValueError:
                raise ParseError(f"bad depot id {p!r}", line=lineno, field="DEPOT_SECTION") from None
            if v == -1:
                break
            depots.append(v)
    if len(depots) != 1:
        raise UnsupportedFormatError(f"exactly one depot is supported, found {len(depots)}")
    return Metadata(name=name, problem="cvrp", num=n, depot=depots[0] - 1, xs=xs, ys=ys,
                    capacity=capacity, demand=demand)


def _plain(v):
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def to_dict(m: Metadata) -> dict:
    """The JSON-ready dictionary for ``m`` (keys ordered as in the key table)."""
    doc = {"name": m.name, "type": m.problem, "num": m.num}
    if m.depot is not None:
        doc["depot"] = m.depot
    if m.xs is not None:
        doc["x"] = [_plain(v) for v in m.xs]
        doc["y"] = [_plain(v) for v in m.ys]
    if m.weights is not None:
        doc["weights"] = list(m.weights)
    if m.values is not None:
        doc["values"] = list(m.values)
    if m.capacity is not None:
        doc["capacity"] = list(m.capacity) if isinstance(m.capacity, tuple) else m.capacity
    if m.demand is not None:
        doc["demand"] = list(m.demand)
    if m.links is not None:
        doc["link"] = [list(p) for p in m.links]
    return doc


def serialize_json(m: Metadata, indent: int | None = None) -> str:
    return json.dumps(to_dict(m), indent=indent)


_SUFFIX_FORMAT = {".tsp": "tsplib", ".vrp": "cvrplib", ".json": "json"}


def load_instance(path, format: str | None = None) -> Metadata:
    """Read an instance file, guessing the format from its suffix."""
    path = Path(path)
    if format is None:
        try:
            format = _SUFFIX_FORMAT[path.suffix.lower()]
        except KeyError:
            raise UnsupportedFormatError(f"cannot infer format of {path.name}") from None
    return parse_instance(path.read_text(), format)


def bundled_instance(name: str) -> Metadata:
    """Load one of the TSPLIB instances shipped with the package (eil51, berlin52)."""
    data = resources.files("regionopt") / "data" / f"{name}.tsp"
    return parse_instance(data.read_text(), "tsplib")


def bundled_optimal_tour(name: str) -> list[int]:
    """The published optimal tour of a bundled instance, 0-based."""
    data = resources.files("regionopt") / "data" / f"{name}.opt.tour"
    tour, inside = [], False
    for line in data.read_text().splitlines():
        line = line.strip()
        if line == "TOUR_SECTION":
            inside = True
        elif inside:
            v = int(line.split()[0])
            if v == -1:
                break
            tour.append(v - 1)
    return tour
