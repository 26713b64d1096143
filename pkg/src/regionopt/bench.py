"""Benchmark harness: manifests, the gap metric, reports and run logs.

Manifest (JSON, ``"version": 1``)::

    {
      "version": 1,
      "entries": [
        {"path": "eil51.tsp", "optimum": 426},
        {"path": "bundled:berlin52", "optimum": 7542, "mock_script": "replies.json"},
        {"path": "mkp.json", "format": "json", "problem": "mkp"}
      ],
      "config": {"decomposer": "random", "reconstructor": "exact", "time_limit": 60},
      "model": "gpt-4o-mini",
      "workers": 2,
      "output": "results"
    }

Relative paths are resolved against the manifest's directory; ``bundled:NAME``
refers to an instance shipped with the package. Entry-level ``config`` keys
override the manifest-level ones.

The log is line-delimited JSON. Its first line is a header
``{"record": "header", "format": "regionopt-log", "version": 1}``, followed by
``"iteration"`` records and one ``"run"`` record per entry, in manifest order.
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InstanceError
from .gateway import AgentGateway, HttpTransport, MockTransport, ModelConfig
from .heuristics import make_rng
from .instance import Metadata, bundled_instance, load_instance
from .orchestrator import OrchestratorConfig, RunResult, run
from .solution import check_feasible

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
LOG_VERSION = 1


def gap(v: float, v_star: float, digits: int = 3) -> float:
    """Optimality gap in percent, ``|v - v*| / v* * 100``, rounded to ``digits``.

    >>> gap(8773, 7542)
    16.322
    """
    if not v_star > 0:
        raise ValueError(f"the reference value must be positive, got {v_star}")
    return round(abs(v - v_star) / v_star * 100, digits)


def generate_mkp(n_items: int, n_knapsacks: int, seed: int) -> Metadata:
    """Random multiple-knapsack instance.

    Capacities are uniform integers in [100, 500]; item values and weights
    are uniform integers in [1, 100].
    """
    if n_items < 1 or n_knapsacks < 1:
        raise ValueError("need at least one item and one knapsack")
    rng = make_rng(seed)
    capacity = rng.integers(100, 501, size=n_knapsacks)
    values = rng.integers(1, 101, size=n_items)
    weights = rng.integers(1, 101, size=n_items)
    return Metadata(name=f"mkp_{n_items}_{n_knapsacks}_{seed}", problem="mkp", num=n_items,
                    weights=weights.tolist(), values=values.tolist(),
                    capacity=capacity.tolist())


# -- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class Entry:
    path: str
    format: str | None = None
    problem: str | None = None
    optimum: float | None = None
    name: str | None = None
    mock_script: str | None = None
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Manifest:
    entries: tuple[Entry, ...]
    config: dict = field(default_factory=dict)
    output: str | None = None
    workers: int = 1
    model: str | None = None
    mock_script: str | None = None

    def __post_init__(self):
        if not self.entries:
            raise ConfigurationError("a manifest needs at least one entry")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


_ENTRY_KEYS = {f.name for f in dataclasses.fields(Entry)}
_CONFIG_KEYS = {f.name for f in dataclasses.fields(OrchestratorConfig)}


def _resolve(base: Path, p: str | None) -> str | None:
    if p is None or p.startswith("bundled:") or Path(p).is_absolute():
        return p
    return str(base / p)


def load_manifest(path) -> Manifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("version") != MANIFEST_VERSION:
        raise ConfigurationError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    base = path.parent
    entries = []
    for raw in doc.get("entries", []):
        unknown = set(raw) - _ENTRY_KEYS
        if unknown:
            raise ConfigurationError(f"{path}: unknown entry keys {sorted(unknown)}")
        e = Entry(**raw)
        entries.append(dataclasses.replace(
            e, path=_resolve(base, e.path), mock_script=_resolve(base, e.mock_script)))
    config = doc.get("config", {})
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"{path}: unknown config keys {sorted(unknown)}")
    return Manifest(entries=tuple(entries), config=config,
                    output=_resolve(base, doc.get("output")),
                    workers=doc.get("workers", 1), model=doc.get("model"),
                    mock_script=_resolve(base, doc.get("mock_script")))


def load_entry_instance(e: Entry) -> Metadata:
    if e.path.startswith("bundled:"):
        m = bundled_instance(e.path.split(":", 1)[1])
    else:
        m = load_instance(e.path, e.format)
    if e.problem is not None and e.problem != m.problem:
        raise InstanceError(f"{e.path} holds a {m.problem} instance, expected {e.problem}")
    return m


# -- running -----------------------------------------------------------------

@dataclass(frozen=True)
class Row:
    name: str
    problem: str
    lower_bound: float | None
    objective: float | None
    gap: str
    api_calls: int
    input_tokens: int
    output_tokens: int
    elapsed: float
    termination: str
    iterations: int
    error: str = ""


@dataclass
class Report:
    rows: list[Row]

    @property
    def api_calls(self) -> int:
        return sum(r.api_calls for r in self.rows)

    @property
    def input_tokens(self) -> int:
        return sum(r.input_tokens for r in self.rows)

    @property
    def output_tokens(self) -> int:
        return sum(r.output_tokens for r in self.rows)

    def table(self) -> str:
        return format_table(self.rows)


COLUMNS = ("name", "problem", "lower_bound", "objective", "gap", "api_calls",
           "input_tokens", "output_tokens", "elapsed", "termination")


def _cell(row: Row, col: str) -> str:
    v = getattr(row, col)
    if v is None:
        return "-"
    if col == "elapsed":
        return f"{v:.2f}"
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def format_table(rows: list[Row]) -> str:
    """Aligned text table with one line per row."""
    cells = [list(COLUMNS)] + [[_cell(r, c) for c in COLUMNS] for r in rows]
    widths = [max(len(line[i]) for line in cells) for i in range(len(COLUMNS))]
    out = []
    for line in cells:
        out.append("  ".join(c.rjust(w) if i else c.ljust(w)
                             for i, (c, w) in enumerate(zip(line, widths))).rstrip())
    return "\n".join(out)


def gap_cell(result: RunResult, m: Metadata, optimum: float | None) -> str:
    """``"inf"`` past the time limit, ``"infe"`` if infeasible, else the gap."""
    if not result.within_time_limit:
        return "inf"
    if not check_feasible(m, result.best).feasible:
        return "infe"
    if optimum is None:
        return "-"
    return f"{gap(result.best_objective, optimum):.3f}"


def default_gateway(entry: Entry, manifest: Manifest, cfg: OrchestratorConfig):
    """A fresh gateway for one entry, or None if no strategy needs one."""
    script = entry.mock_script or manifest.mock_script
    model = ModelConfig(model=manifest.model) if manifest.model else ModelConfig()
    if script is not None:
        return AgentGateway(MockTransport.from_file(script), model)
    if "llm" in (cfg.decomposer, cfg.reconstructor):
        return AgentGateway(HttpTransport(), model)
    return None


def _run_entry(entry: Entry, manifest: Manifest, runner, gateway_factory):
    records: list[dict] = []
    name = entry.name or Path(entry.path).stem
    started = time.monotonic()
    try:
        m = load_entry_instance(entry)
        name = entry.name or m.name
        cfg = OrchestratorConfig(**{**manifest.config, **entry.config})
        gateway = gateway_factory(entry, manifest, cfg)

        def on_iteration(rec):
            records.append({"record": "iteration", "entry": name, **dataclasses.asdict(rec)})

        result = runner(m, cfg, gateway, on_iteration=on_iteration)
    except Exception as exc:  # the harness reports the failure and carries on
        log.warning("entry %s failed: %s", name, exc)
        row = Row(name, entry.problem or "-", entry.optimum, None, "error", 0, 0, 0,
                  time.monotonic() - started, "error", 0, error=f"{type(exc).__name__}: {exc}")
        records.append({"record": "run", **dataclasses.asdict(row)})
        return row, records
    snap = result.ledger
    row = Row(name, m.problem, entry.optimum, result.best_objective,
              gap_cell(result, m, entry.optimum), snap.api_calls, snap.input_tokens,
              snap.output_tokens, time.monotonic() - started, result.termination,
              result.iterations)
    records.append({"record": "run", **dataclasses.asdict(row),
                    "initial_objective": result.initial_objective,
                    "tokens_estimated": snap.estimated})
    return row, records


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def log_header() -> str:
    return json.dumps({"record": "header", "format": "regionopt-log", "version": LOG_VERSION})


def run_benchmark(manifest: Manifest, runner: Callable = run,
                  gateway_factory: Callable = default_gateway,
                  log_stream: io.TextIOBase | None = None) -> Report:
    """Run every entry (possibly in parallel) and report rows in manifest order."""
    def job(entry):
        return _run_entry(entry, manifest, runner, gateway_factory)

    if manifest.workers > 1:
        with ThreadPoolExecutor(max_workers=manifest.workers) as pool:
            results = list(pool.map(job, manifest.entries))
    else:
        results = [job(e) for e in manifest.entries]
    if log_stream is not None:
        log_stream.write(log_header() + "\n")
        for _, records in results:
            for rec in records:
                log_stream.write(json.dumps(rec, default=_json_default) + "\n")
    return Report([row for row, _ in results])


def write_outputs(report: Report, log_text: str, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.table() + "\n")
    (out / "runs.jsonl").write_text(log_text)
