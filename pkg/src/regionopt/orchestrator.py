"""The improvement loop: decompose, compress, reconstruct, accept, integrate.

Starting from a constructive solution, each iteration picks an active
region, solves the compressed region with the reconstruction strategy and
accepts the result with the Metropolis rule applied to the local objectives.
The loop stops at the time limit or after ``rejection_threshold``
consecutive iterations without progress.

Two readings of "progress" are available through ``reset_on``:

``"improvement"`` (default)
    the counter resets only when an accepted iteration strictly lowers the
    objective. Accepted ties and accepted worsening moves are integrated
    but still count toward the stop.
``"accept"``
    the counter resets on every accepted iteration.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .decomposition import DEFAULT_CAP, MAX_CAP, decompose
from .errors import (CapabilityError, ConfigurationError, DegenerateSubproblemError,
                     IntegrationError, StrategyError)
from .gateway import AgentGateway, LedgerSnapshot, TokenLedger
from .heuristics import initial_solution
from .instance import Metadata
from .reconstruction import DEFAULT_EXACT_THRESHOLD, DEFAULT_REVISIONS, reconstruct
from .solution import Solution, check_feasible, objective, reported_objective
from .subproblem import compress, integrate, local_objective

log = logging.getLogger(__name__)

TERMINATIONS = ("time_limit", "rejection_threshold", "strategy_failure")


@dataclass(frozen=True)
class OrchestratorConfig:
    time_limit: float = 3600.0
    rejection_threshold: int = 5
    temperature: float | None = None
    decomposer: str = "random"
    reconstructor: str = "heuristic"
    active_cap: int = DEFAULT_CAP
    seed: int = 0
    revision_rounds: int = DEFAULT_REVISIONS
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    reset_on: str = "improvement"

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ConfigurationError("time_limit must be positive")
        if self.rejection_threshold < 1:
            raise ConfigurationError("rejection_threshold must be >= 1")
        if self.temperature is not None and not self.temperature > 0:
            raise ConfigurationError("temperature must be positive")
        if not 1 <= self.active_cap <= MAX_CAP:
            raise ConfigurationError(f"active_cap must be in 1..{MAX_CAP}")
        if self.reset_on not in ("improvement", "accept"):
            raise ConfigurationError("reset_on is 'improvement' or 'accept'")
        if self.reconstructor == "exact" and self.active_cap > self.exact_threshold:
            raise ConfigurationError(
                f"active_cap {self.active_cap} exceeds the exact threshold {self.exact_threshold}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    local_delta: float | None
    accepted: bool
    elapsed: float
    objective: float
    best_objective: float
    rejections: int
    note: str = ""


@dataclass
class RunResult:
    best: Solution
    best_objective: float
    initial_objective: float
    current: Solution
    trace: list[IterationRecord]
    ledger: LedgerSnapshot
    termination: str
    elapsed: float
    temperature: float
    within_time_limit: bool = True
    problem: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace)


def default_temperature(initial_objective: float) -> float:
    return max(1.0, 0.01 * abs(initial_objective))


def accept(f_old: float, f_new: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule: true with probability ``min(1, exp(-(f_new - f_old) / T))``.

    Exactly one uniform number is drawn per call.
    """
    if not temperature > 0:
        raise ConfigurationError("temperature must be positive")
    u = rng.random()
    delta = f_new - f_old
    if delta <= 0:
        return True
    return u < math.exp(-delta / temperature)


def _streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(4)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def run(m: Metadata, cfg: OrchestratorConfig, gateway: AgentGateway | None = None, *,
        initial: Solution | None = None,
        on_iteration: Callable[[IterationRecord], None] | None = None) -> RunResult:
    """Run the loop on ``m``; objectives in the trace are minimised (mkp negated)."""
    clock = time.monotonic()

    def elapsed():
        return time.monotonic() - clock

    if "llm" in (cfg.decomposer, cfg.reconstructor) and gateway is None:
        raise ConfigurationError("llm strategies need an agent gateway")
    init_rng, dec_rng, acc_rng, rec_rng = _streams(cfg.seed)
    ledger = TokenLedger()
    agent = gateway.bind(ledger) if gateway is not None else None

    current = initial if initial is not None else initial_solution(m, init_rng)
    f_cur = objective(m, current)
    f_init = f_cur
    best, f_best = current, f_cur
    T = cfg.temperature if cfg.temperature is not None else default_temperature(f_init)
    within = elapsed() <= cfg.time_limit

    trace: list[IterationRecord] = []
    rejections = 0
    termination = None
    while termination is None:
        if elapsed() >= cfg.time_limit:
            termination = "time_limit"
            break
        if rejections >= cfg.rejection_threshold:
            termination = "rejection_threshold"
            break
        it = len(trace) + 1
        delta, accepted, improved, note = None, False, False, ""
        try:
            sel = decompose(cfg.decomposer, m, current, cfg.active_cap, rng=dec_rng, agent=agent)
            sub = compress(m, current, sel)
            f_old = local_objective(sub, sub.local_solution)
            outcome = reconstruct(cfg.reconstructor, sub, rng=rec_rng, agent=agent,
                                  budget=cfg.revision_rounds,
                                  exact_threshold=cfg.exact_threshold)
        except DegenerateSubproblemError as exc:
            termination, note = "strategy_failure", str(exc)
            outcome = None
        except (StrategyError, CapabilityError) as exc:
            note = f"strategy failed: {exc}"
            outcome = None
        if termination is not None:
            break

        if outcome is not None and outcome.solution is None:
            note = "no feasible reconstruction"
        elif outcome is not None:
            f_new = local_objective(sub, outcome.solution)
            delta = f_new - f_old
            accepted = accept(f_old, f_new, T, acc_rng)
            if accepted:
                try:
                    new = integrate(outcome.solution, sub, current)
                except IntegrationError as exc:
                    accepted, note = False, f"integration refused: {exc}"
                else:
                    if m.problem == "bpp":
                        new = new.replace(groups=[g for g in new.groups if g])
                    report = check_feasible(m, new)
                    if report.feasible:
                        current = new
                        f_cur = objective(m, current)
                        improved = delta < 0
                        if f_cur < f_best:
                            best, f_best = current, f_cur
                    else:
                        log.error("integrated solution infeasible: %s", report.reason())
                        accepted, note = False, "integrated solution infeasible"
            else:
                note = "rejected"

        if accepted and (cfg.reset_on == "accept" or improved):
            rejections = 0
        else:
            rejections += 1
        rec = IterationRecord(it, delta, accepted, elapsed(), f_cur, f_best, rejections, note)
        trace.append(rec)
        log.debug("iteration %d delta=%s accepted=%s", it, delta, accepted)
        if on_iteration is not None:
            on_iteration(rec)

    return RunResult(best=best, best_objective=reported_objective(m, f_best),
                     initial_objective=reported_objective(m, f_init), current=current,
                     trace=trace, ledger=ledger.snapshot(), termination=termination,
                     elapsed=elapsed(), temperature=T, within_time_limit=within,
                     problem=m.problem)
