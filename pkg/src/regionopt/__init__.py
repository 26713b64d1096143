"""Decomposition and reconstruction search for routing and packing problems.

The usual entry points:

>>> from regionopt import bundled_instance, OrchestratorConfig, run
>>> m = bundled_instance("eil51")
>>> result = run(m, OrchestratorConfig(reconstructor="exact", seed=0))  # doctest: +SKIP
"""

from .bench import gap, generate_mkp, run_benchmark
from .decomposition import ActiveSelection, decompose
from .errors import (CapabilityError, ConfigurationError, DegenerateSubproblemError,
                     InstanceError, IntegrationError, RegionOptError, TransportError)
from .gateway import AgentGateway, HttpTransport, MockTransport, ModelConfig, TokenLedger
from .heuristics import initial_solution, make_rng
from .instance import (Metadata, bundled_instance, load_instance, parse_instance,
                       serialize_json)
from .orchestrator import OrchestratorConfig, RunResult, accept, run
from .reconstruction import reconstruct
from .solution import (FeasibilityReport, Solution, check_feasible, objective, parse_solution,
                       serialize_solution)
from .subproblem import SubProblem, compress, integrate, local_objective

__version__ = "0.1.0"

__all__ = [
    "ActiveSelection", "AgentGateway", "CapabilityError", "ConfigurationError",
    "DegenerateSubproblemError", "FeasibilityReport", "HttpTransport", "InstanceError",
    "IntegrationError", "Metadata", "MockTransport", "ModelConfig", "OrchestratorConfig",
    "RegionOptError", "RunResult", "Solution", "SubProblem", "TokenLedger", "TransportError",
    "accept", "bundled_instance", "check_feasible", "compress", "decompose", "gap",
    "generate_mkp", "initial_solution", "integrate", "load_instance", "local_objective",
    "make_rng", "objective", "parse_instance", "parse_solution", "reconstruct", "run",
    "run_benchmark", "serialize_json", "serialize_solution",
]
