"""Prompt templates for the decomposer and reconstructor agents.

Templates are plain ``str.format`` strings. Paragraphs are separated by one
blank line; bullet lists and ``<sol>`` format blocks are kept contiguous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .instance import Metadata, serialize_json
from .solution import Solution, serialize_solution


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str


DECOMPOSER_SYSTEM = (
    "You are an expert in optimization with smart heuristics. The user will provide you an "
    "initial solution, whose data are formatted as {metadata_format}. Help the user analysis "
    "the initial solution and point out which part is yet to be optimized using any creative "
    "heuristic methods you can. Ensure to output the answer in the specified required format."
    "\n\n"
    "The problem inputs are:\n\n"
    "{input_data}\n\n"
    "**Format**: Return only the node index, enclosed in <sub> and </sub>, separated by commas."
    "\n\n"
    "For example: <sub>1,2,3</sub>"
)

DECOMPOSER_USER = (
    "For the given optimization problem ({problem_type}), my current solution is:\n\n"
    "{solution}\n\n"
    "These {solution_mark} are not optimal. I want to improve them by remove some {element} "
    "from the current solution, reconstruct them optimally.\n\n"
    "Please identify no more than {num} {element} that could be improved."
)

RECONSTRUCTOR_SYSTEM = (
    "Act as an expert in combinatorial optimization. Your goal is find the best solution with "
    "given constraints, use any heuristic as you can.\n\n"
    "**Goal: Find the best solution, avoid the infeasible solutions.**\n\n"
    "**Requirements:**\n"
    "{requirements}\n"
    "- Check the feasibility of your solution to ensure the above conditions.\n\n"
    "OUTPUT FORMAT: After your solving, present your answer as:\n\n"
    "{solution_format}"
)

RECONSTRUCTOR_USER = (
    "Given a set of {elements}, your task is to find the {objective} while respecting the "
    "following constraints.\n\n"
    "The problem inputs are:\n\n"
    "{input_data}\n\n"
    "{constraints}\n\n"
    "Current solution:\n"
    "{solution}"
)

REVISION_HEADER = ("Analysis the following infeasible solution(s) and generate a new solution "
                   "to meet the given constraints.")

SOLUTION_MARK = {"tsp": "route", "cvrp": "route", "bpp": "pack", "mkp": "pack"}
ELEMENT = {"tsp": "node", "cvrp": "node", "bpp": "item", "mkp": "item"}

_FIXED_PATH_RULE = ("The fixed path prevents any other visits in between; allow reversing of "
                    "the fixed path where necessary.")

REQUIREMENTS = {
    "tsp": ("Must visit all the points exactly once, except the depot.",
            "The start and end points must remain fixed.",
            _FIXED_PATH_RULE),
    "cvrp": ("Must visit all the customer nodes exactly once.",
             "Each route must start and end at the depot.",
             "Vehicle capacity must not be exceeded.",
             _FIXED_PATH_RULE),
    "bpp": ("Packed items' total weight in each bin must be less than or equal to the bin's "
            "capacity.",),
    "mkp": ("Selected items' total weight must be less than or equal to the knapsack's "
            "capacity.",),
}

SOLUTION_FORMAT = {
    "tsp": "<sol>\n <route>0,1,2,...,0</route>\n</sol>",
    "cvrp": "<sol>\n <route>0,1,2,...,0</route>\n <route>0,3,4,...,0</route>\n ...\n</sol>",
    "bpp": ("<sol>\n <bin_0>0,1,2,...</bin_0>\n <bin_1>3,4,...</bin_1>\n ...\n</sol>\n\n"
            "Where bin_i is the i-th bin."),
    "mkp": ("<sol>\n <knapsack_0>0,1,2,...</knapsack_0>\n <knapsack_1>3,4,...</knapsack_1>\n"
            " ...\n</sol>\n\n"
            "Where knapsack_i is the i-th knapsack."),
}

OBJECTIVE = {
    "tsp": ("Find the shortest possible tour that visits all nodes exactly once and returns to "
            "the starting depot."),
    "cvrp": ("Design a set of routes to deliver all customer demands using vehicles with limited "
             "capacity, minimizing the total distance while visiting each customer exactly once."),
    "bpp": ("Given a set of items with their weights, your task is to find the best packing "
            "solution that minimizes the number of bins used while respecting each bin's "
            "capacity."),
    "mkp": ("Given a set of items with their values and weights, your task is to find the best "
            "packing solution that maximizes the total value while respecting each knapsack's "
            "capacity."),
}

_KEY_DOC = {
    "name": "instance name (string)",
    "type": "problem type: tsp, cvrp, bpp or mkp (string)",
    "depot": "index of the depot node (integer)",
    "x": "x coordinate of each node (list of integers)",
    "y": "y coordinate of each node (list of integers)",
    "weights": "weight of each item (list of integers)",
    "values": "value of each item (list of integers)",
    "demand": "demand of each node, 0 at the depot (list of integers)",
    "link": "node pairs that must be visited consecutively (list of [i, j])",
}
_CAPACITY_DOC = {
    "cvrp": "vehicle capacity (integer)",
    "bpp": "capacity of every bin (integer)",
    "mkp": "capacity of each knapsack (list of integers)",
}


def metadata_format(m: Metadata) -> str:
    """Key/description pairs for the keys present in ``m``'s JSON form."""
    doc = {}
    for key in json.loads(serialize_json(m)):
        if key == "num":
            doc[key] = f"number of {ELEMENT[m.problem]}s (integer)"
        elif key == "capacity":
            doc[key] = _CAPACITY_DOC[m.problem]
        else:
            doc[key] = _KEY_DOC[key]
    return json.dumps(doc)


def build_decomposer_prompt(m: Metadata, s: Solution, cap: int) -> PromptPair:
    system = DECOMPOSER_SYSTEM.format(metadata_format=metadata_format(m),
                                      input_data=serialize_json(m))
    user = DECOMPOSER_USER.format(problem_type=m.problem, solution=serialize_solution(s),
                                  solution_mark=SOLUTION_MARK[m.problem],
                                  element=ELEMENT[m.problem], num=cap)
    return PromptPair(system, user)


def _num(x):
    return f"{x:g}" if isinstance(x, float) else str(x)


def render_constraints(sub) -> str:
    """The CONSTRAINTS block of the reconstructor prompt."""
    problem = sub.problem
    if problem in ("tsp", "cvrp"):
        paths = [fp for fp in sub.fixed_paths if fp.entry != fp.exit]
        if not paths:
            return "No fixed visiting path."
        lines = ["Fixed visiting path as " + ", ".join(f"({fp.entry},{fp.exit})" for fp in paths)]
        if problem == "cvrp":
            lines.append("Demand carried inside each fixed path: " + ", ".join(
                f"({fp.entry},{fp.exit}) {_num(fp.demand)}" for fp in paths))
        return "\n".join(lines)
    label = "bin" if problem == "bpp" else "knapsack"
    lines = []
    for b in sub.bulky_items:
        line = f"Bulky item {b.item} must stay in {label}_{b.group}, weight {_num(b.weight)}"
        if problem == "mkp":
            line += f", value {_num(b.value)}"
        lines.append(line + ".")
    return "\n".join(lines) if lines else "No bulky items."


def render_infeasible(record) -> str:
    """One negative-experience block: the attempt plus its violation reasons."""
    if record.parsed is not None:
        sol = serialize_solution(record.parsed)
    else:
        sol = record.attempt.strip()
        start, end = sol.find("<sol>"), sol.rfind("</sol>")
        if start >= 0 and end > start:
            sol = sol[start:end + len("</sol>")]
    return sol + "\n<reason>\n" + "\n".join(record.violations) + "\n</reason>"


def build_reconstructor_prompt(sub, experience=()) -> PromptPair:
    problem = sub.problem
    requirements = "\n".join(f"- {r}" for r in REQUIREMENTS[problem])
    system = RECONSTRUCTOR_SYSTEM.format(requirements=requirements,
                                         solution_format=SOLUTION_FORMAT[problem])
    user = RECONSTRUCTOR_USER.format(
        elements="nodes" if problem in ("tsp", "cvrp") else "items",
        objective=OBJECTIVE[problem],
        input_data=serialize_json(sub.local_meta),
        constraints=render_constraints(sub),
        solution=serialize_solution(sub.local_solution))
    failed = [r for r in experience if not r.feasible]
    if failed:
        user += "\n\n" + REVISION_HEADER + "\n\n" + "\n\n".join(map(render_infeasible, failed))
    return PromptPair(system, user)
