"""LP text export of a pruning problem, plus a small reader for checking it.

The file uses the CPLEX LP dialect understood by most MIQP solvers::

    MINIMIZE
     obj: <linear terms> + [ <quadratic terms> ] / 2
    SUBJECT TO
     cardinality: u0 + u1 + ... = N_ss
    BINARY
     u0
     ...
    END

Coefficients are printed with 17 significant digits so the instance
round-trips exactly through float64.
"""

from __future__ import annotations

import io
import re

import numpy as np

from .exceptions import ParseError
from .mmd import PruneProblem


def _num(value: float) -> str:
    return "%.17g" % value


def _signed(value: float) -> str:
    return ("- " if value < 0 or (value == 0 and np.signbit(value)) else "+ ") + _num(abs(value))


def _var(i: int) -> str:
    return f"u{i}"


def export_qp_text(problem: PruneProblem, destination) -> None:
    """Write ``problem`` in LP format to a path or a text stream."""
    if isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__"):
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(qp_text(problem))
    else:
        destination.write(qp_text(problem))


def qp_text(problem: PruneProblem) -> str:
    n, m, n_t = problem.n_source, problem.subset_size, problem.n_target
    K, c = problem.K, problem.c
    out = io.StringIO()
    out.write("\\ cardinality-constrained binary quadratic program\n")
    out.write(f"\\ n_source={n} n_target={n_t} subset_size={m}\n")
    out.write("MINIMIZE\n")
    out.write(" obj:\n")
    for i in range(n):
        out.write(f"   {_signed(-2.0 * c[i] / n_t)} {_var(i)}\n")
    # the bracket is halved by the trailing "/ 2", so coefficients are doubled
    out.write("   + [\n")
    for i in range(n):
        out.write(f"   {_signed(2.0 * K[i, i] / m)} {_var(i)} ^ 2\n")
        for j in range(i + 1, n):
            out.write(f"   {_signed(4.0 * K[i, j] / m)} {_var(i)} * {_var(j)}\n")
    out.write("   ] / 2\n")
    out.write("SUBJECT TO\n")
    out.write(" cardinality: " + " + ".join(_var(i) for i in range(n)) + f" = {m}\n")
    out.write("BINARY\n")
    for i in range(n):
        out.write(f" {_var(i)}\n")
    out.write("END\n")
    return out.getvalue()


_SECTIONS = ("MINIMIZE", "SUBJECT TO", "BINARY", "END")
_NUM = r"[0-9.]+(?:[eE][+-]?[0-9]+)?"
_QUAD_SQ = re.compile(rf"([+-])\s*({_NUM})\s+(\w+)\s*\^\s*2")
_QUAD_X = re.compile(rf"([+-])\s*({_NUM})\s+(\w+)\s*\*\s*(\w+)")
_LIN = re.compile(rf"([+-])\s*({_NUM})\s+(\w+)")


class LPModel:
    """Objective and constraints parsed back from :func:`export_qp_text` output."""

    def __init__(self, linear, quadratic, constraints, binaries):
        self.linear = linear
        self.quadratic = quadratic
        self.constraints = constraints
        self.binaries = binaries

    def objective(self, values) -> float:
        if not isinstance(values, dict):
            values = {_var(i): float(v) for i, v in enumerate(values)}
        total = sum(coef * values[name] for name, coef in self.linear.items())
        total += sum(coef * values[a] * values[b] for (a, b), coef in self.quadratic.items())
        return float(total)


def parse_qp_text(text: str) -> LPModel:
    """Read the subset of LP format produced by :func:`export_qp_text`."""
    body = []
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if line:
            body.append(line)
    sections = {}
    current = None
    for lineno, line in enumerate(body, 1):
        upper = line.upper()
        if upper in _SECTIONS:
            current = upper
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ParseError(f"content before any section: {line!r}", line=lineno)
        sections[current].append(line)
    if "MINIMIZE" not in sections or "END" not in sections:
        raise ParseError("missing MINIMIZE or END section")

    objective = " ".join(sections["MINIMIZE"])
    objective = objective.split(":", 1)[1] if ":" in objective else objective
    match = re.search(r"\[(.*)\]\s*/\s*2", objective)
    quad_text = match.group(1) if match else ""
    lin_text = objective[:match.start()] if match else objective
    lin_text = re.sub(r"[+-]\s*$", "", lin_text.strip())

    linear = {}
    for sign, coef, name in _LIN.findall(lin_text):
        linear[name] = linear.get(name, 0.0) + (-1.0 if sign == "-" else 1.0) * float(coef)
    quadratic = {}
    for sign, coef, name in _QUAD_SQ.findall(quad_text):
        key = (name, name)
        quadratic[key] = quadratic.get(key, 0.0) + (-0.5 if sign == "-" else 0.5) * float(coef)
    for sign, coef, a, b in _QUAD_X.findall(quad_text):
        key = (a, b)
        quadratic[key] = quadratic.get(key, 0.0) + (-0.5 if sign == "-" else 0.5) * float(coef)

    constraints = []
    for line in sections.get("SUBJECT TO", []):
        name, _, expr = line.rpartition(":")
        lhs, _, rhs = expr.partition("=")
        names = [tok.strip() for tok in lhs.replace("-", "+").split("+") if tok.strip()]
        constraints.append((name.strip(), names, float(rhs)))
    binaries = [tok for line in sections.get("BINARY", []) for tok in line.split()]
    return LPModel(linear, quadratic, constraints, binaries)
