"""
Circuit text format and sidecar record persistence.

The circuit format is a strict subset of OpenQASM 2.0: one quantum register, at most one
classical register, gate applications from the GateKind vocabulary, `barrier` and
`measure a -> b;`. Two comment conventions carry data the base format lacks:
    barrier q[0],q[1]; // tag:<label>     barrier label
    // meta:<key>=<value>                 circuit metadata
"""
from dataclasses import fields
from typing import Any, Dict, List, Optional, Tuple
import hashlib
import json
import logging
import math
import os

import pyparsing as pp

from src.circuit_ir import (
    Barrier,
    Circuit,
    Gate,
    GateKind,
    Instruction,
    Measure,
    check,
)
from src.schemas import SCHEMA_VERSION, SidecarRecord

logger = logging.getLogger(__name__)


class QasmSyntaxError(ValueError):
    """Malformed circuit text, with the 1-based position of the problem."""

    def __init__(self, line: int, column: int, message: str) -> None:
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"line {line}, column {column}: {message}")


class UnsupportedGate(ValueError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"Unsupported gate '{name}'. Available: {[k.value for k in GateKind]}")


class SchemaVersionMismatch(ValueError):
    pass


class RecordFormatError(ValueError):
    """The sidecar file is not a complete record."""


class RecordIOError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Grammar


def _negate(tokens: pp.ParseResults) -> float:
    return -float(tokens[0][1])


def _fold(tokens: pp.ParseResults) -> float:
    items = tokens[0]
    value = float(items[0])
    for op, rhs in zip(items[1::2], items[2::2]):
        if op == "*":
            value *= rhs
        elif op == "/":
            value /= rhs
        elif op == "+":
            value += rhs
        else:
            value -= rhs
    return value


def _build_grammar() -> pp.ParserElement:
    lpar, rpar, lbra, rbra, semi, comma = map(pp.Suppress, "()[];,")
    ident = pp.Word(pp.alphas + "_", pp.alphanums + "_")
    index = pp.Word(pp.nums).set_parse_action(lambda t: int(t[0]))

    atom = pp.pyparsing_common.number | pp.CaselessKeyword("pi").set_parse_action(
        lambda: math.pi
    )
    angle = pp.infix_notation(
        atom,
        [
            (pp.Literal("-"), 1, pp.OpAssoc.RIGHT, _negate),
            (pp.one_of("* /"), 2, pp.OpAssoc.LEFT, _fold),
            (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT, _fold),
        ],
    )

    ref = pp.Group(ident("reg") + pp.Optional(lbra + index("index") + rbra))

    header = pp.Group(pp.Keyword("OPENQASM")("op") + pp.pyparsing_common.number + semi)
    include = pp.Group(pp.Keyword("include")("op") + pp.QuotedString('"')("file") + semi)
    qreg = pp.Group(pp.Keyword("qreg")("op") + ident("reg") + lbra + index("size") + rbra + semi)
    creg = pp.Group(pp.Keyword("creg")("op") + ident("reg") + lbra + index("size") + rbra + semi)
    measure = pp.Group(
        pp.Keyword("measure")("op") + ref("src") + pp.Suppress("->") + ref("dst") + semi
    )
    barrier = pp.Group(
        pp.Keyword("barrier")("op") + pp.Group(pp.DelimitedList(ref))("args") + semi
    )
    application = pp.Group(
        ident("op")
        + pp.Optional(lpar + pp.Group(pp.DelimitedList(angle))("params") + rpar)
        + pp.Group(pp.DelimitedList(ref))("args")
        + semi
    )
    # the comment body is one token so its spacing survives
    comment = pp.Group(pp.Regex(r"//(?P<text>[^\r\n]*)"))
    statement = comment | header | include | qreg | creg | measure | barrier | application
    return pp.ZeroOrMore(pp.Group(pp.Located(statement)))


_GRAMMAR = _build_grammar()


class _Builder:
    """Accumulates parsed statements into a Circuit."""

    def __init__(self) -> None:
        self.qreg: Optional[Tuple[str, int]] = None
        self.creg: Optional[Tuple[str, int]] = None
        self.instructions: List[Instruction] = []
        self.metadata: Dict[str, str] = {}

    def qubit(self, ref: pp.ParseResults, line: int) -> List[int]:
        if self.qreg is None or ref["reg"] != self.qreg[0]:
            raise QasmSyntaxError(line, 1, f"unknown quantum register '{ref['reg']}'")
        if "index" in ref:
            return [int(ref["index"])]
        return list(range(self.qreg[1]))

    def clbit(self, ref: pp.ParseResults, line: int) -> int:
        if self.creg is None or ref["reg"] != self.creg[0]:
            raise QasmSyntaxError(line, 1, f"unknown classical register '{ref['reg']}'")
        if "index" not in ref:
            raise QasmSyntaxError(line, 1, "measure needs single bits")
        return int(ref["index"])

    def add(self, stmt: pp.ParseResults, line: int) -> None:
        op = stmt["op"]
        if op in ("OPENQASM", "include"):
            return
        if op == "qreg":
            if self.qreg is not None:
                raise QasmSyntaxError(line, 1, "only one quantum register is supported")
            self.qreg = (stmt["reg"], int(stmt["size"]))
        elif op == "creg":
            if self.creg is not None:
                raise QasmSyntaxError(line, 1, "only one classical register is supported")
            self.creg = (stmt["reg"], int(stmt["size"]))
        elif op == "measure":
            src = self.qubit(stmt["src"], line)
            if len(src) != 1:
                raise QasmSyntaxError(line, 1, "measure needs single bits")
            self.instructions.append(Measure(src[0], self.clbit(stmt["dst"], line)))
        elif op == "barrier":
            qubits: List[int] = []
            for ref in stmt["args"]:
                qubits.extend(self.qubit(ref, line))
            self.instructions.append(Barrier(tuple(qubits)))
        else:
            self.add_gate(stmt, line)

    def add_gate(self, stmt: pp.ParseResults, line: int) -> None:
        name = stmt["op"]
        try:
            kind = GateKind.from_name(name)
        except ValueError:
            raise UnsupportedGate(name) from None
        params = [float(p) for p in stmt["params"]] if "params" in stmt else []
        if len(params) != (1 if kind.is_parametric else 0):
            raise QasmSyntaxError(line, 1, f"wrong number of parameters for '{name}'")
        qubits: List[int] = []
        for ref in stmt["args"]:
            found = self.qubit(ref, line)
            if len(found) != 1:
                raise QasmSyntaxError(line, 1, "register broadcast is not supported")
            qubits.extend(found)
        theta = params[0] if params else None
        self.instructions.append(Gate(kind, tuple(qubits), theta))

    def tag_last_barrier(self, tag: str) -> None:
        if self.instructions and isinstance(self.instructions[-1], Barrier):
            last = self.instructions[-1]
            self.instructions[-1] = Barrier(last.qubits, tag)


def parse(text: str) -> Circuit:
    """
    Parse circuit text into a validated Circuit. Statements may span lines; a tag comment
    belongs to the barrier whose semicolon shares its line.

    Raises:
        QasmSyntaxError: malformed statement (line and column are 1-based)
        UnsupportedGate: gate name outside the vocabulary
        CircuitValidationError: well-formed text describing an invalid circuit
    """
    builder = _Builder()
    try:
        located = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseException as exc:
        raise QasmSyntaxError(exc.lineno, exc.col, exc.msg) from None

    previous_op: Optional[str] = None
    previous_end_line = 0
    for start, tokens, end in located:
        stmt = tokens[0]
        line = pp.lineno(start, text)
        if "text" not in stmt:
            builder.add(stmt, line)
            previous_op, previous_end_line = stmt["op"], pp.lineno(end, text)
            continue
        body = stmt["text"].lstrip()
        shares_line = previous_op is not None and previous_end_line == line
        if body.startswith("tag:") and shares_line and previous_op == "barrier":
            builder.tag_last_barrier(body[len("tag:"):])
        elif body.startswith("meta:") and not shares_line:
            key, _, value = body[len("meta:"):].partition("=")
            builder.metadata[key.strip()] = value.strip()

    if builder.qreg is None:
        raise QasmSyntaxError(1, 1, "missing qreg declaration")
    n_clbits = builder.creg[1] if builder.creg else 0
    circuit = Circuit(builder.qreg[1], n_clbits, tuple(builder.instructions), builder.metadata)
    return check(circuit)


def emit(c: Circuit) -> str:
    """Deterministic circuit text; parse(emit(c)) == c."""
    lines = ['OPENQASM 2.0;', 'include "qelib1.inc";']
    for key in sorted(c.metadata):
        value = str(c.metadata[key]).replace("\n", " ")
        lines.append(f"// meta:{key}={value}")
    lines.append(f"qreg q[{c.n_qubits}];")
    if c.n_clbits:
        lines.append(f"creg c[{c.n_clbits}];")
    for inst in c.instructions:
        if isinstance(inst, Gate):
            args = ",".join(f"q[{q}]" for q in inst.qubits)
            params = f"({inst.theta!r})" if inst.theta is not None else ""
            lines.append(f"{inst.kind.value}{params} {args};")
        elif isinstance(inst, Barrier):
            args = ",".join(f"q[{q}]" for q in inst.qubits)
            tag = f" // tag:{inst.tag}" if inst.tag else ""
            lines.append(f"barrier {args};{tag}")
        else:
            lines.append(f"measure q[{inst.qubit}] -> c[{inst.clbit}];")
    return "\n".join(lines) + "\n"


def circuit_hash(c: Circuit) -> str:
    """sha256 of the emitted text, ignoring metadata."""
    bare = Circuit(c.n_qubits, c.n_clbits, c.instructions)
    return hashlib.sha256(emit(bare).encode("utf-8")).hexdigest()


def read_circuit(path: str) -> Circuit:
    with open(path, "r", encoding="utf-8") as f:
        return parse(f.read())


def write_circuit(c: Circuit, path: str) -> str:
    _atomic_write(path, emit(c))
    return path


# ---------------------------------------------------------------------------
# Sidecar records


def dumps_record(record: SidecarRecord) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    payload: Dict[str, Any] = record.to_dict()  # type: ignore[attr-defined]
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def loads_record(text: str) -> SidecarRecord:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"Sidecar is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or "v" not in data:
        raise SchemaVersionMismatch("Sidecar has no schema version field 'v'")
    if data["v"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"Sidecar schema v{data['v']}, expected v{SCHEMA_VERSION}")
    missing = [f.name for f in fields(SidecarRecord) if f.name not in data]
    if missing:
        raise RecordFormatError(f"Sidecar is missing fields: {missing}")
    try:
        return SidecarRecord.from_dict(data)  # type: ignore[attr-defined, no-any-return]
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordFormatError(f"Sidecar record is incomplete: {exc}") from None


def save_record(record: SidecarRecord, path: str) -> SidecarRecord:
    """Write the record atomically; a reader never sees a partial file."""
    _atomic_write(path, dumps_record(record))
    logger.info("Saved sidecar record to %s", path)
    return record


def load_record(path: str) -> SidecarRecord:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise RecordIOError(f"Cannot read sidecar {path}: {exc}") from None
    return loads_record(text)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except OSError as exc:
        raise RecordIOError(f"Cannot write {path}: {exc}") from None
