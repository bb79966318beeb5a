"""Core IR: a small SSA-form hybrid quantum/classical program representation.

A module holds functions made of basic blocks. Blocks carry phi nodes, a body
of straight-line instructions (gates, measurements, classical ops, output
recording, calls) and exactly one terminator (jump / conditional branch /
return). Profile validation enforces the machine-executable subset: acyclic
control flow, SSA discipline, in-range qubit/result indices, known gates,
and (in strict mode) no remaining calls and constant rotation angles.

Values are either Python literals (bool / int / float) or `Vreg` references.
Qubit operands are literal indices into the global qubit register, or
qubit-typed parameter vregs inside functions that take qubits as arguments.
IR objects are immutable; transforms build new modules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

GATE_SET = ("x", "y", "z", "h", "s", "sdg", "t", "tdg", "rx", "ry", "rz", "cx")
ROTATION_GATES = ("rx", "ry", "rz")
TWO_QUBIT_GATES = ("cx",)

BINOPS = ("add", "sub", "mul", "and", "or", "xor")
CMPOPS = ("eq", "ne", "lt", "le", "gt", "ge")
OUTPUT_KINDS = ("array_start", "array_end", "tuple_start", "tuple_end", "result")

INT_MIN = -(2**63)
INT_MASK = 2**64 - 1


class CycleDetected(Exception):
    """Raised when an operation requiring an acyclic CFG meets a back edge."""


@dataclass(frozen=True)
class Vreg:
    name: str

    def __repr__(self) -> str:
        return f"%{self.name}"


Value = Union[Vreg, bool, int, float]
QubitRef = Union[int, Vreg]


@dataclass(frozen=True)
class QGate:
    name: str
    qubits: tuple[QubitRef, ...]
    angle: Value | None = None


@dataclass(frozen=True)
class Measure:
    qubit: QubitRef
    slot: int


@dataclass(frozen=True)
class Reset:
    qubit: QubitRef


@dataclass(frozen=True)
class ReadResult:
    dst: Vreg
    slot: int


@dataclass(frozen=True)
class BinOp:
    op: str
    dst: Vreg
    a: Value
    b: Value


@dataclass(frozen=True)
class Cmp:
    op: str
    dst: Vreg
    a: Value
    b: Value


@dataclass(frozen=True)
class Output:
    kind: str
    slot: int | None = None


@dataclass(frozen=True)
class Call:
    callee: str
    args: tuple[Value, ...] = ()


Instruction = Union[QGate, Measure, Reset, ReadResult, BinOp, Cmp, Output, Call]


@dataclass(frozen=True)
class Jump:
    target: str


@dataclass(frozen=True)
class Branch:
    cond: Vreg
    then_target: str
    else_target: str


@dataclass(frozen=True)
class Return:
    pass


Terminator = Union[Jump, Branch, Return]


@dataclass(frozen=True)
class Phi:
    dst: Vreg
    incomings: tuple[tuple[Value, str], ...]


@dataclass(frozen=True)
class BasicBlock:
    label: str
    phis: tuple[Phi, ...]
    body: tuple[Instruction, ...]
    terminator: Terminator


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[Vreg, str], ...]  # (vreg, type) with type in {"int", "bool", "float", "qubit"}
    blocks: tuple[BasicBlock, ...]

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)


@dataclass(frozen=True)
class Module:
    name: str
    functions: tuple[Function, ...]
    entry: str
    required_qubits: int
    required_results: int

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def entry_function(self) -> Function:
        return self.function(self.entry)


def wrap_i64(v: int) -> int:
    """Wrap a Python int to signed 64-bit two's-complement."""
    return ((v - INT_MIN) & INT_MASK) + INT_MIN


def instr_defs(instr: Instruction) -> tuple[Vreg, ...]:
    if isinstance(instr, (BinOp, Cmp, ReadResult)):
        return (instr.dst,)
    return ()


def instr_uses(instr: Instruction) -> tuple[Vreg, ...]:
    uses: list[Vreg] = []
    if isinstance(instr, QGate):
        uses.extend(q for q in instr.qubits if isinstance(q, Vreg))
        if isinstance(instr.angle, Vreg):
            uses.append(instr.angle)
    elif isinstance(instr, (Measure, Reset)):
        if isinstance(instr.qubit, Vreg):
            uses.append(instr.qubit)
    elif isinstance(instr, (BinOp, Cmp)):
        uses.extend(v for v in (instr.a, instr.b) if isinstance(v, Vreg))
    elif isinstance(instr, Call):
        uses.extend(a for a in instr.args if isinstance(a, Vreg))
    return tuple(uses)


# ---------------------------------------------------------------------------
# Control-flow graph
# ---------------------------------------------------------------------------

UNCOND = "uncond"
TRUE_ARM = "true"
FALSE_ARM = "false"


@dataclass(frozen=True)
class CfgEdge:
    src: str
    dst: str
    condition: str  # UNCOND | TRUE_ARM | FALSE_ARM


@dataclass(frozen=True)
class Cfg:
    nodes: tuple[str, ...]  # in source order
    edges: tuple[CfgEdge, ...]

    @staticmethod
    def from_function(fn: Function) -> "Cfg":
        nodes = tuple(b.label for b in fn.blocks)
        edges: list[CfgEdge] = []
        for b in fn.blocks:
            t = b.terminator
            if isinstance(t, Jump):
                edges.append(CfgEdge(b.label, t.target, UNCOND))
            elif isinstance(t, Branch):
                edges.append(CfgEdge(b.label, t.then_target, TRUE_ARM))
                edges.append(CfgEdge(b.label, t.else_target, FALSE_ARM))
        return Cfg(nodes, tuple(edges))

    def successors(self, label: str) -> list[str]:
        return [e.dst for e in self.edges if e.src == label]

    def predecessors(self, label: str) -> list[str]:
        return [e.src for e in self.edges if e.dst == label]

    def in_edges(self, label: str) -> list[CfgEdge]:
        return [e for e in self.edges if e.dst == label]

    def is_acyclic(self) -> bool:
        try:
            topo_sort(self)
            return True
        except CycleDetected:
            return False


def topo_sort(cfg: Cfg) -> list[str]:
    """Topological order of CFG nodes; among ready nodes, source order wins.

    Raises CycleDetected when the graph has a back edge.
    """
    order_index = {n: i for i, n in enumerate(cfg.nodes)}
    indeg = {n: 0 for n in cfg.nodes}
    for e in cfg.edges:
        indeg[e.dst] += 1
    ready = sorted((n for n in cfg.nodes if indeg[n] == 0), key=order_index.__getitem__)
    out: list[str] = []
    while ready:
        n = ready.pop(0)
        out.append(n)
        changed = False
        for e in cfg.edges:
            if e.src == n:
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    ready.append(e.dst)
                    changed = True
        if changed:
            ready.sort(key=order_index.__getitem__)
    if len(out) != len(cfg.nodes):
        raise CycleDetected(f"back edge among blocks {sorted(set(cfg.nodes) - set(out))}")
    return out


# ---------------------------------------------------------------------------
# Profile validation
# ---------------------------------------------------------------------------

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    location: str = ""

    def __str__(self) -> str:
        loc = f" [{self.location}]" if self.location else ""
        return f"{self.severity}: {self.code}: {self.message}{loc}"


def diagnostics_ok(diags: list[Diagnostic]) -> bool:
    return not any(d.severity == ERROR for d in diags)


def _dominators(cfg: Cfg, entry: str) -> dict[str, set[str]]:
    """Classic iterative dominator sets; unreachable blocks dominate nothing."""
    nodes = list(cfg.nodes)
    preds = {n: cfg.predecessors(n) for n in nodes}
    dom: dict[str, set[str]] = {n: set(nodes) for n in nodes}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for n in nodes:
            if n == entry:
                continue
            ps = [p for p in preds[n]]
            if ps:
                new = set.intersection(*(dom[p] for p in ps)) | {n}
            else:
                new = {n}  # unreachable; treat as self-dominated
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


def validate_profile(module: Module, strict: bool = True) -> list[Diagnostic]:
    """Check a module against the executable profile.

    Lenient mode (``strict=False``) is meant for pre-flattening input: calls to
    defined functions are allowed and back edges only warn. Strict mode is the
    contract the backend relies on: acyclic CFG, no calls, literal rotation
    angles, literal qubit operands in the entry function.
    """
    diags: list[Diagnostic] = []
    fn_names = {f.name for f in module.functions}

    if module.entry not in fn_names:
        diags.append(Diagnostic(ERROR, "NO_ENTRY", f"entry function @{module.entry} not defined"))
        return diags

    for fn in module.functions:
        loc_fn = f"@{fn.name}"
        labels = [b.label for b in fn.blocks]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            diags.append(Diagnostic(ERROR, "DUP_LABEL", f"duplicate block labels {dupes}", loc_fn))
            continue
        if not fn.blocks:
            diags.append(Diagnostic(ERROR, "EMPTY_FUNC", "function has no blocks", loc_fn))
            continue

        cfg = Cfg.from_function(fn)
        label_set = set(labels)
        for b in fn.blocks:
            t = b.terminator
            targets = []
            if isinstance(t, Jump):
                targets = [t.target]
            elif isinstance(t, Branch):
                targets = [t.then_target, t.else_target]
            for tgt in targets:
                if tgt not in label_set:
                    diags.append(
                        Diagnostic(ERROR, "BAD_TARGET", f"branch target '{tgt}' does not exist", f"{loc_fn}:{b.label}")
                    )
        if any(d.code == "BAD_TARGET" for d in diags):
            continue

        back = not cfg.is_acyclic()
        if back:
            sev = ERROR if strict else WARNING
            diags.append(Diagnostic(sev, "BACK_EDGE", "control-flow graph has a back edge", loc_fn))

        # SSA: single definition, and (on acyclic graphs) dominance of uses.
        defs: dict[Vreg, str] = {}
        param_types = dict(fn.params)
        for v, _ty in fn.params:
            if v in defs:
                diags.append(Diagnostic(ERROR, "NON_SSA", f"parameter {v} redefined", loc_fn))
            defs[v] = "<param>"
        for b in fn.blocks:
            for phi in b.phis:
                if phi.dst in defs:
                    diags.append(Diagnostic(ERROR, "NON_SSA", f"{phi.dst} defined more than once", f"{loc_fn}:{b.label}"))
                defs[phi.dst] = b.label
            for instr in b.body:
                for d in instr_defs(instr):
                    if d in defs:
                        diags.append(Diagnostic(ERROR, "NON_SSA", f"{d} defined more than once", f"{loc_fn}:{b.label}"))
                    defs[d] = b.label

        def check_use(v: Vreg, using_block: str, pos: str, dom: dict[str, set[str]] | None) -> None:
            if v not in defs:
                diags.append(Diagnostic(ERROR, "USE_BEFORE_DEF", f"{v} used but never defined", f"{loc_fn}:{pos}"))
                return
            def_block = defs[v]
            if def_block == "<param>" or dom is None:
                return
            if def_block != using_block:
                if def_block not in dom.get(using_block, set()):
                    diags.append(
                        Diagnostic(ERROR, "USE_BEFORE_DEF", f"{v} not dominated by its definition", f"{loc_fn}:{pos}")
                    )

        dom = _dominators(cfg, fn.blocks[0].label) if not back else None
        for b in fn.blocks:
            seen_local: set[Vreg] = {p.dst for p in b.phis}
            # phi incoming labels must be exactly the CFG predecessors
            preds = sorted(cfg.predecessors(b.label))
            for phi in b.phis:
                inc_labels = sorted(l for _v, l in phi.incomings)
                if inc_labels != preds:
                    diags.append(
                        Diagnostic(
                            ERROR,
                            "PHI_PREDS",
                            f"phi {phi.dst} incomings {inc_labels} != predecessors {preds}",
                            f"{loc_fn}:{b.label}",
                        )
                    )
                for v, from_label in phi.incomings:
                    if isinstance(v, Vreg):
                        # a phi use happens at the end of the incoming edge
                        check_use(v, from_label, f"{b.label}(phi)", dom)
            for idx, instr in enumerate(b.body):
                pos = f"{b.label}#{idx}"
                for v in instr_uses(instr):
                    if defs.get(v) == b.label and v not in seen_local:
                        diags.append(Diagnostic(ERROR, "USE_BEFORE_DEF", f"{v} used before local definition", f"{loc_fn}:{pos}"))
                    else:
                        check_use(v, b.label, pos, dom)
                for d in instr_defs(instr):
                    seen_local.add(d)
                _validate_instr(module, fn, instr, diags, f"{loc_fn}:{pos}", fn_names, strict, param_types)
            if isinstance(b.terminator, Branch):
                c = b.terminator.cond
                check_use(c, b.label, f"{b.label}(br)", dom)

    entry_fn = module.entry_function
    if strict and entry_fn.params:
        diags.append(Diagnostic(ERROR, "ENTRY_PARAMS", "entry function must take no parameters", f"@{entry_fn.name}"))
    return diags


def _validate_instr(
    module: Module,
    fn: Function,
    instr: Instruction,
    diags: list[Diagnostic],
    loc: str,
    fn_names: set[str],
    strict: bool,
    param_types: dict[Vreg, str],
) -> None:
    def check_qubit(q: QubitRef) -> None:
        if isinstance(q, Vreg):
            if param_types.get(q) != "qubit":
                diags.append(Diagnostic(ERROR, "QUBIT_OPERAND", f"{q} is not a qubit-typed parameter", loc))
            elif strict:
                diags.append(Diagnostic(ERROR, "QUBIT_OPERAND", f"unresolved qubit operand {q}", loc))
        elif not (0 <= q < module.required_qubits):
            diags.append(
                Diagnostic(ERROR, "QUBIT_RANGE", f"qubit index {q} out of range [0, {module.required_qubits})", loc)
            )

    def check_slot(slot: int) -> None:
        if not (0 <= slot < module.required_results):
            diags.append(
                Diagnostic(ERROR, "RESULT_RANGE", f"result slot {slot} out of range [0, {module.required_results})", loc)
            )

    if isinstance(instr, QGate):
        if instr.name not in GATE_SET:
            diags.append(Diagnostic(ERROR, "UNKNOWN_GATE", f"unknown gate '{instr.name}'", loc))
            return
        want = 2 if instr.name in TWO_QUBIT_GATES else 1
        if len(instr.qubits) != want:
            diags.append(Diagnostic(ERROR, "GATE_ARITY", f"{instr.name} takes {want} qubit(s)", loc))
        if want == 2 and len(instr.qubits) == 2 and instr.qubits[0] == instr.qubits[1]:
            diags.append(Diagnostic(ERROR, "DUP_QUBIT", f"{instr.name} operands must be distinct", loc))
        if instr.name in ROTATION_GATES:
            if instr.angle is None:
                diags.append(Diagnostic(ERROR, "ANGLE_MISSING", f"{instr.name} requires an angle operand", loc))
            elif strict and isinstance(instr.angle, Vreg):
                diags.append(Diagnostic(ERROR, "ANGLE_NONCONST", f"{instr.name} angle must be a literal after folding", loc))
        elif instr.angle is not None:
            diags.append(Diagnostic(ERROR, "ANGLE_UNEXPECTED", f"{instr.name} takes no angle", loc))
        for q in instr.qubits:
            check_qubit(q)
    elif isinstance(instr, Measure):
        check_qubit(instr.qubit)
        check_slot(instr.slot)
    elif isinstance(instr, Reset):
        check_qubit(instr.qubit)
    elif isinstance(instr, ReadResult):
        check_slot(instr.slot)
    elif isinstance(instr, BinOp):
        if instr.op not in BINOPS:
            diags.append(Diagnostic(ERROR, "BAD_OP", f"unknown binop '{instr.op}'", loc))
    elif isinstance(instr, Cmp):
        if instr.op not in CMPOPS:
            diags.append(Diagnostic(ERROR, "BAD_OP", f"unknown comparison '{instr.op}'", loc))
    elif isinstance(instr, Output):
        if instr.kind not in OUTPUT_KINDS:
            diags.append(Diagnostic(ERROR, "BAD_OUTPUT", f"unknown output kind '{instr.kind}'", loc))
        elif instr.kind == "result":
            if instr.slot is None:
                diags.append(Diagnostic(ERROR, "BAD_OUTPUT", "output result needs a slot", loc))
            else:
                check_slot(instr.slot)
    elif isinstance(instr, Call):
        if instr.callee not in fn_names:
            diags.append(Diagnostic(ERROR, "UNRESOLVED_CALL", f"call to undefined @{instr.callee}", loc))
        elif strict:
            diags.append(Diagnostic(ERROR, "CALL_IN_PROFILE", f"call to @{instr.callee} must be flattened", loc))
        else:
            callee = module.function(instr.callee)
            if len(callee.params) != len(instr.args):
                diags.append(
                    Diagnostic(ERROR, "CALL_ARITY", f"@{instr.callee} takes {len(callee.params)} args", loc)
                )


def iter_instructions(fn: Function) -> Iterator[tuple[str, int, Instruction]]:
    for b in fn.blocks:
        for i, instr in enumerate(b.body):
            yield b.label, i, instr
