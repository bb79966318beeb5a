"""Chaitin-style register allocation for the guarded linear form.

Virtual registers cannot be reused (single assignment), but the real-time
target has only K classical memory cells. Liveness over the linearized
guarded instruction sequence gives one half-open interval per vreg;
overlapping intervals interfere; graph coloring maps vregs onto cells.
There is no spilling: if the simplify loop gets stuck, compilation fails
with a register-pressure error.

Result slots are a separate pre-sized file addressed directly by
measurements and are not subject to coloring.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import BinOp, Cmp, QGate, ReadResult, Value, Vreg, instr_defs, instr_uses
from .predication import GuardedBlock, GuardedFunction, GuardVal, OrVal, Select, guard_vregs

PRESSURE_MESSAGE = "register pressure exceeds real-time register file"


class RegisterPressureExceeded(Exception):
    def __init__(self, needed_hint: int, k: int):
        self.needed_hint = needed_hint
        self.k = k
        super().__init__(f"{PRESSURE_MESSAGE} (K={k}, a clique needs at least {needed_hint})")


@dataclass(frozen=True)
class PReg:
    """A physical real-time register, the output alphabet of coloring."""

    index: int

    def __repr__(self) -> str:
        return f"R{self.index}"


@dataclass(frozen=True)
class BlockSpan:
    """Linear instruction indices of one guarded block."""

    label: str
    prelude_start: int
    guard_index: int  # virtual slot where the predicate is evaluated
    body_start: int
    body_end: int  # exclusive


def linearize(gf: GuardedFunction) -> list[BlockSpan]:
    spans = []
    idx = 0
    for b in gf.blocks:
        p0 = idx
        idx += len(b.prelude)
        gidx = idx
        idx += 1  # guard evaluation slot
        b0 = idx
        idx += len(b.body)
        spans.append(BlockSpan(b.label, p0, gidx, b0, idx))
    return spans


def _instr_use_list(ins) -> tuple[Vreg, ...]:
    if isinstance(ins, Select):
        return tuple(v for v in (ins.cond, ins.a, ins.b) if isinstance(v, Vreg))
    return instr_uses(ins)


def _instr_def(ins) -> Vreg | None:
    if isinstance(ins, Select):
        return ins.dst
    d = instr_defs(ins)
    return d[0] if d else None


def compute_liveness(
    gf: GuardedFunction, extra_uses: tuple[tuple[Vreg, int], ...] = ()
) -> dict[Vreg, tuple[int, int]]:
    """Half-open live interval [def, last_use+1) per vreg.

    A block's predicate reads its guard vregs at the guard slot and holds
    them live through the whole body. ``extra_uses`` lets the backend pin
    guards of transport-sharing block runs live through the run.
    """
    spans = linearize(gf)
    start: dict[Vreg, int] = {}
    end: dict[Vreg, int] = {}

    def use(v: Vreg, at: int) -> None:
        end[v] = max(end.get(v, at + 1), at + 1)

    for b, span in zip(gf.blocks, spans):
        idx = span.prelude_start
        for ins in b.prelude:
            for v in _instr_use_list(ins):
                use(v, idx)
            d = _instr_def(ins)
            if d is not None:
                start.setdefault(d, idx)
            idx += 1
        for v in guard_vregs(b.guard):
            use(v, span.guard_index)
            if span.body_end > span.body_start:
                use(v, span.body_end - 1)
        idx = span.body_start
        for ins in b.body:
            for v in _instr_use_list(ins):
                use(v, idx)
            d = _instr_def(ins)
            if d is not None:
                start.setdefault(d, idx)
            idx += 1
    for v, at in extra_uses:
        use(v, at)

    ranges: dict[Vreg, tuple[int, int]] = {}
    for v, s in start.items():
        e = end.get(v, s)  # unused defs get an empty range
        ranges[v] = (s, max(e, s))
    return ranges


@dataclass(frozen=True)
class InterferenceGraph:
    nodes: tuple[Vreg, ...]  # in definition order
    edges: frozenset[frozenset]

    def degree(self, v: Vreg) -> int:
        return sum(1 for e in self.edges if v in e)

    def neighbors(self, v: Vreg) -> list[Vreg]:
        out = []
        for e in self.edges:
            if v in e:
                (other,) = [x for x in e if x != v] or [v]
                out.append(other)
        return out


def build_interference(ranges: dict[Vreg, tuple[int, int]]) -> InterferenceGraph:
    """Edges between vregs whose live intervals overlap (half-open)."""
    live = [(v, s, e) for v, (s, e) in ranges.items() if e > s]
    live.sort(key=lambda t: (t[1], t[2], t[0].name))
    nodes = tuple(v for v, _s, _e in live)
    edges: set[frozenset] = set()
    active: list[tuple[int, Vreg]] = []  # (end, vreg)
    for v, s, e in live:
        active = [(ae, av) for ae, av in active if ae > s]
        for _ae, av in active:
            edges.add(frozenset((av, v)))
        active.append((e, v))
    return InterferenceGraph(nodes, frozenset(edges))


@dataclass(frozen=True)
class RegFile:
    k: int
    assignment: dict[Vreg, int]


def max_overlap_depth(ranges: dict[Vreg, tuple[int, int]]) -> int:
    events: list[tuple[int, int]] = []
    for s, e in ranges.values():
        if e > s:
            events.append((s, 1))
            events.append((e, -1))
    depth = best = 0
    for _pos, d in sorted(events):
        depth += d
        best = max(best, depth)
    return best


def color(graph: InterferenceGraph, k: int) -> RegFile:
    """Chaitin simplify/select; raises RegisterPressureExceeded, no spilling."""
    if k < 1:
        raise ValueError("need at least one register")
    order = {v: i for i, v in enumerate(graph.nodes)}
    adj: dict[Vreg, set[Vreg]] = {v: set() for v in graph.nodes}
    for e in graph.edges:
        pair = tuple(e)
        if len(pair) == 2:
            a, b = pair
            adj[a].add(b)
            adj[b].add(a)
    remaining = set(graph.nodes)
    degree = {v: len(adj[v]) for v in graph.nodes}
    stack: list[Vreg] = []
    while remaining:
        candidates = [v for v in remaining if degree[v] < k]
        if not candidates:
            hint = _greedy_clique(adj, remaining)
            raise RegisterPressureExceeded(hint, k)
        v = min(candidates, key=order.__getitem__)
        stack.append(v)
        remaining.remove(v)
        for u in adj[v]:
            if u in remaining:
                degree[u] -= 1
    assignment: dict[Vreg, int] = {}
    for v in reversed(stack):
        used = {assignment[u] for u in adj[v] if u in assignment}
        c = next(i for i in range(k) if i not in used)
        assignment[v] = c
    return RegFile(k, assignment)


def _greedy_clique(adj: dict[Vreg, set[Vreg]], remaining: set[Vreg]) -> int:
    seed = max(remaining, key=lambda v: len(adj[v] & remaining))
    clique = {seed}
    for v in sorted(remaining, key=lambda v: v.name):
        if v not in clique and all(v in adj[c] for c in clique):
            clique.add(v)
    return len(clique)


# ---------------------------------------------------------------------------
# Rewriting vregs onto physical registers
# ---------------------------------------------------------------------------

def _map_value(v: Value, assignment: dict[Vreg, int]):
    if isinstance(v, Vreg):
        return PReg(assignment[v])
    return v


def _map_guard(gv: GuardVal, assignment: dict[Vreg, int]):
    if isinstance(gv, Vreg):
        return PReg(assignment[gv])
    if isinstance(gv, OrVal):
        return OrVal(tuple(_map_guard(p, assignment) for p in gv.parts))
    return gv


def rewrite(gf: GuardedFunction, regfile: RegFile) -> GuardedFunction:
    """Replace vregs by physical registers; drop definitions never read."""
    asg = regfile.assignment

    def is_dead(ins) -> bool:
        d = _instr_def(ins)
        return d is not None and d not in asg

    def mapi(ins):
        if isinstance(ins, Select):
            return Select(_map_value(ins.dst, asg), _map_value(ins.cond, asg), _map_value(ins.a, asg), _map_value(ins.b, asg))
        if isinstance(ins, BinOp):
            return BinOp(ins.op, _map_value(ins.dst, asg), _map_value(ins.a, asg), _map_value(ins.b, asg))
        if isinstance(ins, Cmp):
            return Cmp(ins.op, _map_value(ins.dst, asg), _map_value(ins.a, asg), _map_value(ins.b, asg))
        if isinstance(ins, ReadResult):
            return ReadResult(_map_value(ins.dst, asg), ins.slot)
        if isinstance(ins, QGate):
            return QGate(ins.name, ins.qubits, ins.angle)
        return ins

    blocks = []
    for b in gf.blocks:
        prelude = tuple(mapi(i) for i in b.prelude if not is_dead(i))
        body = tuple(mapi(i) for i in b.body if not is_dead(i))
        blocks.append(GuardedBlock(b.label, prelude, _map_guard(b.guard, asg), b.symbolic, body))
    return GuardedFunction(gf.name, tuple(blocks), gf.new_vregs, gf.branch_count, gf.phi_count)
