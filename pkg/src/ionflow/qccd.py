"""Backend for a linear QCCD trap: placement, gate layering, transport, lowering.

The machine is a line of slots; disjoint pairs of adjacent slots form gate
zones where gates, measurements and resets happen. Ions move by parallel
layers of disjoint adjacent swaps (one layer = one transport step, the cost
unit throughout).

Lowering turns the register-rewritten guarded form into a flat executable
program. Blocks that carry quantum operations are grouped into *transport
chains*: a run of consecutive gate-bearing blocks in which each block's
predicate syntactically implies its predecessor's. Within a chain the ion
placement flows from block to block and every transport step is guarded by
the *chain entry* predicate (the weakest one); gates keep their own block
predicates. Each chain starts from the canonical placement and its final
transport restores it, so skipping any whole chain leaves the machine
placement-consistent. Under conditional transport a false chain guard skips
gates and transport together; the always-transport mode executes every
transport step regardless and only the gates stay conditional. Chains are
exactly what makes control-flow shape visible in executed-transport counts:
a bigger, branchier guarded program funnels more blocks into chains whose
entry guard is weak, so more transport runs per shot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

from .ir import Instruction, Measure, Module, Output, QGate, Reset
from .predication import GuardedFunction, OrVal, guard_vregs, sym_implies
from .regalloc import BlockSpan, PReg


class Unreachable(Exception):
    """Transport search failed; cannot happen on a connected linear trap."""


@dataclass(frozen=True)
class TrapLayout:
    slots: int
    gate_zones: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for a, b in self.gate_zones:
            if b != a + 1:
                raise ValueError(f"gate zone ({a},{b}) is not an adjacent pair")
            if a in seen or b in seen or a < 0 or b >= self.slots:
                raise ValueError(f"gate zone ({a},{b}) overlaps another zone or the trap edge")
            seen.update((a, b))
        if not self.gate_zones:
            raise ValueError("trap needs at least one gate zone")

    @staticmethod
    def default(n_qubits: int) -> "TrapLayout":
        slots = max(n_qubits, 4)
        n_zones = min(slots // 2, 5)
        zones = tuple((2 * i, 2 * i + 1) for i in range(n_zones))
        return TrapLayout(slots, zones)

    @staticmethod
    def from_json(text: str) -> "TrapLayout":
        data = json.loads(text)
        return TrapLayout(int(data["slots"]), tuple((int(a), int(b)) for a, b in data["gate_zones"]))

    def to_json(self) -> str:
        return json.dumps({"slots": self.slots, "gate_zones": [list(z) for z in self.gate_zones]})


Placement = tuple[int, ...]  # qubit index -> slot index, injective
TransportStep = tuple[tuple[int, int], ...]  # disjoint adjacent slot swaps, sorted


def apply_step(placement: Placement, step: TransportStep) -> Placement:
    out = list(placement)
    for a, b in step:
        for q, s in enumerate(out):
            if s == a:
                out[q] = b
            elif s == b:
                out[q] = a
    return tuple(out)


def all_steps(slots: int) -> list[TransportStep]:
    """Every nonempty set of disjoint adjacent swaps, lexicographically."""
    out: list[TransportStep] = []

    def rec(start: int, acc: list[tuple[int, int]]) -> None:
        for a in range(start, slots - 1):
            acc.append((a, a + 1))
            out.append(tuple(acc))
            rec(a + 2, acc)
            acc.pop()

    rec(0, [])
    out.sort()
    return out


# ---------------------------------------------------------------------------
# Initial placement (layered barycenter sweeps)
# ---------------------------------------------------------------------------

def interaction_weights(module: Module) -> dict[tuple[int, int], int]:
    w: dict[tuple[int, int], int] = {}
    for fn in module.functions:
        for b in fn.blocks:
            for ins in b.body:
                if isinstance(ins, QGate) and len(ins.qubits) == 2:
                    a, c = ins.qubits
                    if isinstance(a, int) and isinstance(c, int):
                        key = (min(a, c), max(a, c))
                        w[key] = w.get(key, 0) + 1
    return w


def place_initial(module: Module, trap: TrapLayout, sweeps: int = 4) -> Placement:
    """One-dimensional qubit order from damped barycenter sweeps.

    Each sweep moves every qubit toward the average position of its
    two-qubit-gate partners (weighted by gate count, current position
    included for stability) and stable-sorts, so ties keep source order
    and the result is deterministic.
    """
    n = module.required_qubits
    if n > trap.slots:
        raise ValueError(f"{n} qubits do not fit in {trap.slots} slots")
    weights = interaction_weights(module)
    order = list(range(n))
    for _ in range(max(sweeps, 4)):
        pos = {q: i for i, q in enumerate(order)}
        keys = {}
        for q in order:
            total = pos[q]
            wsum = 1
            for (a, b), w in weights.items():
                if a == q:
                    total += w * pos[b]
                    wsum += w
                elif b == q:
                    total += w * pos[a]
                    wsum += w
            keys[q] = total / wsum
        order.sort(key=lambda q: keys[q])  # python sort is stable
    placement = [0] * n
    for slot, q in enumerate(order):
        placement[q] = slot
    return tuple(placement)


def arrangement_cost(placement: Placement, weights: dict[tuple[int, int], int]) -> int:
    return sum(w * abs(placement[a] - placement[b]) for (a, b), w in weights.items())


# ---------------------------------------------------------------------------
# Gate layering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlacedOp:
    kind: str  # "gate" | "measure" | "reset"
    name: str | None
    qubits: tuple[int, ...]
    angle: float | None
    slot: int | None  # result slot for measures
    zone: tuple[int, int]


@dataclass(frozen=True)
class GateLayer:
    ops: tuple[PlacedOp, ...]


def schedule_layers(ops: list[Instruction], trap: TrapLayout) -> list[GateLayer]:
    """Greedy list scheduling: earliest layer with free operands and a free zone."""
    layers: list[list[PlacedOp]] = []
    zone_used: list[set[int]] = []
    qubit_free: dict[int, int] = {}

    for ins in ops:
        if isinstance(ins, QGate):
            placed = PlacedOp("gate", ins.name, tuple(ins.qubits), ins.angle, None, (0, 0))
        elif isinstance(ins, Measure):
            placed = PlacedOp("measure", None, (ins.qubit,), None, ins.slot, (0, 0))
        elif isinstance(ins, Reset):
            placed = PlacedOp("reset", None, (ins.qubit,), None, None, (0, 0))
        else:  # pragma: no cover
            raise TypeError(f"not a quantum op: {ins!r}")
        earliest = max((qubit_free.get(q, 0) for q in placed.qubits), default=0)
        l = earliest
        while True:
            while len(layers) <= l:
                layers.append([])
                zone_used.append(set())
            free = [z for z in range(len(trap.gate_zones)) if z not in zone_used[l]]
            if free:
                zone = free[0]
                break
            l += 1
        zone_used[l].add(zone)
        layers[l].append(PlacedOp(placed.kind, placed.name, placed.qubits, placed.angle, placed.slot, trap.gate_zones[zone]))
        for q in placed.qubits:
            qubit_free[q] = l + 1

    return [GateLayer(tuple(ops_)) for ops_ in layers if ops_]


# ---------------------------------------------------------------------------
# Transport planning
# ---------------------------------------------------------------------------

BFS_EXACT_LIMIT = 7


def _layer_goal(placement: Placement, layer: GateLayer) -> bool:
    for op in layer.ops:
        zone = set(op.zone)
        slots = {placement[q] for q in op.qubits}
        if len(op.qubits) == 2:
            if slots != zone:
                return False
        elif not slots <= zone:
            return False
    return True


def plan_transport(current: Placement, layer: GateLayer, trap: TrapLayout) -> tuple[list[TransportStep], Placement]:
    """Minimum parallel-swap-layer plan bringing the layer's operands into
    their zones; exact BFS for small ion counts, greedy routing beyond."""
    if _layer_goal(current, layer):
        return [], current
    if len(current) <= BFS_EXACT_LIMIT:
        return _bfs_plan(current, lambda p: _layer_goal(p, layer), trap)
    target = _greedy_targets(current, layer, trap)
    return _route_to_targets(current, target, trap)


def plan_restore(current: Placement, canonical: Placement, trap: TrapLayout) -> tuple[list[TransportStep], Placement]:
    if current == canonical:
        return [], current
    if len(current) <= BFS_EXACT_LIMIT:
        return _bfs_plan(current, lambda p: p == canonical, trap)
    return _route_to_targets(current, canonical, trap)


def _bfs_plan(current: Placement, goal, trap: TrapLayout) -> tuple[list[TransportStep], Placement]:
    steps = all_steps(trap.slots)
    seen = {current}
    frontier: list[tuple[Placement, tuple[TransportStep, ...]]] = [(current, ())]
    while frontier:
        nxt: list[tuple[Placement, tuple[TransportStep, ...]]] = []
        for pl, path in frontier:
            for st in steps:
                p2 = apply_step(pl, st)
                if p2 in seen:
                    continue
                path2 = path + (st,)
                if goal(p2):
                    return list(path2), p2
                seen.add(p2)
                nxt.append((p2, path2))
        frontier = nxt
    raise Unreachable("transport search exhausted the placement space")


def _greedy_targets(current: Placement, layer: GateLayer, trap: TrapLayout) -> Placement:
    """Pick concrete target slots for every ion (layer operands into zones,
    spectators keeping relative order), lower qubit index first on ties."""
    n = len(current)
    target: dict[int, int] = {}
    taken: set[int] = set()
    for op in sorted(layer.ops, key=lambda o: min(o.qubits)):
        if len(op.qubits) == 2:
            a, b = op.qubits
            s1, s2 = op.zone
            if abs(current[a] - s1) + abs(current[b] - s2) <= abs(current[a] - s2) + abs(current[b] - s1):
                target[a], target[b] = s1, s2
            else:
                target[a], target[b] = s2, s1
            taken.update(op.zone)
        else:
            (q,) = op.qubits
            s1, s2 = op.zone
            free = [s for s in (s1, s2) if s not in taken]
            s = min(free, key=lambda s: abs(current[q] - s))
            target[q] = s
            taken.add(s)
    rest = sorted((q for q in range(n) if q not in target), key=lambda q: current[q])
    free_slots = sorted(set(range(trap.slots)) - set(target.values()))
    for q, s in zip(rest, free_slots):
        target[q] = s
    return tuple(target[q] for q in range(n))


def _route_to_targets(current: Placement, target: Placement, trap: TrapLayout) -> tuple[list[TransportStep], Placement]:
    """Odd-even transposition routing toward a full target placement.

    Each slot's content gets a destination key (empty slots absorb the unused
    destinations in order); parallel passes swap adjacent inversions until
    sorted, which needs at most one pass per slot.
    """
    slots = trap.slots
    occupant: dict[int, int] = {s: q for q, s in enumerate(current)}
    free_targets = sorted(set(range(slots)) - set(target))
    keys: list[int] = []
    fi = 0
    for s in range(slots):
        q = occupant.get(s)
        if q is None:
            keys.append(free_targets[fi])
            fi += 1
        else:
            keys.append(target[q])
    plan: list[TransportStep] = []
    pl = current
    for _pass in range(slots + 1):
        moved = False
        for parity in (0, 1):
            swaps = tuple((s, s + 1) for s in range(parity, slots - 1, 2) if keys[s] > keys[s + 1])
            if swaps:
                for a, b in swaps:
                    keys[a], keys[b] = keys[b], keys[a]
                plan.append(swaps)
                pl = apply_step(pl, swaps)
                moved = True
        if not moved:
            break
    if pl != target:  # pragma: no cover - odd-even sort always terminates
        raise Unreachable("greedy routing did not reach the target placement")
    return plan, pl


# ---------------------------------------------------------------------------
# Transport chains
# ---------------------------------------------------------------------------

def block_quantum_ops(body: tuple[Instruction, ...]) -> list[list[Instruction]]:
    """Split a body into runs of quantum ops separated by classical barriers."""
    runs: list[list[Instruction]] = []
    cur: list[Instruction] = []
    for ins in body:
        if isinstance(ins, (QGate, Measure, Reset)):
            cur.append(ins)
        else:
            if cur:
                runs.append(cur)
                cur = []
    if cur:
        runs.append(cur)
    return runs


def is_gate_bearing(body: tuple[Instruction, ...]) -> bool:
    return any(isinstance(i, (QGate, Measure, Reset)) for i in body)


@dataclass(frozen=True)
class Chain:
    """Consecutive gate-bearing blocks sharing one transport predicate."""

    members: tuple[int, ...]  # indices into gf.blocks
    entry_guard_block: int  # index of the block whose guard gates the transport


def compute_chains(gf: GuardedFunction) -> list[Chain]:
    chains: list[Chain] = []
    members: list[int] = []
    last_sym = None
    for i, b in enumerate(gf.blocks):
        if not is_gate_bearing(b.body):
            continue
        if members and last_sym is not None and sym_implies(b.symbolic, last_sym):
            members.append(i)
        else:
            if members:
                chains.append(Chain(tuple(members), members[0]))
            members = [i]
        last_sym = b.symbolic
    if members:
        chains.append(Chain(tuple(members), members[0]))
    return chains


def chain_liveness_uses(gf: GuardedFunction, chains: list[Chain], spans: list[BlockSpan]):
    """Extra liveness uses pinning each chain's entry guard to the chain end."""
    extra = []
    for ch in chains:
        g = gf.blocks[ch.entry_guard_block].guard
        end_span = spans[ch.members[-1]]
        for v in guard_vregs(g):
            extra.append((v, end_span.body_end))
    return tuple(extra)


# ---------------------------------------------------------------------------
# Executable program
# ---------------------------------------------------------------------------

ExecGuard = Union[bool, PReg, OrVal]


@dataclass(frozen=True)
class ClassicalItem:
    guard: ExecGuard
    instrs: tuple  # BinOp / Cmp / Select / ReadResult over PRegs


@dataclass(frozen=True)
class TransportItem:
    guard: ExecGuard  # chain entry guard; ignored in always-transport mode
    steps: tuple[TransportStep, ...]


@dataclass(frozen=True)
class LayerItem:
    guard: ExecGuard
    ops: tuple[PlacedOp, ...]
    expected_slots: tuple[tuple[int, int], ...]  # (qubit, slot) the plan assumes
    idle_qubits: tuple[int, ...]


@dataclass(frozen=True)
class OutputItem:
    guard: ExecGuard
    kind: str
    slot: int | None


@dataclass(frozen=True)
class MarkItem:
    guard: ExecGuard
    label: str


ExecItem = Union[ClassicalItem, TransportItem, LayerItem, OutputItem, MarkItem]

CONDITIONAL = "conditional"
ALWAYS = "always"


@dataclass(frozen=True)
class ExecProgram:
    name: str
    n_qubits: int
    n_results: int
    n_regs: int
    trap: TrapLayout
    canonical: Placement
    conditional_transport: bool
    items: tuple[ExecItem, ...]

    @property
    def planned_transport_steps(self) -> int:
        return sum(len(it.steps) for it in self.items if isinstance(it, TransportItem))

    def to_json(self) -> str:
        def enc(o):
            if isinstance(o, PReg):
                return {"reg": o.index}
            if isinstance(o, OrVal):
                return {"or": [enc(p) for p in o.parts]}
            return o

        items = []
        for it in self.items:
            if isinstance(it, ClassicalItem):
                items.append({"kind": "classical", "guard": enc(it.guard), "ops": [repr(i) for i in it.instrs]})
            elif isinstance(it, TransportItem):
                items.append({"kind": "transport", "guard": enc(it.guard), "steps": [list(map(list, s)) for s in it.steps]})
            elif isinstance(it, LayerItem):
                items.append(
                    {
                        "kind": "layer",
                        "guard": enc(it.guard),
                        "ops": [
                            {"op": op.kind, "name": op.name, "qubits": list(op.qubits), "angle": op.angle,
                             "slot": op.slot, "zone": list(op.zone)}
                            for op in it.ops
                        ],
                    }
                )
            elif isinstance(it, OutputItem):
                items.append({"kind": "output", "guard": enc(it.guard), "output": it.kind, "slot": it.slot})
            else:
                items.append({"kind": "block", "guard": enc(it.guard), "label": it.label})
        return json.dumps(
            {
                "name": self.name,
                "qubits": self.n_qubits,
                "results": self.n_results,
                "registers": self.n_regs,
                "trap": {"slots": self.trap.slots, "gate_zones": [list(z) for z in self.trap.gate_zones]},
                "canonical_placement": list(self.canonical),
                "conditional_transport": self.conditional_transport,
                "planned_transport_steps": self.planned_transport_steps,
                "items": items,
            },
            indent=2,
        )


def lower(
    gf: GuardedFunction,
    module: Module,
    trap: TrapLayout,
    mode: str = CONDITIONAL,
    n_regs: int = 64,
    canonical: Placement | None = None,
) -> ExecProgram:
    """Emit the flat executable program with per-chain transport plans."""
    if mode not in (CONDITIONAL, ALWAYS):
        raise ValueError(f"unknown transport mode '{mode}'")
    if canonical is None:
        canonical = place_initial(module, trap)
    chains = compute_chains(gf)
    chain_of_block: dict[int, Chain] = {}
    for ch in chains:
        for m in ch.members:
            chain_of_block[m] = ch

    items: list[ExecItem] = []
    placement = canonical
    n = module.required_qubits
    all_qubits = set(range(n))

    for i, b in enumerate(gf.blocks):
        items.append(MarkItem(b.guard, b.label))
        if b.prelude:
            items.append(ClassicalItem(True, tuple(b.prelude)))
        ch = chain_of_block.get(i)
        chain_guard = gf.blocks[ch.entry_guard_block].guard if ch else b.guard
        run_iter = iter(block_quantum_ops(b.body))
        for ins in _body_segments(b.body):
            if ins == "quantum":
                run = next(run_iter)
                for layer in schedule_layers(run, trap):
                    steps, placement = plan_transport(placement, layer, trap)
                    if steps:
                        items.append(TransportItem(chain_guard, tuple(steps)))
                    expected = tuple((q, placement[q]) for op in layer.ops for q in op.qubits)
                    busy = {q for op in layer.ops for q in op.qubits}
                    items.append(LayerItem(b.guard, layer.ops, expected, tuple(sorted(all_qubits - busy))))
            elif isinstance(ins, Output):
                items.append(OutputItem(b.guard, ins.kind, ins.slot))
            else:
                items.append(ClassicalItem(b.guard, (ins,)))
        if ch and i == ch.members[-1]:
            steps, placement = plan_restore(placement, canonical, trap)
            if steps:
                items.append(TransportItem(chain_guard, tuple(steps)))
            assert placement == canonical

    return ExecProgram(
        name=gf.name,
        n_qubits=n,
        n_results=module.required_results,
        n_regs=n_regs,
        trap=trap,
        canonical=canonical,
        conditional_transport=(mode == CONDITIONAL),
        items=tuple(items),
    )


def _body_segments(body: tuple[Instruction, ...]):
    """Yield 'quantum' markers for runs of quantum ops and the classical
    instructions themselves, preserving program order."""
    in_run = False
    for ins in body:
        if isinstance(ins, (QGate, Measure, Reset)):
            if not in_run:
                yield "quantum"
                in_run = True
        else:
            in_run = False
            yield ins
