"""Shot-based execution of lowered programs with stochastic Pauli noise.

A shot walks the flat item list with a state vector, a result-slot file, K
integer registers (all zero-initialized), and the current ion placement.
Noise is trajectory-based: depolarizing after gates, dephasing per executed
transport step and per idle layer, classical flips on measurement records
and resets, and a systematic over-rotation added to every rotation angle.

Transport items carry the entry predicate of their chain. In conditional
mode a false predicate skips the steps entirely (no counter increase, no
transport dephasing); in always mode every transport item executes and only
gates, measurements and classical operations remain predicated.

``enumerate_outcomes`` is the exact noiseless counterpart: it branches on
every measurement (and on resets of entangled qubits) and returns the full
output distribution, within a configurable branching budget.

Determinism: shot ``i`` draws from ``SeedSequence(master_seed, spawn_key=(i,))``,
so results are independent of parallelism and always merged in shot order.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import gates as G
from .ir import BinOp, Cmp, ReadResult
from .passes import _eval_binop, _eval_cmp
from .predication import OrVal, Select
from .qccd import (
    ClassicalItem,
    ExecProgram,
    LayerItem,
    MarkItem,
    OutputItem,
    PlacedOp,
    TransportItem,
    apply_step,
)
from .regalloc import PReg


class ZoneViolation(Exception):
    """An operation ran while its ions were not in the planned zone slots."""


class TooManyBranches(Exception):
    pass


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.0  # depolarizing prob per 1-qubit gate
    p2: float = 0.0  # depolarizing prob per 2-qubit gate
    p_meas: float = 0.0  # recorded-bit flip prob per measurement
    p_reset: float = 0.0  # |1> flip prob after reset
    p_transport: float = 0.0  # Z-dephasing prob per ion per executed transport step
    p_idle: float = 0.0  # Z-dephasing prob per ion per gate layer it sits out
    prep_overrotation: float = 0.0  # systematic angle error added to rotations

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "p_meas", "p_reset", "p_transport", "p_idle"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def is_noiseless(self) -> bool:
        return self == NOISELESS

    @staticmethod
    def from_json(text: str) -> "NoiseModel":
        import json

        return NoiseModel(**json.loads(text))


NOISELESS = NoiseModel()

# Synthetic defaults only: plausible magnitudes, not measured device data.
H1E_LIKE = NoiseModel(p1=1e-4, p2=3e-3, p_meas=3e-3, p_reset=3e-3, p_transport=2e-4, p_idle=1e-4)


@dataclass(frozen=True)
class ShotResult:
    outputs: tuple
    slots: tuple[int, ...]
    executed_transport_steps: int
    executed_gates: int
    skipped_blocks: int
    measures_per_qubit: tuple[int, ...]
    seed: int


_BIT_INDEX_CACHE: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}


def _bit_indices(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    cached = _BIT_INDEX_CACHE.get(n)
    if cached is not None:
        return cached
    out = []
    idx = np.arange(1 << n)
    for q in range(n):
        zeros = idx[(idx >> q) & 1 == 0]
        out.append((zeros, zeros | (1 << q)))
    _BIT_INDEX_CACHE[n] = out
    return out


def apply_1q(state: np.ndarray, u: np.ndarray, q: int, n: int) -> None:
    i0, i1 = _bit_indices(n)[q]
    a0 = state[i0]
    a1 = state[i1]
    state[i0] = u[0, 0] * a0 + u[0, 1] * a1
    state[i1] = u[1, 0] * a0 + u[1, 1] * a1


def apply_cx(state: np.ndarray, control: int, target: int, n: int) -> None:
    idx = np.arange(state.size)
    sel = ((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)
    i0 = idx[sel]
    i1 = i0 | (1 << target)
    state[i0], state[i1] = state[i1].copy(), state[i0].copy()


def measure_prob_one(state: np.ndarray, q: int, n: int) -> float:
    _i0, i1 = _bit_indices(n)[q]
    return float(np.sum(np.abs(state[i1]) ** 2))


def collapse(state: np.ndarray, q: int, outcome: int, prob: float, n: int) -> None:
    i0, i1 = _bit_indices(n)[q]
    kill = i1 if outcome == 0 else i0
    state[kill] = 0.0
    state /= np.sqrt(prob)


def apply_gate(state: np.ndarray, op: PlacedOp, placement: tuple[int, ...], n: int, overrot: float = 0.0) -> None:
    """Unitary application with the dynamic gate-zone check."""
    _check_zone(op, placement)
    if op.name == "cx":
        apply_cx(state, op.qubits[0], op.qubits[1], n)
        return
    angle = op.angle
    if angle is not None:
        angle = float(angle) + overrot
    apply_1q(state, G.gate_unitary(op.name, angle), op.qubits[0], n)


def _check_zone(op: PlacedOp, placement: tuple[int, ...]) -> None:
    zone = set(op.zone)
    slots = {placement[q] for q in op.qubits}
    ok = slots == zone if len(op.qubits) == 2 else slots <= zone
    if not ok:
        raise ZoneViolation(f"{op.kind} {op.name or ''} on qubits {op.qubits} at slots {sorted(slots)}, zone {op.zone}")


def apply_depolarizing(state: np.ndarray, qubits: tuple[int, ...], p: float, n: int, rng: np.random.Generator) -> None:
    """With probability p, a uniformly random non-identity Pauli on the operands."""
    if p <= 0.0 or rng.random() >= p:
        return
    n_paulis = 4 ** len(qubits) - 1
    choice = int(rng.integers(1, n_paulis + 1))
    for q in qubits:
        pauli = choice & 3
        choice >>= 2
        if pauli == 1:
            apply_1q(state, G.X, q, n)
        elif pauli == 2:
            apply_1q(state, G.Y, q, n)
        elif pauli == 3:
            apply_1q(state, G.Z, q, n)


def apply_dephasing(state: np.ndarray, q: int, p: float, n: int, rng: np.random.Generator) -> None:
    if p > 0.0 and rng.random() < p:
        apply_1q(state, G.Z, q, n)


def eval_exec_guard(g, regs: list) -> bool:
    if isinstance(g, bool):
        return g
    if isinstance(g, PReg):
        return bool(regs[g.index])
    if isinstance(g, OrVal):
        return any(eval_exec_guard(p, regs) for p in g.parts)
    raise TypeError(f"bad exec guard {g!r}")


def _fetch(v, regs: list):
    if isinstance(v, PReg):
        return regs[v.index]
    return v


def _exec_classical(instrs: tuple, regs: list, slots: list[int]) -> None:
    for ins in instrs:
        if isinstance(ins, BinOp):
            regs[ins.dst.index] = _eval_binop(ins.op, _fetch(ins.a, regs), _fetch(ins.b, regs))
        elif isinstance(ins, Cmp):
            regs[ins.dst.index] = _eval_cmp(ins.op, _fetch(ins.a, regs), _fetch(ins.b, regs))
        elif isinstance(ins, Select):
            regs[ins.dst.index] = _fetch(ins.a, regs) if bool(_fetch(ins.cond, regs)) else _fetch(ins.b, regs)
        elif isinstance(ins, ReadResult):
            regs[ins.dst.index] = bool(slots[ins.slot])
        else:  # pragma: no cover
            raise TypeError(f"cannot execute {ins!r}")


OUTPUT_TOKEN = {"array_start": "[", "array_end": "]", "tuple_start": "(", "tuple_end": ")"}


def shot_seed(master_seed: int, shot_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(shot_index,))


# ---------------------------------------------------------------------------
# Compiled runtime: the per-shot loop is the hot path, so items are lowered
# once into tag/tuple form with index arrays and unitary entries precomputed.
# ---------------------------------------------------------------------------

_MARK, _CLASSICAL, _TRANSPORT, _LAYER, _OUTPUT = range(5)
_OP_1Q, _OP_CX, _OP_MEASURE, _OP_RESET = range(4)


def _cguard(g):
    if isinstance(g, bool):
        return None if g else False  # False guard never runs
    if isinstance(g, PReg):
        return g.index
    if isinstance(g, OrVal):
        return tuple(_cguard(p) for p in g.parts)
    raise TypeError(f"bad exec guard {g!r}")


def _geval(g, regs) -> bool:
    if g is None:
        return True
    if g is False:
        return False
    if type(g) is int:
        return bool(regs[g])
    return any(_geval(p, regs) for p in g)


def _compile_op(op: PlacedOp, n: int, overrot: float):
    i0, i1 = _bit_indices(n)[op.qubits[0]]
    if op.kind == "gate":
        if op.name == "cx":
            c, t = op.qubits
            idx = np.arange(1 << n)
            sel = ((idx >> c) & 1 == 1) & ((idx >> t) & 1 == 0)
            j0 = idx[sel]
            j1 = j0 | (1 << t)
            return (_OP_CX, j0, j1, op)
        angle = op.angle
        if angle is not None:
            angle = float(angle) + overrot
        u = G.gate_unitary(op.name, angle)
        return (_OP_1Q, i0, i1, complex(u[0, 0]), complex(u[0, 1]), complex(u[1, 0]), complex(u[1, 1]), op)
    if op.kind == "measure":
        return (_OP_MEASURE, i0, i1, op.qubits[0], op.slot, op)
    return (_OP_RESET, i0, i1, op.qubits[0], op)


@dataclass
class _Runtime:
    n_qubits: int
    n_results: int
    n_regs: int
    canonical: tuple[int, ...]
    conditional: bool
    noise: NoiseModel
    items: list


def _compile_runtime(prog: ExecProgram, noise: NoiseModel) -> _Runtime:
    n = prog.n_qubits
    items: list = []
    for item in prog.items:
        if isinstance(item, MarkItem):
            items.append((_MARK, _cguard(item.guard)))
        elif isinstance(item, ClassicalItem):
            items.append((_CLASSICAL, _cguard(item.guard), item.instrs))
        elif isinstance(item, TransportItem):
            # composed slot permutation: where something starting at slot s ends up
            perm = tuple(range(prog.trap.slots))
            for st in item.steps:
                perm = apply_step(perm, st)
            items.append((_TRANSPORT, _cguard(item.guard), perm, len(item.steps), item.steps))
        elif isinstance(item, LayerItem):
            ops = tuple(_compile_op(op, n, noise.prep_overrotation) for op in item.ops)
            items.append((_LAYER, _cguard(item.guard), item.expected_slots, ops, item.idle_qubits))
        elif isinstance(item, OutputItem):
            token = None if item.kind == "result" else OUTPUT_TOKEN[item.kind]
            items.append((_OUTPUT, _cguard(item.guard), token, item.slot))
        else:  # pragma: no cover
            raise TypeError(f"cannot compile {item!r}")
    return _Runtime(n, prog.n_results, prog.n_regs, prog.canonical, prog.conditional_transport, noise, items)


def _run_compiled(rt: _Runtime, master_seed: int, shot_index: int) -> ShotResult:
    rng = np.random.Generator(np.random.PCG64(shot_seed(master_seed, shot_index)))
    rng_random = rng.random
    n = rt.n_qubits
    noise = rt.noise
    noiseless = noise.is_noiseless
    state = _initial_state(n)
    slots = [0] * rt.n_results
    regs = [0] * rt.n_regs
    placement = rt.canonical
    outputs: list = []
    transport_steps = 0
    gates = 0
    skipped = 0
    measures = [0] * n

    for item in rt.items:
        tag = item[0]
        if tag == _LAYER:
            if not _geval(item[1], regs):
                continue
            for q, slot in item[2]:
                if placement[q] != slot:
                    raise ZoneViolation(f"qubit {q} at slot {placement[q]}, plan expected {slot}")
            for op in item[3]:
                otag = op[0]
                if otag == _OP_1Q:
                    i0, i1 = op[1], op[2]
                    a0 = state[i0]
                    a1 = state[i1]
                    state[i0] = op[3] * a0 + op[4] * a1
                    state[i1] = op[5] * a0 + op[6] * a1
                    gates += 1
                    if not noiseless:
                        apply_depolarizing(state, op[7].qubits, noise.p1, n, rng)
                elif otag == _OP_CX:
                    i0, i1 = op[1], op[2]
                    tmp = state[i0].copy()
                    state[i0] = state[i1]
                    state[i1] = tmp
                    gates += 1
                    if not noiseless:
                        apply_depolarizing(state, op[3].qubits, noise.p2, n, rng)
                elif otag == _OP_MEASURE:
                    i1 = op[2]
                    probs = np.abs(state) ** 2
                    p1 = float(probs[i1].sum())
                    norm = float(probs.sum())
                    if abs(norm - 1.0) > 1e-9:
                        raise FloatingPointError(f"state norm drifted to {norm}")
                    outcome = 1 if rng_random() < p1 else 0
                    if outcome:
                        state[op[1]] = 0.0
                        state /= np.sqrt(p1)
                    else:
                        state[i1] = 0.0
                        state /= np.sqrt(1.0 - p1)
                    recorded = outcome
                    if not noiseless and noise.p_meas > 0.0 and rng_random() < noise.p_meas:
                        recorded ^= 1
                    slots[op[4]] = recorded
                    measures[op[3]] += 1
                else:  # reset
                    i0, i1 = op[1], op[2]
                    p1 = float(np.sum(np.abs(state[i1]) ** 2))
                    outcome = 1 if rng_random() < p1 else 0
                    if outcome:
                        state[i0] = state[i1]
                        state[i1] = 0.0
                        state /= np.sqrt(p1)
                    else:
                        state[i1] = 0.0
                        state /= np.sqrt(1.0 - p1)
                    if not noiseless and noise.p_reset > 0.0 and rng_random() < noise.p_reset:
                        a0 = state[i0].copy()
                        state[i0] = state[i1]
                        state[i1] = a0
            if not noiseless and noise.p_idle > 0.0:
                for q in item[4]:
                    apply_dephasing(state, q, noise.p_idle, n, rng)
        elif tag == _CLASSICAL:
            if _geval(item[1], regs):
                _exec_classical(item[2], regs, slots)
        elif tag == _TRANSPORT:
            if not rt.conditional or _geval(item[1], regs):
                perm = item[2]
                placement = tuple(perm[s] for s in placement)
                transport_steps += item[3]
                if not noiseless and noise.p_transport > 0.0:
                    for _step in item[4]:
                        for q in range(n):
                            apply_dephasing(state, q, noise.p_transport, n, rng)
        elif tag == _MARK:
            if not _geval(item[1], regs):
                skipped += 1
        else:  # output
            if _geval(item[1], regs):
                outputs.append(slots[item[3]] if item[2] is None else item[2])

    return ShotResult(
        outputs=tuple(outputs),
        slots=tuple(slots),
        executed_transport_steps=transport_steps,
        executed_gates=gates,
        skipped_blocks=skipped,
        measures_per_qubit=tuple(measures),
        seed=shot_index,
    )


def run_shot(prog: ExecProgram, noise: NoiseModel, master_seed: int, shot_index: int) -> ShotResult:
    return _run_compiled(_compile_runtime(prog, noise), master_seed, shot_index)


def _initial_state(n: int) -> np.ndarray:
    state = np.zeros(1 << max(n, 1), dtype=complex)
    state[0] = 1.0
    return state


def _assert_norm(state: np.ndarray) -> None:
    norm = float(np.sum(np.abs(state) ** 2))
    if abs(norm - 1.0) > 1e-9:
        raise FloatingPointError(f"state norm drifted to {norm}")


def _run_range(args) -> list[ShotResult]:
    prog, noise, master_seed, lo, hi = args
    rt = _compile_runtime(prog, noise)
    return [_run_compiled(rt, master_seed, i) for i in range(lo, hi)]


def run_shots(
    prog: ExecProgram,
    noise: NoiseModel,
    n_shots: int,
    master_seed: int,
    jobs: int = 1,
) -> list[ShotResult]:
    """n_shots independent shots; identical results for any jobs value."""
    if n_shots < 1:
        raise ValueError("need at least one shot")
    if jobs <= 1 or n_shots < 4 * jobs:
        rt = _compile_runtime(prog, noise)
        return [_run_compiled(rt, master_seed, i) for i in range(n_shots)]
    bounds = np.linspace(0, n_shots, jobs + 1, dtype=int)
    chunks = [(prog, noise, master_seed, int(lo), int(hi)) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=jobs) as pool:
        parts = pool.map(_run_range, chunks)
    out: list[ShotResult] = []
    for part in parts:
        out.extend(part)
    return out


# ---------------------------------------------------------------------------
# Exact noiseless enumeration of an ExecProgram
# ---------------------------------------------------------------------------

@dataclass
class ExecLeaf:
    prob: float
    outputs: tuple
    state: np.ndarray
    slots: tuple[int, ...]
    regs: tuple
    executed_transport_steps: int


@dataclass
class _EState:
    state: np.ndarray
    slots: list[int]
    regs: list
    outputs: list
    placement: tuple[int, ...]
    prob: float
    item_idx: int
    op_idx: int
    transport: int
    branch_events: int

    def copy(self) -> "_EState":
        return _EState(
            self.state.copy(), self.slots[:], self.regs[:], self.outputs[:],
            self.placement, self.prob, self.item_idx, self.op_idx, self.transport, self.branch_events,
        )


PRUNE_EPS = 1e-15


def enumerate_exec_leaves(prog: ExecProgram, max_branch_events: int = 20) -> list[ExecLeaf]:
    start = _EState(
        _initial_state(prog.n_qubits),
        [0] * prog.n_results,
        [0] * prog.n_regs,
        [],
        prog.canonical,
        1.0,
        0,
        0,
        0,
        0,
    )
    leaves: list[ExecLeaf] = []
    _enumerate_from(prog, start, leaves, max_branch_events)
    return leaves


def _enumerate_from(prog: ExecProgram, es: _EState, leaves: list[ExecLeaf], cap: int) -> None:
    n = prog.n_qubits
    while es.item_idx < len(prog.items):
        item = prog.items[es.item_idx]
        if isinstance(item, MarkItem):
            pass
        elif isinstance(item, ClassicalItem):
            if eval_exec_guard(item.guard, es.regs):
                _exec_classical(item.instrs, es.regs, es.slots)
        elif isinstance(item, TransportItem):
            if not prog.conditional_transport or eval_exec_guard(item.guard, es.regs):
                for st in item.steps:
                    es.placement = apply_step(es.placement, st)
                es.transport += len(item.steps)
        elif isinstance(item, OutputItem):
            if eval_exec_guard(item.guard, es.regs):
                if item.kind == "result":
                    es.outputs.append(es.slots[item.slot])
                else:
                    es.outputs.append(OUTPUT_TOKEN[item.kind])
        elif isinstance(item, LayerItem):
            if eval_exec_guard(item.guard, es.regs):
                for q, slot in item.expected_slots:
                    if es.placement[q] != slot:
                        raise ZoneViolation(f"qubit {q} at slot {es.placement[q]}, plan expected {slot}")
                while es.op_idx < len(item.ops):
                    op = item.ops[es.op_idx]
                    es.op_idx += 1
                    if op.kind == "gate":
                        apply_gate(es.state, op, es.placement, n)
                        continue
                    q = op.qubits[0]
                    p1 = measure_prob_one(es.state, q, n)
                    arms = [(o, p) for o, p in ((0, 1.0 - p1), (1, p1)) if p > PRUNE_EPS]
                    if op.kind == "measure":
                        if len(arms) == 1:
                            o, p = arms[0]
                            collapse(es.state, q, o, p, n)
                            es.slots[op.slot] = o
                            continue
                        if es.branch_events + 1 > cap:
                            raise TooManyBranches(f"more than {cap} branch events on a path")
                        for o, p in arms:
                            child = es.copy()
                            collapse(child.state, q, o, p, n)
                            child.slots[op.slot] = o
                            child.prob *= p
                            child.branch_events += 1
                            _enumerate_from(prog, child, leaves, cap)
                        return
                    # reset: collapse, force |0>, merge when the branches agree
                    post = []
                    for o, p in arms:
                        s = es.state.copy()
                        collapse(s, q, o, p, n)
                        if o == 1:
                            apply_1q(s, G.X, q, n)
                        post.append((p, s))
                    if len(post) == 1 or _same_state(post[0][1], post[1][1]):
                        es.state = post[0][1]
                        continue
                    if es.branch_events + 1 > cap:
                        raise TooManyBranches(f"more than {cap} branch events on a path")
                    for p, s in post:
                        child = es.copy()
                        child.state = s
                        child.prob *= p
                        child.branch_events += 1
                        _enumerate_from(prog, child, leaves, cap)
                    return
        else:  # pragma: no cover
            raise TypeError(f"cannot enumerate {item!r}")
        es.item_idx += 1
        es.op_idx = 0
    leaves.append(
        ExecLeaf(es.prob, tuple(es.outputs), es.state, tuple(es.slots), tuple(es.regs), es.transport)
    )


def _same_state(a: np.ndarray, b: np.ndarray) -> bool:
    i = int(np.argmax(np.abs(a)))
    if abs(a[i]) < 1e-12:
        return bool(np.allclose(a, b, atol=1e-10))
    phase = b[i] / a[i]
    if abs(abs(phase) - 1.0) > 1e-10:
        return False
    return bool(np.allclose(a * phase, b, atol=1e-10))


def enumerate_outcomes(prog: ExecProgram, max_branch_events: int = 20) -> dict[tuple, float]:
    """Exact output distribution of a lowered program (noiseless)."""
    dist: dict[tuple, float] = {}
    for leaf in enumerate_exec_leaves(prog, max_branch_events):
        dist[leaf.outputs] = dist.get(leaf.outputs, 0.0) + leaf.prob
    return dist
