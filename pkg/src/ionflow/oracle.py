"""Reference enumeration semantics, independent of the compiled fast path.

Two interpreters, both noiseless and exact:

* ``enumerate_module`` walks the IR directly (blocks, branches, phis, calls,
  even counted loops) and branches depth-first on every measurement outcome,
  producing the exact distribution over recorded outputs.
* ``enumerate_guarded`` does the same for the if-converted linear form.

These are deliberately written against the plain matrix embedding from
``gates`` rather than the emulator's in-place kernels, so the two routes to
an output distribution share no simulation code.

A reset collapses like a measurement; when both collapse branches land on
the same post-reset state (the common unentangled case) they are merged so
path counts stay small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gates as G
from .ir import (
    BinOp,
    Branch,
    Call,
    Cmp,
    Function,
    Jump,
    Measure,
    Module,
    Output,
    QGate,
    ReadResult,
    Reset,
    Value,
    Vreg,
)
from .passes import _eval_binop, _eval_cmp
from .predication import GuardedFunction, GuardVal, OrVal, Select
from .regalloc import PReg

PRUNE_EPS = 1e-15


class TooManyBranches(Exception):
    pass


@dataclass
class Leaf:
    prob: float
    outputs: tuple
    state: np.ndarray
    slots: tuple[int, ...]


def _apply_gate(state: np.ndarray, name: str, qubits: tuple[int, ...], angle, n: int) -> np.ndarray:
    return G.embed(name, qubits, angle, n) @ state


def _measure_probs(state: np.ndarray, q: int) -> tuple[float, float]:
    amps = np.abs(state) ** 2
    idx = np.arange(state.size)
    p1 = float(amps[(idx >> q) & 1 == 1].sum())
    return 1.0 - p1, p1


def _collapse(state: np.ndarray, q: int, outcome: int, p: float) -> np.ndarray:
    idx = np.arange(state.size)
    keep = ((idx >> q) & 1) == outcome
    out = np.where(keep, state, 0.0)
    return out / np.sqrt(p)


def _states_equal_up_to_phase(a: np.ndarray, b: np.ndarray) -> bool:
    i = int(np.argmax(np.abs(a)))
    if abs(a[i]) < 1e-12 or abs(b[i]) < 1e-12:
        return bool(np.allclose(a, b, atol=1e-10))
    phase = b[i] / a[i]
    return bool(np.allclose(a * phase, b, atol=1e-10))


# ---------------------------------------------------------------------------
# Module-level interpreter
# ---------------------------------------------------------------------------

@dataclass
class _Frame:
    fn: Function
    env: dict[Vreg, Value]
    label: str
    prev_label: str | None
    idx: int
    phis_done: bool


@dataclass
class _MState:
    state: np.ndarray
    slots: list[int]
    outputs: list
    prob: float
    frames: list[_Frame]
    branch_events: int

    def copy(self) -> "_MState":
        return _MState(
            state=self.state.copy(),
            slots=self.slots[:],
            outputs=self.outputs[:],
            prob=self.prob,
            frames=[_Frame(f.fn, dict(f.env), f.label, f.prev_label, f.idx, f.phis_done) for f in self.frames],
            branch_events=self.branch_events,
        )


def _resolve(v: Value, env: dict) -> Value:
    if isinstance(v, (Vreg, PReg)):
        return env.get(v, False)
    return v


def _qubit_index(q, env: dict[Vreg, Value]) -> int:
    if isinstance(q, Vreg):
        q = env.get(q)
    if not isinstance(q, int) or isinstance(q, bool):
        raise ValueError(f"unresolved qubit operand {q!r}")
    return q


def enumerate_module_leaves(module: Module, max_branch_events: int = 20) -> list[Leaf]:
    """All terminal trajectories of a module with exact probabilities."""
    n = module.required_qubits
    init = np.zeros(1 << max(n, 1), dtype=complex)
    init[0] = 1.0
    entry = module.entry_function
    start = _MState(
        state=init,
        slots=[0] * module.required_results,
        outputs=[],
        prob=1.0,
        frames=[_Frame(entry, {}, entry.blocks[0].label, None, 0, False)],
        branch_events=0,
    )
    leaves: list[Leaf] = []
    _run_module(module, start, leaves, max_branch_events)
    return leaves


def _run_module(module: Module, ms: _MState, leaves: list[Leaf], cap: int) -> None:
    n = module.required_qubits
    while ms.frames:
        fr = ms.frames[-1]
        block = fr.fn.block(fr.label)
        if not fr.phis_done:
            if block.phis:
                vals = []
                for phi in block.phis:
                    match = [v for v, l in phi.incomings if l == fr.prev_label]
                    vals.append(_resolve(match[0], fr.env) if match else False)
                for phi, v in zip(block.phis, vals):
                    fr.env[phi.dst] = v
            fr.phis_done = True
        advanced = False
        while fr.idx < len(block.body):
            instr = block.body[fr.idx]
            fr.idx += 1
            if isinstance(instr, QGate):
                qubits = tuple(_qubit_index(q, fr.env) for q in instr.qubits)
                angle = _resolve(instr.angle, fr.env) if instr.angle is not None else None
                ms.state = _apply_gate(ms.state, instr.name, qubits, angle, n)
            elif isinstance(instr, Measure):
                q = _qubit_index(instr.qubit, fr.env)
                if _branch_collapse(module, ms, leaves, q, instr.slot, cap):
                    return  # both arms handled recursively
                advanced = True
            elif isinstance(instr, Reset):
                q = _qubit_index(instr.qubit, fr.env)
                if _branch_reset(module, ms, leaves, q, cap):
                    return
            elif isinstance(instr, ReadResult):
                fr.env[instr.dst] = bool(ms.slots[instr.slot])
            elif isinstance(instr, BinOp):
                fr.env[instr.dst] = _eval_binop(instr.op, _resolve(instr.a, fr.env), _resolve(instr.b, fr.env))
            elif isinstance(instr, Cmp):
                fr.env[instr.dst] = _eval_cmp(instr.op, _resolve(instr.a, fr.env), _resolve(instr.b, fr.env))
            elif isinstance(instr, Output):
                _record_output(ms.outputs, instr, ms.slots)
            elif isinstance(instr, Call):
                callee = module.function(instr.callee)
                env = {pv: _resolve(a, fr.env) for (pv, _t), a in zip(callee.params, instr.args)}
                ms.frames.append(_Frame(callee, env, callee.blocks[0].label, None, 0, False))
                advanced = True
                break
            else:  # pragma: no cover
                raise TypeError(f"cannot interpret {instr!r}")
        else:
            term = block.terminator
            if isinstance(term, Jump):
                fr.prev_label, fr.label, fr.idx, fr.phis_done = fr.label, term.target, 0, False
            elif isinstance(term, Branch):
                cond = _resolve(term.cond, fr.env)
                target = term.then_target if cond else term.else_target
                fr.prev_label, fr.label, fr.idx, fr.phis_done = fr.label, target, 0, False
            else:
                ms.frames.pop()
        if advanced:
            continue
    leaves.append(Leaf(ms.prob, tuple(ms.outputs), ms.state, tuple(ms.slots)))


def _branch_collapse(module: Module, ms: _MState, leaves: list[Leaf], q: int, slot: int, cap: int) -> bool:
    p0, p1 = _measure_probs(ms.state, q)
    arms = [(o, p) for o, p in ((0, p0), (1, p1)) if p > PRUNE_EPS]
    if len(arms) == 1:
        o, p = arms[0]
        ms.state = _collapse(ms.state, q, o, p)
        ms.slots[slot] = o
        return False
    if ms.branch_events + 1 > cap:
        raise TooManyBranches(f"more than {cap} branching measurement events on one path")
    for o, p in arms:
        child = ms.copy()
        child.state = _collapse(child.state, q, o, p)
        child.slots[slot] = o
        child.prob *= p
        child.branch_events += 1
        _run_module(module, child, leaves, cap)
    return True


def _branch_reset(module: Module, ms: _MState, leaves: list[Leaf], q: int, cap: int) -> bool:
    p0, p1 = _measure_probs(ms.state, q)
    arms = [(o, p) for o, p in ((0, p0), (1, p1)) if p > PRUNE_EPS]
    post = []
    for o, p in arms:
        s = _collapse(ms.state, q, o, p)
        if o == 1:
            s = _apply_gate(s, "x", (q,), None, module.required_qubits)
        post.append((p, s))
    if len(post) == 1:
        ms.state = post[0][1]
        return False
    if _states_equal_up_to_phase(post[0][1], post[1][1]):
        ms.state = post[0][1]
        return False
    if ms.branch_events + 1 > cap:
        raise TooManyBranches(f"more than {cap} branching measurement events on one path")
    for p, s in post:
        child = ms.copy()
        child.state = s
        child.prob *= p
        child.branch_events += 1
        _run_module(module, child, leaves, cap)
    return True


def _record_output(outputs: list, instr: Output, slots: list[int]) -> None:
    if instr.kind == "result":
        outputs.append(slots[instr.slot])
    else:
        outputs.append({"array_start": "[", "array_end": "]", "tuple_start": "(", "tuple_end": ")"}[instr.kind])


def enumerate_module(module: Module, max_branch_events: int = 20) -> dict[tuple, float]:
    """Exact output distribution of a module; probabilities sum to 1."""
    dist: dict[tuple, float] = {}
    for leaf in enumerate_module_leaves(module, max_branch_events):
        dist[leaf.outputs] = dist.get(leaf.outputs, 0.0) + leaf.prob
    return dist


# ---------------------------------------------------------------------------
# Guarded-form interpreter
# ---------------------------------------------------------------------------

@dataclass
class _GState:
    state: np.ndarray
    slots: list[int]
    outputs: list
    prob: float
    regs: dict[Vreg, Value]
    block_idx: int
    in_body: bool
    instr_idx: int
    branch_events: int

    def copy(self) -> "_GState":
        return _GState(
            self.state.copy(), self.slots[:], self.outputs[:], self.prob,
            dict(self.regs), self.block_idx, self.in_body, self.instr_idx, self.branch_events,
        )


def eval_guard_val(gv: GuardVal, regs: dict) -> bool:
    if isinstance(gv, bool):
        return gv
    if isinstance(gv, (Vreg, PReg)):
        return bool(regs.get(gv, False))
    if isinstance(gv, OrVal):
        return any(eval_guard_val(p, regs) for p in gv.parts)
    raise TypeError(f"bad guard value {gv!r}")


def enumerate_guarded(gf: GuardedFunction, n_qubits: int, n_results: int, max_branch_events: int = 20) -> dict[tuple, float]:
    dist: dict[tuple, float] = {}
    for leaf in enumerate_guarded_leaves(gf, n_qubits, n_results, max_branch_events):
        dist[leaf.outputs] = dist.get(leaf.outputs, 0.0) + leaf.prob
    return dist


def enumerate_guarded_leaves(
    gf: GuardedFunction, n_qubits: int, n_results: int, max_branch_events: int = 20
) -> list[Leaf]:
    init = np.zeros(1 << max(n_qubits, 1), dtype=complex)
    init[0] = 1.0
    start = _GState(init, [0] * n_results, [], 1.0, {}, 0, False, 0, 0)
    leaves: list[Leaf] = []
    _run_guarded(gf, n_qubits, start, leaves, max_branch_events)
    return leaves


def _run_guarded(gf: GuardedFunction, n: int, gs: _GState, leaves: list[Leaf], cap: int) -> None:
    while gs.block_idx < len(gf.blocks):
        block = gf.blocks[gs.block_idx]
        if not gs.in_body:
            for k in range(gs.instr_idx, len(block.prelude)):
                ins = block.prelude[k]
                if isinstance(ins, Select):
                    cond = _resolve(ins.cond, gs.regs)
                    gs.regs[ins.dst] = _resolve(ins.a if cond else ins.b, gs.regs)
                elif isinstance(ins, BinOp):
                    gs.regs[ins.dst] = _eval_binop(ins.op, _resolve(ins.a, gs.regs), _resolve(ins.b, gs.regs))
                elif isinstance(ins, Cmp):
                    gs.regs[ins.dst] = _eval_cmp(ins.op, _resolve(ins.a, gs.regs), _resolve(ins.b, gs.regs))
                elif isinstance(ins, ReadResult):
                    gs.regs[ins.dst] = bool(gs.slots[ins.slot])
                else:  # pragma: no cover
                    raise TypeError(f"prelude cannot hold {ins!r}")
            gs.in_body = True
            gs.instr_idx = 0
            if not eval_guard_val(block.guard, gs.regs):
                gs.block_idx += 1
                gs.in_body = False
                continue
        while gs.instr_idx < len(block.body):
            instr = block.body[gs.instr_idx]
            gs.instr_idx += 1
            if isinstance(instr, QGate):
                qubits = tuple(q for q in instr.qubits)
                angle = _resolve(instr.angle, gs.regs) if instr.angle is not None else None
                gs.state = _apply_gate(gs.state, instr.name, qubits, angle, n)
            elif isinstance(instr, Measure):
                p0, p1 = _measure_probs(gs.state, instr.qubit)
                arms = [(o, p) for o, p in ((0, p0), (1, p1)) if p > PRUNE_EPS]
                if len(arms) == 1:
                    o, p = arms[0]
                    gs.state = _collapse(gs.state, instr.qubit, o, p)
                    gs.slots[instr.slot] = o
                    continue
                if gs.branch_events + 1 > cap:
                    raise TooManyBranches(f"more than {cap} branching measurement events on one path")
                for o, p in arms:
                    child = gs.copy()
                    child.state = _collapse(child.state, instr.qubit, o, p)
                    child.slots[instr.slot] = o
                    child.prob *= p
                    child.branch_events += 1
                    _run_guarded(gf, n, child, leaves, cap)
                return
            elif isinstance(instr, Reset):
                q = instr.qubit
                p0, p1 = _measure_probs(gs.state, q)
                arms = [(o, p) for o, p in ((0, p0), (1, p1)) if p > PRUNE_EPS]
                post = []
                for o, p in arms:
                    s = _collapse(gs.state, q, o, p)
                    if o == 1:
                        s = _apply_gate(s, "x", (q,), None, n)
                    post.append((p, s))
                if len(post) == 1 or _states_equal_up_to_phase(post[0][1], post[1][1]):
                    gs.state = post[0][1]
                    continue
                if gs.branch_events + 1 > cap:
                    raise TooManyBranches(f"more than {cap} branching measurement events on one path")
                for p, s in post:
                    child = gs.copy()
                    child.state = s
                    child.prob *= p
                    child.branch_events += 1
                    _run_guarded(gf, n, child, leaves, cap)
                return
            elif isinstance(instr, ReadResult):
                gs.regs[instr.dst] = bool(gs.slots[instr.slot])
            elif isinstance(instr, BinOp):
                gs.regs[instr.dst] = _eval_binop(instr.op, _resolve(instr.a, gs.regs), _resolve(instr.b, gs.regs))
            elif isinstance(instr, Cmp):
                gs.regs[instr.dst] = _eval_cmp(instr.op, _resolve(instr.a, gs.regs), _resolve(instr.b, gs.regs))
            elif isinstance(instr, Output):
                _record_output(gs.outputs, instr, gs.slots)
            else:  # pragma: no cover
                raise TypeError(f"guarded body cannot hold {instr!r}")
        gs.block_idx += 1
        gs.in_body = False
        gs.instr_idx = 0
    leaves.append(Leaf(gs.prob, tuple(gs.outputs), gs.state, tuple(gs.slots)))
