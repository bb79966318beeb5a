"""Target-independent simplification passes.

Three passes, all module-to-module and deterministic:

* ``fold_constants`` — literal arithmetic/comparison folding with copy
  propagation, constant-branch folding, unreachable-block removal, phi
  pruning and dead pure-definition cleanup, iterated to a fixpoint. Only
  all-literal operations fold; no identity simplifications are attempted.
* ``flatten`` — makes the entry function call-free and acyclic: counted
  loops produced by the ``repeat`` sugar are unrolled (one serialized body
  copy per trip), calls are inlined one level per round with literal
  arguments substituted, and folding runs between rounds so recursions
  guarded by a literal depth bottom out. Each return site of an inlined
  callee gets its own copy of the call continuation when that is safe
  (no externally used definitions in the continuation), which is what makes
  the recursive program shape expand into a branching tree of rounds.
* ``peephole`` — within-block rewriting of short gate sequences against a
  rule set that is verified unitarily equivalent when the rules are built.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import gates as G
from .ir import (
    BasicBlock,
    BinOp,
    Branch,
    Call,
    Cfg,
    Cmp,
    Function,
    Instruction,
    Jump,
    Measure,
    Module,
    Phi,
    QGate,
    ReadResult,
    Reset,
    Return,
    Value,
    Vreg,
    instr_defs,
    instr_uses,
    wrap_i64,
)


class BudgetExceeded(Exception):
    """Loop trip count or recursion depth exceeded the flatten budgets."""


@dataclass(frozen=True)
class FlattenConfig:
    max_inline_depth: int = 64
    max_unroll: int = 1024


# ---------------------------------------------------------------------------
# Constant folding
# ---------------------------------------------------------------------------

def _eval_binop(op: str, a: Value, b: Value) -> Value:
    if op in ("and", "or", "xor"):
        if isinstance(a, bool) and isinstance(b, bool):
            return {"and": a and b, "or": a or b, "xor": a != b}[op]
        ai, bi = int(a), int(b)
        v = {"and": ai & bi, "or": ai | bi, "xor": ai ^ bi}[op]
        return wrap_i64(v)
    if isinstance(a, float) or isinstance(b, float):
        return {"add": a + b, "sub": a - b, "mul": a * b}[op]
    v = {"add": a + b, "sub": a - b, "mul": a * b}[op]
    return wrap_i64(v)


def _eval_cmp(op: str, a: Value, b: Value) -> bool:
    return {
        "eq": a == b,
        "ne": a != b,
        "lt": a < b,
        "le": a <= b,
        "gt": a > b,
        "ge": a >= b,
    }[op]


def _subst_value(v: Value, env: dict[Vreg, Value]) -> Value:
    while isinstance(v, Vreg) and v in env:
        v = env[v]
    return v


def _subst_instr(instr: Instruction, env: dict[Vreg, Value]) -> Instruction:
    if isinstance(instr, QGate):
        qubits = tuple(_subst_value(q, env) if isinstance(q, Vreg) else q for q in instr.qubits)
        angle = _subst_value(instr.angle, env) if instr.angle is not None else None
        return QGate(instr.name, qubits, angle)
    if isinstance(instr, Measure):
        q = _subst_value(instr.qubit, env) if isinstance(instr.qubit, Vreg) else instr.qubit
        return Measure(q, instr.slot)
    if isinstance(instr, Reset):
        q = _subst_value(instr.qubit, env) if isinstance(instr.qubit, Vreg) else instr.qubit
        return Reset(q)
    if isinstance(instr, BinOp):
        return BinOp(instr.op, instr.dst, _subst_value(instr.a, env), _subst_value(instr.b, env))
    if isinstance(instr, Cmp):
        return Cmp(instr.op, instr.dst, _subst_value(instr.a, env), _subst_value(instr.b, env))
    if isinstance(instr, Call):
        return Call(instr.callee, tuple(_subst_value(a, env) for a in instr.args))
    return instr


def _fold_function(fn: Function) -> tuple[Function, bool]:
    changed = False
    env: dict[Vreg, Value] = {}

    # collect foldable defs and copyable phis until stable
    while True:
        grew = False
        for b in fn.blocks:
            for phi in b.phis:
                if phi.dst in env:
                    continue
                if len(phi.incomings) == 1:
                    env[phi.dst] = _subst_value(phi.incomings[0][0], env)
                    grew = True
            for instr in b.body:
                if isinstance(instr, (BinOp, Cmp)) and instr.dst not in env:
                    a = _subst_value(instr.a, env)
                    bb = _subst_value(instr.b, env)
                    if not isinstance(a, Vreg) and not isinstance(bb, Vreg):
                        env[instr.dst] = _eval_binop(instr.op, a, bb) if isinstance(instr, BinOp) else _eval_cmp(instr.op, a, bb)
                        grew = True
        if not grew:
            break

    new_blocks: list[BasicBlock] = []
    for b in fn.blocks:
        phis = []
        for phi in b.phis:
            if phi.dst in env:
                changed = True
                continue
            new_inc = tuple((_subst_value(v, env), l) for v, l in phi.incomings)
            if new_inc != phi.incomings:
                changed = True
            phis.append(Phi(phi.dst, new_inc))
        body = []
        for instr in b.body:
            if isinstance(instr, (BinOp, Cmp)) and instr.dst in env:
                changed = True
                continue
            ni = _subst_instr(instr, env)
            if ni != instr:
                changed = True
            body.append(ni)
        term = b.terminator
        if isinstance(term, Branch):
            cond = _subst_value(term.cond, env)
            if isinstance(cond, bool):
                term = Jump(term.then_target if cond else term.else_target)
                changed = True
            elif isinstance(cond, Vreg) and cond != term.cond:
                term = Branch(cond, term.then_target, term.else_target)
                changed = True
        new_blocks.append(BasicBlock(b.label, tuple(phis), tuple(body), term))

    fn2 = Function(fn.name, fn.params, tuple(new_blocks))
    fn3, ch2 = _prune_unreachable(fn2)
    fn4, ch3 = _drop_dead_defs(fn3)
    return fn4, changed or ch2 or ch3


def _prune_unreachable(fn: Function) -> tuple[Function, bool]:
    cfg = Cfg.from_function(fn)
    reachable: set[str] = set()
    work = [fn.blocks[0].label]
    while work:
        n = work.pop()
        if n in reachable:
            continue
        reachable.add(n)
        work.extend(cfg.successors(n))
    if reachable == set(cfg.nodes):
        kept = fn.blocks
        changed = False
    else:
        kept = tuple(b for b in fn.blocks if b.label in reachable)
        changed = True
    # prune phi incomings from removed or no-longer-predecessor blocks
    sub_cfg = Cfg.from_function(Function(fn.name, fn.params, kept))
    out = []
    for b in kept:
        preds = set(sub_cfg.predecessors(b.label))
        phis = []
        for phi in b.phis:
            inc = tuple((v, l) for v, l in phi.incomings if l in preds)
            if inc != phi.incomings:
                changed = True
            phis.append(Phi(phi.dst, inc))
        out.append(BasicBlock(b.label, tuple(phis), b.body, b.terminator))
    return Function(fn.name, fn.params, tuple(out)), changed


def _drop_dead_defs(fn: Function) -> tuple[Function, bool]:
    used: set[Vreg] = set()
    for b in fn.blocks:
        for phi in b.phis:
            used.update(v for v, _l in phi.incomings if isinstance(v, Vreg))
        for instr in b.body:
            used.update(instr_uses(instr))
        if isinstance(b.terminator, Branch):
            used.add(b.terminator.cond)
    changed = False
    out = []
    for b in fn.blocks:
        phis = tuple(p for p in b.phis if p.dst in used)
        body = tuple(
            i for i in b.body if not (isinstance(i, (BinOp, Cmp, ReadResult)) and i.dst not in used)
        )
        if len(phis) != len(b.phis) or len(body) != len(b.body):
            changed = True
        out.append(BasicBlock(b.label, phis, body, b.terminator))
    return Function(fn.name, fn.params, tuple(out)), changed


def fold_constants(module: Module) -> Module:
    """Fold literal arithmetic to a fixpoint (64-bit wrap, no re-association)."""
    fns = list(module.functions)
    changed = True
    while changed:
        changed = False
        for i, fn in enumerate(fns):
            fn2, ch = _fold_function(fn)
            if ch:
                fns[i] = fn2
                changed = True
    return Module(module.name, tuple(fns), module.entry, module.required_qubits, module.required_results)


# ---------------------------------------------------------------------------
# Flattening: loop unrolling + call inlining
# ---------------------------------------------------------------------------

def _rename_value(v: Value, ren: dict[Vreg, Value]) -> Value:
    if isinstance(v, Vreg) and v in ren:
        return ren[v]
    return v


def _rename_instr(instr: Instruction, ren: dict[Vreg, Value], relabel: dict[str, str]) -> Instruction:
    instr = _subst_instr(instr, ren)  # handles uses
    defs = instr_defs(instr)
    if defs:
        d = defs[0]
        nd = ren.get(d)
        if isinstance(nd, Vreg):
            if isinstance(instr, BinOp):
                instr = BinOp(instr.op, nd, instr.a, instr.b)
            elif isinstance(instr, Cmp):
                instr = Cmp(instr.op, nd, instr.a, instr.b)
            elif isinstance(instr, ReadResult):
                instr = ReadResult(nd, instr.slot)
    return instr


def _clone_block(
    b: BasicBlock,
    ren: dict[Vreg, Value],
    relabel: dict[str, str],
    ret_target: str | None = None,
) -> BasicBlock:
    phis = []
    for phi in b.phis:
        nd = ren.get(phi.dst, phi.dst)
        assert isinstance(nd, Vreg)
        inc = tuple((_rename_value(v, ren), relabel.get(l, l)) for v, l in phi.incomings)
        phis.append(Phi(nd, inc))
    body = tuple(_rename_instr(i, ren, relabel) for i in b.body)
    t = b.terminator
    if isinstance(t, Jump):
        t = Jump(relabel.get(t.target, t.target))
    elif isinstance(t, Branch):
        c = _rename_value(t.cond, ren)
        then_t = relabel.get(t.then_target, t.then_target)
        else_t = relabel.get(t.else_target, t.else_target)
        if isinstance(c, bool):
            t = Jump(then_t if c else else_t)
        else:
            assert isinstance(c, Vreg)
            t = Branch(c, then_t, else_t)
    elif isinstance(t, Return) and ret_target is not None:
        t = Jump(ret_target)
    return BasicBlock(relabel.get(b.label, b.label), tuple(phis), body, t)


def _collect_defs(blocks: list[BasicBlock] | tuple[BasicBlock, ...]) -> set[Vreg]:
    out: set[Vreg] = set()
    for b in blocks:
        out.update(p.dst for p in b.phis)
        for i in b.body:
            out.update(instr_defs(i))
    return out


@dataclass
class _CountedLoop:
    header: str
    latch: str
    counter: Vreg
    counter_next: Vreg
    init: int
    limit: int
    body_entry: str
    exit_target: str
    body_labels: list[str]  # excludes header, includes latch


def _match_counted_loop(fn: Function) -> _CountedLoop | None:
    cfg = Cfg.from_function(fn)
    by_label = {b.label: b for b in fn.blocks}
    for h in fn.blocks:
        if len(h.phis) != 1 or len(h.body) != 1:
            continue
        phi = h.phis[0]
        cmp = h.body[0]
        if not isinstance(cmp, Cmp) or cmp.op != "lt" or cmp.a != phi.dst or isinstance(cmp.b, Vreg):
            continue
        t = h.terminator
        if not isinstance(t, Branch) or t.cond != cmp.dst:
            continue
        latch_incs = [(v, l) for v, l in phi.incomings if isinstance(v, Vreg)]
        lit_incs = [(v, l) for v, l in phi.incomings if not isinstance(v, Vreg)]
        if len(latch_incs) != 1 or not lit_incs:
            continue
        counter_next, latch_label = latch_incs[0]
        init_vals = {v for v, _l in lit_incs}
        if len(init_vals) != 1:
            continue
        init = next(iter(init_vals))
        if not isinstance(init, int) or isinstance(init, bool):
            continue
        latch = by_label.get(latch_label)
        if latch is None or latch.phis or len(latch.body) != 1:
            continue
        add = latch.body[0]
        if not (isinstance(add, BinOp) and add.op == "add" and add.dst == counter_next and add.a == phi.dst and add.b == 1):
            continue
        if not isinstance(latch.terminator, Jump) or latch.terminator.target != h.label:
            continue
        # natural loop body: blocks that reach the latch without passing the header
        body: set[str] = {latch_label}
        work = [latch_label]
        while work:
            n = work.pop()
            for p in cfg.predecessors(n):
                if p != h.label and p not in body:
                    body.add(p)
                    work.append(p)
        if t.then_target not in body or t.else_target in body:
            continue
        # reject loops whose body phis mention the header/latch machinery
        clean = True
        for lbl in body:
            for p in by_label[lbl].phis:
                if any(l in (h.label,) for _v, l in p.incomings):
                    clean = False
        if not clean:
            continue
        order = [b.label for b in fn.blocks if b.label in body]
        return _CountedLoop(
            header=h.label,
            latch=latch_label,
            counter=phi.dst,
            counter_next=counter_next,
            init=init,
            limit=int(cmp.b),
            body_entry=t.then_target,
            exit_target=t.else_target,
            body_labels=order,
        )
    return None


def _unroll_loop(fn: Function, loop: _CountedLoop, max_unroll: int) -> Function:
    trips = max(0, loop.limit - loop.init)
    if trips > max_unroll:
        raise BudgetExceeded(f"loop at '{loop.header}' needs {trips} trips, budget is {max_unroll}")
    by_label = {b.label: b for b in fn.blocks}
    body_blocks = [by_label[l] for l in loop.body_labels]
    body_defs = _collect_defs(body_blocks)

    copies: list[list[BasicBlock]] = []
    entry_of_copy: list[str] = []
    for k in range(trips):
        relabel = {l: f"{l}.u{k}" for l in loop.body_labels}
        ren: dict[Vreg, Value] = {v: Vreg(f"{v.name}.u{k}") for v in body_defs}
        ren[loop.counter] = loop.init + k
        copies.append([_clone_block(b, ren, relabel) for b in body_blocks])
        entry_of_copy.append(relabel[loop.body_entry])
    # each copy's back edge (only the latch jumps to the header) goes to the
    # next copy, the last one to the loop exit
    for k in range(trips):
        nxt = entry_of_copy[k + 1] if k + 1 < trips else loop.exit_target
        copies[k] = [_retarget(b, loop.header, nxt) for b in copies[k]]

    first_target = entry_of_copy[0] if trips else loop.exit_target
    out: list[BasicBlock] = []
    for b in fn.blocks:
        if b.label == loop.header:
            for copy in copies:
                out.extend(copy)
        elif b.label in loop.body_labels:
            continue
        else:
            out.append(_retarget(b, loop.header, first_target))

    # phis outside the loop that referenced body labels move to the last copy
    final_relabel = {l: f"{l}.u{trips-1}" for l in loop.body_labels} if trips else {}
    final_ren: dict[Vreg, Value] = {v: Vreg(f"{v.name}.u{trips-1}") for v in body_defs} if trips else {}
    if trips:
        final_ren[loop.counter] = loop.init + trips - 1
    fixed_blocks = []
    for b in out:
        phis = []
        for phi in b.phis:
            inc = tuple(
                (_rename_value(v, final_ren) if l in final_relabel else v, final_relabel.get(l, l))
                for v, l in phi.incomings
            )
            phis.append(Phi(phi.dst, inc))
        fixed_blocks.append(BasicBlock(b.label, tuple(phis), b.body, b.terminator))
    return Function(fn.name, fn.params, tuple(fixed_blocks))


def _retarget(block: BasicBlock, old: str, new: str) -> BasicBlock:
    t = block.terminator
    if isinstance(t, Jump) and t.target == old:
        t = Jump(new)
    elif isinstance(t, Branch):
        then_t = new if t.then_target == old else t.then_target
        else_t = new if t.else_target == old else t.else_target
        t = Branch(t.cond, then_t, else_t)
    return BasicBlock(block.label, block.phis, block.body, t)


def _unroll_counted_loops(module: Module, max_unroll: int) -> Module:
    fns = []
    for fn in module.functions:
        while True:
            loop = _match_counted_loop(fn)
            if loop is None:
                break
            fn = _unroll_loop(fn, loop, max_unroll)
        fns.append(fn)
    return Module(module.name, tuple(fns), module.entry, module.required_qubits, module.required_results)


class _Inliner:
    def __init__(self, module: Module, counter_start: int = 0):
        self.module = module
        self.counter = counter_start
        # a block that ends in a call hands its terminator to continuation
        # copies; successor phis must then take their incoming from those
        # copies instead of the original label
        self.redirects: dict[str, list[str]] = {}

    def inline_level(self) -> Module:
        """Inline every call currently present in the entry function, one level."""
        self.redirects = {}
        entry = self.module.entry_function
        out: list[BasicBlock] = []
        for block in entry.blocks:
            out.extend(self._expand_block(block, entry))
        out = self._apply_phi_redirects(out)
        fn = Function(entry.name, entry.params, tuple(out))
        fns = tuple(fn if f.name == entry.name else f for f in self.module.functions)
        return Module(
            self.module.name, fns, self.module.entry, self.module.required_qubits, self.module.required_results
        )

    def _expand_block(self, block: BasicBlock, entry: Function) -> list[BasicBlock]:
        call_idx = next((i for i, ins in enumerate(block.body) if isinstance(ins, Call)), None)
        if call_idx is None:
            return [block]
        call = block.body[call_idx]
        assert isinstance(call, Call)
        callee = self.module.function(call.callee)
        sfx = f".c{self.counter}"
        self.counter += 1

        relabel = {b.label: f"{b.label}{sfx}" for b in callee.blocks}
        ren: dict[Vreg, Value] = {}
        for (pv, _ty), arg in zip(callee.params, call.args):
            ren[pv] = arg
        for v in _collect_defs(callee.blocks):
            ren[v] = Vreg(f"{v.name}{sfx}")

        ret_labels = [b.label for b in callee.blocks if isinstance(b.terminator, Return)]
        tail_body = block.body[call_idx + 1 :]
        tail_defs = _collect_defs([BasicBlock("", (), tail_body, Return())])
        duplicate = len(ret_labels) <= 1 or not self._defs_used_outside(tail_defs, block, entry)

        cont_labels: dict[str, str] = {}
        cont_blocks: list[BasicBlock] = []
        if duplicate:
            for j, rl in enumerate(ret_labels):
                cl = f"{block.label}{sfx}.cont{j}"
                cont_labels[rl] = cl
                ren_tail: dict[Vreg, Value] = (
                    {v: Vreg(f"{v.name}{sfx}.k{j}") for v in tail_defs} if j > 0 else {}
                )
                cont_blocks.append(_clone_block(BasicBlock(cl, (), tail_body, block.terminator), ren_tail, {}))
        else:
            cl = f"{block.label}{sfx}.cont0"
            for rl in ret_labels:
                cont_labels[rl] = cl
            cont_blocks.append(BasicBlock(cl, (), tail_body, block.terminator))

        wired = []
        for b in callee.blocks:
            nb = _clone_block(b, ren, relabel)
            if isinstance(nb.terminator, Return):
                wired.append(BasicBlock(nb.label, nb.phis, nb.body, Jump(cont_labels[b.label])))
            else:
                wired.append(nb)

        head = BasicBlock(block.label, block.phis, block.body[:call_idx], Jump(relabel[callee.blocks[0].label]))
        self.redirects[block.label] = [c.label for c in cont_blocks]
        # continuations may themselves contain further calls from this round
        expanded_conts: list[BasicBlock] = []
        for c in cont_blocks:
            expanded_conts.extend(self._expand_block(c, entry))
        return [head, *wired, *expanded_conts]

    @staticmethod
    def _defs_used_outside(defs: set[Vreg], block: BasicBlock, entry: Function) -> bool:
        if not defs:
            return False
        for b in entry.blocks:
            for phi in b.phis:
                if any(isinstance(v, Vreg) and v in defs for v, _l in phi.incomings):
                    return True
            if b.label == block.label:
                continue
            for ins in b.body:
                if any(u in defs for u in instr_uses(ins)):
                    return True
            if isinstance(b.terminator, Branch) and b.terminator.cond in defs:
                return True
        return False

    def _apply_phi_redirects(self, blocks: list[BasicBlock]) -> list[BasicBlock]:
        if not self.redirects:
            return blocks
        out = []
        for b in blocks:
            phis = []
            for phi in b.phis:
                inc = list(phi.incomings)
                while any(l in self.redirects for _v, l in inc):
                    nxt = []
                    for v, l in inc:
                        if l in self.redirects:
                            nxt.extend((v, nl) for nl in self.redirects[l])
                        else:
                            nxt.append((v, l))
                    inc = nxt
                phis.append(Phi(phi.dst, tuple(inc)))
            out.append(BasicBlock(b.label, tuple(phis), b.body, b.terminator))
        return out


def _entry_has_calls(module: Module) -> bool:
    return any(isinstance(i, Call) for b in module.entry_function.blocks for i in b.body)


def flatten(module: Module, config: FlattenConfig = FlattenConfig()) -> Module:
    """Remove calls and loops from the entry function; result is single-function.

    Raises BudgetExceeded when a loop needs more trips than ``max_unroll`` or
    calls remain after ``max_inline_depth`` inline/fold rounds.
    """
    module = fold_constants(module)
    module = _unroll_counted_loops(module, config.max_unroll)
    module = fold_constants(module)
    rounds = 0
    counter = 0
    while _entry_has_calls(module):
        if rounds >= config.max_inline_depth:
            raise BudgetExceeded(f"calls remain after {config.max_inline_depth} inline rounds")
        inliner = _Inliner(module, counter)
        module = inliner.inline_level()
        counter = inliner.counter
        module = fold_constants(module)
        module = _unroll_counted_loops(module, config.max_unroll)
        module = fold_constants(module)
        rounds += 1
    entry = module.entry_function
    return Module(module.name, (entry,), module.entry, module.required_qubits, module.required_results)


# ---------------------------------------------------------------------------
# Peephole rewriting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateTemplate:
    name: str
    qubit_vars: tuple[int, ...]
    # pattern side: name of the angle variable to bind; replacement side: a
    # variable name or ("add", a, b)
    angle_var: str | tuple | None = None


@dataclass(frozen=True)
class RewriteRule:
    """A unitarily-equivalent gate-sequence rewrite.

    ``pattern`` and ``replacement`` are templates over shared qubit variables
    (0, 1). Replacement angle expressions may be a bound variable name or
    ``("add", a, b)``. Equivalence is checked with dense matrices when the
    rule is constructed; a rule that is not equivalent up to global phase
    cannot be built.
    """

    name: str
    pattern: tuple[GateTemplate, ...]
    replacement: tuple[GateTemplate, ...]

    def __post_init__(self) -> None:
        if len(self.pattern) != 2:
            raise ValueError("only 2-gate patterns are supported")
        if len(self.replacement) > len(self.pattern):
            raise ValueError("replacement may not be longer than pattern")
        n_vars = len({q for t in self.pattern for q in t.qubit_vars})
        for sample in (0.37, 1.91):
            binding = {"a": sample, "b": 2.0 * sample + 0.11}
            pat = [self._concrete(t, binding) for t in self.pattern]
            rep = [self._concrete(t, binding) for t in self.replacement]
            up = G.sequence_unitary(pat, n_vars)
            ur = G.sequence_unitary(rep, n_vars)
            if not G.equal_up_to_phase(up, ur):
                raise ValueError(f"rule '{self.name}' is not unitarily equivalent")

    @staticmethod
    def _concrete(t: GateTemplate, binding: dict[str, float]) -> tuple[str, tuple[int, ...], float | None]:
        angle = None
        if t.angle_var is not None:
            if isinstance(t.angle_var, tuple):
                op, x, y = t.angle_var
                assert op == "add"
                angle = binding[x] + binding[y]
            else:
                angle = binding[t.angle_var]
        return (t.name, t.qubit_vars, angle)


def default_rules() -> tuple[RewriteRule, ...]:
    r = RewriteRule
    g = GateTemplate
    return (
        r("hh_cancel", (g("h", (0,)), g("h", (0,))), ()),
        r("xx_cancel", (g("x", (0,)), g("x", (0,))), ()),
        r("zz_cancel", (g("z", (0,)), g("z", (0,))), ()),
        r("tt_to_s", (g("t", (0,)), g("t", (0,))), (g("s", (0,)),)),
        r("ss_to_z", (g("s", (0,)), g("s", (0,))), (g("z", (0,)),)),
        r("t_tdg_cancel", (g("t", (0,)), g("tdg", (0,))), ()),
        r("s_sdg_cancel", (g("s", (0,)), g("sdg", (0,))), ()),
        r("rz_merge", (g("rz", (0,), "a"), g("rz", (0,), "b")), (g("rz", (0,), ("add", "a", "b")),)),
        r("cx_cx_cancel", (g("cx", (0, 1)), g("cx", (0, 1))), ()),
    )


def _instr_qubits(instr: Instruction) -> set:
    if isinstance(instr, QGate):
        return set(instr.qubits)
    if isinstance(instr, (Measure, Reset)):
        return {instr.qubit}
    return set()


def _match_pair(rule: RewriteRule, g1: QGate, g2: QGate) -> dict | None:
    t1, t2 = rule.pattern
    if g1.name != t1.name or g2.name != t2.name:
        return None
    qb: dict[int, object] = {}
    for t, g in ((t1, g1), (t2, g2)):
        if len(t.qubit_vars) != len(g.qubits):
            return None
        for var, q in zip(t.qubit_vars, g.qubits):
            if var in qb and qb[var] != q:
                return None
            qb[var] = q
    if len(set(qb.values())) != len(qb):
        return None
    angles: dict[str, float] = {}
    for t, g in ((t1, g1), (t2, g2)):
        if t.angle_var is not None:
            if not isinstance(g.angle, (int, float)) or isinstance(g.angle, bool):
                return None
            angles[t.angle_var] = float(g.angle)
    return {"qubits": qb, "angles": angles}


def _build_replacement(rule: RewriteRule, binding: dict) -> list[QGate]:
    out = []
    for t in rule.replacement:
        qubits = tuple(binding["qubits"][v] for v in t.qubit_vars)
        angle = None
        if t.angle_var is not None:
            if isinstance(t.angle_var, tuple):
                _op, x, y = t.angle_var
                angle = binding["angles"][x] + binding["angles"][y]
            else:
                angle = binding["angles"][t.angle_var]
        out.append(QGate(t.name, qubits, angle))
    return out


def _peephole_block(block: BasicBlock, rules: tuple[RewriteRule, ...]) -> BasicBlock:
    body = list(block.body)
    changed = True
    while changed:
        changed = False
        for i, g1 in enumerate(body):
            if not isinstance(g1, QGate):
                continue
            q1 = set(g1.qubits)
            j = None
            for k in range(i + 1, len(body)):
                cand = body[k]
                touched = _instr_qubits(cand)
                if touched & q1:
                    j = k
                    break
            if j is None or not isinstance(body[j], QGate):
                continue
            g2 = body[j]
            if set(g2.qubits) - q1:
                continue  # partially overlapping operands; not a window
            for rule in rules:
                binding = _match_pair(rule, g1, g2)
                if binding is None:
                    continue
                repl = _build_replacement(rule, binding)
                body = body[:i] + repl + body[i + 1 : j] + body[j + 1 :]
                changed = True
                break
            if changed:
                break
    return BasicBlock(block.label, block.phis, tuple(body), block.terminator)


def peephole(module: Module, rules: tuple[RewriteRule, ...] | None = None) -> Module:
    """Apply rewrite rules within each block until no rule matches."""
    if rules is None:
        rules = default_rules()
    fns = []
    for fn in module.functions:
        blocks = tuple(_peephole_block(b, rules) for b in fn.blocks)
        fns.append(Function(fn.name, fn.params, blocks))
    return Module(module.name, tuple(fns), module.entry, module.required_qubits, module.required_results)
