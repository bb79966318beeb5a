import pytest

from ionflow import textir
from ionflow.ir import (
    Branch,
    Cfg,
    CycleDetected,
    Jump,
    diagnostics_ok,
    topo_sort,
    validate_profile,
)


def parse(body: str, qubits: int = 3, results: int = 3):
    src = f"module t\nattrs required_qubits={qubits} required_results={results}\nfunc @main() {{\n{body}\n}}\n"
    return textir.parse(src)


DIAMOND = """
block entry:
  h q0
  mz q0 -> r0
  %m = read_result r0
  br %m, then, else
block then:
  x q1
  jmp merge
block else:
  y q1
  jmp merge
block merge:
  ret
"""


def test_self_loop_is_back_edge():
    m = parse("block a:\n  jmp a")
    diags = validate_profile(m, strict=True)
    assert any(d.code == "BACK_EDGE" and d.severity == "error" for d in diags)


def test_back_edge_warns_when_lenient():
    m = parse("block a:\n  jmp a")
    diags = validate_profile(m, strict=False)
    assert any(d.code == "BACK_EDGE" and d.severity == "warning" for d in diags)
    assert diagnostics_ok(diags)


def test_diamond_is_clean():
    m = parse(DIAMOND)
    assert validate_profile(m, strict=True) == []


def test_validation_is_idempotent():
    m = parse(DIAMOND)
    assert validate_profile(m) == validate_profile(m) == []


def test_qubit_range_checked():
    m = parse("block a:\n  h q5\n  ret")
    assert any(d.code == "QUBIT_RANGE" for d in validate_profile(m))


def test_result_range_checked():
    m = parse("block a:\n  mz q0 -> r9\n  ret")
    assert any(d.code == "RESULT_RANGE" for d in validate_profile(m))


def test_double_definition_rejected():
    m = parse("block a:\n  %x = add 1, 2\n  %x = add 3, 4\n  ret")
    assert any(d.code == "NON_SSA" for d in validate_profile(m))


def test_use_before_def_rejected():
    m = parse("block a:\n  %y = add %x, 1\n  ret")
    assert any(d.code == "USE_BEFORE_DEF" for d in validate_profile(m))


def test_use_not_dominated_rejected():
    body = """
block entry:
  mz q0 -> r0
  %m = read_result r0
  br %m, then, else
block then:
  %v = add 1, 2
  jmp merge
block else:
  jmp merge
block merge:
  %w = add %v, 1
  ret
"""
    m = parse(body)
    assert any(d.code == "USE_BEFORE_DEF" for d in validate_profile(m))


def test_cx_needs_distinct_qubits():
    m = parse("block a:\n  cx q0, q0\n  ret")
    assert any(d.code == "DUP_QUBIT" for d in validate_profile(m))


def test_rotation_angle_required_by_grammar():
    with pytest.raises(textir.ParseError):
        parse("block a:\n  rz q0\n  ret")


def test_strict_rejects_calls_lenient_allows():
    body = "block a:\n  call @f()\n  ret"
    src = f"module t\nattrs required_qubits=1 required_results=1\nfunc @main() {{\n{body}\n}}\nfunc @f() {{\nblock e:\n  ret\n}}\n"
    m = textir.parse(src)
    assert diagnostics_ok(validate_profile(m, strict=False))
    assert any(d.code == "CALL_IN_PROFILE" for d in validate_profile(m, strict=True))


def test_unresolved_call_is_error_even_lenient():
    m = parse("block a:\n  call @nope()\n  ret")
    assert any(d.code == "UNRESOLVED_CALL" for d in validate_profile(m, strict=False))


# -- topo sort ---------------------------------------------------------------

def test_topo_diamond_source_order_tiebreak():
    m = parse(DIAMOND)
    cfg = Cfg.from_function(m.entry_function)
    assert topo_sort(cfg) == ["entry", "then", "else", "merge"]


def test_topo_single_block():
    m = parse("block only:\n  ret")
    assert topo_sort(Cfg.from_function(m.entry_function)) == ["only"]


def test_topo_chain():
    m = parse("block a:\n  jmp b\nblock b:\n  jmp c\nblock c:\n  ret")
    assert topo_sort(Cfg.from_function(m.entry_function)) == ["a", "b", "c"]


def test_topo_cycle_raises():
    m = parse("block a:\n  jmp b\nblock b:\n  jmp a")
    with pytest.raises(CycleDetected):
        topo_sort(Cfg.from_function(m.entry_function))


def test_topo_is_permutation_respecting_edges():
    m = parse(DIAMOND)
    cfg = Cfg.from_function(m.entry_function)
    order = topo_sort(cfg)
    assert sorted(order) == sorted(cfg.nodes)
    pos = {n: i for i, n in enumerate(order)}
    assert all(pos[e.src] < pos[e.dst] for e in cfg.edges)


def test_cfg_mirrors_terminators_exactly():
    m = parse(DIAMOND)
    fn = m.entry_function
    cfg = Cfg.from_function(fn)
    for b in fn.blocks:
        outs = [(e.dst, e.condition) for e in cfg.edges if e.src == b.label]
        t = b.terminator
        if isinstance(t, Jump):
            assert outs == [(t.target, "uncond")]
        elif isinstance(t, Branch):
            assert outs == [(t.then_target, "true"), (t.else_target, "false")]
        else:
            assert outs == []
