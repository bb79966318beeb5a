import math
from collections import Counter

import numpy as np
import pytest

from conftest import max_distribution_error, random_program
from ionflow import gates as G
from ionflow import textir
from ionflow.emulator import (
    NOISELESS,
    NoiseModel,
    ZoneViolation,
    apply_1q,
    apply_cx,
    apply_depolarizing,
    apply_dephasing,
    apply_gate,
    enumerate_exec_leaves,
    enumerate_outcomes,
    run_shot,
    run_shots,
)
from ionflow.qccd import PlacedOp
from ionflow.toolchain import compile_module


def compile_src(body: str, qubits=2, results=2, **kw):
    src = f"module t\nattrs required_qubits={qubits} required_results={results}\nfunc @main() {{\n{body}\n}}\n"
    return compile_module(textir.parse(src), **kw)


# -- gate application -----------------------------------------------------------

def test_h_on_zero_gives_plus():
    state = np.array([1, 0], dtype=complex)
    apply_1q(state, G.H, 0, 1)
    assert np.allclose(state, [1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_cx_flips_target_when_control_set():
    # |10> in little-endian (qubit0=0, qubit1=1) is index 2
    state = np.zeros(4, dtype=complex)
    state[2] = 1
    apply_cx(state, control=1, target=0, n=2)
    expect = np.zeros(4)
    expect[3] = 1
    assert np.allclose(state, expect)


def test_rz_phase_convention():
    theta = 0.83
    state = np.array([1, 0], dtype=complex)
    apply_1q(state, G.rz(theta), 0, 1)
    assert np.allclose(state[0], np.exp(-1j * theta / 2))
    state = np.array([0, 1], dtype=complex)
    apply_1q(state, G.rz(theta), 0, 1)
    assert np.allclose(state[1], np.exp(+1j * theta / 2))


def test_gate_norm_preserved():
    rng = np.random.default_rng(0)
    state = rng.normal(size=8) + 1j * rng.normal(size=8)
    state /= np.linalg.norm(state)
    for name, qubits, angle in (("h", (0,), None), ("ry", (2,), 0.7), ("cx", (1, 2), None)):
        op = PlacedOp("gate", name, qubits, angle, None, (0, 1))
        if name == "cx":
            apply_cx(state, *qubits, 3)
        else:
            apply_1q(state, G.gate_unitary(name, angle), qubits[0], 3)
        assert abs(np.linalg.norm(state) - 1.0) < 1e-9


def test_zone_check_raises_on_bad_placement():
    op = PlacedOp("gate", "h", (0,), None, None, (2, 3))
    state = np.array([1, 0], dtype=complex)
    with pytest.raises(ZoneViolation):
        apply_gate(state, op, (0,), 1)


# -- noise channels -------------------------------------------------------------

def test_zero_probability_is_identity():
    rng = np.random.default_rng(1)
    state = np.array([0.6, 0.8j], dtype=complex)
    before = state.copy()
    apply_depolarizing(state, (0,), 0.0, 1, rng)
    apply_dephasing(state, 0, 0.0, 1, rng)
    assert np.array_equal(state, before)


def test_dephasing_scales_x_expectation():
    p = 0.2
    rng = np.random.default_rng(42)
    total = 0.0
    samples = 20000
    for _ in range(samples):
        state = np.array([1, 1], dtype=complex) / math.sqrt(2)
        apply_dephasing(state, 0, p, 1, rng)
        total += (state.conj() @ (G.X @ state)).real
    assert abs(total / samples - (1 - 2 * p)) < 0.01


def test_depolarizing_shrinks_bloch_vector():
    # single-qubit depolarizing with probability p scales every Bloch
    # component by 1 - 4p/3 on average
    p = 0.3
    rng = np.random.default_rng(7)
    samples = 100000
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    total = 0.0
    for _ in range(samples):
        state = plus.copy()
        apply_depolarizing(state, (0,), p, 1, rng)
        total += (state.conj() @ (G.X @ state)).real
    assert abs(total / samples - (1 - 4 * p / 3)) < 0.01


def test_measurement_flip_noise():
    res = compile_src("block e:\n  mz q0 -> r0\n  output result r0\n  ret", qubits=1, results=1)
    noisy = NoiseModel(p_meas=0.25)
    shots = run_shots(res.program, noisy, 8000, 11)
    ones = sum(s.outputs[0] for s in shots)
    assert abs(ones / 8000 - 0.25) < 0.02  # state is |0>, flips only from recording noise


def test_reset_flip_noise():
    res = compile_src("block e:\n  x q0\n  reset q0\n  mz q0 -> r0\n  output result r0\n  ret", qubits=1, results=1)
    noisy = NoiseModel(p_reset=0.2)
    shots = run_shots(res.program, noisy, 8000, 12)
    ones = sum(s.outputs[0] for s in shots)
    assert abs(ones / 8000 - 0.2) < 0.02


def test_prep_overrotation_changes_angles():
    body = "block e:\n  ry(1.5707963267948966) q0\n  mz q0 -> r0\n  output result r0\n  ret"
    res = compile_src(body, qubits=1, results=1)
    exact = run_shots(res.program, NOISELESS, 4000, 1)
    over = run_shots(res.program, NoiseModel(prep_overrotation=math.pi / 2), 4000, 1)
    p_exact = sum(s.outputs[0] for s in exact) / 4000
    p_over = sum(s.outputs[0] for s in over) / 4000
    assert abs(p_exact - 0.5) < 0.03
    assert p_over > 0.97  # ry(pi) |0> = |1>


# -- shots ------------------------------------------------------------------------

def test_same_master_seed_reproduces():
    m = random_program(5)
    res = compile_module(m)
    a = run_shots(res.program, NOISELESS, 100, 123)
    b = run_shots(res.program, NOISELESS, 100, 123)
    assert a == b


def test_parallel_jobs_identical():
    m = random_program(9)
    res = compile_module(m)
    a = run_shots(res.program, NOISELESS, 160, 3, jobs=1)
    b = run_shots(res.program, NOISELESS, 160, 3, jobs=4)
    assert a == b


def test_shot_outputs_match_output_op_count():
    m = random_program(4)
    res = compile_module(m)
    want = m.required_results + 2  # array markers + one record per slot
    for s in run_shots(res.program, NOISELESS, 30, 0):
        assert len(s.outputs) == want


# -- exact enumeration --------------------------------------------------------------

def test_enumerate_h_measure():
    res = compile_src("block e:\n  h q0\n  mz q0 -> r0\n  output result r0\n  ret", qubits=1, results=1)
    dist = enumerate_outcomes(res.program)
    assert max_distribution_error(dist, {(0,): 0.5, (1,): 0.5}) < 1e-12


def test_enumeration_probabilities_sum_to_one():
    for seed in range(20):
        m = random_program(seed)
        dist = enumerate_outcomes(compile_module(m).program)
        assert abs(sum(dist.values()) - 1.0) < 1e-12


def test_shot_frequencies_converge_to_enumeration():
    m = random_program(17)
    res = compile_module(m)
    dist = enumerate_outcomes(res.program)
    n = 20000
    freq = Counter(s.outputs for s in run_shots(res.program, NOISELESS, n, 77))
    for outcome, p in dist.items():
        got = freq.get(outcome, 0) / n
        sigma = math.sqrt(max(p * (1 - p), 1e-12) / n)
        assert abs(got - p) <= 4 * sigma + 1e-9, (outcome, got, p)


def test_enumeration_counts_transport():
    from ionflow.experiments import RusConfig, build_rus

    res = compile_module(build_rus(RusConfig(limit=2, style="loop")))
    leaves = enumerate_exec_leaves(res.program)
    avg_exact = sum(l.prob * l.executed_transport_steps for l in leaves)
    shots = run_shots(res.program, NOISELESS, 20000, 5)
    avg_mc = sum(s.executed_transport_steps for s in shots) / len(shots)
    assert abs(avg_exact - avg_mc) < 0.25


def test_false_guard_skips_or_keeps_transport_by_mode():
    # q0 deterministically measures 1, so the else-arm never runs. The
    # then-arm extends the unconditional entry chain (its transport runs in
    # both modes, gates stay conditional); the else-arm starts a fresh chain
    # guarded by its own predicate, so conditional mode drops its transport
    # and always mode keeps it.
    body = """
block e:
  x q0
  mz q0 -> r0
  %m = read_result r0
  br %m, hot, cold
block hot:
  cx q0, q2
  jmp done
block cold:
  cx q1, q2
  cx q0, q1
  jmp done
block done:
  output result r0
  ret
"""
    from ionflow.qccd import ALWAYS, TransportItem

    cond = compile_src(body, qubits=3, results=1)
    alw = compile_src(body, qubits=3, results=1, mode=ALWAYS)
    planned = cond.program.planned_transport_steps
    cold_steps = 0
    seen_layers = 0
    for item in cond.program.items:
        if isinstance(item, TransportItem) and item.guard is not True:
            cold_steps += len(item.steps)
    assert planned > 0 and 0 < cold_steps < planned
    sc = run_shots(cond.program, NOISELESS, 20, 0)
    sa = run_shots(alw.program, NOISELESS, 20, 0)
    assert all(s.executed_transport_steps == planned - cold_steps for s in sc)
    assert all(s.executed_transport_steps == planned for s in sa)
    assert all(s.skipped_blocks == 1 for s in sc)  # the dead arm
    assert all(a.outputs == c.outputs for a, c in zip(sa, sc))


def test_norm_drift_detected(monkeypatch):
    # a broken (non-unitary) gate matrix must trip the norm guard at the
    # next measurement instead of silently skewing probabilities
    res = compile_src("block e:\n  h q0\n  mz q0 -> r0\n  output result r0\n  ret", qubits=1, results=1)
    bad = np.array([[1.1, 0], [0, 1.1]], dtype=complex)
    real = G.gate_unitary
    monkeypatch.setattr(G, "gate_unitary", lambda name, angle=None: bad if name == "h" else real(name, angle))
    with pytest.raises(FloatingPointError):
        run_shot(res.program, NOISELESS, 0, 0)
