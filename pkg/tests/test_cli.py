import json

from ionflow.cli import main
from ionflow.experiments import CSV_HEADER

GOOD = """module t
attrs required_qubits=2 required_results=2
func @main() {
block e:
  h q0
  mz q0 -> r0
  %m = read_result r0
  br %m, a, b
block a:
  x q1
  jmp b
block b:
  mz q1 -> r1
  output result r0
  output result r1
  ret
}
"""

BACK_EDGE = """module t
attrs required_qubits=1 required_results=1
func @main() {
block a:
  jmp a
}
"""


def test_compile_emits_exec_json(tmp_path, capsys):
    src = tmp_path / "p.qir.txt"
    src.write_text(GOOD)
    out = tmp_path / "prog.json"
    assert main(["compile", str(src), "--emit", "exec", "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["qubits"] == 2 and data["conditional_transport"] is True
    assert any(it["kind"] == "layer" for it in data["items"])


def test_compile_emits_guarded_text(tmp_path):
    src = tmp_path / "p.qir.txt"
    src.write_text(GOOD)
    out = tmp_path / "g.txt"
    assert main(["compile", str(src), "--emit", "guarded", "-o", str(out)]) == 0
    text = out.read_text()
    assert "guarded @main" in text and "guard" in text


def test_compile_back_edge_fails_with_diagnostic(tmp_path, capsys):
    src = tmp_path / "bad.qir.txt"
    src.write_text(BACK_EDGE)
    assert main(["compile", str(src)]) == 1
    assert "BACK_EDGE" in capsys.readouterr().err


PRESSURED = """module t
attrs required_qubits=2 required_results=2
func @main() {
block e:
  mz q0 -> r0
  mz q1 -> r1
  %a = read_result r0
  %b = read_result r1
  %c = and %a, %b
  br %c, a, b
block a:
  x q1
  jmp b
block b:
  output result r0
  ret
}
"""


def test_register_pressure_message(tmp_path, capsys):
    src = tmp_path / "p.qir.txt"
    src.write_text(PRESSURED)
    assert main(["compile", str(src), "--registers", "1"]) == 1
    assert "register pressure exceeds real-time register file" in capsys.readouterr().err


def test_run_writes_per_shot_csv(tmp_path):
    src = tmp_path / "p.qir.txt"
    src.write_text(GOOD)
    out = tmp_path / "shots.csv"
    assert main(["run", str(src), "--shots", "50", "--seed", "4", "--csv", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("shot,outputs,")
    assert len(lines) == 51


def test_experiment_report_and_json(tmp_path):
    csv_out = tmp_path / "r.csv"
    json_out = tmp_path / "r.json"
    rc = main(
        [
            "experiment", "msd", "--limit", "1", "--basis", "Z",
            "--shots", "500", "--seed", "7", "--noiseless",
            "--csv", str(csv_out), "--json", str(json_out),
        ]
    )
    assert rc == 0
    lines = csv_out.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    row = lines[1].split(",")
    assert row[0] == "msd" and row[3] == "1"
    data = json.loads(json_out.read_text())
    assert 0.0 <= data["success_fraction"] <= 1.0


def test_experiment_emit_exec(tmp_path):
    out = tmp_path / "rus.json"
    rc = main(
        [
            "experiment", "rus", "--limit", "2", "--style", "recursion",
            "--shots", "1", "--seed", "0", "--emit", "exec", "-o", str(out),
        ]
    )
    assert rc == 0
    data = json.loads(out.read_text())
    assert data["qubits"] == 3


def test_report_merges_csvs(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for i, f in enumerate((a, b)):
        main(["experiment", "rus", "--limit", "1", "--shots", "100", "--seed", str(i), "--noiseless", "--csv", str(f)])
    merged = tmp_path / "merged.csv"
    jm = tmp_path / "merged.json"
    assert main(["report", str(a), str(b), "-o", str(merged), "--json", str(jm)]) == 0
    lines = merged.read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 3
    assert len(json.loads(jm.read_text())) == 2


def test_identical_invocations_byte_identical_any_jobs(tmp_path):
    outs = []
    for jobs in ("1", "3"):
        f = tmp_path / f"r{jobs}.csv"
        rc = main(
            [
                "experiment", "rus", "--limit", "3", "--basis", "X", "--style", "loop",
                "--shots", "400", "--seed", "99", "--noiseless", "--jobs", jobs,
                "--csv", str(f),
            ]
        )
        assert rc == 0
        outs.append(f.read_bytes())
    assert outs[0] == outs[1]


def test_trap_config_accepted(tmp_path):
    trap = tmp_path / "trap.json"
    trap.write_text('{"slots": 20, "gate_zones": [[0,1],[4,5],[8,9],[12,13],[16,17]]}')
    src = tmp_path / "p.qir.txt"
    src.write_text(GOOD)
    assert main(["compile", str(src), "--trap", str(trap)]) == 0
