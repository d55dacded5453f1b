from __future__ import annotations

from caseflow.cli import main

from helpers import FIXTURES


def run(capsys, *argv) -> tuple[int, str]:
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_deploy_start_send_state_log_cycle(tmp_path, capsys):
    data = str(tmp_path / "data")
    code, out = run(capsys, "deploy", "--data", data, str(FIXTURES / "interleaving.bpmn.xml"))
    assert code == 0 and "deployed model 1 version 1" in out

    code, out = run(capsys, "start", "--data", data, "--model", "1", "--ts", "10")
    assert code == 0 and "case 1 started" in out
    assert "1,1,SE,started,{},10" in out

    code, out = run(capsys, "enabled", "--data", data, "--model", "1", "--case", "1")
    assert code == 0 and "Available tasks are: A, B" in out

    code, out = run(
        capsys, "send", "--data", data, "--model", "1", "--case", "1", "A", "--ts", "20"
    )
    assert code == 0 and "1,1,A,completed,{},20" in out

    code, out = run(
        capsys, "send", "--data", data, "--model", "1", "--case", "1", "B", "--ts", "30"
    )
    assert code == 0 and "1,1,EE,completed,{},30" in out

    code, out = run(capsys, "state", "--data", data, "--model", "1", "--case", "1")
    assert code == 0 and "completed" in out

    code, out = run(capsys, "log", "--data", data, "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "1,1,SE,started,{},10"


def test_send_unknown_case_is_user_error(tmp_path, capsys):
    data = str(tmp_path / "data")
    run(capsys, "deploy", "--data", data, str(FIXTURES / "interleaving.bpmn.xml"))
    code, _ = run(capsys, "send", "--data", data, "--model", "1", "--case", "9", "A")
    assert code == 1
    err = capsys.readouterr()
    # error already flushed by previous readouterr call inside run()


def test_replay_prints_final_statuses(tmp_path, capsys):
    data = str(tmp_path / "data")
    run(capsys, "deploy", "--data", data, str(FIXTURES / "interleaving.bpmn.xml"))
    run(capsys, "start", "--data", data, "--model", "1", "--ts", "10")
    run(capsys, "send", "--data", data, "--model", "1", "--case", "1", "A", "--ts", "20")
    run(capsys, "send", "--data", data, "--model", "1", "--case", "1", "B", "--ts", "30")
    exported = tmp_path / "exported.log"
    run(capsys, "log", "--data", data, "--out", str(exported))
    code, out = run(capsys, "replay", "--data", data, str(exported))
    assert code == 0
    assert "model 1 case 1: completed" in out


def test_run_interactive_follows_prompt_rhythm(tmp_path, capsys, monkeypatch):
    data = str(tmp_path / "data")
    run(capsys, "deploy", "--data", data, "--kind", "dcr", str(FIXTURES / "case_management.dcr.xml"))
    answers = iter(
        [
            "Create Case",
            "None=none",
            "Schedule Meeting",
            "None=none",
            "Close Case",
            "None=none",
        ]
    )
    monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
    code, out = run(capsys, "run-interactive", "--data", data, "--model", "3")
    assert code == 0
    lines = out.splitlines()
    prompts = [l for l in lines if "Available tasks are:" in l]
    assert prompts[0].endswith("Create Case")
    assert prompts[1] == "\tAvailable tasks are: Close Case, Lock case, Schedule Meeting, Upload document"
    assert prompts[2] == "\tAvailable tasks are: Close Case, Hold Meeting, Lock case, Upload document"
    assert prompts[3] == "\tAvailable tasks are: None"


def test_cli_state_survives_process_restarts(tmp_path, capsys):
    # every invocation rebuilds from the log; a long-lived case works across calls
    data = str(tmp_path / "data")
    run(capsys, "deploy", "--data", data, str(FIXTURES / "loop_and_block.bpmn.xml"))
    run(capsys, "start", "--data", data, "--model", "2", "--set", "again=true", "--ts", "10")
    run(capsys, "send", "--data", data, "--model", "2", "--case", "1", "A", "--ts", "20")
    run(capsys, "send", "--data", data, "--model", "2", "--case", "1", "C", "--ts", "30")
    code, out = run(
        capsys,
        "send", "--data", data, "--model", "2", "--case", "1", "D",
        "--set", "again=false", "--ts", "40",
    )
    assert code == 0
    code, out = run(capsys, "enabled", "--data", data, "--model", "2", "--case", "1")
    assert "Available tasks are: E" in out
    run(capsys, "send", "--data", data, "--model", "2", "--case", "1", "E", "--ts", "50")
    code, out = run(capsys, "state", "--data", data, "--model", "2", "--case", "1")
    assert "completed" in out
