import json
import subprocess
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pytest

from tlmt.cli import main, read_trace, TraceError, write_atomic
from tlmt.envs import PARKING_VARIABLES
from tlmt.tasks import ConfigError, TaskConfig, corpus_config, load_config

REPO = Path(__file__).resolve().parents[1]


def write_config(tmp_path, cfg, name="config.json"):
    data = asdict(cfg) if isinstance(cfg, TaskConfig) else cfg
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


def write_trace(tmp_path, points, name="trace.csv"):
    lines = ["step," + ",".join(PARKING_VARIABLES)]
    for t, (x, y) in enumerate(points):
        lines.append(f"{t},{x},{y},0,0,1,0")
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_compile_task1(tmp_path, capsys):
    cfg = write_config(tmp_path, corpus_config("parking_1"))
    code, out, _ = run(["compile", "--config", cfg, "--out", tmp_path / "o"], capsys)
    assert code == 0
    assert "|P| = 2" in out and "|Q| = 3" in out
    doc = json.loads((tmp_path / "o" / "dfa.json").read_text())
    assert doc["num_states"] == 3
    assert doc["letters"][0]["formula"].startswith("((((x + 0.2)^2)")
    assert "p1: ((((x - a)^2)" in out
    assert (tmp_path / "o" / "dfa.dot").read_text().startswith("digraph")
    assert json.loads((tmp_path / "o" / "letters.json").read_text())["states"] == 3


def test_compile_true_and_task2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"formula": "true", "env": "parking"})
    code, out, _ = run(["compile", "--config", cfg], capsys)
    assert code == 0 and "|Q| = 1" in out
    cfg = write_config(tmp_path, corpus_config("parking_2"))
    code, out, _ = run(["compile", "--config", cfg], capsys)
    assert code == 0 and "|P| = 3" in out


def test_exit_codes(tmp_path, capsys):
    assert run(["compile", "--config", tmp_path / "missing.json"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["compile", "--config", bad], capsys)[0] == 2
    unknown = write_config(tmp_path, {"formula": "true", "env": "moon"}, "u.json")
    assert run(["compile", "--config", unknown], capsys)[0] == 2
    syntax = write_config(tmp_path, {"formula": "F (x <", "env": "parking"}, "s.json")
    code, _, err = run(["compile", "--config", syntax], capsys)
    assert code == 3 and "compile error" in err
    unresolved = write_config(tmp_path, {"formula": "F (x < zz)", "env": "parking"}, "r.json")
    assert run(["compile", "--config", unresolved], capsys)[0] == 3
    cfg = write_config(tmp_path, corpus_config("parking_1"), "ok.json")
    assert run(["label", "--config", cfg], capsys)[0] == 2  # --trace missing
    assert run(["train", "--config", cfg, "--seeds", 0], capsys)[0] == 2
    assert run(["eval", "--config", cfg, "--weights", tmp_path / "none.npz"], capsys)[0] == 4


def test_label_and_oracle(tmp_path, capsys):
    cfg = write_config(tmp_path, corpus_config("parking_1"))
    trace = write_trace(tmp_path, [(0, 0), (-0.2, -0.08), (0, 0), (0.2, 0.08)])
    code, labels, _ = run(["label", "--config", cfg, "--trace", trace], capsys)
    assert code == 0
    lines = labels.splitlines()
    assert lines[0] == "step,label,p0,p1"
    assert [l.split(",")[1] for l in lines[1:]] == ["0", "1", "0", "2"]
    code, out, _ = run(["oracle", "--config", cfg, "--trace", trace], capsys)
    assert code == 0 and out.strip() == "accepted=true"
    reversed_trace = write_trace(tmp_path, [(0.2, 0.08), (-0.2, -0.08)], "rev.csv")
    assert run(["oracle", "--config", cfg, "--trace", reversed_trace], capsys)[1].strip() == "accepted=false"
    run(["label", "--config", cfg, "--trace", trace, "--out", tmp_path / "lab"], capsys)
    assert (tmp_path / "lab" / "labels.csv").read_text() == labels


def test_trace_errors(tmp_path, capsys):
    cfg = write_config(tmp_path, corpus_config("parking_1"))
    empty = tmp_path / "empty.csv"
    empty.write_text("step," + ",".join(PARKING_VARIABLES) + "\n")
    assert run(["oracle", "--config", cfg, "--trace", empty], capsys)[0] == 4
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("a,b\n1,2\n")
    with pytest.raises(TraceError):
        read_trace(wrong, PARKING_VARIABLES)
    ok = write_trace(tmp_path, [(0.1, 0.2)])
    assert np.array_equal(read_trace(ok, PARKING_VARIABLES), [[0.1, 0.2, 0, 0, 1, 0]])


def small_train_config(tmp_path, **agent):
    base = {"episodes": 4, "max_steps": 15, "eval_period": 2, "eval_episodes": 2}
    return write_config(tmp_path, corpus_config("parking_1_lite", **{**base, **agent}))


def test_train_artifacts(tmp_path, capsys):
    cfg = small_train_config(tmp_path)
    out = tmp_path / "run"
    code, text, _ = run(["train", "--config", cfg, "--seeds", 3, "--mode", "crm_her", "--out", out], capsys)
    assert code == 0
    assert (out / "config.json").read_bytes() == cfg.read_bytes()
    assert sorted(p.name for p in out.glob("metrics_seed*.csv")) == [
        "metrics_seed0.csv", "metrics_seed1.csv", "metrics_seed2.csv"]
    assert len(list(out.glob("weights_seed*.npz"))) == 3
    assert set(json.loads((out / "summary.json").read_text())) == {"0", "1", "2"}
    header = (out / "metrics_seed0.csv").read_text().splitlines()[0].split(",")
    assert header[:9] == ["seed", "episode", "steps", "return", "success", "mode",
                          "buffer_real", "buffer_crm", "buffer_her"]
    assert not list(out.glob(".*"))  # no leftover temp files
    code, text, _ = run(["eval", "--config", cfg, "--weights", out / "weights_seed0.npz",
                         "--episodes", 3], capsys)
    assert code == 0 and text.startswith("success_rate=")


def test_train_is_byte_deterministic(tmp_path, capsys):
    cfg = small_train_config(tmp_path)
    for d in ("a", "b"):
        assert run(["train", "--config", cfg, "--out", tmp_path / d], capsys)[0] == 0
    assert (tmp_path / "a" / "metrics_seed0.csv").read_bytes() == \
        (tmp_path / "b" / "metrics_seed0.csv").read_bytes()


def test_episodes_flag_overrides_config(tmp_path, capsys):
    cfg = small_train_config(tmp_path)
    run(["train", "--config", cfg, "--episodes", 2, "--out", tmp_path / "r"], capsys)
    assert len((tmp_path / "r" / "metrics_seed0.csv").read_text().splitlines()) == 3


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        TaskConfig.from_dict({"formula": "true"})
    with pytest.raises(ConfigError):
        TaskConfig.from_dict({"formula": "true", "env": "parking", "extra": 1})
    cfg = TaskConfig.from_dict({"formula": "F (x < a)", "env": "parking", "constants": {"a": 1},
                                "goal_map": {"a": "qq"}})
    with pytest.raises(ConfigError):
        cfg.goal_spec()
    with pytest.raises(ConfigError):
        TaskConfig.from_dict({"formula": "true", "env": "parking", "agent": {"nope": 1}}).train_spec()
    path = write_config(tmp_path, corpus_config("reacher_1"))
    assert "x" in load_config(path).variables


def test_write_atomic_overwrites(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    write_atomic(p, "one")
    write_atomic(p, b"two")
    assert p.read_text() == "two"
    assert [x.name for x in p.parent.iterdir()] == ["f.txt"]


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, corpus_config("parking_1"))
    res = subprocess.run([sys.executable, "-m", "tlmt", "compile", "--config", str(cfg)],
                         capture_output=True, text=True, cwd=REPO)
    assert res.returncode == 0 and "|Q| = 3" in res.stdout


@pytest.mark.parametrize("path", sorted((REPO / "configs").glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_compile(path):
    cfg = load_config(path)
    task = cfg.compile()
    assert task.num_states >= 1
    cfg.goal_spec().validate(task)
    cfg.train_spec()


def test_lite_config_matches_corpus_settings():
    shipped = load_config(REPO / "configs" / "parking_1_lite.json")
    assert shipped.agent == corpus_config("parking_1_lite").agent
    assert shipped.formula == corpus_config("parking_1_lite").formula
