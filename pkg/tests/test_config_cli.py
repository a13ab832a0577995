import csv
import filecmp
import io
import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gailee.cli import main, run_grad_check
from gailee.config import ConfigError, TrainConfig, dump_config, load_config, parse_config_text
from gailee.data import default_grammar

SMALL_FLAGS = ["--hidden", "16", "--dim-surface", "8", "--dim-pos", "4", "--dim-pretrained", "8",
               "--dim-action", "4"]


# --------------------------------------------------------------------------
# configuration


def test_published_defaults():
    c = TrainConfig()
    assert (c.gamma, c.hidden, c.dim_surface, c.dim_pos, c.dim_pretrained) == (0.01, 256, 200, 100, 200)
    assert (c.fixed_reward_correct, c.fixed_reward_wrong, c.epsilon, c.dropout, c.lr) == (1.0, -1.0, 0.1, 0.05, 0.001)


def test_config_text_round_trip():
    c = TrainConfig(gamma=0.5, reward_mode="fixed", epochs=7)
    assert TrainConfig(**parse_config_text(dump_config(c))) == c


@pytest.mark.parametrize("text,key", [("bogus = 1", "bogus"), ("gamma = 2", "gamma"), ("lr = fast", "lr"),
                                      ("reward_mode = magic", "reward_mode"), ("just words", "line 1")])
def test_config_errors_name_the_key(tmp_path, text, key):
    (tmp_path / "c.txt").write_text(text + "\n")
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "c.txt")
    assert info.value.key == key


maybe = lambda s: st.none() | s  # noqa: E731


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(maybe(st.floats(0, 1)), maybe(st.floats(0, 1)), maybe(st.integers(1, 9)), maybe(st.integers(1, 9)),
       maybe(st.sampled_from(["fixed", "gail"])), maybe(st.sampled_from(["fixed", "gail"])))
def test_flag_beats_file_beats_default(tmp_path, g_file, g_flag, e_file, e_flag, m_file, m_flag):
    lines = [f"{k} = {v}" for k, v in (("gamma", g_file), ("epochs", e_file), ("reward_mode", m_file))
             if v is not None]
    path = tmp_path / "cfg.txt"
    path.write_text("\n".join(lines) + "\n")
    flags = {"gamma": None if g_flag is None else repr(g_flag), "epochs": None if e_flag is None else str(e_flag),
             "reward_mode": m_flag}
    c = load_config(path, **flags)
    d = TrainConfig()

    def pick(flag, file, default):
        return flag if flag is not None else file if file is not None else default

    assert c.gamma == pick(g_flag, g_file, d.gamma)
    assert c.epochs == pick(e_flag, e_file, d.epochs)
    assert c.reward_mode == pick(m_flag, m_file, d.reward_mode)


# --------------------------------------------------------------------------
# command line


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    for cmd in ("train", "eval", "generate-data", "grad-check", "inspect-rewards"):
        with pytest.raises(SystemExit) as info:
            main([cmd, "--help"])
        assert info.value.code == 0
    assert "--reward-mode" in capsys.readouterr().out


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["generate-data", "--seed", "1", "--train-size", "40", "--dev-size", "8", "--test-size", "8",
                 "--embedding-dim", "8", "--out", str(out)]) == 0
    return out


def test_generate_data_is_byte_identical_and_sized(tmp_path, capsys):
    for name in ("a", "b"):
        assert _run(["generate-data", "--seed", "7", "--out", tmp_path / name, "--embedding-dim", "4"], capsys)[0] == 0
    names = ["train.jsonl", "dev.jsonl", "test.jsonl", "schema.json", "grammar.json", "embeddings.txt"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert match == names and not mismatch and not errors
    counts = [sum(1 for _ in open(tmp_path / "a" / f"{s}.jsonl")) for s in ("train", "dev", "test")]
    assert counts == [200, 50, 50]


def test_generate_data_seed_falls_back_to_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GAIL_EE_SEED", "7")
    _run(["generate-data", "--out", tmp_path / "env", "--embedding-dim", "4", "--train-size", "5"], capsys)
    _run(["generate-data", "--seed", "7", "--out", tmp_path / "flag", "--embedding-dim", "4", "--train-size", "5"],
         capsys)
    assert filecmp.cmp(tmp_path / "env" / "train.jsonl", tmp_path / "flag" / "train.jsonl", shallow=False)
    monkeypatch.setenv("GAIL_EE_SEED", "x")
    assert _run(["generate-data", "--out", tmp_path / "bad"], capsys)[0] == 2


def test_generate_data_warns_without_ambiguous_trigger(tmp_path, capsys):
    g = default_grammar().to_dict()
    g["trigger_lexicon"] = {w: senses[:1] for w, senses in g["trigger_lexicon"].items()}
    (tmp_path / "g.json").write_text(json.dumps(g))
    code, _, err = _run(["generate-data", "--grammar", tmp_path / "g.json", "--out", tmp_path / "o",
                         "--embedding-dim", "4"], capsys)
    assert code == 0 and "warning" in err


def test_generate_data_rejects_bad_grammar(tmp_path, capsys):
    (tmp_path / "g.json").write_text(json.dumps({"templates": []}))
    assert _run(["generate-data", "--grammar", tmp_path / "g.json", "--out", tmp_path / "o"], capsys)[0] == 2
    assert _run(["generate-data", "--grammar", tmp_path / "missing.json", "--out", tmp_path / "o"], capsys)[0] == 2


def test_grad_check_negative_control(capsys):
    code, _, err = _run(["grad-check", "--corrupt-block", "trigger_head_pg", "--max-coords", "4"], capsys)
    assert code == 1 and "trigger_head_pg" in err
    assert _run(["grad-check", "--corrupt-block", "no_such_block"], capsys)[0] == 2


def test_grad_check_covers_every_block_family():
    report = run_grad_check(max_coords=2, out=io.StringIO())
    expected = {"embeddings", "lstm_cell", "bilstm", "seq_head_mse", "encoder_via_mse", "trigger_head_pg",
                "argument_head_pg", "encoder_via_pg", "disc/seq", "disc/trigger"}
    expected |= {f"disc/argument/{k:02d}" for k in range(33)}
    assert expected <= set(report)


def test_train_usage_errors(tmp_path, data_dir, capsys):
    code, _, err = _run(["train", "--train", tmp_path / "none.jsonl", "--dev", data_dir / "dev.jsonl",
                         "--out", tmp_path / "r"], capsys)
    assert code == 2 and "not found" in err
    code, _, err = _run(["train", "--data-dir", data_dir, "--gamma", "7", "--out", tmp_path / "r"], capsys)
    assert code == 2 and "gamma" in err
    (tmp_path / "c.txt").write_text("colour = red\n")
    code, _, err = _run(["train", "--data-dir", data_dir, "--config", tmp_path / "c.txt", "--out", tmp_path / "r"],
                        capsys)
    assert code == 2 and "colour" in err


def _rewards(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def fixed_run(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("fixed")
    code = main(["train", "--data-dir", str(data_dir), "--reward-mode", "fixed", "--epochs", "30",
                 "--out", str(out)] + SMALL_FLAGS)
    assert code == 0
    return out


def test_train_writes_artifacts_and_eval_reads_them(fixed_run, data_dir, capsys):
    for name in ("metrics.csv", "rewards.csv", "config.txt", "trace_spec.json", "best/model.json",
                 "checkpoints/epoch-030/params.ckpt"):
        assert (fixed_run / name).exists(), name
    code, out, _ = _run(["eval", "--model", fixed_run / "best", "--corpus", data_dir / "test.jsonl"], capsys)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0][:3] == ["epoch", "split", "task"] and len(rows) == 5


def test_fixed_run_rewards_are_plus_minus_one(fixed_run):
    rows = _rewards(fixed_run / "rewards.csv")[1:]
    assert rows and {float(r[5]) for r in rows} <= {-1.0, 1.0}


def test_inspect_rewards_accounting(fixed_run, tmp_path, capsys):
    spec = json.loads((fixed_run / "trace_spec.json").read_text())[:1]
    spec[0]["actions"] = spec[0]["actions"][:2]
    (tmp_path / "two.json").write_text(json.dumps(spec))
    code, out, _ = _run(["inspect-rewards", "--run", fixed_run, "--spec", tmp_path / "two.json"], capsys)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1 + 2 * 30

    (tmp_path / "empty.json").write_text("[]")
    code, out, _ = _run(["inspect-rewards", "--run", fixed_run, "--spec", tmp_path / "empty.json",
                         "--output", tmp_path / "o.csv"], capsys)
    assert code == 0 and len(_rewards(tmp_path / "o.csv")) == 1

    spec[0]["sentence_id"] = "nope"
    (tmp_path / "bad.json").write_text(json.dumps(spec))
    assert _run(["inspect-rewards", "--run", fixed_run, "--spec", tmp_path / "bad.json"], capsys)[0] == 2


def test_runtime_failure_exits_one(tmp_path, data_dir, capsys):
    dev = [json.loads(line) for line in open(data_dir / "dev.jsonl")]
    dev[0]["pos"][0] = "UNSEEN"
    (tmp_path / "dev.jsonl").write_text("".join(json.dumps(d) + "\n" for d in dev))
    code, _, err = _run(["train", "--train", data_dir / "train.jsonl", "--dev", tmp_path / "dev.jsonl",
                         "--embeddings", data_dir / "embeddings.txt", "--epochs", "1", "--out", tmp_path / "r"]
                        + SMALL_FLAGS, capsys)
    assert code == 1 and "UNSEEN" in err
