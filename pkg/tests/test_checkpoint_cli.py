import csv

import numpy as np
import pytest

from conftest import closure, closure_units, SAMPLE_EDGES
from dnlrrl.assets import asset_path, asset_text
from dnlrrl.checkpoint import HEADER, CheckpointError, dumps, fingerprint, loads, read_checkpoint, write_checkpoint
from dnlrrl.cli import (EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PROGRAM, EXIT_SCHEMA, EXIT_USAGE,
                        run_command)
from dnlrrl.config import ConfigError, RunConfig, parse_config
from dnlrrl.deduction import compile_index_plan, forward_chain, initial_store
from dnlrrl.logic import DNFUnit
from dnlrrl.program import parse_program

# -- checkpoint format ----------------------------------------------------


def test_round_trip_is_exact(cnt_plan, tmp_path):
    rng = np.random.default_rng(0)
    units = {"cnt": DNFUnit(rng.normal(size=(2, 17)) * 1e3, rng.normal(size=2) / 7)}
    path = tmp_path / "a.ckpt"
    write_checkpoint(units, path, cnt_plan.candidates, {"note": "x y"})
    back, meta = read_checkpoint(path, cnt_plan.candidates)
    assert meta == {"note": "x y"}
    np.testing.assert_array_equal(back["cnt"].conj_w, units["cnt"].conj_w)
    np.testing.assert_array_equal(back["cnt"].disj_w, units["cnt"].disj_w)
    assert path.read_text().startswith(HEADER + "\n")


def test_fingerprint_tracks_candidate_order(cnt_plan):
    renamed = parse_program(asset_text("graph_cnt").replace("edge", "link"))
    other = compile_index_plan(renamed)
    assert fingerprint(other.candidates["cnt"]) != fingerprint(cnt_plan.candidates["cnt"])
    text = dumps(closure_units(cnt_plan), cnt_plan.candidates)
    with pytest.raises(CheckpointError, match="fingerprint"):
        loads(text, other.candidates)


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace(HEADER, "dnl-ckpt v2"),
    lambda t: t.replace("\nd ", "\nq "),
    lambda t: "\n".join(t.splitlines()[:-1]),
    lambda t: t.replace("target cnt 2", "target cnt 3"),
])
def test_malformed_checkpoints_are_rejected(cnt_plan, mutate):
    text = dumps(closure_units(cnt_plan), cnt_plan.candidates)
    with pytest.raises(CheckpointError):
        loads(mutate(text), cnt_plan.candidates)


def test_missing_directory_is_an_error(cnt_plan, tmp_path):
    with pytest.raises(CheckpointError):
        write_checkpoint(closure_units(cnt_plan), tmp_path / "nope" / "a.ckpt", cnt_plan.candidates)


def _crisp_closure_checkpoint(plan, tmp_path):
    """Hand-assembled checkpoint text; weights are plain decimal literals."""
    lit = [str(l) for l in plan.candidates["cnt"].literals]
    rows = []
    for body in (["edge(X,Y)"], ["edge(X,Z)", "cnt(Z,Y)"]):
        rows.append("w " + " ".join("50.0" if l in body else "-50.0" for l in lit))
    text = "\n".join([
        HEADER,
        "meta mode=supervised",
        "meta program=asset:graph_cnt",
        "meta t_max=4",
        f"target cnt 2 {len(lit)} {fingerprint(plan.candidates['cnt'])}",
        *rows,
        "d 50.0 50.0",
    ]) + "\n"
    path = tmp_path / "closure.ckpt"
    path.write_text(text)
    return path


def test_hand_written_checkpoint_reproduces_closure(cnt_plan, tmp_path):
    path = _crisp_closure_checkpoint(cnt_plan, tmp_path)
    units, meta = read_checkpoint(path, cnt_plan.candidates)
    out = forward_chain(initial_store(cnt_plan), cnt_plan, units, t_max=4)
    assert np.array_equal(out.of("cnt"), closure("abcd", SAMPLE_EDGES).astype(float))
    assert meta["program"] == "asset:graph_cnt"


# -- config ---------------------------------------------------------------


def test_config_parsing_and_overrides(tmp_path):
    prog = tmp_path / "p.dnl"
    prog.write_text(asset_text("graph_cnt"))
    cfg = parse_config("# comment\nmode = supervised\nprogram = p.dnl\nepochs = 12\n", tmp_path,
                       {"seed": 5}, environ={})
    assert cfg.epochs == 12 and cfg.seed == 5 and cfg.program == str(prog)
    assert parse_config("mode = supervised\nprogram = p.dnl\n", tmp_path, environ={"DNL_SEED": "9"}).seed == 9
    rrl = parse_config("mode = rrl\nprogram = asset:boxworld_rrl1\nenv = boxworld\n", tmp_path, environ={})
    assert rrl.lr == 0.002 and rrl.gamma == 0.7
    assert parse_config(cfg.to_text(), tmp_path, environ={}) == cfg


@pytest.mark.parametrize("text", [
    "mode = supervised\nprogram = missing.dnl\n",
    "mode = teleport\nprogram = asset:graph_cnt\n",
    "mode = supervised\nprogram = asset:graph_cnt\nepochs = many\n",
    "mode = supervised\nprogram = asset:graph_cnt\nwobble = 1\n",
    "mode = supervised\nprogram = asset:graph_cnt\nworkers = 4\n",
    "mode = supervised\nprogram = asset:graph_cnt\nno equals sign\n",
])
def test_bad_configs_raise(text, tmp_path):
    with pytest.raises(ConfigError):
        parse_config(text, tmp_path, environ={})


def test_run_config_builds_env_and_policy():
    cfg = RunConfig(mode="rrl", program="asset:boxworld_rrl1", env="boxworld", n=4)
    assert cfg.make_env().action_count == 25
    assert cfg.policy().gamma == 0.7


# -- command line ---------------------------------------------------------

CNT_CFG = "mode = supervised\nprogram = asset:graph_cnt\nt_max = 4\nepochs = {epochs}\nlr = 0.05\nlam = 0.01\n" \
          "out_dir = out\ncheckpoint_interval = {interval}\n"


def _write_cfg(tmp_path, epochs=300, interval=100):
    path = tmp_path / "run.cfg"
    path.write_text(CNT_CFG.format(epochs=epochs, interval=interval))
    return path


def test_check_command(tmp_path, capsys):
    assert run_command(["check", "--program", str(asset_path("boxworld_rrl1"))]) == EXIT_OK
    bad = tmp_path / "bad.dnl"
    bad.write_text("type t { a }\npred p/1 (t) auxiliary\n")
    assert run_command(["check", "--program", str(bad)]) == EXIT_PROGRAM
    bad.write_text("type t {\n")
    assert run_command(["check", "--program", str(bad)]) == EXIT_PROGRAM
    assert run_command(["check", "--program", str(tmp_path / "missing.dnl")]) == EXIT_IO
    assert "missing.dnl" in capsys.readouterr().err


def test_usage_errors():
    assert run_command([]) == EXIT_USAGE
    assert run_command(["fly"]) == EXIT_USAGE
    assert run_command(["eval"]) == EXIT_USAGE


def test_train_eval_extract_supervised(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert run_command(["train", "--config", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == ["checkpoint-000100.ckpt", "checkpoint-000200.ckpt",
                                                      "checkpoint-000300.ckpt", "checkpoint.ckpt", "metrics.csv"]
    rows = list(csv.DictReader((out / "metrics.csv").open()))
    assert len(rows) == 300
    assert float(rows[-1]["accuracy"]) == 1.0
    assert float(rows[-1]["loss"]) < float(rows[0]["loss"])
    capsys.readouterr()
    assert run_command(["eval", "--checkpoint", str(out / "checkpoint.ckpt")]) == EXIT_OK
    assert "accuracy=1.0000" in capsys.readouterr().out
    assert run_command(["extract", "--checkpoint", str(out / "checkpoint.ckpt")]) == EXIT_OK
    assert "0 disagreements" in capsys.readouterr().out


def test_extract_prints_closure_rules_from_hand_checkpoint(cnt_plan, tmp_path, capsys):
    path = _crisp_closure_checkpoint(cnt_plan, tmp_path)
    assert run_command(["extract", "--checkpoint", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "aux cnt(X,Y) :- edge(X,Y).\naux cnt(X,Y) :- cnt(Z,Y), edge(X,Z).\n" in out
    assert "0 disagreements" in out


def test_command_error_codes(cnt_plan, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mode = supervised\nprogram = asset:graph_cnt\nepochs = -1\n")
    assert run_command(["train", "--config", str(cfg)]) == EXIT_CONFIG
    assert run_command(["train", "--config", str(tmp_path / "none.cfg")]) == EXIT_IO
    cfg.write_text("mode = rrl\nprogram = asset:boxworld_rrl1\nenv = gridworld\n")
    assert run_command(["train", "--config", str(cfg)]) == EXIT_SCHEMA
    ck = tmp_path / "x.ckpt"
    ck.write_text("garbage\n")
    assert run_command(["eval", "--checkpoint", str(ck)]) == EXIT_CHECKPOINT
    ck.write_text(_crisp_closure_checkpoint(cnt_plan, tmp_path).read_text().replace(" 2 17 ", " 2 17 0000"))
    assert run_command(["extract", "--checkpoint", str(ck)]) == EXIT_CHECKPOINT


def test_seed_from_environment(tmp_path, monkeypatch):
    cfg = _write_cfg(tmp_path, epochs=5, interval=0)
    monkeypatch.setenv("DNL_SEED", "17")
    assert run_command(["train", "--config", str(cfg)]) == EXIT_OK
    _, meta = read_checkpoint(tmp_path / "out" / "checkpoint.ckpt")
    assert meta["seed"] == "17"


def _train_twice(tmp_path, text):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        (d / "run.cfg").write_text(text)
        assert run_command(["train", "--config", str(d / "run.cfg")]) == EXIT_OK
        outs.append(d / "out")
    return outs


def test_supervised_runs_are_byte_identical(tmp_path):
    a, b = _train_twice(tmp_path, CNT_CFG.format(epochs=60, interval=30))
    for name in ("metrics.csv", "checkpoint.ckpt", "checkpoint-000030.ckpt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rrl_runs_are_byte_identical(tmp_path, capsys):
    text = ("mode = rrl\nprogram = asset:boxworld_rrl2\nenv = boxworld\nn = 3\nmax_steps = 10\n"
            "episodes = 20\nseed = 3\nout_dir = out\ncheckpoint_interval = 10\n")
    a, b = _train_twice(tmp_path, text)
    for name in ("metrics.csv", "checkpoint.ckpt", "checkpoint-000010.ckpt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len((a / "metrics.csv").read_text().splitlines()) == 21
    capsys.readouterr()
    assert run_command(["eval", "--checkpoint", str(a / "checkpoint.ckpt"), "--episodes", "5"]) == EXIT_OK
    assert "success_rate=" in capsys.readouterr().out
    assert run_command(["extract", "--checkpoint", str(a / "checkpoint.ckpt"), "--trials", "3"]) == EXIT_OK
