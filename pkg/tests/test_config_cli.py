import json
import os

import numpy as np
import pytest

from seesaw_neat import attention as att
from seesaw_neat import cli, neat, pipeline
from seesaw_neat.config import (
    RunConfig,
    config_from_dict,
    load_config,
    save_config,
)
from seesaw_neat.errors import ConfigError


# tiny-but-complete run config: 4 observation inputs, short episodes
TINY = {
    "seed": 11,
    "neat": {"num_inputs": 4, "num_outputs": 5, "population_size": 8},
    "attention": {"patch_size": 8, "patch_stride": 8, "d": 2, "k": 2},
    "cmaes": {"population_size": 4},
    "pipeline": {"generations": 2, "stage2_generations": 2, "trials": 1},
    "env": {"max_frames": 20},
}


def write_tiny_config(tmp_path, **overrides):
    data = json.loads(json.dumps(TINY))
    for key, value in overrides.items():
        if isinstance(value, dict):
            data.setdefault(key, {}).update(value)
        else:
            data[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


# ---------------------------------------------------------------- config

def test_defaults_match_reference_tables():
    cfg = RunConfig()
    assert cfg.neat.population_size == 64
    assert cfg.neat.compat_threshold == 3.0
    assert cfg.neat.compat_disjoint_coeff == 1.0
    assert cfg.neat.compat_weight_coeff == 0.4
    assert cfg.neat.weight_mutate_power == 0.05
    assert cfg.neat.weight_mutate_rate == 0.8
    assert cfg.neat.weight_replace_rate == 0.1
    assert (cfg.neat.weight_min, cfg.neat.weight_max) == (-30.0, 30.0)
    assert cfg.neat.add_connection_prob == 0.05
    assert cfg.neat.add_node_prob == 0.03
    assert cfg.neat.max_stagnation == 15
    assert cfg.neat.species_elitism == 2
    assert not cfg.neat.feed_forward
    assert (cfg.attention.patch_size, cfg.attention.patch_stride) == (10, 5)
    assert (cfg.attention.d, cfg.attention.k) == (4, 10)
    assert cfg.cmaes.population_size == 32
    assert cfg.cmaes.init_sigma == 0.1
    assert cfg.pipeline.generations == 50
    assert cfg.pipeline.stage2_generations == 100
    assert cfg.pipeline.trials == 3
    assert cfg.env.name == "patch_chase"
    assert att.param_count(cfg.attention) == 2408


def test_unknown_keys_rejected_with_path():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"neat": {"fruit": 1}})
    assert err.value.field == "neat.fruit"
    with pytest.raises(ConfigError) as err:
        config_from_dict({"banana": {}})
    assert err.value.field == "banana"


def test_bad_values_are_config_errors():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"seed": "one"})
    assert err.value.field == "seed"
    with pytest.raises(ConfigError) as err:
        config_from_dict({"cmaes": {"population_size": 1}})
    assert err.value.field == "cmaes"
    with pytest.raises(ConfigError):
        config_from_dict({"pipeline": {"seed_mode": "sometimes"}})
    with pytest.raises(ConfigError):
        config_from_dict([1, 2, 3])


def test_config_file_round_trip(tmp_path):
    cfg = config_from_dict(TINY)
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict()
    assert back.seed == 11
    assert back.neat.num_inputs == 4


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


# ---------------------------------------------------------------- train

def test_train_writes_all_artifacts(tmp_path):
    config = write_tiny_config(tmp_path)
    out = tmp_path / "run"
    code = cli.main(["train", "--config", config, "--out", str(out)])
    assert code == cli.EXIT_OK
    for name in ("config.json", "run.log", "ledger.csv", "model.json",
                 "stage2_trace.csv", "fitness_stage1.svg", "fitness_stage2.svg"):
        assert (out / name).exists(), name
    ckpts = os.listdir(out / "checkpoints")
    assert "stage1_best.model.json" in ckpts

    model = pipeline.FinalModel.load(out / "model.json")
    assert model.tuned
    rows = pipeline.read_ledger(out / "ledger.csv")
    stages = {r["stage"] for r in rows}
    assert stages == {1, 2}
    # 2 stage-1 generations x 2 phases + 2 stage-2 generations
    assert len(rows) == 6


def test_train_stage1_only(tmp_path):
    config = write_tiny_config(tmp_path)
    out = tmp_path / "run"
    code = cli.main(["train", "--config", config, "--out", str(out),
                     "--stage1-only"])
    assert code == cli.EXIT_OK
    model = pipeline.FinalModel.load(out / "model.json")
    assert not model.tuned
    rows = pipeline.read_ledger(out / "ledger.csv")
    assert {r["stage"] for r in rows} == {1}
    assert not (out / "fitness_stage2.svg").exists()


def test_train_same_seed_is_byte_identical(tmp_path):
    config = write_tiny_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", "--config", config, "--out", str(out_a)]) == 0
    assert cli.main(["train", "--config", config, "--out", str(out_b)]) == 0
    assert (out_a / "ledger.csv").read_bytes() == (out_b / "ledger.csv").read_bytes()
    assert (out_a / "model.json").read_bytes() == (out_b / "model.json").read_bytes()


def test_train_seed_override_changes_run(tmp_path):
    config = write_tiny_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", "--config", config, "--out", str(out_a)]) == 0
    assert cli.main(["train", "--config", config, "--out", str(out_b),
                     "--seed", "999"]) == 0
    saved = json.loads((out_b / "config.json").read_text())
    assert saved["seed"] == 999
    assert (out_a / "model.json").read_bytes() != (out_b / "model.json").read_bytes()


def test_train_resume_from_checkpoint(tmp_path):
    config = write_tiny_config(tmp_path, pipeline={"generations": 3})
    out_a = tmp_path / "straight"
    assert cli.main(["train", "--config", config, "--out", str(out_a),
                     "--stage1-only"]) == 0
    # rerun the final generation from the gen-2 checkpoint
    out_b = tmp_path / "resumed"
    assert cli.main(["train", "--config", config, "--out", str(out_b),
                     "--stage1-only",
                     "--resume",
                     str(out_a / "checkpoints" / "stage1_gen0002.ckpt.json")]) == 0
    assert (out_a / "model.json").read_bytes() == (out_b / "model.json").read_bytes()


def test_train_bad_config_exit_code(tmp_path):
    config = write_tiny_config(tmp_path, neat={"fruit": 1})
    assert cli.main(["train", "--config", config]) == cli.EXIT_CONFIG


# ---------------------------------------------------------------- play / count-params

@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("trained")
    config = write_tiny_config(tmp_path)
    out = tmp_path / "run"
    assert cli.main(["train", "--config", config, "--out", str(out)]) == 0
    return out


def test_play_reports_scores(trained_run, capsys):
    code = cli.main(["play", str(trained_run / "model.json"),
                     "--episodes", "3", "--seed", "5"])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "episodes: 3" in out
    assert "mean:" in out and "std:" in out


def test_play_is_deterministic(trained_run, capsys):
    argv = ["play", str(trained_run / "model.json"), "--episodes", "2"]
    cli.main(argv)
    first = capsys.readouterr().out
    cli.main(argv)
    assert capsys.readouterr().out == first


def test_play_dump_frames(trained_run, tmp_path, capsys):
    frames_dir = tmp_path / "frames"
    code = cli.main(["play", str(trained_run / "model.json"),
                     "--episodes", "1", "--dump-frames", str(frames_dir)])
    assert code == cli.EXIT_OK
    capsys.readouterr()
    ppms = sorted(os.listdir(frames_dir))
    assert len(ppms) == 200  # replay runs full-length episodes
    img = att.read_ppm(frames_dir / ppms[0])
    assert img.shape == (64, 64, 3)


def test_play_rejects_unreadable_model(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "something-else"}))
    assert cli.main(["play", str(bad)]) == cli.EXIT_RUNTIME
    capsys.readouterr()


def test_count_params_reports_2408_attention(tmp_path, capsys, rng):
    cfg = RunConfig()
    genome = neat.Genome.initial(cfg.neat, neat.InnovationRegistry(), rng)
    model = pipeline.FinalModel(
        genome=genome, attention_vector=np.zeros(2408),
        neat_config=cfg.neat, attention_config=cfg.attention)
    path = tmp_path / "model.json"
    model.save(path)
    assert cli.main(["count-params", str(path)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "attention: 2408" in out
    assert "genome weights: 100" in out
    assert "genome biases: 5" in out
    assert f"total: {2408 + 105}" in out


# ---------------------------------------------------------------- plot

def test_plot_single_ledger(trained_run, tmp_path, capsys):
    out_prefix = tmp_path / "curves"
    code = cli.main(["plot", str(trained_run / "ledger.csv"),
                     "--out", str(out_prefix)])
    assert code == cli.EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    assert str(out_prefix) + "_stage1.svg" in printed
    assert (tmp_path / "curves_stage1.svg").stat().st_size > 0
    assert (tmp_path / "curves_stage2.svg").exists()


def test_plot_overlays_multiple_ledgers(tmp_path, capsys):
    rows_a = [{"stage": 1, "generation": g, "phase": "B",
               "best": -1.0 + 0.1 * g, "mean": -1.5, "std": 0.2,
               "episodes": 10} for g in range(3)]
    rows_b = [dict(r, best=r["best"] + 0.5) for r in rows_a]
    path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
    pipeline.write_ledger(path_a, rows_a)
    pipeline.write_ledger(path_b, rows_b)
    code = cli.main(["plot", str(path_a), str(path_b),
                     "--out", str(tmp_path / "cmp")])
    assert code == cli.EXIT_OK
    capsys.readouterr()
    assert (tmp_path / "cmp_stage1.svg").exists()


def test_plot_empty_ledger_is_runtime_error(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert cli.main(["plot", str(empty)]) == cli.EXIT_RUNTIME
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------- env-check

def test_env_check_passes_for_reference_server(capsys):
    import sys
    code = cli.main(["env-check", "--timeout", "30", "--",
                     sys.executable, "-m", "seesaw_neat.envs", "patch_chase"])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "protocol check passed" in out


def test_env_check_flags_broken_server(tmp_path, capsys):
    import sys
    bad = tmp_path / "bad_env.py"
    bad.write_text("import sys, json\n"
                   "for line in sys.stdin:\n"
                   "    print(json.dumps({'name': 'x'}))\n"
                   "    sys.stdout.flush()\n")
    code = cli.main(["env-check", sys.executable, str(bad)])
    assert code == cli.EXIT_PROTOCOL
    assert "protocol error" in capsys.readouterr().err
