import json
import subprocess
import sys

import numpy as np
import pytest
import torch

from cwm.cli import run
from cwm.harness.finetune import random_policy_returns, run_finetune
from cwm.harness.metrics import read_metrics
from helpers import mini_run_config


def write_mini_cfg(tmp_path, **extra):
    from cwm.harness.config_io import resolved_config_text

    cfg = mini_run_config(tmp_path / "run", **extra)
    path = tmp_path / "run.cfg"
    path.write_text(resolved_config_text(cfg))
    return path, cfg


def test_cli_inspect_exit_zero(capsys):
    assert run(["inspect", "--preset", "desk"]) == 0
    out = capsys.readouterr().out
    report = json.loads(out)
    assert "contextual" in report and "vanilla" in report


def test_cli_unknown_config_key_exit_1(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("definitely_not_a_key = 3\n")
    assert run(["pretrain", "--config", str(bad)]) == 1


def test_cli_conflicting_conditioning_flags_exit_1(tmp_path):
    assert run(["pretrain", "--vanilla-wm", "--concat-conditioning",
                "--out", str(tmp_path)]) == 1


def test_cli_eval_requires_checkpoint():
    assert run(["eval"]) == 1


def test_cli_missing_dataset_exit_2(tmp_path):
    path, _ = write_mini_cfg(tmp_path, pretrain_iters=2,
                             dataset=str(tmp_path / "nope"))
    assert run(["pretrain", "--config", str(path)]) == 2


def test_cli_bad_checkpoint_exit_3(tmp_path):
    ckpt = tmp_path / "x.ckpt"
    ckpt.write_bytes(b"not a checkpoint at all")
    path, _ = write_mini_cfg(tmp_path)
    assert run(["eval", "--config", str(path),
                "--checkpoint", str(ckpt)]) == 3


def test_cli_pretrain_end_to_end(tmp_path, capsys):
    path, cfg = write_mini_cfg(tmp_path, pretrain_iters=4, val_every=4,
                               checkpoint_every=4, log_every=2)
    assert run(["pretrain", "--config", str(path)]) == 0
    out_dir = tmp_path / "run"
    assert (out_dir / "checkpoint_final.ckpt").exists()
    assert (out_dir / "manifest.cfg").exists()
    records = read_metrics(out_dir / "metrics.jsonl")
    assert any(r["name"] == "pretrain/val_image_nll" for r in records)


def test_cli_module_entrypoint():
    proc = subprocess.run(
        [sys.executable, "-m", "cwm", "inspect", "--preset", "desk"],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    json.loads(proc.stdout)


# ---------------------------------------------------------------------- #
# fine-tuning loop mechanics (miniature budget)


@pytest.fixture(scope="module")
def finetune_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ft")
    cfg = mini_run_config(tmp / "run", env_steps=120, prefill=40,
                          eval_every=60, eval_episodes=2, episode_len=30,
                          log_every=2)
    final = run_finetune(cfg)
    return cfg, final


def test_finetune_produces_checkpoint_and_metrics(finetune_run):
    cfg, final = finetune_run
    from pathlib import Path

    out = Path(cfg.out)
    assert final.exists()
    records = read_metrics(out / "metrics.jsonl")
    names = {r["name"] for r in records}
    assert "collect/episode_return" in names
    assert "eval/return_iqm" in names
    assert "wm/total" in names
    assert "behavior/actor_loss" in names


def test_finetune_saves_episode_files(finetune_run):
    cfg, _ = finetune_run
    from pathlib import Path

    files = sorted((Path(cfg.out) / "episodes").glob("episode_*.bin"))
    assert len(files) == 120 // 30
    from cwm.data.replay import load_episode

    ep = load_episode(files[0])
    assert ep.length == 30
    assert np.isfinite(ep.intrinsic).all()
    # intrinsic bonus is nonzero once the bank has entries
    assert (ep.intrinsic[1:] > 0).any()


def test_finetune_from_pretrained_restores_theta(tmp_path):
    pre_cfg = mini_run_config(tmp_path / "pre", seed=2, pretrain_iters=6,
                              val_every=6, checkpoint_every=6)
    from cwm.harness.pretrain import run_pretrain

    pre_ckpt = run_pretrain(pre_cfg)

    from cwm.harness.agent import Agent
    from cwm.harness.checkpoint import load_checkpoint

    ft_cfg = mini_run_config(tmp_path / "ft", seed=2)
    agent = Agent(ft_cfg)
    agent.load(pre_ckpt, theta_only=True)
    arrays, _ = load_checkpoint(pre_ckpt)
    name, param = next(iter(agent.model.param_groups()["theta"].items()))
    assert np.array_equal(param.detach().numpy(),
                          arrays[f"param/theta/{name}"])


def test_eval_report_bytes_deterministic(finetune_run, tmp_path):
    cfg, final = finetune_run
    from cwm.harness.evaluate import run_eval

    reports = []
    for name in ("e1", "e2"):
        ecfg = cfg.replaced(out=str(tmp_path / name))
        run_eval(ecfg, str(final))
        reports.append((tmp_path / name / "eval_report.json").read_bytes())
    assert reports[0] == reports[1]
    parsed = json.loads(reports[0])
    assert len(parsed["episodes"]) == cfg.eval_episodes
    assert parsed["return_ci"][0] <= parsed["return_iqm"] <= parsed["return_ci"][1]


def test_probe_command_end_to_end(finetune_run, tmp_path):
    cfg, final = finetune_run
    from cwm.harness.evaluate import run_probe

    pcfg = cfg.replaced(out=str(tmp_path / "probe"), video_frames=10)
    report = run_probe(pcfg, str(final), n_videos=24)
    assert 0.0 <= report["accuracy"] <= 1.0
    assert (tmp_path / "probe" / "probe_report.json").exists()


def test_random_policy_baseline_runs():
    cfg = mini_run_config("/tmp/rp", episode_len=30)
    returns = random_policy_returns(cfg, episodes=3, seed=0)
    assert len(returns) == 3
    assert all(r >= 0.0 for r in returns)


def test_vanilla_and_concat_modes_finetune(tmp_path):
    for mode in ("none", "concat"):
        cfg = mini_run_config(tmp_path / mode, conditioning=mode,
                              env_steps=50, prefill=30, eval_every=50,
                              eval_episodes=1, episode_len=25)
        final = run_finetune(cfg)
        assert final.exists(), mode
