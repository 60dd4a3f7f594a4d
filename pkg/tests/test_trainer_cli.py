"""End-to-end training runs, checkpoint evaluation, and the command line.

Runs here are deliberately tiny (two 32x32 scenes, three views, 8
channels, one optimizer step) so the module stays in the seconds range
while still exercising every path: logging, checkpointing, bitwise
determinism, view shuffling, and each CLI subcommand with its exit codes.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from ringdepth import (ModelConfig, RunConfig, Scene, Tensor, evaluate,
                       forward, generate_sample, load_checkpoint, load_model,
                       make_rig, predict, read_dataset, read_rdt, render,
                       train, write_dataset)
from ringdepth.cli import cli
from ringdepth.errors import ConfigError, FormatError

N_VIEWS = 3


def _tiny_model(**kw):
    base = dict(n_views=N_VIEWS, c_f=8, z_alternations=1, n_heads=1,
                d_max=80.0)
    base.update(kw)
    return ModelConfig(**base)


def _tiny_run(data_dir, out_dir, **kw):
    base = dict(seed=0, epochs=1, batch_size=2, lr=1e-3, lambda_smooth=0.01,
                data_dir=str(data_dir), out_dir=str(out_dir))
    base.update(kw)
    base.setdefault("model", _tiny_model())
    return RunConfig(**base)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("trainer") / "data"
    samples = [generate_sample(seed=i, n_views=N_VIEWS, width=32, height=32,
                               d_max=80.0, hfov_deg=90.0, keep_fraction=0.4)
               for i in range(2)]
    write_dataset(samples, out, d_max=80.0)
    return out


@pytest.fixture(scope="module")
def quad_data(tmp_path_factory):
    # one 4-view sample; N=3 is useless for the shuffling test because
    # every permutation of three views is a ring automorphism
    out = tmp_path_factory.mktemp("trainer") / "data4"
    s = generate_sample(seed=2, n_views=4, width=32, height=16, d_max=80.0,
                        hfov_deg=90.0, keep_fraction=0.4)
    write_dataset([s], out, d_max=80.0)
    return out


@pytest.fixture(scope="module")
def trained(tiny_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("trainer") / "run0"
    cfg = _tiny_run(tiny_data, out)
    return cfg, train(cfg)


class TestTrain:
    def test_writes_checkpoint_and_log(self, trained):
        cfg, result = trained
        assert result.ckpt_path == Path(cfg.out_dir) / "ckpt.rdck"
        assert result.ckpt_path.exists()
        assert (Path(cfg.out_dir) / "train_log.csv").exists()
        # 2 samples, batch of 2, 1 epoch -> a single step
        assert [row[0] for row in result.log] == [1]
        step, ld, ls, tot = result.log[0]
        assert ld > 0 and ls > 0
        assert tot == pytest.approx(ld + cfg.lambda_smooth * ls, rel=1e-6)

    def test_log_csv_matches_result_exactly(self, trained):
        cfg, result = trained
        lines = (Path(cfg.out_dir) / "train_log.csv").read_text().splitlines()
        assert lines[0] == "step,l_depth,l_smooth,total"
        assert len(lines) == 1 + len(result.log)
        for line, (step, ld, ls, tot) in zip(lines[1:], result.log):
            f = line.split(",")
            assert int(f[0]) == step
            # repr round-trips floats, so equality is exact
            assert (float(f[1]), float(f[2]), float(f[3])) == (ld, ls, tot)

    def test_same_seed_runs_are_bitwise_identical(self, trained, tiny_data,
                                                  tmp_path):
        cfg0, _ = trained
        train(_tiny_run(tiny_data, tmp_path / "run1"))
        for name in ("ckpt.rdck", "train_log.csv"):
            assert (tmp_path / "run1" / name).read_bytes() == \
                (Path(cfg0.out_dir) / name).read_bytes()

    def test_seed_changes_parameters(self, trained, tiny_data, tmp_path):
        result = train(_tiny_run(tiny_data, tmp_path / "run", seed=7))
        base = trained[1].params
        assert any(not np.array_equal(result.params[n].data, base[n].data)
                   for n in base)

    def test_step_count_over_epochs(self, tiny_data, tmp_path):
        cfg = _tiny_run(tiny_data, tmp_path / "run", epochs=2, batch_size=1)
        result = train(cfg)
        assert [row[0] for row in result.log] == [1, 2, 3, 4]
        _, meta = load_checkpoint(result.ckpt_path)
        assert meta["step"] == 4
        assert meta["epoch"] == 1  # rolling checkpoint: last epoch wins

    def test_adjacent_ablation_changes_the_loss(self, trained, tiny_data,
                                                tmp_path):
        cfg = _tiny_run(tiny_data, tmp_path / "run",
                        model=_tiny_model(use_adjacent_attention=False))
        result = train(cfg)
        assert not math.isclose(result.log[0][3], trained[1].log[0][3],
                                rel_tol=1e-9)
        assert not any(".adj." in n for n in result.params)

    def test_random_views_changes_the_run(self, quad_data, tmp_path):
        runs = {}
        for mode in ("surround", "random_views"):
            cfg = _tiny_run(quad_data, tmp_path / mode, batch_size=1,
                            input_mode=mode, model=_tiny_model(n_views=4))
            runs[mode] = train(cfg)
        # seed 0 draws the non-automorphism permutation (2,0,1,3). At init
        # the cross-view signal is tiny, so the loss barely moves -- and it
        # must barely move: images and gt are shuffled together, so a big
        # shift would mean they came apart. The gradients still see the
        # changed adjacencies, so the updated parameters diverge.
        a, b = runs["surround"].log[0], runs["random_views"].log[0]
        assert math.isclose(a[3], b[3], rel_tol=1e-3)
        pa, pb = runs["surround"].params, runs["random_views"].params
        assert any(not np.array_equal(pa[n].data, pb[n].data) for n in pa)

    def test_view_count_mismatch_fails_before_any_step(self, tiny_data,
                                                       tmp_path):
        out = tmp_path / "never"
        cfg = _tiny_run(tiny_data, out, model=_tiny_model(n_views=4))
        with pytest.raises(ConfigError, match="views"):
            train(cfg)
        assert not out.exists()

    def test_run_config_validation(self, tiny_data):
        with pytest.raises(ConfigError, match="batch_size"):
            _tiny_run(tiny_data, "x", batch_size=0)
        with pytest.raises(ConfigError, match="input_mode"):
            _tiny_run(tiny_data, "x", input_mode="shuffled")

    def test_run_config_json_roundtrip(self, tmp_path):
        cfg = _tiny_run("d", "o", lr=3e-4, input_mode="random_views")
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
        again = RunConfig.from_json_file(path)
        assert again.to_dict() == cfg.to_dict()

    def test_run_config_rejects_bad_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(FormatError, match="run.json"):
            RunConfig.from_json_file(path)


class TestEvaluatePredict:
    def test_checkpoint_roundtrip_preserves_forward(self, trained, tiny_data):
        cfg, result = trained
        params, model_cfg, meta = load_model(result.ckpt_path)
        assert meta["step"] == len(result.log)
        s = read_dataset(tiny_data)[0]
        want = forward(Tensor(s.images), result.params, cfg.model).final.data
        got = forward(Tensor(s.images), params, model_cfg).final.data
        np.testing.assert_array_equal(got, want)

    def test_evaluate_per_frame_and_json(self, trained, tiny_data, tmp_path):
        report_path = tmp_path / "report.json"
        frames, agg = evaluate(trained[1].ckpt_path, tiny_data,
                               out_path=report_path)
        assert len(frames) == 2 * N_VIEWS
        assert agg.n_pixels == sum(f.n_pixels for f in frames) > 0
        assert agg.abs_rel == pytest.approx(
            np.mean([f.abs_rel for f in frames]))
        payload = json.loads(report_path.read_text())
        assert len(payload["frames"]) == len(frames)
        assert payload["aggregate"]["abs_rel"] == agg.abs_rel

    def test_evaluate_median_scaling_flag(self, trained, tiny_data):
        _, plain = evaluate(trained[1].ckpt_path, tiny_data)
        _, scaled = evaluate(trained[1].ckpt_path, tiny_data,
                             median_scaling=True)
        assert scaled.abs_rel != plain.abs_rel

    def test_evaluate_view_count_mismatch(self, trained, quad_data):
        with pytest.raises(ConfigError, match="views"):
            evaluate(trained[1].ckpt_path, quad_data)

    def test_predict_writes_maps_and_previews(self, trained, tiny_data,
                                              tmp_path):
        cfg, result = trained
        written = predict(result.ckpt_path, tiny_data, tmp_path / "pred")
        assert len(written) == 2 * N_VIEWS
        assert all(p.exists() for p in written)
        s = read_dataset(tiny_data)[1]
        want = forward(Tensor(s.images), result.params, cfg.model).final.data
        got = read_rdt(tmp_path / "pred" / "sample_00001" / "depth_view2.rdt")
        np.testing.assert_array_equal(got, want[2])
        pgm = (tmp_path / "pred" / "sample_00000" / "depth_view0.pgm")
        assert pgm.read_bytes().startswith(b"P5\n32 32\n65535\n")


class TestCli:
    def test_gen_data(self, tmp_path, capsys):
        out = tmp_path / "d"
        assert cli(["gen-data", "--scenes", "2", "--views", "3",
                    "--width", "32", "--height", "16", "--hfov", "90",
                    "--seed", "5", "--out", str(out)]) == 0
        assert "wrote 2 samples" in capsys.readouterr().out
        samples = read_dataset(out)
        assert len(samples) == 2
        assert samples[0].images.shape == (3, 1, 16, 32)

    def test_train_eval_predict_pipeline(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        assert cli(["gen-data", "--scenes", "2", "--views", "3",
                    "--width", "32", "--height", "16", "--hfov", "90",
                    "--out", str(data)]) == 0
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps(_tiny_run("", "").to_dict()),
                            encoding="utf-8")
        assert cli(["train", "--config", str(cfg_file), "--data", str(data),
                    "--out", str(run), "--epochs", "1", "--lr", "1e-3"]) == 0
        out = capsys.readouterr().out
        assert "finished 1 steps" in out
        ckpt = run / "ckpt.rdck"
        assert ckpt.exists()

        report = tmp_path / "report.json"
        assert cli(["eval", "--ckpt", str(ckpt), "--data", str(data),
                    "--out", str(report)]) == 0
        table = capsys.readouterr().out
        assert "abs_rel" in table and "mean" in table
        assert len(json.loads(report.read_text())["frames"]) == 6

        pred = tmp_path / "pred"
        assert cli(["predict", "--ckpt", str(ckpt), "--data", str(data),
                    "--out", str(pred)]) == 0
        assert "wrote 6 depth maps" in capsys.readouterr().out
        assert (pred / "sample_00000" / "depth_view0.pgm").exists()

    def test_train_ablate_adjacent_flag(self, tiny_data, tmp_path, capsys):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps(_tiny_run("", "").to_dict()),
                            encoding="utf-8")
        run = tmp_path / "run"
        assert cli(["train", "--config", str(cfg_file),
                    "--data", str(tiny_data), "--out", str(run),
                    "--ablate-adjacent"]) == 0
        assert "finished" in capsys.readouterr().out
        arrays, meta = load_checkpoint(run / "ckpt.rdck")
        assert not any(".adj." in n for n in arrays)
        assert meta["model"]["use_adjacent_attention"] is False

    def test_eval_without_valid_gt_exits_1(self, trained, tmp_path, capsys):
        # a scene whose only surface is far beyond d_max renders depth 0
        # everywhere, so no frame has a single valid ground-truth pixel
        rig = make_rig(n_views=N_VIEWS, hfov_deg=90.0, width=32, height=32)
        sky = render(rig, Scene(ground_height=-1e6), d_max=80.0)
        assert (sky.gt_depth == 0).all()
        write_dataset([sky], tmp_path / "sky", d_max=80.0)
        assert cli(["eval", "--ckpt", str(trained[1].ckpt_path),
                    "--data", str(tmp_path / "sky")]) == 1
        assert "no valid" in capsys.readouterr().err

    def test_gradcheck_subcommand(self, capsys):
        assert cli(["gradcheck", "--coords-per-param", "1"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_usage_errors_exit_2(self, tmp_path, capsys):
        assert cli([]) == 2
        assert cli(["eval", "--data", str(tmp_path)]) == 2  # --ckpt missing
        assert cli(["train", "--bogus"]) == 2
        assert cli(["train"]) == 2  # no dataset anywhere
        capsys.readouterr()

    def test_runtime_errors_exit_1(self, tmp_path, capsys):
        missing = tmp_path / "nope.rdck"
        assert cli(["eval", "--ckpt", str(missing),
                    "--data", str(tmp_path)]) == 1
        assert "eval" in capsys.readouterr().err
        bad_cfg = tmp_path / "bad.json"
        bad_cfg.write_text("{not json", encoding="utf-8")
        assert cli(["train", "--config", str(bad_cfg),
                    "--data", str(tmp_path)]) == 1
        capsys.readouterr()
