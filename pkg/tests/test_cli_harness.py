import json
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from gantransfer.exceptions import ValidationError
from gantransfer.harness.cli import main
from gantransfer.harness.config import ExperimentSpec, dump_config, parse_config
from gantransfer.harness.plotting import moving_average, plot_metrics, sample_grid
from gantransfer.harness.runner import RunRefused, Runner
from gantransfer.metrics import MetricReport, MetricsLog
from gantransfer.model_zoo import ArchitectureSpec, Checkpoint, build_network, save_checkpoint
from gantransfer.training import generate

TINY = """
[experiment]
kind = {kind}
seeds = 0
output_dir = {out}

[architecture]
preset = desk8
base_width = 8

[data]
source = synthetic:shapes_a:200:100
target = {target}
reference = synthetic:shapes_b:300:2

[source_training]
iterations = 3
batch_size = 16

[finetune]
iterations = 3
batch_size = 16

[grid]
cells = scratch/scratch, pre/pre, pre/scratch

[sweep]
sizes = 50, 100

[eval]
every = 2
n_samples = 100

[embedder]
iterations = 20
"""


def write_config(tmp_path, kind="transfer_grid", target="synthetic:shapes_b:300:1", name="c.ini"):
    path = tmp_path / name
    path.write_text(TINY.format(kind=kind, out=tmp_path / "out", target=target))
    return path


# ------------------------------------------------------------------ config

def test_config_parses_and_round_trips(tmp_path):
    spec = parse_config(write_config(tmp_path).read_text())
    assert spec.kind == "transfer_grid" and spec.arch_spec().base_width == 8
    assert spec.finetune_cfg(300).iterations == 3 and spec.grid == ("scratch/scratch", "pre/pre", "pre/scratch")
    again = parse_config(dump_config(spec))
    assert again == spec and again.run_id(0) == spec.run_id(0)


def test_run_id_ignores_output_dir_and_tracks_content(tmp_path):
    spec = parse_config(write_config(tmp_path).read_text())
    assert spec.run_id(0) == spec.replace(output_dir="elsewhere").run_id(0)
    assert spec.run_id(0) != spec.run_id(1)
    assert spec.run_id(0) != spec.replace(finetune={"iterations": 4}).run_id(0)


@pytest.mark.parametrize("text, match", [
    ("[experiment]\nkind = acgan\n[eval]\nevry = 3\n", "unknown key 'evry'"),
    ("[experiment]\nkind = acgan\n[eval]\nnSamples = 3\n", "lower_snake_case"),
    ("[experiment]\nkind = acgan\n[evaluation]\nevery = 3\n", "unknown section"),
    ("[experiment]\nkind = warp\n", "unknown experiment kind"),
    ("[eval]\nevery = 3\n", "kind is required"),
    ("[experiment]\nkind = acgan\n[eval]\nevery = often\n", "bad value"),
    ("[experiment]\nkind = acgan\n[grid]\ncells = pre/maybe\n", "unknown grid cell"),
])
def test_config_errors(text, match):
    with pytest.raises(ValidationError, match=match):
        parse_config(text)


# ------------------------------------------------------------------ plotting

def test_moving_average_window_one_is_identity():
    v = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    assert np.array_equal(moving_average(v, 1), v)
    assert np.allclose(moving_average(v, 2), [3.0, 2.0, 2.5, 2.5, 3.0])
    with pytest.raises(ValidationError):
        moving_average(v, 0)


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), w=st.integers(1, 30))
def test_property_moving_average_bounded(v, w):
    m = moving_average(v, w)
    assert len(m) == len(v) and m[0] == v[0]
    assert np.all(m >= min(v) - 1e-6 * (1 + abs(min(v)))) and np.all(m <= max(v) + 1e-6 * (1 + abs(max(v))))


def test_plot_two_runs(tmp_path):
    log = MetricsLog(tmp_path / "m.csv")
    for run in ("run_a", "run_b"):
        log.append(*[MetricReport(run, i * 10, "fid", 50.0 - i) for i in range(5)])
    a = plot_metrics(tmp_path / "m.csv", tmp_path / "a.svg", window=1).read_text()
    b = plot_metrics(tmp_path / "m.csv", tmp_path / "b.svg", window=1).read_text()
    assert a == b
    assert "run_a" in a and "run_b" in a
    assert len(re.findall(r'<g id="line2d_\d+">\s*<path d="M[^"]*L', a)) >= 2


def test_plot_empty_log_names_file(tmp_path):
    (tmp_path / "empty.csv").write_text("run_id,iteration,metric,key,value,embedding_checksum,sample_counts\n")
    with pytest.raises(ValidationError, match="empty.csv"):
        plot_metrics(tmp_path / "empty.csv", tmp_path / "x.svg")


def test_sample_grid_layout_and_determinism(tmp_path):
    g = build_network(ArchitectureSpec(image_size=32, n_res_blocks=3, base_width=4), 0)
    a = sample_grid(g, 4, 4, 0, tmp_path / "a.png", padding=2)
    b = sample_grid(g, 4, 4, 0, tmp_path / "b.png", padding=2)
    assert a.read_bytes() == b.read_bytes()
    assert Image.open(a).size == (4 * 32 + 5 * 2, 4 * 32 + 5 * 2)


def test_sample_grid_rows_follow_classes(tmp_path):
    spec = ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=4, conditioning="cond_bnorm", n_classes=10)
    g = build_network(spec, 0)
    w = g["bn_out.bias"].clone()
    w += torch_arange_rows(10, w.shape[1])
    g = g.replace(**{"bn_out.bias": w})
    path = sample_grid(g, 10, 3, 5, tmp_path / "c.png", padding=0)
    canvas = np.asarray(Image.open(path))
    expected = generate(g, 30, 5, labels=np.repeat(np.arange(10), 3))
    expected = np.clip((expected + 1.0) * 127.5 + 0.5, 0, 255).astype(np.uint8).transpose(0, 2, 3, 1)
    for r in range(10):
        assert np.array_equal(canvas[r * 8:(r + 1) * 8, 0:8], expected[3 * r])


def torch_arange_rows(k, c):
    import torch

    return torch.arange(k, dtype=torch.float32)[:, None].expand(k, c) * 0.3


def test_sample_grid_errors(tmp_path):
    g = build_network(ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=4), 0)
    with pytest.raises(ValidationError):
        sample_grid(g, 2, 2, 0, tmp_path / "x.png", per_class=True)
    cond = build_network(ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=4, conditioning="concat",
                                          n_classes=3), 0)
    with pytest.raises(ValidationError):
        sample_grid(cond, 4, 2, 0, tmp_path / "x.png")


# ------------------------------------------------------------------ runner and CLI

def test_transfer_grid_run_refusal_and_force(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["transfer", "--config", str(cfg)]) == 0
    run_dir = next((tmp_path / "out" / "runs").iterdir())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert set(manifest["defaults"]) >= {"gp_lambda", "n_critic", "alpha_g", "alpha_d", "noise_dim"}
    assert manifest["embedding_checksum"]
    report = json.loads((run_dir / "report.json").read_text())
    assert len(report["cells"]) == 3
    assert all((run_dir / "checkpoints" / f"cell{i}" / "generator.ckpt").exists() for i in range(3))
    assert (run_dir / "plots" / "fid.svg").exists()
    assert main(["transfer", "--config", str(cfg)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["transfer", "--config", str(cfg), "--force"]) == 0


def test_crash_resume_skips_finished_cells(tmp_path):
    spec = parse_config(write_config(tmp_path).read_text())
    Runner(spec).run()
    run_dir = next((tmp_path / "out" / "runs").iterdir())
    finished = {i: (run_dir / "cells" / str(i) / "train_log.csv").stat().st_mtime_ns for i in (0, 1)}
    metrics_before = (run_dir / "metrics.csv").read_bytes()
    # Simulate an interruption after cell 1.
    (run_dir / "cells" / "2" / "result.json").unlink()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    manifest["status"] = "running"
    (run_dir / "manifest.json").write_text(json.dumps(manifest))
    outcome = Runner(spec).run()[0]
    assert outcome.ok
    assert {i: (run_dir / "cells" / str(i) / "train_log.csv").stat().st_mtime_ns for i in (0, 1)} == finished
    assert (run_dir / "metrics.csv").read_bytes() == metrics_before


def test_refusal_raised_by_runner(tmp_path):
    spec = parse_config(write_config(tmp_path).read_text())
    Runner(spec).run()
    with pytest.raises(RunRefused):
        Runner(spec).run()


def test_failed_run_gives_exit_one(tmp_path):
    cfg = write_config(tmp_path, target=f"folder:{tmp_path / 'no_such_dir'}")
    assert main(["transfer", "--config", str(cfg)]) == 1
    manifest = json.loads(next((tmp_path / "out" / "runs").glob("*/manifest.json")).read_text())
    assert manifest["status"] == "failed" and "no_such_dir" in manifest["errors"][0]


def test_size_sweep_layout(tmp_path):
    cfg = write_config(tmp_path, kind="size_sweep")
    assert main(["size-sweep", "--config", str(cfg), "--seed", "3"]) == 0
    run_dir = next((tmp_path / "out" / "runs").iterdir())
    result = json.loads((run_dir / "result.json").read_text())
    assert (run_dir / "summary.txt").exists()
    assert {p.name for p in run_dir.iterdir() if p.name.startswith("size")} == {"size50", "size100"}
    assert json.loads((run_dir / "manifest.json").read_text())["seed"] == 3
    assert result


def test_kind_mismatch_is_an_error(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="size_sweep")
    assert main(["transfer", "--config", str(cfg)]) == 2
    assert "size_sweep" in capsys.readouterr().err


def test_cli_sample_and_plot(tmp_path, capsys):
    ck = save_checkpoint(Checkpoint.wrap(build_network(ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=4),
                                                       0)), tmp_path / "g.ckpt")
    assert main(["sample", str(ck), "--rows", "2", "--cols", "3", "--out", str(tmp_path / "s.png")]) == 0
    assert Image.open(tmp_path / "s.png").size == (3 * 10 + 2, 2 * 10 + 2)
    MetricsLog(tmp_path / "m.csv").append(MetricReport("r", 0, "fid", 1.0), MetricReport("r", 1, "fid", 0.5))
    assert main(["plot", str(tmp_path / "m.csv"), "--out", str(tmp_path / "p.svg"), "--window", "1"]) == 0
    assert main(["plot", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "q.svg")]) == 2


def test_experiment_spec_validation():
    with pytest.raises(ValidationError):
        ExperimentSpec(kind="transfer_grid", seeds=())
    with pytest.raises(ValidationError):
        ExperimentSpec(kind="size_sweep", sizes=(0,))
