import json

import numpy as np
import pytest
import torch
from scipy import stats

from gantransfer.data import make_synthetic
from gantransfer.exceptions import TransferError, ValidationError
from gantransfer.model_zoo import Checkpoint, build_network, load_checkpoint, save_checkpoint
from gantransfer.training import TrainConfig
from gantransfer.transfer import (Pretrained, Scratch, TransferConfig, apply_transfer, cell_seed,
                                  run_transfer_experiment, standard_grid, surgery_expand_input)


@pytest.fixture
def source(tmp_path, tiny_spec):
    g = build_network(tiny_spec, 11)
    d = build_network(tiny_spec.replace(role="discriminator"), 12)
    gp = save_checkpoint(Checkpoint.wrap(g), tmp_path / "src" / "g.ckpt")
    dp = save_checkpoint(Checkpoint.wrap(d), tmp_path / "src" / "d.ckpt")
    return g, d, gp, dp


def test_scratch_scratch_matches_build(tiny_spec):
    g, d, prov = apply_transfer(tiny_spec, TransferConfig(Scratch(), Scratch()), seed=4)
    assert g.checksum == build_network(tiny_spec, 4).checksum
    assert d.checksum == build_network(tiny_spec.replace(role="discriminator"), 4).checksum
    assert prov["generator"].all("fresh") and prov["discriminator"].all("fresh")


def test_pretrained_pretrained_copies_everything(source, tiny_spec):
    g_src, d_src, gp, dp = source
    g, d, prov = apply_transfer(tiny_spec, TransferConfig(Pretrained(gp), Pretrained(dp)), seed=4)
    assert g.checksum == g_src.checksum and d.checksum == d_src.checksum
    assert prov["generator"].all("copied") and prov["discriminator"].all("copied")


def test_mixed_cell_provenance(source, tiny_spec):
    g_src, d_src, gp, dp = source
    g, d, prov = apply_transfer(tiny_spec, TransferConfig(Pretrained(gp), Scratch()), seed=4)
    assert g.checksum == g_src.checksum and d.checksum != d_src.checksum
    assert prov["generator"].all("copied") and prov["discriminator"].all("fresh")


def test_copied_entries_are_bitwise_equal(source, tiny_spec):
    _, d_src, _, dp = source
    cond = tiny_spec.replace(role="discriminator", conditioning="cond_bnorm", n_classes=3)
    _, d, prov = apply_transfer(tiny_spec.replace(conditioning="cond_bnorm", n_classes=3),
                                TransferConfig(Scratch(), Pretrained(dp)), seed=0, d_spec=cond)
    labels = prov["discriminator"].as_dict()
    assert labels["aux.weight"] == "fresh" and labels["head.weight"] == "copied"
    for name, label in labels.items():
        assert label in ("copied", "fresh")
        if label == "copied":
            assert torch.equal(d[name], d_src[name])


def test_width_mismatch_names_first_parameter(tmp_path, tiny_spec):
    wide = save_checkpoint(Checkpoint.wrap(build_network(tiny_spec.replace(base_width=16), 0)), tmp_path / "w.ckpt")
    with pytest.raises(TransferError, match="fc.weight"):
        apply_transfer(tiny_spec, TransferConfig(Pretrained(wide), Scratch()), seed=0)
    wide_d = save_checkpoint(Checkpoint.wrap(build_network(tiny_spec.replace(role="discriminator", base_width=16), 0)),
                             tmp_path / "wd.ckpt")
    with pytest.raises(TransferError, match="conv_in.weight"):
        apply_transfer(tiny_spec, TransferConfig(Scratch(), Pretrained(wide_d)), seed=0)


def test_source_file_not_mutated(source, tiny_spec):
    _, _, gp, dp = source
    before = gp.read_bytes(), dp.read_bytes()
    g, d, _ = apply_transfer(tiny_spec, TransferConfig(Pretrained(gp), Pretrained(dp)), seed=0)
    g.params["fc.weight"].add_(1.0)
    assert (gp.read_bytes(), dp.read_bytes()) == before
    assert load_checkpoint(gp).param_store.checksum != g.checksum


def test_transfer_config_validation():
    with pytest.raises(ValidationError):
        TransferConfig("scratch", Scratch())
    assert TransferConfig(Scratch(), Pretrained("x")).label == "G=scratch,D=pre"


# ------------------------------------------------------------------ surgery

def test_surgery_shapes_and_copy():
    w = torch.randn(64, 128)
    out = surgery_expand_input(w, 138, seed=0)
    assert out.shape == (64, 138)
    assert torch.equal(out[:, :128], w)
    with pytest.raises(ValidationError):
        surgery_expand_input(w, 128, seed=0)


def test_surgery_fresh_columns_follow_initializer():
    out = surgery_expand_input(torch.zeros(256, 128), 138, seed=3)
    fresh = out[:, 128:].numpy().ravel()
    bound = np.sqrt(6.0 / 138)
    assert stats.kstest(fresh, stats.uniform(-bound, 2 * bound).cdf).pvalue > 0.01


# ------------------------------------------------------------------ experiments

@pytest.fixture
def target():
    return make_synthetic("shapes_b", 32, 8, 0)


def quick_cfg():
    return TrainConfig(iterations=2, batch_size=8, n_critic=1)


def test_empty_grid(target, tiny_spec, tmp_path):
    report = run_transfer_experiment([], target, [], None, tiny_spec, out_dir=tmp_path)
    assert report["cells"] == [] and not (tmp_path / "report.json").exists()


def test_grid_is_deterministic_and_complete(source, target, tiny_spec, tmp_path):
    _, _, gp, dp = source
    grid = standard_grid(gp, dp, quick_cfg())
    a = run_transfer_experiment([gp, dp], target, grid, None, tiny_spec, out_dir=tmp_path / "a", seed=1)
    b = run_transfer_experiment([gp, dp], target, grid, None, tiny_spec, out_dir=tmp_path / "b", seed=1, jobs=2)
    assert len(a["cells"]) == 4 and all(c["status"] == "ok" for c in a["cells"])
    assert [c["param_checksums"] for c in a["cells"]] == [c["param_checksums"] for c in b["cells"]]
    assert len({c["seed"] for c in a["cells"]}) == 4
    assert a["cells"][3]["provenance"]["generator"]["fresh"] == 0
    for i in range(4):
        assert (tmp_path / "a" / "checkpoints" / f"cell{i}" / "generator.ckpt").exists()
    assert json.loads((tmp_path / "a" / "report.json").read_text())["cells"][0]["label"] == "G=scratch,D=scratch"


def test_incompatible_source_rejected_before_training(tmp_path, target, tiny_spec):
    wide = save_checkpoint(Checkpoint.wrap(build_network(tiny_spec.replace(base_width=16), 0)), tmp_path / "w.ckpt")
    with pytest.raises(TransferError):
        run_transfer_experiment([wide], target, [TransferConfig(Pretrained(wide), Scratch(), quick_cfg())], None,
                                tiny_spec, out_dir=tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_failed_cell_does_not_stop_grid(target, tiny_spec, tmp_path):
    grid = [TransferConfig(Pretrained(tmp_path / "missing.ckpt"), Scratch(), quick_cfg()),
            TransferConfig(Scratch(), Scratch(), quick_cfg())]
    report = run_transfer_experiment([], target, grid, None, tiny_spec, out_dir=tmp_path / "out")
    assert [c["status"] for c in report["cells"]] == ["failed", "ok"]
    assert "missing.ckpt" in report["cells"][0]["error"]
    assert not (tmp_path / "out" / "cells" / "0" / "result.json").exists()


def test_resume_skips_finished_cells(source, target, tiny_spec, tmp_path):
    _, _, gp, dp = source
    grid = standard_grid(gp, dp, quick_cfg())
    first = run_transfer_experiment([gp, dp], target, grid, None, tiny_spec, out_dir=tmp_path, seed=2)
    # Simulate a crash after cell 1: later cells have no result yet.
    for i in (2, 3):
        (tmp_path / "cells" / str(i) / "result.json").unlink()
    stamps = {i: (tmp_path / "cells" / str(i) / "train_log.csv").stat().st_mtime_ns for i in (0, 1)}
    second = run_transfer_experiment([gp, dp], target, grid, None, tiny_spec, out_dir=tmp_path, seed=2)
    assert {i: (tmp_path / "cells" / str(i) / "train_log.csv").stat().st_mtime_ns for i in (0, 1)} == stamps
    assert [c["param_checksums"] for c in first["cells"]] == [c["param_checksums"] for c in second["cells"]]
    # Logs of retried cells are rewritten, not appended to.
    rows = (tmp_path / "cells" / "2" / "train_log.csv").read_text().splitlines()
    assert len(rows) == 1 + quick_cfg().iterations


def test_cell_seed_is_stable():
    assert cell_seed(0, 0) == cell_seed(0, 0)
    assert len({cell_seed(s, i) for s in range(3) for i in range(4)}) == 12
