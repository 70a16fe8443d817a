"""End-to-end acceptance checks at desk scale.

Each test prints one ``PASS``/``FAIL`` line for its criterion before
asserting. The training criteria share one embedder and one pair of source
models per session; together they take on the order of an hour on one CPU.
Run them alone with ``pytest -m acceptance -s``.
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from gantransfer.conditional import (AcGanConfig, FromCheckpoint, acgan_d_loss, acgan_g_loss, condition_bnorm_init,
                                     init_acgan, train_acgan)
from gantransfer.data import concat, make_synthetic, subset
from gantransfer.harness.cli import main as cli_main
from gantransfer.metrics.critic import independent_wasserstein
from gantransfer.metrics.embedding import fit_embedding
from gantransfer.metrics.evaluate import EvalConfig, fid_hook, iterations_to_reach
from gantransfer.metrics.fid import GaussianStats, fid, gaussian_stats, sqrtm_psd
from gantransfer.model_zoo import ArchitectureSpec, Checkpoint, build_network, forward_generator, save_checkpoint
from gantransfer.model_zoo.store import param_count
from gantransfer.training import (Hook, TrainConfig, WGANGPLosses, generate, gradient_penalty, run_adversarial,
                                  train_gan, wgan_gp_d_loss, wgan_gp_g_loss)
from gantransfer.transfer import Pretrained, Scratch, TransferConfig, run_transfer_experiment

from helpers import CRITERIA_LINES, GRADCHECK_SPEC, wgan_gp_gradcheck

pytestmark = pytest.mark.acceptance

IMAGE_SIZE = 8
WIDTH = 32  # transfer experiments
HALF_WIDTH = WIDTH // 2
SOURCE_ITERATIONS = 1500
SEEDS = (0, 1, 2, 3, 4)


def report(n: int, ok: bool, detail: str, started: float | None = None):
    took = "" if started is None else f" [{time.perf_counter() - started:.1f}s]"
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}{took}"
    CRITERIA_LINES.append(line)
    print("\n" + line, flush=True)
    assert ok, f"criterion {n}: {detail}"


def fmt(values) -> str:
    return "[" + ", ".join("None" if v is None else f"{v:.1f}" for v in values) + "]"


# ------------------------------------------------------------------ shared desk setup

class Desk:
    """Embedder, data and source checkpoints shared by the training criteria."""

    def __init__(self, root: Path):
        self.root = root
        mix = concat([make_synthetic(k, 2000, IMAGE_SIZE, 100)
                      for k in ("shapes_a", "shapes_b", "faces_toy", "eight_gaussians_rgb")], "mix")
        self.embedder = fit_embedding(mix, 0)
        self.source = make_synthetic("shapes_a", 5000, IMAGE_SIZE, 1)
        self.target_pool = make_synthetic("shapes_b", 5000, IMAGE_SIZE, 2)
        self.reference = make_synthetic("shapes_b", 2000, IMAGE_SIZE, 3)
        self._sources = {}

    def layout(self, width: int) -> ArchitectureSpec:
        return ArchitectureSpec(image_size=IMAGE_SIZE, n_res_blocks=1, base_width=width)

    def eval_config(self, every: int = 50, n_samples: int = 2000) -> EvalConfig:
        return EvalConfig(self.embedder, self.reference, every=every, n_samples=n_samples)

    def source_checkpoints(self, width: int) -> tuple[str, str]:
        """Train (once) an unconditional source GAN on shapes_a and save both networks."""
        if width not in self._sources:
            spec = self.layout(width)
            g, d = build_network(spec, 100), build_network(spec.replace(role="discriminator"), 100)
            cfg = TrainConfig(batch_size=32, iterations=SOURCE_ITERATIONS, seed=100)
            res = train_gan(g, d, self.source, cfg)
            paths = []
            for store in (res.generator, res.discriminator):
                ckpt = Checkpoint.wrap(store, iteration=cfg.iterations, dataset_id=self.source.dataset_id, seed=100)
                paths.append(str(save_checkpoint(ckpt, self.root / f"w{width}" / f"{store.spec.role}.ckpt")))
            self._sources[width] = tuple(paths)
        return self._sources[width]


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    return Desk(tmp_path_factory.mktemp("desk"))


def run_grid(desk, width, target, cells, cfg, seed, eval_every=50):
    """Run ``cells`` (labels like ``pre/scratch``) and return ``{label: trajectory}``."""
    g_ckpt, d_ckpt = desk.source_checkpoints(width)
    pick = {"pre": (Pretrained(g_ckpt), Pretrained(d_ckpt)), "scratch": (Scratch(), Scratch())}
    grid = [TransferConfig(pick[g][0], pick[d][1], cfg) for g, d in (c.split("/") for c in cells)]
    rep = run_transfer_experiment([g_ckpt, d_ckpt], target, grid, desk.eval_config(eval_every), desk.layout(width),
                                  seed=seed)
    for c in rep["cells"]:
        assert c["status"] == "ok", c.get("error")
    return {label: c["trajectory"] for label, c in zip(cells, rep["cells"])}


def median_trajectory(trajectories) -> list[tuple[int, float]]:
    its = [it for it, _ in trajectories[0]]
    return [(it, float(np.median([t[i][1] for t in trajectories]))) for i, it in enumerate(its)]


def transfer_ordering(desk, width, include_g_only: bool):
    """Run the short fine-tuning budget over all seeds; returns per-label trajectories."""
    target = subset(desk.target_pool, 1000, 0)
    cfg = TrainConfig(batch_size=32, lr=1e-4, iterations=400)
    cells = ["pre/pre", "scratch/scratch"] + (["pre/scratch"] if include_g_only else [])
    runs = {c: [] for c in cells}
    for seed in SEEDS:
        for label, traj in run_grid(desk, width, target, cells, cfg, seed).items():
            runs[label].append(traj)
    return runs


def check_transfer_ordering(n, runs, started, extra=""):
    finals = {label: float(np.median([t[-1][1] for t in ts])) for label, ts in runs.items()}
    med = {label: median_trajectory(ts) for label, ts in runs.items()}
    thresholds = [v for it, v in med["scratch/scratch"] if it > 0]
    reach = [(iterations_to_reach(med["pre/pre"], t), iterations_to_reach(med["scratch/scratch"], t))
             for t in thresholds]
    faster = all(p is not None and p < s for p, s in reach)
    ok = finals["pre/pre"] < finals["scratch/scratch"] and faster
    detail = (f"median final FID pre/pre={finals['pre/pre']:.1f} scratch/scratch={finals['scratch/scratch']:.1f}"
              + (f" pre-G-only={finals['pre/scratch']:.1f} (reported)" if "pre/scratch" in finals else "")
              + f"; iterations to reach scratch's thresholds (pre, scratch)={reach}{extra}")
    report(n, ok, detail, started)


# ------------------------------------------------------------------ 1-5: numerical oracles

def test_c01_fid_matches_population_value():
    started = time.perf_counter()
    rng = np.random.default_rng(0)
    d = 8
    mu1, mu2 = rng.normal(size=d), rng.normal(size=d)
    a1, a2 = rng.normal(size=(d, d)), rng.normal(size=(d, d))
    cov1, cov2 = a1 @ a1.T / d + 0.5 * np.eye(d), a2 @ a2.T / d + 0.5 * np.eye(d)
    # Population value through an independent route: eigenvalues of S1 S2 are real and non-negative.
    cross = np.sqrt(np.clip(np.linalg.eigvals(cov1 @ cov2).real, 0, None)).sum()
    population = float(np.sum((mu1 - mu2) ** 2) + np.trace(cov1) + np.trace(cov2) - 2 * cross)
    x1 = rng.multivariate_normal(mu1, cov1, size=10_000)
    x2 = rng.multivariate_normal(mu2, cov2, size=10_000)
    got = fid(gaussian_stats(x1), gaussian_stats(x2))
    rel = abs(got - population) / population
    exact = fid(GaussianStats(mu1, cov1, 10_000), GaussianStats(mu2, cov2, 10_000))
    report(1, rel <= 0.05 and abs(exact - population) <= 1e-8 * population,
           f"sample FID {got:.4f} vs population {population:.4f}, rel err {rel:.4f} (tol 0.05)", started)


def test_c02_sqrtm_residual():
    started = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(100):
        rank = 64 if i % 2 == 0 else int(rng.integers(1, 64))
        a = rng.normal(size=(64, rank)) * rng.uniform(0.1, 10)
        m = a @ a.T
        r = sqrtm_psd(m)
        worst = max(worst, np.linalg.norm(r @ r - m) / (1 + np.linalg.norm(m)))
    report(2, worst <= 1e-8, f"max ||R R - M||_F / (1 + ||M||_F) = {worst:.2e} over 100 matrices (tol 1e-8)",
           started)


def test_c03_gradient_penalty_linear_critics():
    started = time.perf_counter()
    rng = torch.Generator().manual_seed(0)
    x_real, x_fake = torch.randn(32, 3, 8, 8, generator=rng), torch.randn(32, 3, 8, 8, generator=rng)
    w = torch.randn(3 * 8 * 8, generator=rng, dtype=torch.float64)
    w = w / w.norm()
    values = []
    for scale, expected in ((1.0, 0.0), (5.0, 160.0)):
        critic = lambda x, s=scale: x.double().flatten(1) @ (s * w)  # noqa: E731
        values.append((gradient_penalty(critic, x_real, x_fake, 10.0, rng).item(), expected))
    ok = all(abs(v - e) <= 1e-4 for v, e in values)
    report(3, ok, "penalty at ||w||=1 and ||w||=5: " + ", ".join(f"{v:.6f} (expected {e})" for v, e in values),
           started)


def test_c04_loss_gradients_match_finite_differences():
    started = time.perf_counter()
    n_params = {r: param_count(GRADCHECK_SPEC.replace(role=r)) for r in ("generator", "discriminator")}
    err_d, err_g = wgan_gp_gradcheck(seed=0, n_coords=50)
    worst = max(err_d.max(), err_g.max())
    ok = worst <= 1e-3 and max(n_params.values()) <= 2000 and len(err_d) == len(err_g) == 50
    report(4, ok, f"max relative error D={err_d.max():.2e} G={err_g.max():.2e} over 50 coordinates each; "
                  f"params {n_params} (tol 1e-3)", started)


def test_c05_cond_bnorm_copy_identity():
    started = time.perf_counter()
    spec = ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=16)
    g, d = build_network(spec, 0), build_network(spec.replace(role="discriminator"), 0)
    source = train_gan(g, d, make_synthetic("shapes_a", 256, 8, 0),
                       TrainConfig(iterations=20, batch_size=32, lr=1e-3)).generator
    k = 10
    cond = condition_bnorm_init(source, k)
    z = torch.randn(64, spec.noise_dim, generator=torch.Generator().manual_seed(1))
    ref = forward_generator(source, z)
    worst = max((forward_generator(cond, z, torch.full((64,), c)) - ref).abs().max().item() for c in range(k))
    report(5, worst <= 1e-6, f"max |G_cond(z, c) - G(z)| over {k} classes = {worst:.2e} (tol 1e-6)", started)


# ------------------------------------------------------------------ 6-8, 12: training trends

@pytest.mark.slow
def test_c06_transfer_benefit(desk):
    started = time.perf_counter()
    runs = transfer_ordering(desk, WIDTH, include_g_only=True)
    check_transfer_ordering(6, runs, started, f"; base_width={WIDTH}, 5 seeds, 400 iterations")


@pytest.mark.slow
def test_c12_half_width_transfer_benefit(desk):
    started = time.perf_counter()
    runs = transfer_ordering(desk, HALF_WIDTH, include_g_only=False)
    check_transfer_ordering(12, runs, started, f"; base_width={HALF_WIDTH} (half of {WIDTH})")


SWEEP_SIZES = (100, 1000, 5000)
SWEEP_SEEDS = (0, 1, 2)
SWEEP_ITERATIONS = 800


@pytest.mark.slow
def test_c07_size_sweep(desk):
    started = time.perf_counter()
    ref_stats = gaussian_stats(desk.embedder.embed(desk.target_pool.images))
    lower = [float(np.median([fid(gaussian_stats(desk.embedder.embed(subset(desk.target_pool, n, s).images)),
                                  ref_stats) for s in SWEEP_SEEDS])) for n in SWEEP_SIZES]
    finals = {"pre/pre": [], "scratch/scratch": []}
    for n in SWEEP_SIZES:
        cfg = TrainConfig.finetune(n, batch_size=32, iterations=SWEEP_ITERATIONS)
        per_seed = {label: [] for label in finals}
        for seed in SWEEP_SEEDS:
            target = subset(desk.target_pool, n, seed)
            for label, traj in run_grid(desk, WIDTH, target, list(finals), cfg, seed, SWEEP_ITERATIONS).items():
                per_seed[label].append(traj[-1][1])
        for label in finals:
            finals[label].append(float(np.median(per_seed[label])))
    gaps = [s - p for p, s in zip(finals["pre/pre"], finals["scratch/scratch"])]
    monotone = all(all(a >= b for a, b in zip(v, v[1:])) for v in finals.values())
    widest = gaps[0] == max(gaps)
    lower_ok = all(a > b for a, b in zip(lower, lower[1:]))
    report(7, monotone and widest and lower_ok,
           f"sizes {SWEEP_SIZES}: median final FID pre/pre={fmt(finals['pre/pre'])} "
           f"scratch/scratch={fmt(finals['scratch/scratch'])}; gap (scratch - pre)={fmt(gaps)}; "
           f"FID(subset, full)={fmt(lower)}", started)


@pytest.mark.slow
def test_c08_acgan_early_advantage(desk):
    started = time.perf_counter()
    g_ckpt, d_ckpt = desk.source_checkpoints(WIDTH)
    target = subset(desk.target_pool, 1000, 0)
    ev = desk.eval_config(every=100, n_samples=1000)
    curves = {"from_checkpoint": [], "scratch": []}
    for seed in SEEDS:
        cfg = AcGanConfig("cond_bnorm", n_classes=target.n_classes,
                          base=TrainConfig(batch_size=32, lr=1e-4, iterations=300, seed=seed))
        for name, init in (("from_checkpoint", FromCheckpoint(g_ckpt, d_ckpt)), ("scratch", "scratch")):
            traj = []
            train_acgan(cfg, init, target, hooks=[fid_hook(ev, name, trajectory=traj, per_class=True)],
                        layout=desk.layout(WIDTH))
            curves[name].append(traj)
    med = {k: median_trajectory(v) for k, v in curves.items()}
    # The earliest checkpoint after training has started; iteration 0 is the untrained initialization.
    first = next(i for i, (it, _) in enumerate(med["scratch"]) if it > 0)
    early = med["scratch"][first][1] - med["from_checkpoint"][first][1]
    late = med["scratch"][-1][1] - med["from_checkpoint"][-1][1]
    ok = med["from_checkpoint"][first][1] < med["scratch"][first][1] and late < early
    report(8, ok, f"median overall FID at iteration {med['scratch'][first][0]}: "
                  f"from_checkpoint={med['from_checkpoint'][first][1]:.1f} scratch={med['scratch'][first][1]:.1f}; "
                  f"gap {early:.1f} -> {late:.1f} at iteration {med['scratch'][-1][0]}", started)


# ------------------------------------------------------------------ 9-11

def test_c09_acgan_alpha_zero_reduces_to_wgan_gp():
    started = time.perf_counter()
    spec = ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=8, noise_dim=16, conditioning="cond_bnorm",
                            n_classes=4)
    g, d = build_network(spec, 0), build_network(spec.replace(role="discriminator"), 1)
    gen = torch.Generator().manual_seed(0)
    cfg = TrainConfig()
    mismatches = 0
    for _ in range(10):
        x = torch.rand(16, 3, 8, 8, generator=gen) * 2 - 1
        y, yp = torch.randint(4, (16,), generator=gen), torch.randint(4, (16,), generator=gen)
        z = torch.randn(16, 16, generator=gen)
        seed = int(torch.randint(2 ** 31, (1,), generator=gen))
        ld = acgan_d_loss(d, g, x, y, z, yp, 0.0, cfg, torch.Generator().manual_seed(seed))
        ld_ref = wgan_gp_d_loss(d, g, x, z, cfg, torch.Generator().manual_seed(seed), y_fake=yp)
        lg, lg_ref = acgan_g_loss(d, g, z, yp, 0.0), wgan_gp_g_loss(d, g, z, yp)
        mismatches += int(not torch.equal(ld, ld_ref)) + int(not torch.equal(lg, lg_ref))
    # Whole training runs: identical logged losses at every step.
    data = make_synthetic("shapes_a", 128, 8, 0)
    base = TrainConfig(iterations=5, batch_size=16, seed=3)
    layout = spec.replace(conditioning="none", n_classes=0)
    ac = train_acgan(AcGanConfig("cond_bnorm", n_classes=4, alpha_g=0.0, alpha_d=0.0, base=base), "scratch", data,
                     layout=layout)
    g0, d0, _ = init_acgan(AcGanConfig("cond_bnorm", n_classes=4, alpha_g=0.0, alpha_d=0.0, base=base), "scratch",
                           layout)
    plain = run_adversarial(g0, d0, data, base, WGANGPLosses())
    steps = sum((a["loss_d"], a["loss_g"]) != (b["loss_d"], b["loss_g"]) for a, b in zip(ac.log, plain.log))
    report(9, mismatches == 0 and steps == 0 and len(ac.log) == 5,
           f"{mismatches} mismatching loss values on 10 batches, {steps} mismatching logged steps of 5", started)


@pytest.mark.slow
def test_c10_iw_null_and_separation():
    started = time.perf_counter()
    spec = ArchitectureSpec(role="critic", image_size=8, n_res_blocks=1, base_width=16)
    critic_cfg = TrainConfig(batch_size=64, iterations=500, seed=0)
    real = make_synthetic("shapes_b", 4000, 8, 7)
    a, b = real.split(0.5, seed=0)
    null = independent_wasserstein(a.images, b.images, critic_cfg, spec)["iw"]

    data = make_synthetic("shapes_b", 1000, 8, 8)
    held_out = make_synthetic("shapes_b", 2000, 8, 9).images
    layout = ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=16)
    early, late = [], []
    for seed in (0, 1, 2):
        snaps = {}
        hook = Hook(50, lambda it, g, d: snaps.setdefault(it, generate(g, 2000, 50 + seed)))
        train_gan(build_network(layout, seed), build_network(layout.replace(role="discriminator"), seed), data,
                  TrainConfig(batch_size=32, iterations=400, seed=seed), hooks=[hook])
        cfg = critic_cfg.replace(seed=seed)
        early.append(independent_wasserstein(held_out, snaps[50], cfg, spec)["iw"])
        late.append(independent_wasserstein(held_out, snaps[400], cfg, spec)["iw"])
    e, l_ = float(np.median(early)), float(np.median(late))
    ok = abs(null) <= 0.1 and e < l_
    report(10, ok, f"IW(real A, real B)={null:+.4f} (tol 0.1); median IW(real, early@50)={e:.3f} "
                   f"< IW(real, late@400)={l_:.3f}; per seed early={fmt(early)} late={fmt(late)}", started)


DETERMINISM_CONFIG = """
[experiment]
kind = {kind}
seeds = 0, 1
output_dir = {out}

[architecture]
preset = desk8
base_width = 8

[data]
source = synthetic:shapes_a:300:100
target = synthetic:shapes_b:300:1
reference = synthetic:shapes_b:300:2

[source_training]
iterations = 10
batch_size = 16

[finetune]
iterations = 10
batch_size = 16

[grid]
cells = scratch/scratch, pre/pre, pre/scratch

[sweep]
sizes = 50, 100

[eval]
every = 5
n_samples = 200

[embedder]
iterations = 30
"""


def _fingerprint(root: Path) -> dict:
    """Metric CSV contents and checkpoint hashes, keyed by path relative to ``root``."""
    out = {}
    for p in sorted(root.rglob("*")):
        if p.suffix == ".csv" and p.name.startswith("metrics") or p.suffix == ".ckpt":
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_c11_rerun_determinism(tmp_path):
    started = time.perf_counter()
    prints = {}
    for kind in ("transfer_grid", "size_sweep"):
        runs = []
        for attempt in ("a", "b"):
            out = tmp_path / kind / attempt
            cfg = tmp_path / f"{kind}-{attempt}.ini"
            cfg.write_text(DETERMINISM_CONFIG.format(kind=kind, out=out))
            assert cli_main([{"transfer_grid": "transfer", "size_sweep": "size-sweep"}[kind], "--config", str(cfg)]) == 0
            runs.append(_fingerprint(out))
        prints[kind] = runs
    n_csv = sum(k.endswith(".csv") for r in prints.values() for k in r[0])
    n_ckpt = sum(k.endswith(".ckpt") for r in prints.values() for k in r[0])
    same = all(r[0] == r[1] and r[0] for r in prints.values())
    report(11, same and n_csv > 0 and n_ckpt > 0,
           f"{n_csv} metric CSVs and {n_ckpt} checkpoints identical across reruns "
           f"(transfer_grid, size_sweep; seeds 0, 1)", started)

