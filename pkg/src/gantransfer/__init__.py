"""Transfer learning for GANs at desk scale.

Train source GANs, fine-tune them on new domains under controlled transfer
configurations, build class-conditional variants from unconditional
weights, and evaluate with FID and an independent Wasserstein critic.
"""

__version__ = "0.1.0"

from .conditional import (AcGanConfig, FromCheckpoint, acgan_d_loss, acgan_g_loss, condition_bnorm_init,  # noqa: E402
                          condition_concat_init, train_acgan)
from .data import DatasetHandle, load_image_folder, make_synthetic, subset  # noqa: E402
from .estimators import ACGAN, WGANGP, Embedder, IndependentCritic  # noqa: E402
from .exceptions import (CheckpointError, GanTransferError, NumericDomainError, TrainingDivergedError,  # noqa: E402
                         TransferError, ValidationError)
from .model_zoo import (ArchitectureSpec, Checkpoint, ParamStore, build_network, forward_discriminator,  # noqa: E402
                        forward_generator, load_checkpoint, save_checkpoint)
from .selection import ZooEntry, gen_vs_target_fid, rank_sources, real_vs_real_fid  # noqa: E402
from .training import (TrainConfig, gan_loss, generate, gradient_penalty, train_gan, wgan_gp_d_loss,  # noqa: E402
                       wgan_gp_g_loss)
from .transfer import (Pretrained, Scratch, TransferConfig, apply_transfer, run_transfer_experiment,  # noqa: E402
                       surgery_expand_input)

__all__ = [
    "__version__",
    "ArchitectureSpec", "ParamStore", "Checkpoint", "build_network", "forward_generator", "forward_discriminator",
    "save_checkpoint", "load_checkpoint",
    "TrainConfig", "gan_loss", "gradient_penalty", "wgan_gp_d_loss", "wgan_gp_g_loss", "train_gan", "generate",
    "Scratch", "Pretrained", "TransferConfig", "apply_transfer", "surgery_expand_input", "run_transfer_experiment",
    "AcGanConfig", "FromCheckpoint", "acgan_g_loss", "acgan_d_loss", "condition_concat_init",
    "condition_bnorm_init", "train_acgan",
    "ZooEntry", "gen_vs_target_fid", "real_vs_real_fid", "rank_sources",
    "DatasetHandle", "make_synthetic", "load_image_folder", "subset",
    "WGANGP", "ACGAN", "Embedder", "IndependentCritic",
    "GanTransferError", "ValidationError", "NumericDomainError", "CheckpointError", "TransferError",
    "TrainingDivergedError",
]
