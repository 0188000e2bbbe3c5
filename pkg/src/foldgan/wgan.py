"""Per-class Wasserstein GAN with gradient penalty on heatmaps.

The generator projects a 128-dim latent vector to a 128-channel
(P/8) x (D/8) map and upsamples through three stride-2 transposed
convolutions with 64, 32 and 1 output channels (5x5 kernels, batch norm and
leaky ReLU after the first two, sigmoid after the last), landing on a
1 x P x D heatmap in [0, 1]. The critic stacks three stride-2 convolutions
with 32, 64 and 128 channels (5x5, leaky ReLU, no batch norm), flattens,
and finishes with dense layers of 1024 and 1 units; the final unit is
linear, so the output is an unbounded score rather than a probability.

Training minimises mean(critic(fake)) - mean(critic(real)) plus
lambda * mean((||grad_xhat critic(xhat)||_2 - 1)^2) over the critic, with
xhat drawn per sample on the segment between real and fake batches, and
maximises mean(critic(fake)) over the generator. The critic takes n_critic
steps per generator step.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDiverged
from .folding import Heatmap
from .loadsim import LabelledDataset
from .nn import Adam, BatchNorm, Conv2d, Dense, Flatten, LeakyReLU, Reshape, Sequential, Sigmoid, TConv2d
from .seeds import derive_seed

LEAK = 0.2
GEN_CHANNELS = (64, 32, 1)
CRITIC_CHANNELS = (32, 64, 128)
CRITIC_HIDDEN = 1024
KERNEL = (5, 5)
STRIDE = (2, 2)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GanArch:
    """Output geometry of one generator/critic pair."""

    latent_dim: int = 128
    p: int = 24
    d: int = 64

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be positive")
        for name, v in (("p", self.p), ("d", self.d)):
            if v < 8 or v % 8 != 0:
                raise ConfigError(
                    f"{name}={v} must be a positive multiple of 8 for three stride-2 stages; "
                    "crop or pad the heatmaps first (see fit_dims)"
                )

    @property
    def seed_shape(self) -> tuple[int, int, int]:
        return (128, self.p // 8, self.d // 8)


@dataclass
class GanTrainConfig:
    lr: float = 1e-4
    lr_decay: float = 0.5
    batch_size: int = 4
    epochs: int = 220
    lambda_gp: float = 10.0
    n_critic: int = 5
    beta1: float = 0.5
    beta2: float = 0.9
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("lr must be positive, batch_size >= 1, epochs >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.lambda_gp < 0:
            raise ConfigError("lambda_gp must be >= 0")
        if self.n_critic < 1:
            raise ConfigError("n_critic must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    em_estimate: float
    penalty: float
    gen_loss: float


@dataclass
class TrainLog:
    rows: list[EpochStats] = field(default_factory=list)

    HEADER = "epoch,em_estimate,penalty,gen_loss"

    def lines(self) -> list[str]:
        out = [self.HEADER]
        for r in self.rows:
            out.append(f"{r.epoch},{r.em_estimate!r},{r.penalty!r},{r.gen_loss!r}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def em_values(self) -> np.ndarray:
        return np.array([r.em_estimate for r in self.rows])


@dataclass
class GanCheckpoint:
    """Snapshot of one class-conditional generator (and optionally its critic)."""

    arch: GanArch
    class_label: int
    epochs_completed: int
    seed: int
    generator_state: dict[str, np.ndarray]
    critic_state: dict[str, np.ndarray] | None = None
    gen_opt_state: dict | None = None
    critic_opt_state: dict | None = None
    format_version: int = CHECKPOINT_VERSION

    def without_optimizer(self) -> "GanCheckpoint":
        return replace(self, critic_state=None, gen_opt_state=None, critic_opt_state=None)


def build_generator(arch: GanArch, seed: int) -> Sequential:
    """Latent (B, latent_dim) -> heatmap batch (B, 1, P, D) in [0, 1]."""
    arch.validate()
    rng = np.random.default_rng(seed)
    c, h0, w0 = arch.seed_shape
    net = Sequential(
        [
            ("dense0", Dense(arch.latent_dim, c * h0 * w0, rng=rng)),
            ("reshape", Reshape((c, h0, w0))),
            ("tconv1", TConv2d(c, GEN_CHANNELS[0], KERNEL, STRIDE, rng=rng)),
            ("bn1", BatchNorm(GEN_CHANNELS[0])),
            ("lrelu1", LeakyReLU(LEAK)),
            ("tconv2", TConv2d(GEN_CHANNELS[0], GEN_CHANNELS[1], KERNEL, STRIDE, rng=rng)),
            ("bn2", BatchNorm(GEN_CHANNELS[1])),
            ("lrelu2", LeakyReLU(LEAK)),
            ("tconv3", TConv2d(GEN_CHANNELS[1], GEN_CHANNELS[2], KERNEL, STRIDE, rng=rng)),
            ("sigmoid", Sigmoid()),
        ]
    )
    net.latent_dim = arch.latent_dim
    return net


def build_critic(arch: GanArch, seed: int) -> Sequential:
    """Heatmap batch (B, 1, P, D) -> unbounded scores (B, 1)."""
    arch.validate()
    rng = np.random.default_rng(seed)
    flat = CRITIC_CHANNELS[2] * (arch.p // 8) * (arch.d // 8)
    return Sequential(
        [
            ("conv1", Conv2d(1, CRITIC_CHANNELS[0], KERNEL, STRIDE, "same", rng=rng)),
            ("lrelu1", LeakyReLU(LEAK)),
            ("conv2", Conv2d(CRITIC_CHANNELS[0], CRITIC_CHANNELS[1], KERNEL, STRIDE, "same", rng=rng)),
            ("lrelu2", LeakyReLU(LEAK)),
            ("conv3", Conv2d(CRITIC_CHANNELS[1], CRITIC_CHANNELS[2], KERNEL, STRIDE, "same", rng=rng)),
            ("lrelu3", LeakyReLU(LEAK)),
            ("flatten", Flatten()),
            ("dense1", Dense(flat, CRITIC_HIDDEN, rng=rng)),
            ("lrelu4", LeakyReLU(LEAK)),
            ("dense2", Dense(CRITIC_HIDDEN, 1, rng=rng)),
        ]
    )


def interpolate_batch(real: np.ndarray, fake: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-sample convex mix eps*real + (1-eps)*fake with eps ~ U[0, 1]."""
    if real.shape != fake.shape:
        raise ShapeError(f"real {real.shape} and fake {fake.shape} batches must match")
    eps = rng.uniform(size=(real.shape[0],) + (1,) * (real.ndim - 1)).astype(real.dtype)
    return eps * real + (1.0 - eps) * fake


def penalty_value(critic: Sequential, xhat: np.ndarray, lambda_gp: float) -> float:
    """lambda * mean((||grad_xhat critic(xhat)|| - 1)^2), no parameter gradients."""
    scores = critic.forward(xhat, train=True)
    g = critic.backward(np.ones_like(scores), accumulate=False)
    norms = np.sqrt((g.reshape(g.shape[0], -1) ** 2).sum(axis=1))
    return float(lambda_gp * np.mean((norms - 1.0) ** 2))


def _penalty_accumulate(critic: Sequential, xhat: np.ndarray, lambda_gp: float) -> float:
    """Penalty value; adds its parameter gradient into the critic's grad buffers.

    The critic is piecewise-linear (affine layers and leaky ReLUs), so the
    input gradient g is, within the active linear region, a product of the
    weight matrices and fixed activation masks. The derivative of the
    penalty with respect to the parameters is then obtained exactly
    (almost everywhere) by pushing u = d penalty / d g through the
    mask-frozen tangent network and backpropagating over that pass.
    """
    batch = xhat.shape[0]
    scores = critic.forward(xhat, train=True)
    g = critic.backward(np.ones_like(scores), accumulate=False)
    flat = g.reshape(batch, -1)
    norms = np.sqrt((flat**2).sum(axis=1))
    penalty = float(lambda_gp * np.mean((norms - 1.0) ** 2))
    safe = np.where(norms > 0.0, norms, 1.0)
    coef = np.where(norms > 0.0, 2.0 * lambda_gp * (norms - 1.0) / (batch * safe), 0.0)
    u = (coef[:, None] * flat).reshape(g.shape).astype(xhat.dtype)
    t_out = critic.forward_tangent(u)
    critic.backward_tangent(np.ones_like(t_out), accumulate=True)
    return penalty


def gradient_penalty(
    critic: Sequential,
    real_batch: np.ndarray,
    fake_batch: np.ndarray,
    lambda_gp: float,
    seed,
) -> tuple[float, dict[str, np.ndarray]]:
    """Standalone penalty with its gradient over critic parameters.

    Any gradient already accumulated on the critic is preserved and the
    penalty contribution is added on top; the returned dict holds copies of
    just the penalty's own contribution.
    """
    if lambda_gp < 0:
        raise ConfigError("lambda_gp must be >= 0")
    rng = np.random.default_rng(seed)
    xhat = interpolate_batch(
        np.asarray(real_batch, dtype=critic.dtype), np.asarray(fake_batch, dtype=critic.dtype), rng
    )
    grads = critic.grads()
    before = {k: v.copy() for k, v in grads.items()}
    for v in grads.values():
        v[...] = 0
    penalty = _penalty_accumulate(critic, xhat, lambda_gp)
    contribution = {k: v.copy() for k, v in grads.items()}
    for k, v in grads.items():
        v += before[k]
    return penalty, contribution


def critic_step(
    critic: Sequential,
    generator: Sequential,
    real_batch: np.ndarray,
    cfg: GanTrainConfig,
    adam: Adam,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One critic update; returns (em_estimate, penalty).

    The loss is mean(critic(fake)) - mean(critic(real)) + penalty; the
    reported em_estimate is mean(real) - mean(fake), the critic's running
    proxy for the distance between the two distributions. Generator
    parameters are not touched.
    """
    b = real_batch.shape[0]
    if b != cfg.batch_size:
        raise ShapeError(f"critic_step needs a full batch of {cfg.batch_size}, got {b}")
    z = rng.standard_normal((b, generator.latent_dim)).astype(critic.dtype)
    fake = generator.forward(z, train=True)
    real_batch = np.asarray(real_batch, dtype=critic.dtype)
    xhat = interpolate_batch(real_batch, fake, rng)

    # Loss gradient: one fused forward/backward over real | fake.
    both = np.concatenate([real_batch, fake], axis=0)
    critic.zero_grad()
    scores = critic.forward(both, train=True)
    dscores = np.empty_like(scores)
    dscores[:b] = -1.0 / b
    dscores[b:] = 1.0 / b
    critic.backward(dscores, accumulate=True, input_grad=False)
    em = float(scores[:b].mean() - scores[b:].mean())

    penalty = _penalty_accumulate(critic, xhat, cfg.lambda_gp)
    loss = -em + penalty
    if not np.isfinite(loss):
        raise TrainingDiverged("diverged: non-finite critic loss", em_estimate=em)
    adam.step(critic.opt_params(), critic.opt_grads())
    return em, penalty


def generator_step(
    critic: Sequential,
    generator: Sequential,
    cfg: GanTrainConfig,
    adam: Adam,
    rng: np.random.Generator,
) -> float:
    """One generator update minimising -mean(critic(fake)); critic untouched."""
    b = cfg.batch_size
    z = rng.standard_normal((b, generator.latent_dim)).astype(critic.dtype)
    generator.zero_grad()
    fake = generator.forward(z, train=True)
    scores = critic.forward(fake, train=True)
    loss = float(-scores.mean())
    if not np.isfinite(loss):
        raise TrainingDiverged("diverged: non-finite generator loss", em_estimate=None)
    dfake = critic.backward(np.full_like(scores, -1.0 / b), accumulate=False)
    generator.backward(dfake, input_grad=False)
    adam.step(generator.opt_params(), generator.opt_grads())
    return loss


def _check_class_data(class_data: LabelledDataset) -> int:
    if len(class_data) == 0:
        raise ConfigError("class_data is empty")
    labels = set(int(x) for x in class_data.labels)
    if len(labels) != 1:
        raise ConfigError(f"class_data must hold a single class, got labels {sorted(labels)}")
    for h in class_data.items:
        if not h.normalized:
            raise ConfigError("heatmaps must be normalized before GAN training")
    return labels.pop()


def _make_checkpoint(arch, label, epochs_done, seed, gen, critic, adam_g, adam_c) -> GanCheckpoint:
    def opt_state(adam: Adam) -> dict:
        return {
            "t": adam.t,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "arrays": {k: v.copy() for k, v in adam.state_arrays()},
        }

    return GanCheckpoint(
        arch=arch,
        class_label=label,
        epochs_completed=epochs_done,
        seed=seed,
        generator_state=gen.state_dict(),
        critic_state=critic.state_dict(),
        gen_opt_state=opt_state(adam_g),
        critic_opt_state=opt_state(adam_c),
    )


def train_wgan(
    class_data: LabelledDataset,
    cfg: GanTrainConfig,
    arch: GanArch | None = None,
) -> tuple[GanCheckpoint, TrainLog]:
    """Train one GAN on the heatmaps of a single class.

    Each epoch reshuffles the class (seeded) and runs max(1, N // batch)
    generator updates, each preceded by n_critic critic steps on batches
    cycled from the shuffled order. The learning rate is multiplied by
    lr_decay once, at epoch floor(epochs / 2). The log holds per-epoch
    means of the em estimate, the penalty and the generator loss.

    If a non-finite loss or gradient appears, training aborts by raising
    TrainingDiverged carrying the partial log and the checkpoint of the
    last completed epoch.
    """
    cfg.validate()
    label = _check_class_data(class_data)
    if arch is None:
        arch = GanArch(latent_dim=128, p=class_data.P, d=class_data.D)
    if (arch.p, arch.d) != (class_data.P, class_data.D):
        raise ShapeError(f"arch is {arch.p}x{arch.d} but data is {class_data.P}x{class_data.D}")

    generator = build_generator(arch, derive_seed(cfg.seed, 1)).fuse_storage()
    critic = build_critic(arch, derive_seed(cfg.seed, 2)).fuse_storage()
    adam_g = Adam(generator.opt_params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    adam_c = Adam(critic.opt_params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    rng = np.random.default_rng(derive_seed(cfg.seed, 3))

    x_all = class_data.stack(np.float32)
    n = x_all.shape[0]
    b = cfg.batch_size
    log = TrainLog()
    last_good = _make_checkpoint(arch, label, 0, cfg.seed, generator, critic, adam_g, adam_c)

    for epoch in range(cfg.epochs):
        if cfg.epochs >= 2 and epoch == cfg.epochs // 2:
            adam_g.lr *= cfg.lr_decay
            adam_c.lr *= cfg.lr_decay
        perm = rng.permutation(n)
        cursor = 0

        def next_real() -> np.ndarray:
            nonlocal cursor
            idx = perm[(cursor + np.arange(b)) % n]
            cursor = (cursor + b) % n
            return x_all[idx]

        ems, pens, gls = [], [], []
        try:
            for _ in range(max(1, n // b)):
                for _ in range(cfg.n_critic):
                    em, pen = critic_step(critic, generator, next_real(), cfg, adam_c, rng)
                    ems.append(em)
                    pens.append(pen)
                gls.append(generator_step(critic, generator, cfg, adam_g, rng))
        except TrainingDiverged as exc:
            raise TrainingDiverged(
                str(exc),
                em_estimate=exc.em_estimate,
                checkpoint=last_good,
                log=log,
            ) from None
        log.rows.append(EpochStats(epoch, float(np.mean(ems)), float(np.mean(pens)), float(np.mean(gls))))
        last_good = _make_checkpoint(arch, label, epoch + 1, cfg.seed, generator, critic, adam_g, adam_c)

    return last_good, log


def sample(ckpt: GanCheckpoint, n: int, seed, batch_size: int = 256) -> LabelledDataset:
    """Draw n heatmaps from a checkpointed generator (batch norm in inference mode)."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    generator = build_generator(ckpt.arch, seed=0)
    generator.load_state(ckpt.generator_state)
    rng = np.random.default_rng(seed)
    items: list[Heatmap] = []
    remaining = n
    while remaining > 0:
        take = min(remaining, batch_size)
        z = rng.standard_normal((take, ckpt.arch.latent_dim)).astype(generator.dtype)
        out = generator.forward(z, train=False)
        for row in out[:, 0, :, :]:
            items.append(Heatmap(row.astype(np.float64), label=ckpt.class_label, normalized=True))
        remaining -= take
    labels = np.full(n, ckpt.class_label, dtype=np.int64)
    if isinstance(seed, np.random.Generator):
        seed = 0
    return LabelledDataset(items, labels, seed=int(seed))


def fit_dims(heatmap: Heatmap, mode: str = "crop") -> Heatmap:
    """Crop or zero-pad a heatmap so both dimensions are multiples of 8.

    crop removes trailing rows/columns; pad appends zero rows/columns
    (zero means no consumption, and stays inside [0, 1] for normalized
    grids). Needed because three stride-2 stages demand divisibility by 8.
    """
    if mode not in ("crop", "pad"):
        raise ConfigError(f"mode must be 'crop' or 'pad', got {mode!r}")
    p, d = heatmap.P, heatmap.D
    if mode == "crop":
        new_p, new_d = (p // 8) * 8, (d // 8) * 8
        if new_p < 8 or new_d < 8:
            raise ConfigError(f"cannot crop {p}x{d} to a multiple of 8; use mode='pad'")
        grid = heatmap.grid[:new_p, :new_d]
    else:
        new_p, new_d = max(_ceil8(p), 8), max(_ceil8(d), 8)
        grid = np.zeros((new_p, new_d), dtype=heatmap.grid.dtype)
        grid[:p, :d] = heatmap.grid
    return Heatmap(grid.copy(), label=heatmap.label, normalized=heatmap.normalized)


def fit_dataset(ds: LabelledDataset, mode: str = "crop") -> LabelledDataset:
    return LabelledDataset([fit_dims(h, mode) for h in ds.items], ds.labels.copy(), seed=ds.seed)


def _ceil8(v: int) -> int:
    return ((v + 7) // 8) * 8
