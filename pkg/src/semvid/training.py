"""Training loop: per-batch random SNR, step-decayed Adam, resumable checkpoints.

Each step walks the dataset's GoPs in order (step -> GoP ``step % N``),
unrolls the full GoP through the transceiver with gradients flowing across
all frames, and applies one Adam update. Gradients never cross GoP
boundaries; continuity across GoPs comes from the shared model state.

Randomness is derived per step from (seed, step_index), never from loop
state, so a resumed run reproduces an uninterrupted one bitwise.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .errors import ConfigError, DivergenceError
from .pipeline import (
    RatePlan,
    TransceiverConfig,
    VideoTransceiver,
    build_transceiver,
    parse_ratio,
    transmit_gop,
)
from .videoio import VideoGoP, VideoSequence

LOG_HEADER = "step,lr,snr_db,loss"


@dataclass
class TrainConfig:
    steps: int = 2000
    lr_start: float = 1e-4
    lr_end: float = 2e-5
    batch_size: int = 1
    gop_size: int = 5
    snr_range_db: tuple[float, float] = (0.0, 15.0)
    seed: int = 0
    checkpoint_every: int = 500

    def __post_init__(self):
        if not (self.lr_start >= self.lr_end > 0):
            raise ConfigError("need lr_start >= lr_end > 0")
        low, high = self.snr_range_db
        if low > high:
            raise ConfigError("snr range must satisfy low <= high")
        if self.steps < 1 or self.batch_size < 1 or self.checkpoint_every < 1:
            raise ConfigError("steps, batch_size, checkpoint_every must be >= 1")


def learning_rate_at(step: int, config: TrainConfig) -> float:
    """Step decay: halve at evenly spaced milestones, floored at lr_end."""
    if config.lr_start == config.lr_end:
        return config.lr_start
    n_halvings = math.ceil(math.log2(config.lr_start / config.lr_end))
    passed = sum(
        1
        for j in range(1, n_halvings + 1)
        if step >= (config.steps * j) // (n_halvings + 1)
    )
    return max(config.lr_start * 0.5**passed, config.lr_end)


def _step_rng(config: TrainConfig, step_index: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, step_index])


def draw_step_snr(config: TrainConfig, step_index: int) -> float:
    low, high = config.snr_range_db
    return float(_step_rng(config, step_index).uniform(low, high))


def _channel_seeds(config: TrainConfig, step_index: int, n: int) -> list[int]:
    rng = np.random.default_rng([config.seed, step_index, 7])
    return [int(s) for s in rng.integers(0, 2**62, size=n)]


def reconstruction_loss(reconstructed, original):
    """Mean per-pixel squared error over all frames of all GoPs.

    Accepts lists of VideoGoP (numpy) or torch tensors of matching shape
    (graph-preserving). Each frame contributes its per-frame mean; with equal
    frame sizes this is the overall per-pixel mean.
    """
    if torch.is_tensor(reconstructed):
        if reconstructed.shape != original.shape:
            raise ConfigError(
                f"shape mismatch: {tuple(reconstructed.shape)} vs {tuple(original.shape)}"
            )
        return ((reconstructed - original) ** 2).mean()
    if isinstance(reconstructed, VideoGoP):
        reconstructed, original = [reconstructed], [original]
    if len(reconstructed) != len(original):
        raise ConfigError("GoP counts differ")
    total = 0.0
    for rg, og in zip(reconstructed, original):
        r, o = np.asarray(rg.frames, dtype=np.float64), np.asarray(og.frames, dtype=np.float64)
        if r.shape != o.shape:
            raise ConfigError(f"shape mismatch: {r.shape} vs {o.shape}")
        total += float(np.mean((r - o) ** 2))
    return total / len(reconstructed)


def gop_loss(
    model: VideoTransceiver,
    gop: VideoGoP,
    plan: RatePlan,
    snr_db: float,
    channel_seed: int,
) -> torch.Tensor:
    """Differentiable reconstruction loss of one GoP (unclamped decoder output)."""
    result = transmit_gop(gop, model, plan, snr_db, channel_seed, training=True)
    dtype = result.raw_frames.dtype
    target = torch.from_numpy(gop.frames).to(dtype).permute(0, 3, 1, 2)
    return reconstruction_loss(result.raw_frames, target)


def train_step(
    model: VideoTransceiver,
    batch: list[VideoGoP],
    config: TrainConfig,
    step_index: int,
    optimizer: torch.optim.Optimizer,
    plan: RatePlan,
) -> tuple[float, float]:
    """One optimizer update on a batch of GoPs; returns (loss, snr_db)."""
    snr_db = draw_step_snr(config, step_index)
    seeds = _channel_seeds(config, step_index, len(batch))
    lr = learning_rate_at(step_index, config)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.zero_grad()
    losses = [gop_loss(model, gop, plan, snr_db, seeds[j]) for j, gop in enumerate(batch)]
    loss = torch.stack(losses).mean()
    if not torch.isfinite(loss):
        raise DivergenceError(step_index)
    loss.backward()
    optimizer.step()
    return float(loss.detach()), snr_db


@dataclass
class Checkpoint:
    """Self-describing training snapshot; loading reproduces forward outputs."""

    transceiver_config: dict
    train_config: dict
    plan: dict
    step: int  # number of completed steps
    model_state: dict
    optimizer_state: dict
    loss_log: list = field(default_factory=list)  # rows [step, lr, snr_db, loss]

    def build_model(self) -> VideoTransceiver:
        model = build_transceiver(TransceiverConfig(**self.transceiver_config))
        model.load_state_dict(self.model_state)
        return model

    def build_plan(self) -> RatePlan:
        d = dict(self.plan)
        return RatePlan(
            target_cbr=d["target_cbr"],
            ratio=parse_ratio(d["ratio"]),
            granularity=d["granularity"],
            n_frames=d["n_frames"],
            frame_dims=tuple(d["frame_dims"]),
            L=d["L"],
            L1=d["L1"],
            achieved_cbr=d["achieved_cbr"],
        )

    def build_train_config(self) -> TrainConfig:
        d = dict(self.train_config)
        d["snr_range_db"] = tuple(d["snr_range_db"])
        return TrainConfig(**d)


def save_checkpoint(ck: Checkpoint, path: str) -> str:
    """Atomic write: temp file in the target directory, then rename."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    try:
        torch.save(asdict(ck) | {"format_version": 1}, tmp)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed writing checkpoint to {path!r}: {exc}") from exc
    return path


def load_checkpoint(path: str) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except OSError as exc:
        raise OSError(f"failed reading checkpoint from {path!r}: {exc}") from exc
    payload.pop("format_version", None)
    return Checkpoint(**payload)


def _write_log(rows: list, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(LOG_HEADER + "\n")
        for step, lr, snr, loss in rows:
            f.write(f"{step},{lr:.8g},{snr:.6f},{loss:.10g}\n")
    os.replace(tmp, path)


def train_run(
    dataset: VideoSequence,
    config: TrainConfig,
    model: VideoTransceiver,
    plan: RatePlan,
    out_dir: str,
    resume_from: str | None = None,
) -> Checkpoint:
    """Run (or resume) a full training job, checkpointing periodically.

    Writes ``checkpoint_step*.pt``, ``checkpoint_latest.pt``, and
    ``train_log.csv`` under ``out_dir``. Resuming from a checkpoint
    reproduces the loss trajectory of the uninterrupted run bitwise.
    """
    if dataset.n < 1:
        raise ConfigError("dataset is empty")
    if dataset.gop_size != config.gop_size:
        raise ConfigError(
            f"dataset gop_size {dataset.gop_size} != configured {config.gop_size}"
        )
    os.makedirs(out_dir, exist_ok=True)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
    loss_log: list = []
    start_step = 0
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        model.load_state_dict(ck.model_state)
        optimizer.load_state_dict(ck.optimizer_state)
        loss_log = list(ck.loss_log)
        start_step = ck.step

    def snapshot(completed: int) -> Checkpoint:
        return Checkpoint(
            transceiver_config=model.config.to_dict(),
            train_config=asdict(config),
            plan=plan.to_dict(),
            step=completed,
            model_state=model.state_dict(),
            optimizer_state=optimizer.state_dict(),
            loss_log=list(loss_log),
        )

    log_path = os.path.join(out_dir, "train_log.csv")
    ck = snapshot(start_step)
    for step in range(start_step, config.steps):
        batch = [
            dataset.gops[(step * config.batch_size + j) % dataset.n]
            for j in range(config.batch_size)
        ]
        loss, snr = train_step(model, batch, config, step, optimizer, plan)
        loss_log.append([step, learning_rate_at(step, config), snr, loss])
        done = step + 1
        if done % config.checkpoint_every == 0 or done == config.steps:
            ck = snapshot(done)
            save_checkpoint(ck, os.path.join(out_dir, f"checkpoint_step{done}.pt"))
            save_checkpoint(ck, os.path.join(out_dir, "checkpoint_latest.pt"))
            _write_log(loss_log, log_path)
    return ck
