"""Metric-learning loss, training loop and numerical gradient verification."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .exceptions import DimensionMismatch, NonFiniteLoss
from .nn.model import EncoderConfig, ModelConfig, SphereVladNet, save_checkpoint
from .projection import project
from .tuples import TrainingTuple, mine_tuples

_VAL_SEED_OFFSET = 7919  # keep the frozen validation tuples off the training stream


@dataclass
class TrainConfig:
    margin_primary: float = 0.5
    margin_secondary: float = 0.2
    d_pos: float = 8.0
    d_neg: float = 16.0
    n_pos: int = 2
    n_neg: int = 6
    learning_rate: float = 1e-3
    steps: int = 500
    batch_tuples: int = 1
    seed: int = 0
    rotation_augmentation: bool = False
    precision: str = "float32"  # float32 | float64
    max_range_m: float = 50.0
    planar_distance: bool = False
    val_tuples: int = 8
    val_every: int = 50
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.margin_primary <= 0 or self.margin_secondary <= 0:
            raise ValueError("margins must be positive")
        if self.d_pos >= self.d_neg:
            raise ValueError("d_pos must be smaller than d_neg")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "float64" else torch.float32


def lazy_quadruplet_loss(anchor: torch.Tensor, positives: torch.Tensor,
                         negatives: torch.Tensor, extra_negative: torch.Tensor,
                         margin_primary: float = 0.5,
                         margin_secondary: float = 0.2) -> torch.Tensor:
    """Worst-pair hinge loss over (anchor, positives, negatives, extra negative).

    max_{i,j}[m1 + d(a, p_i) - d(a, n_j)]_+ +
    max_{i,k}[m2 + d(a, p_i) - d(n_k, e)]_+
    with d the Euclidean distance.  The hinge keeps the loss bounded below
    by zero; ties resolve to the first maximizing pair.
    """
    dims = {anchor.shape[-1], positives.shape[-1], negatives.shape[-1],
            extra_negative.shape[-1]}
    if len(dims) != 1:
        raise DimensionMismatch(f"descriptor dimensions differ: {sorted(dims)}")
    d_pos = torch.linalg.vector_norm(positives - anchor[None, :], dim=-1)
    d_neg = torch.linalg.vector_norm(negatives - anchor[None, :], dim=-1)
    d_extra = torch.linalg.vector_norm(negatives - extra_negative[None, :], dim=-1)
    first = torch.relu((margin_primary + d_pos[:, None] - d_neg[None, :]).max())
    second = torch.relu((margin_secondary + d_pos[:, None] - d_extra[None, :]).max())
    return first + second


@dataclass
class TrainResult:
    model: SphereVladNet
    history: list[dict] = field(default_factory=list)  # step/train_loss/val_loss
    checkpoints: list[Path] = field(default_factory=list)

    @property
    def final_val_loss(self) -> float:
        vals = [h["val_loss"] for h in self.history if not np.isnan(h["val_loss"])]
        return vals[-1] if vals else float("nan")

    @property
    def initial_val_loss(self) -> float:
        vals = [h["val_loss"] for h in self.history if not np.isnan(h["val_loss"])]
        return vals[0] if vals else float("nan")


def _project_all(frames, bandwidth: int, max_range: float, dtype) -> dict[int, torch.Tensor]:
    return {f.frame_id: torch.as_tensor(
        project(f, max_range, bandwidth).values, dtype=dtype) for f in frames}


def _tuple_batch(panos: dict[int, torch.Tensor], tup: TrainingTuple,
                 shift: int | None) -> torch.Tensor:
    stack = [panos[i] for i in tup.frame_ids()]
    if shift is not None:
        stack[0] = torch.roll(stack[0], shift, dims=0)
    return torch.stack(stack)


def _tuple_loss(model: SphereVladNet, batch: torch.Tensor, tup: TrainingTuple,
                cfg: TrainConfig) -> torch.Tensor:
    desc = model(batch)
    n_pos = len(tup.positive_ids)
    n_neg = len(tup.negative_ids)
    return lazy_quadruplet_loss(desc[0], desc[1:1 + n_pos],
                                desc[1 + n_pos:1 + n_pos + n_neg], desc[-1],
                                cfg.margin_primary, cfg.margin_secondary)


def train(frames, model_config: ModelConfig, cfg: TrainConfig,
          out_dir=None, augmentation_hook=None) -> TrainResult:
    """Train on tuples mined from `frames`; deterministic given cfg.seed on a
    fixed device/precision.

    Writes loss_curve.csv and periodic checkpoints under `out_dir` when given.
    Raises NonFiniteLoss (with a diagnostic dump) if the loss leaves the reals.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = SphereVladNet(model_config, seed=cfg.seed).to(cfg.dtype)
    bandwidth = model_config.encoder.input_bandwidth
    panos = _project_all(frames, bandwidth, cfg.max_range_m, cfg.dtype)
    val_rng = np.random.default_rng(cfg.seed + _VAL_SEED_OFFSET)
    val_set = [mine_tuples(frames, cfg.d_pos, cfg.d_neg, cfg.n_pos, cfg.n_neg,
                           val_rng, planar=cfg.planar_distance)
               for _ in range(cfg.val_tuples)]
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    def val_loss() -> float:
        model.eval()
        with torch.no_grad():
            losses = [_tuple_loss(model, _tuple_batch(panos, t, None), t, cfg)
                      for t in val_set]
        model.train()
        return float(torch.stack(losses).mean().detach())

    result = TrainResult(model=model)
    model.train()
    result.history.append({"step": 0, "train_loss": float("nan"),
                           "val_loss": val_loss()})
    for step in range(1, cfg.steps + 1):
        optimizer.zero_grad()
        batch_losses = []
        for _ in range(cfg.batch_tuples):
            tup = mine_tuples(frames, cfg.d_pos, cfg.d_neg, cfg.n_pos, cfg.n_neg,
                              rng, planar=cfg.planar_distance)
            shift = None
            if cfg.rotation_augmentation:
                shift = int(rng.integers(2 * bandwidth))
                if augmentation_hook is not None:
                    augmentation_hook(step, tup.anchor_id, shift)
            batch_losses.append(_tuple_loss(model, _tuple_batch(panos, tup, shift),
                                            tup, cfg))
        loss = torch.stack(batch_losses).mean()
        loss_value_now = float(loss.detach())
        if not np.isfinite(loss_value_now):
            if out_dir is not None:
                dump = {"step": step, "loss": loss_value_now,
                        "tuple": asdict(tup), "config": asdict(cfg)}
                (out_dir / "nonfinite_loss.json").write_text(json.dumps(dump, indent=2))
            raise NonFiniteLoss(f"loss became {loss_value_now} at step {step}")
        loss.backward()
        optimizer.step()
        row = {"step": step, "train_loss": loss_value_now, "val_loss": float("nan")}
        if step % cfg.val_every == 0 or step == cfg.steps:
            row["val_loss"] = val_loss()
        result.history.append(row)
        if out_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            path = out_dir / f"checkpoint_{step:06d}.npz"
            save_checkpoint(model, path)
            result.checkpoints.append(path)
    if out_dir is not None:
        final = out_dir / "checkpoint_final.npz"
        save_checkpoint(model, final)
        result.checkpoints.append(final)
        with open(out_dir / "loss_curve.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "train_loss", "val_loss"])
            writer.writeheader()
            writer.writerows(result.history)
    model.eval()
    return result


TINY_MODEL_CONFIG = ModelConfig(
    encoder=EncoderConfig(input_bandwidth=4,
                          layers=((2, 2), (3, 2), (3, 2), (2, 2)),
                          batchnorm=True),
    attention=True, clusters=3)


@dataclass
class GradCheckReport:
    rows: list[dict]
    tolerance: float

    @property
    def max_rel_err(self) -> float:
        return max(r["max_rel_err"] for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def table(self) -> str:
        lines = [f"{'parameter':40s} {'checked':>8s} {'max_rel_err':>12s}"]
        for r in self.rows:
            lines.append(f"{r['name']:40s} {r['n_checked']:8d} {r['max_rel_err']:12.3e}")
        lines.append(f"overall max {self.max_rel_err:.3e} "
                     f"({'PASS' if self.passed else 'FAIL'} at {self.tolerance:g})")
        return "\n".join(lines)


def grad_check(model_config: ModelConfig | None = None, tol: float = 1e-4,
               samples_per_group: int = 12, seed: int = 0) -> GradCheckReport:
    """Central finite differences vs autograd on a tiny float64 model.

    Every parameter group is probed at `samples_per_group` deterministic
    entries.  Gradients below 1e-6 in both routes count as numerically zero.
    """
    config = model_config or TINY_MODEL_CONFIG
    rng = np.random.default_rng(seed)
    model = SphereVladNet(config, seed=seed).double()
    model.train()
    n = 2 * config.encoder.input_bandwidth
    batch = torch.from_numpy(rng.uniform(0.0, 1.0, size=(4, n, n)))

    def loss_value() -> torch.Tensor:
        desc = model(batch)
        return lazy_quadruplet_loss(desc[0], desc[1:2], desc[2:3], desc[3])

    base = loss_value()
    if not float(base.detach()) > 0:
        raise RuntimeError("gradient check needs an active-hinge tuple; reseed")
    model.zero_grad()
    base.backward()
    rows = []
    for name, param in model.named_parameters():
        grad = param.grad.detach().clone().reshape(-1)
        flat = param.data.reshape(-1)
        n_entries = flat.numel()
        take = min(samples_per_group, n_entries)
        idx = rng.choice(n_entries, size=take, replace=False)
        max_rel = 0.0
        for i in idx:
            orig = float(flat[i])
            h = 1e-5 * max(1.0, abs(orig))
            with torch.no_grad():
                flat[i] = orig + h
                up = float(loss_value())
                flat[i] = orig - h
                down = float(loss_value())
                flat[i] = orig
            fd = (up - down) / (2 * h)
            an = float(grad[i])
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            max_rel = max(max_rel, rel)
        rows.append({"name": name, "n_checked": take, "max_rel_err": max_rel})
    return GradCheckReport(rows=rows, tolerance=tol)
