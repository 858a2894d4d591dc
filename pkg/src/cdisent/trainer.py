import json
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .constant import IOSS_MIN_BATCH
from .datagen import LabeledDataset
from .logger import Logger, LogLevel
from .models import CdVaeConfig, LossBreakdown, Model, ModelError, build_model
from .ndiff import (
    AdamState,
    NonFiniteError,
    ParamSet,
    adam_step,
    backward,
    load_checkpoint,
    no_grad,
    save_checkpoint,
)
from .utils import atomic_write_text, derive_seed

CHECKPOINT_NAME = "model.cdpt"
SIDECAR_NAME = "model.json"


class TrainState(IntEnum):
    """Training context state enumeration."""
    INITIALIZED = 0
    RUNNING = 1
    COMPLETED = 2
    DIVERGED = 3


class TrainingContext:
    """Tracks epochs against the configured budget."""

    def __init__(self, max_epochs: int):
        self.max_epochs = max_epochs
        self.epoch = 0
        self.state = TrainState.INITIALIZED

    def start(self) -> None:
        self.epoch = 0
        self.state = TrainState.RUNNING

    def next_epoch(self) -> bool:
        """Advance one epoch. Returns False once the budget is used up."""
        if self.epoch >= self.max_epochs:
            self.state = TrainState.COMPLETED
            return False
        self.epoch += 1
        return True

    def diverge(self) -> None:
        self.state = TrainState.DIVERGED

    @property
    def is_running(self) -> bool:
        return self.state == TrainState.RUNNING


class TrainStatus(Enum):
    """Outcome of a training run."""
    SUCCESS = "success"
    DIVERGED = "diverged"


class TrainResult:
    """Trained model with per-epoch loss history."""

    def __init__(
        self,
        model: Model,
        status: TrainStatus,
        history: List[LossBreakdown],
        eval_history: Optional[List[LossBreakdown]] = None,
        epochs_run: int = 0,
        max_epochs: int = 0,
        message: str = "",
    ):
        self.model = model
        self.status = status
        self.history = history
        self.eval_history = eval_history or []
        self.epochs_run = epochs_run
        self.max_epochs = max_epochs
        self.message = message

    @property
    def ok(self) -> bool:
        return self.status == TrainStatus.SUCCESS

    def __str__(self) -> str:
        last = f", last=({self.history[-1]})" if self.history else ""
        return f"TrainResult(status={self.status.value}, epochs={self.epochs_run}/{self.max_epochs}{last})"


def minibatches(order: np.ndarray, batch_size: int, min_size: int = 1) -> List[np.ndarray]:
    """Split order into batches; a trailing batch below min_size joins the previous one."""
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < min_size:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


def _mean_breakdown(parts: List[LossBreakdown], sizes: List[int]) -> LossBreakdown:
    weights = np.asarray(sizes, dtype=np.float64) / float(sum(sizes))

    def avg(attr: str) -> float:
        return float(sum(w * getattr(p, attr) for w, p in zip(weights, parts)))

    ioss = avg("ioss") if parts[0].ioss is not None else None
    return LossBreakdown(total=avg("total"), rec=avg("rec"), cls=avg("cls"), kl=avg("kl"), task=avg("task"), ioss=ioss)


def task_targets(config: CdVaeConfig, ds: LabeledDataset) -> Optional[np.ndarray]:
    if not config.uses_classifier:
        return None
    targets = ds.factor(config.target_factor)
    if targets.max() >= config.n_classes:
        raise ModelError(
            f"Factor '{config.target_factor}' has values up to {targets.max()}, but n_classes={config.n_classes}"
        )
    return targets


class Trainer:
    """
    Minibatch Adam training of a model on a labeled dataset.

    The run is a deterministic function of the config (seed included) and the
    dataset. A non-finite loss or update stops training and restores the
    parameters from the end of the last completed epoch.

    Args:
        config: Model and optimizer settings.
        log_level: Verbosity of the trainer's own logger.
    """

    def __init__(self, config: CdVaeConfig, log_level: LogLevel = LogLevel.WARNING):
        self.config = config
        self.logger = Logger(log_level)

    def _check_labels(self, ds: LabeledDataset):
        n_labels = self.config.effective_labels
        if n_labels > 1 and int(ds.confounders.max()) >= n_labels:
            raise ModelError(
                f"Dataset labels reach {int(ds.confounders.max())}, model is configured for |C|={n_labels}"
            )

    def _evaluate(self, model: Model, ds: LabeledDataset) -> LossBreakdown:
        x = ds.flat_observations()
        targets = task_targets(self.config, ds)
        parts, sizes = [], []
        with no_grad():
            for idx in minibatches(np.arange(len(ds)), 1024, IOSS_MIN_BATCH):
                _, breakdown = model.loss(
                    x[idx], ds.confounders[idx], None if targets is None else targets[idx], noise=None
                )
                parts.append(breakdown)
                sizes.append(len(idx))
        return _mean_breakdown(parts, sizes)

    def train(self, train_ds: LabeledDataset, eval_ds: Optional[LabeledDataset] = None) -> TrainResult:
        cfg = self.config
        self._check_labels(train_ds)
        model = build_model(cfg, train_ds.obs_dim)
        state = AdamState.create(model.params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
        rng = np.random.default_rng(derive_seed(cfg.seed, 1))

        x = train_ds.flat_observations().astype(model.params.dtype)
        labels = train_ds.confounders
        targets = task_targets(cfg, train_ds)
        min_batch = IOSS_MIN_BATCH if cfg.uses_ioss else 1

        history: List[LossBreakdown] = []
        eval_history: List[LossBreakdown] = []
        last_good = model.params.copy()
        context = TrainingContext(cfg.epochs)
        context.start()
        self.logger.info("Training", f"variant={cfg.variant} n={len(train_ds)} epochs={cfg.epochs} seed={cfg.seed}")

        while context.is_running:
            if not context.next_epoch():
                break
            parts, sizes = [], []
            try:
                for idx in minibatches(rng.permutation(len(train_ds)), cfg.batch_size, min_batch):
                    noise = model.draw_noise(len(idx), rng)
                    total, breakdown = model.loss(
                        x[idx], labels[idx], None if targets is None else targets[idx], noise
                    )
                    if not np.isfinite(breakdown.total):
                        raise NonFiniteError(f"Loss became {breakdown.total}")
                    backward(total, model.params)
                    adam_step(model.params, state)
                    parts.append(breakdown)
                    sizes.append(len(idx))
            except NonFiniteError as e:
                context.diverge()
                model = model.with_params(last_good)
                self.logger.error(
                    f"Epoch {context.epoch}/{context.max_epochs}",
                    f"training diverged ({e.message}); restored parameters from epoch {context.epoch - 1}",
                )
                return TrainResult(
                    model, TrainStatus.DIVERGED, history, eval_history,
                    epochs_run=context.epoch - 1, max_epochs=cfg.epochs, message=e.message,
                )

            epoch_loss = _mean_breakdown(parts, sizes)
            history.append(epoch_loss)
            last_good = model.params.copy()
            self.logger.debug(f"Epoch {context.epoch}/{context.max_epochs}", str(epoch_loss))
            if eval_ds is not None:
                eval_loss = self._evaluate(model, eval_ds)
                eval_history.append(eval_loss)
                self.logger.debug(f"Epoch {context.epoch}/{context.max_epochs} eval", str(eval_loss))

        self._log_variance_bound(model, train_ds)
        return TrainResult(model, TrainStatus.SUCCESS, history, eval_history, context.epoch, cfg.epochs)

    def _log_variance_bound(self, model: Model, ds: LabeledDataset):
        """Soft check that KL keeps mean encoder variances in [0.05, 5]."""
        cfg = self.config
        if cfg.lambda_kl <= 0 or cfg.variant == "classifier" or cfg.epochs < 5:
            return
        with no_grad():
            enc = model.encode(ds.flat_observations()[:1024])
        if enc.logvar is None:
            return
        mean_var = float(np.mean(np.exp(enc.logvar.data)))
        if not 0.05 <= mean_var <= 5.0:
            self.logger.warning("Encoder variance", f"mean sigma^2={mean_var:.4f} outside [0.05, 5]")
        else:
            self.logger.debug("Encoder variance", f"mean sigma^2={mean_var:.4f}")


def train(config: CdVaeConfig, train_ds: LabeledDataset, eval_ds: Optional[LabeledDataset] = None,
          log_level: LogLevel = LogLevel.WARNING) -> TrainResult:
    return Trainer(config, log_level).train(train_ds, eval_ds)


def save_model(result: TrainResult, directory: Union[str, Path]) -> Dict[str, str]:
    """Write the CDPT checkpoint and a JSON sidecar with config and loss history."""
    directory = Path(directory)
    checkpoint = directory / CHECKPOINT_NAME
    sidecar = directory / SIDECAR_NAME
    save_checkpoint(result.model.params, checkpoint)
    payload = {
        "config": result.model.config.to_dict(),
        "obs_dim": result.model.obs_dim,
        "status": result.status.value,
        "epoch": result.epochs_run,
        "history": [h.to_dict() for h in result.history],
    }
    atomic_write_text(sidecar, json.dumps(payload, indent=2))
    return {"checkpoint": str(checkpoint), "sidecar": str(sidecar)}


def load_model(directory: Union[str, Path]) -> Model:
    directory = Path(directory)
    sidecar = json.loads((directory / SIDECAR_NAME).read_text())
    config = CdVaeConfig.from_dict(sidecar["config"])
    params: ParamSet = load_checkpoint(directory / CHECKPOINT_NAME)
    if params.dtype != np.dtype(config.dtype):
        params = params.astype(config.dtype)
    return build_model(config, int(sidecar["obs_dim"]), params)
