"""
Confounder-conditioned VAE (cdVAE) and baseline models.

Every model maps a batch (x, confounder labels c, optional task targets) to a
scalar loss tensor plus a :class:`LossBreakdown`. The cdVAE encoder produces one
diagonal Gaussian head per label value and a soft assignment over label values;
the latent code is the assignment-weighted sum of the per-label samples.
"""

import itertools
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import ndiff
from .constant import (
    DEFAULT_ADAM_BETAS,
    DEFAULT_ADAM_EPS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_LEARNING_RATE,
    IOSS_DISTANCE_SCALE,
    IOSS_MAX_PAIRS,
    IOSS_MIN_BATCH,
    IOSS_PROBE_GRID,
    IOSS_PROBE_RANGE,
    IOSS_SOFTMIN_TAU,
    LOGVAR_CLAMP,
)
from .ndiff import Activation, MlpArch, ParamSet, Tensor, init_mlp, mlp_forward, no_grad
from .utils import derive_seed


class ModelError(Exception):
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ModelVariantError(ModelError):
    """Raised when an operation is not available for the model variant."""


class Variant(str, Enum):
    CDVAE = "cdvae"
    VAE = "vae"
    BETA_VAE = "beta-vae"
    CVAE = "cvae"
    CDVAE_IOSS = "cdvae-ioss"
    VAE_IOSS = "vae-ioss"
    CLASSIFIER = "classifier"


class PiPolicy(str, Enum):
    SOFTMAX = "softmax"
    L2 = "l2"


class Head(str, Enum):
    DECODER = "decoder"
    CLASSIFIER = "classifier"


class KLForm(str, Enum):
    VARIANCE = "variance"
    FULL = "full"


LABEL_FREE_VARIANTS = (Variant.VAE, Variant.BETA_VAE, Variant.VAE_IOSS)
IOSS_VARIANTS = (Variant.CDVAE_IOSS, Variant.VAE_IOSS)


@dataclass
class CdVaeConfig:
    """
    Model and optimizer settings.

    Args:
        latent_dim: Latent dimension D.
        n_labels: Number of label values |C|. Label-free variants always use 1.
        encoder_hidden: Hidden layer sizes of the encoder trunk.
        decoder_hidden: Hidden layer sizes of the decoder.
        classifier_hidden: Hidden layer sizes of the classifier head.
        activation: Hidden activation (tanh, relu, softplus).
        beta: Multiplier on the KL term (beta-VAE).
        lambda_rec, lambda_cls, lambda_kl, lambda_ioss, lambda_task: Loss weights.
        lr, betas, eps: Adam hyperparameters.
        epochs, batch_size, seed: Training schedule and seed.
        variant: Model family.
        pi_policy: Normalization of the soft label assignment.
        head: Decoder (generation) or classifier over ``target_factor``.
        n_classes: Number of task classes for classifier heads.
        target_factor: Factor name predicted by classifier heads.
        kl_form: "variance" (variance-only KL per component) or "full" (adds the mean term).
        dtype: "float32" for training, "float64" for checks.
        zero_init_heads: Zero the final encoder layer so every head starts at mu=0, log var=0.
    """
    latent_dim: int = 8
    n_labels: int = 1
    encoder_hidden: List[int] = field(default_factory=lambda: [64, 64])
    decoder_hidden: List[int] = field(default_factory=lambda: [64, 64])
    classifier_hidden: List[int] = field(default_factory=list)
    activation: str = "tanh"
    beta: float = 1.0
    lambda_rec: float = 1.0
    lambda_cls: float = 1.0
    lambda_kl: float = 1.0
    lambda_ioss: float = 1.0
    lambda_task: float = 1.0
    lr: float = DEFAULT_LEARNING_RATE
    betas: Tuple[float, float] = DEFAULT_ADAM_BETAS
    eps: float = DEFAULT_ADAM_EPS
    epochs: int = 20
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    variant: str = Variant.CDVAE.value
    pi_policy: str = PiPolicy.SOFTMAX.value
    head: str = Head.DECODER.value
    n_classes: int = 0
    target_factor: Optional[str] = None
    kl_form: str = KLForm.VARIANCE.value
    dtype: str = "float32"
    zero_init_heads: bool = False

    def __post_init__(self):
        try:
            self.variant = Variant(self.variant).value
            self.pi_policy = PiPolicy(self.pi_policy).value
            self.head = Head(self.head).value
            self.kl_form = KLForm(self.kl_form).value
            self.activation = Activation(self.activation).value
        except ValueError as e:
            raise ModelError(f"Invalid model configuration: {e}") from e
        self.betas = tuple(self.betas)
        if self.latent_dim < 1:
            raise ModelError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.n_labels < 1:
            raise ModelError(f"n_labels must be >= 1, got {self.n_labels}")
        weights = {k: getattr(self, k) for k in ("beta", "lambda_rec", "lambda_cls", "lambda_kl", "lambda_ioss", "lambda_task")}
        negative = [k for k, v in weights.items() if v < 0]
        if negative:
            raise ModelError(f"Loss weights must be >= 0, got negative {negative}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ModelError("epochs must be >= 0 and batch_size >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ModelError(f"dtype must be float32 or float64, got {self.dtype}")
        if self.uses_classifier and (self.n_classes < 2 or not self.target_factor):
            raise ModelError("Classifier heads need n_classes >= 2 and a target_factor")

    @property
    def variant_tag(self) -> Variant:
        return Variant(self.variant)

    @property
    def effective_labels(self) -> int:
        return 1 if self.variant_tag in LABEL_FREE_VARIANTS else self.n_labels

    @property
    def uses_classifier(self) -> bool:
        return self.variant_tag == Variant.CLASSIFIER or Head(self.head) == Head.CLASSIFIER

    @property
    def uses_decoder(self) -> bool:
        return not self.uses_classifier

    @property
    def uses_ioss(self) -> bool:
        return self.variant_tag in IOSS_VARIANTS

    def to_dict(self) -> dict:
        data = asdict(self)
        data["betas"] = list(self.betas)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CdVaeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"Unknown model config keys {sorted(unknown)}")
        return cls(**data)


@dataclass
class EncoderOutput:
    """Per-label Gaussian heads (B, C, D) and soft-assignment statistics (B, C)."""
    mu: Tensor
    logvar: Optional[Tensor] = None
    pi_mu: Optional[Tensor] = None
    pi_logsigma: Optional[Tensor] = None


@dataclass
class Noise:
    """Standard normal draws for the latent heads (B, C, D) and the assignment logits (B, C)."""
    eps: np.ndarray
    eps_pi: Optional[np.ndarray] = None


@dataclass
class LatentSample:
    z: Tensor
    pi_logits: Optional[Tensor] = None
    weights: Optional[Tensor] = None


@dataclass
class LossBreakdown:
    total: float
    rec: float
    cls: float
    kl: float
    task: float = 0.0
    ioss: Optional[float] = None

    def weighted_sum(self, config: CdVaeConfig) -> float:
        value = (
            config.lambda_rec * self.rec
            + config.lambda_cls * self.cls
            + config.lambda_kl * config.beta * self.kl
            + config.lambda_task * self.task
        )
        if self.ioss is not None:
            value += config.lambda_ioss * self.ioss
        return value

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)

    def __str__(self) -> str:
        parts = [f"total={self.total:.5f}", f"rec={self.rec:.5f}", f"cls={self.cls:.5f}", f"kl={self.kl:.5f}"]
        if self.task:
            parts.append(f"task={self.task:.5f}")
        if self.ioss is not None:
            parts.append(f"ioss={self.ioss:.5f}")
        return " ".join(parts)


def reparam(mu: Tensor, logvar: Tensor, eps: Union[Tensor, np.ndarray]) -> Tensor:
    """z = mu + exp(logvar / 2) * eps."""
    eps = eps if isinstance(eps, Tensor) else Tensor(np.asarray(eps, dtype=mu.dtype))
    if eps.shape != mu.shape or logvar.shape != mu.shape:
        raise ndiff.ShapeError(f"reparam shapes differ: mu {mu.shape}, logvar {logvar.shape}, eps {eps.shape}")
    return mu + ndiff.exp(logvar * 0.5) * eps


def aggregate(
    z_components: Union[Tensor, Sequence[Tensor]], pi: Tensor, policy: Union[PiPolicy, str] = PiPolicy.SOFTMAX
) -> Tuple[Tensor, Tensor]:
    """Combine per-label latents (B, C, D) with assignment weights derived from raw pi (B, C).

    softmax: weights = softmax(pi); l2: weights = pi / ||pi||_2.
    """
    if not isinstance(z_components, Tensor):
        z_components = ndiff.concat([ndiff.reshape(z, (z.shape[0], 1, z.shape[1])) for z in z_components], axis=1)
    batch, n_comp, _ = z_components.shape
    if pi.shape != (batch, n_comp):
        raise ndiff.ShapeError(f"pi has shape {pi.shape}, expected {(batch, n_comp)}")
    if PiPolicy(policy) == PiPolicy.SOFTMAX:
        weights = ndiff.softmax(pi, axis=-1)
    else:
        norm = ndiff.sqrt(ndiff.sum_(ndiff.square(pi), axis=-1, keepdims=True))
        weights = pi / norm
    z = ndiff.sum_(z_components * ndiff.reshape(weights, (batch, n_comp, 1)), axis=1)
    return z, weights


def _ioss_pairs(dim: int) -> List[Tuple[int, int]]:
    pairs = list(itertools.combinations(range(dim), 2))
    if len(pairs) <= IOSS_MAX_PAIRS:
        return pairs
    order = np.random.default_rng(0).permutation(len(pairs))[:IOSS_MAX_PAIRS]
    return [pairs[i] for i in sorted(order)]


def ioss_regularizer(z: Tensor) -> Tensor:
    """Differentiable support-independence penalty on a latent batch (B, D).

    Coordinates are standardized, then for each coordinate pair a fixed probe grid
    over [-1.5, 1.5]^2 measures the soft-min squared distance to the nearest sample.
    Empty regions of the product support raise the mean distance m, and the value is
    1 - exp(-m / 0.5) in [0, 1).
    """
    batch, dim = z.shape
    if batch < IOSS_MIN_BATCH:
        raise ModelError(f"IOSS regularizer needs a batch of at least {IOSS_MIN_BATCH}, got {batch}")
    if dim < 2:
        return Tensor(np.zeros((), dtype=z.dtype))
    centered = z - ndiff.mean(z, axis=0, keepdims=True)
    std = ndiff.sqrt(ndiff.mean(ndiff.square(centered), axis=0, keepdims=True))
    standardized = centered / std

    axis = np.linspace(-IOSS_PROBE_RANGE, IOSS_PROBE_RANGE, IOSS_PROBE_GRID)
    probes = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 1, 2).astype(z.dtype)

    distances = []
    for a, b in _ioss_pairs(dim):
        points = ndiff.concat([standardized[:, a:a + 1], standardized[:, b:b + 1]], axis=1)
        diff = ndiff.reshape(points, (1, batch, 2)) - probes
        d2 = ndiff.sum_(ndiff.square(diff), axis=-1)
        softmin = ndiff.logsumexp(d2 * (-1.0 / IOSS_SOFTMIN_TAU), axis=1) * (-IOSS_SOFTMIN_TAU)
        distances.append(ndiff.mean(softmin))
    mean_distance = ndiff.mean(ndiff.concat([ndiff.reshape(d, (1,)) for d in distances], axis=0))
    return 1.0 - ndiff.exp(mean_distance * (-1.0 / IOSS_DISTANCE_SCALE))


def _one_hot(labels: np.ndarray, n: int, dtype) -> np.ndarray:
    return np.eye(n, dtype=dtype)[labels]


class Model(ABC):
    """
    Abstract base class for the latent-variable models.

    Subclasses define the encoder heads, how a latent sample is drawn from them and
    the KL term; reconstruction, classification and the loss assembly are shared.

    Args:
        config: Model configuration.
        obs_dim: Flattened observation size.
        params: Existing parameters; freshly initialized from ``config.seed`` when omitted.
    """

    def __init__(self, config: CdVaeConfig, obs_dim: int, params: Optional[ParamSet] = None):
        if obs_dim < 1:
            raise ModelError(f"obs_dim must be >= 1, got {obs_dim}")
        self.config = config
        self.obs_dim = obs_dim
        if params is None:
            params = ParamSet(np.dtype(config.dtype))
            self.init_params(params, np.random.default_rng(derive_seed(config.seed, 0)))
        self.params = params

    @property
    def n_labels(self) -> int:
        return self.config.effective_labels

    @property
    def head_input_dim(self) -> int:
        return self.config.latent_dim

    @property
    def decoder_arch(self) -> MlpArch:
        return MlpArch(
            (self.head_input_dim, *self.config.decoder_hidden, self.obs_dim), Activation(self.config.activation), "dec"
        )

    @property
    def classifier_arch(self) -> MlpArch:
        return MlpArch(
            (self.head_input_dim, *self.config.classifier_hidden, self.config.n_classes),
            Activation(self.config.activation),
            "cls",
        )

    def init_params(self, params: ParamSet, rng: np.random.Generator):
        self.init_encoder(params, rng)
        if self.config.uses_decoder:
            init_mlp(params, self.decoder_arch, rng)
        else:
            init_mlp(params, self.classifier_arch, rng, zero_last=True)

    @abstractmethod
    def init_encoder(self, params: ParamSet, rng: np.random.Generator):
        """Register encoder parameters."""
        pass

    @abstractmethod
    def encode(self, x, labels: Optional[np.ndarray] = None, params: Optional[ParamSet] = None) -> EncoderOutput:
        """Encoder heads for a batch."""
        pass

    @abstractmethod
    def sample_latent(self, enc: EncoderOutput, noise: Optional[Noise]) -> LatentSample:
        """Draw (noise given) or take the mean (noise None) of the latent code."""
        pass

    @abstractmethod
    def kl_term(self, enc: EncoderOutput) -> Tensor:
        pass

    def draw_noise(self, batch: int, rng: np.random.Generator) -> Noise:
        return Noise(rng.standard_normal((batch, self.n_labels, self.config.latent_dim)))

    def cls_term(self, sample: LatentSample, labels: np.ndarray) -> Tensor:
        return self._zero()

    def head_input(self, z: Tensor, labels: Optional[np.ndarray]) -> Tensor:
        return z

    def _zero(self) -> Tensor:
        return Tensor(np.zeros((), dtype=self.params.dtype))

    def _as_input(self, x, params: ParamSet) -> Tensor:
        if isinstance(x, Tensor):
            x = x.data
        x = np.asarray(x, dtype=params.dtype)
        x = x.reshape(x.shape[0], -1) if x.ndim > 1 else x.reshape(1, -1)
        if x.shape[1] != self.obs_dim:
            raise ndiff.ShapeError(f"Model expects observations of size {self.obs_dim}, got {x.shape[1]}")
        return Tensor(x)

    def _check_labels(self, labels: Optional[np.ndarray], batch: int) -> np.ndarray:
        if self.n_labels == 1 or labels is None:
            return np.zeros(batch, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.shape != (batch,):
            raise ModelError(f"Expected {batch} labels, got {labels.shape}")
        if np.any(labels < 0) or np.any(labels >= self.n_labels):
            raise ModelError(f"Labels must lie in 0..{self.n_labels - 1}")
        return labels

    def loss(
        self,
        x,
        labels: Optional[np.ndarray] = None,
        targets: Optional[np.ndarray] = None,
        noise: Optional[Noise] = None,
        params: Optional[ParamSet] = None,
    ) -> Tuple[Tensor, LossBreakdown]:
        """Weighted training loss for a batch.

        Without noise the latent means are used, which makes the loss deterministic.
        """
        params = self.params if params is None else params
        x_t = self._as_input(x, params)
        batch = x_t.shape[0]
        if batch == 0:
            raise ModelError("Loss needs a nonempty batch")
        labels = self._check_labels(labels, batch)
        enc = self.encode(x_t, labels, params)
        sample = self.sample_latent(enc, noise)
        head_in = self.head_input(sample.z, labels)
        cfg = self.config

        rec = task = self._zero()
        if cfg.uses_decoder:
            recon = mlp_forward(params, head_in, self.decoder_arch)
            rec = ndiff.mean(ndiff.square(recon - x_t))
        else:
            if targets is None:
                raise ModelError("Classifier heads need task targets")
            targets = np.asarray(targets, dtype=np.int64).reshape(-1)
            if np.any(targets < 0) or np.any(targets >= cfg.n_classes):
                raise ModelError(f"Targets must lie in 0..{cfg.n_classes - 1}")
            logits = mlp_forward(params, head_in, self.classifier_arch)
            task = -ndiff.mean(ndiff.log_softmax(logits, axis=-1)[np.arange(batch), targets])
        kl = self.kl_term(enc)
        cls = self.cls_term(sample, labels)

        total = rec * cfg.lambda_rec + task * cfg.lambda_task + cls * cfg.lambda_cls + kl * (cfg.lambda_kl * cfg.beta)
        ioss_value = None
        if cfg.uses_ioss:
            ioss = ioss_regularizer(sample.z)
            total = total + ioss * cfg.lambda_ioss
            ioss_value = ioss.item()
        breakdown = LossBreakdown(
            total=total.item(), rec=rec.item(), cls=cls.item(), kl=kl.item(), task=task.item(), ioss=ioss_value
        )
        return total, breakdown

    def _batched(self, x, labels, fn, batch_size: int = 1024) -> np.ndarray:
        x = np.asarray(x)
        n = x.shape[0]
        out = []
        with no_grad():
            for start in range(0, n, batch_size):
                stop = min(start + batch_size, n)
                part_labels = None if labels is None else np.asarray(labels)[start:stop]
                out.append(fn(x[start:stop], part_labels))
        return np.concatenate(out, axis=0)

    def encode_mean(self, x, labels: Optional[np.ndarray] = None) -> np.ndarray:
        """Deterministic latent codes (N, D) using head means and the mean assignment."""

        def run(xb, lb):
            return self.sample_latent(self.encode(xb, lb), None).z.data

        return self._batched(x, labels, run)

    def assignment(self, x) -> np.ndarray:
        """Soft label assignment weights (N, C) at evaluation time."""

        def run(xb, lb):
            sample = self.sample_latent(self.encode(xb, lb), None)
            if sample.weights is None:
                return np.ones((xb.shape[0], 1), dtype=self.params.dtype)
            return sample.weights.data

        return self._batched(x, None, run)

    def reconstruct(self, x, labels: Optional[np.ndarray] = None) -> np.ndarray:
        if not self.config.uses_decoder:
            raise ModelVariantError(f"Variant '{self.config.variant}' with head '{self.config.head}' has no decoder")

        def run(xb, lb):
            sample = self.sample_latent(self.encode(xb, lb), None)
            return mlp_forward(self.params, self.head_input(sample.z, lb), self.decoder_arch).data

        return self._batched(x, labels, run)

    def classify(self, x, labels: Optional[np.ndarray] = None) -> np.ndarray:
        """Class distribution (N, n_classes) from the aggregated latent code."""
        if not self.config.uses_classifier:
            raise ModelVariantError(f"Variant '{self.config.variant}' with head '{self.config.head}' has no classifier")

        def run(xb, lb):
            sample = self.sample_latent(self.encode(xb, lb), None)
            logits = mlp_forward(self.params, self.head_input(sample.z, lb), self.classifier_arch)
            return ndiff.softmax(logits, axis=-1).data

        return self._batched(x, labels, run)

    def with_params(self, params: ParamSet) -> "Model":
        return type(self)(self.config, self.obs_dim, params)


class CdVaeModel(Model):
    """
    Mixture-latent VAE conditioned on a label set (cdvae and the VAE-family baselines).

    The encoder is a single MLP whose output is split into per-label means and
    log-variances (|C| x D each) and the mean and log-std of the assignment logits
    (|C| each). Label-free variants run the same graph with |C| = 1.
    """

    @property
    def encoder_arch(self) -> MlpArch:
        c, d = self.n_labels, self.config.latent_dim
        return MlpArch(
            (self.obs_dim, *self.config.encoder_hidden, 2 * c * d + 2 * c), Activation(self.config.activation), "enc"
        )

    def init_encoder(self, params: ParamSet, rng: np.random.Generator):
        init_mlp(params, self.encoder_arch, rng, zero_last=self.config.zero_init_heads)

    def encode(self, x, labels=None, params=None) -> EncoderOutput:
        params = self.params if params is None else params
        x_t = x if isinstance(x, Tensor) else self._as_input(x, params)
        h = mlp_forward(params, x_t, self.encoder_arch)
        batch = h.shape[0]
        c, d = self.n_labels, self.config.latent_dim
        cd = c * d
        mu = ndiff.reshape(h[:, 0:cd], (batch, c, d))
        logvar = ndiff.clip(ndiff.reshape(h[:, cd:2 * cd], (batch, c, d)), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        pi_mu = h[:, 2 * cd:2 * cd + c]
        pi_logsigma = ndiff.clip(h[:, 2 * cd + c:2 * cd + 2 * c], -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return EncoderOutput(mu, logvar, pi_mu, pi_logsigma)

    def draw_noise(self, batch: int, rng: np.random.Generator) -> Noise:
        eps = rng.standard_normal((batch, self.n_labels, self.config.latent_dim))
        eps_pi = rng.standard_normal((batch, self.n_labels))
        return Noise(eps, eps_pi)

    def sample_latent(self, enc: EncoderOutput, noise: Optional[Noise]) -> LatentSample:
        if noise is None:
            z_components, pi = enc.mu, enc.pi_mu
        else:
            z_components = reparam(enc.mu, enc.logvar, np.asarray(noise.eps, dtype=enc.mu.dtype))
            eps_pi = Tensor(np.asarray(noise.eps_pi, dtype=enc.mu.dtype))
            pi = enc.pi_mu + ndiff.exp(enc.pi_logsigma) * eps_pi
        z, weights = aggregate(z_components, pi, self.config.pi_policy)
        return LatentSample(z, pi, weights)

    def cls_term(self, sample: LatentSample, labels: np.ndarray) -> Tensor:
        rows = np.arange(labels.shape[0])
        if PiPolicy(self.config.pi_policy) == PiPolicy.SOFTMAX:
            log_probs = ndiff.log_softmax(sample.pi_logits, axis=-1)
        else:
            log_probs = ndiff.log(sample.weights)
        return -ndiff.mean(log_probs[rows, labels])

    def kl_term(self, enc: EncoderOutput) -> Tensor:
        batch = enc.mu.shape[0]
        per_entry = (ndiff.exp(enc.logvar) - enc.logvar - 1.0) * 0.5
        if KLForm(self.config.kl_form) == KLForm.FULL:
            per_entry = per_entry + ndiff.square(enc.mu) * 0.5
        return ndiff.sum_(per_entry) * (1.0 / batch)


class CVaeModel(Model):
    """Conditional VAE: one-hot label appended to encoder and decoder inputs, full KL to N(0, I).

    Without labels (evaluation on unlabeled data) the one-hot is replaced by the
    uniform label average.
    """

    @property
    def head_input_dim(self) -> int:
        return self.config.latent_dim + self.config.n_labels

    @property
    def encoder_arch(self) -> MlpArch:
        return MlpArch(
            (self.obs_dim + self.config.n_labels, *self.config.encoder_hidden, 2 * self.config.latent_dim),
            Activation(self.config.activation),
            "enc",
        )

    def init_encoder(self, params: ParamSet, rng: np.random.Generator):
        init_mlp(params, self.encoder_arch, rng, zero_last=self.config.zero_init_heads)

    def _label_code(self, labels: Optional[np.ndarray], batch: int, dtype) -> Tensor:
        n = self.config.n_labels
        if labels is None:
            return Tensor(np.full((batch, n), 1.0 / n, dtype=dtype))
        return Tensor(_one_hot(np.asarray(labels, dtype=np.int64), n, dtype))

    def _check_labels(self, labels, batch):
        if labels is None:
            return None
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.shape != (batch,) or np.any(labels < 0) or np.any(labels >= self.config.n_labels):
            raise ModelError(f"Expected {batch} labels in 0..{self.config.n_labels - 1}")
        return labels

    def encode(self, x, labels=None, params=None) -> EncoderOutput:
        params = self.params if params is None else params
        x_t = x if isinstance(x, Tensor) else self._as_input(x, params)
        batch = x_t.shape[0]
        inputs = ndiff.concat([x_t, self._label_code(labels, batch, params.dtype)], axis=1)
        h = mlp_forward(params, inputs, self.encoder_arch)
        d = self.config.latent_dim
        mu = ndiff.reshape(h[:, 0:d], (batch, 1, d))
        logvar = ndiff.clip(ndiff.reshape(h[:, d:2 * d], (batch, 1, d)), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return EncoderOutput(mu, logvar)

    def draw_noise(self, batch: int, rng: np.random.Generator) -> Noise:
        return Noise(rng.standard_normal((batch, 1, self.config.latent_dim)))

    def sample_latent(self, enc: EncoderOutput, noise: Optional[Noise]) -> LatentSample:
        batch, _, d = enc.mu.shape
        z = enc.mu if noise is None else reparam(enc.mu, enc.logvar, np.asarray(noise.eps, dtype=enc.mu.dtype))
        return LatentSample(ndiff.reshape(z, (batch, d)))

    def head_input(self, z: Tensor, labels: Optional[np.ndarray]) -> Tensor:
        return ndiff.concat([z, self._label_code(labels, z.shape[0], z.dtype)], axis=1)

    def kl_term(self, enc: EncoderOutput) -> Tensor:
        batch = enc.mu.shape[0]
        per_entry = (ndiff.square(enc.mu) + ndiff.exp(enc.logvar) - enc.logvar - 1.0) * 0.5
        return ndiff.sum_(per_entry) * (1.0 / batch)


class ClassifierModel(Model):
    """Deterministic encoder followed by a classifier head; no latent noise and no KL."""

    @property
    def encoder_arch(self) -> MlpArch:
        return MlpArch(
            (self.obs_dim, *self.config.encoder_hidden, self.config.latent_dim), Activation(self.config.activation), "enc"
        )

    def init_encoder(self, params: ParamSet, rng: np.random.Generator):
        init_mlp(params, self.encoder_arch, rng)

    def encode(self, x, labels=None, params=None) -> EncoderOutput:
        params = self.params if params is None else params
        x_t = x if isinstance(x, Tensor) else self._as_input(x, params)
        z = mlp_forward(params, x_t, self.encoder_arch)
        return EncoderOutput(ndiff.reshape(z, (z.shape[0], 1, z.shape[1])))

    def draw_noise(self, batch: int, rng: np.random.Generator) -> Noise:
        return Noise(np.zeros((batch, 1, self.config.latent_dim)))

    def sample_latent(self, enc: EncoderOutput, noise: Optional[Noise]) -> LatentSample:
        batch, _, d = enc.mu.shape
        return LatentSample(ndiff.reshape(enc.mu, (batch, d)))

    def kl_term(self, enc: EncoderOutput) -> Tensor:
        return self._zero()


def build_model(config: CdVaeConfig, obs_dim: int, params: Optional[ParamSet] = None) -> Model:
    """Instantiate the model class for config.variant."""
    variant = config.variant_tag
    if variant == Variant.CVAE:
        return CVaeModel(config, obs_dim, params)
    if variant == Variant.CLASSIFIER:
        return ClassifierModel(config, obs_dim, params)
    return CdVaeModel(config, obs_dim, params)


def encode(model: Model, x, labels: Optional[np.ndarray] = None) -> EncoderOutput:
    return model.encode(x, labels)


def loss(model: Model, x, labels=None, targets=None, noise: Optional[Noise] = None) -> Tuple[Tensor, LossBreakdown]:
    return model.loss(x, labels, targets, noise)


def classify(model: Model, x, labels: Optional[np.ndarray] = None) -> np.ndarray:
    return model.classify(x, labels)
