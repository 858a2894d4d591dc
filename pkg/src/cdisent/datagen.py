"""
Procedural confounded datasets.

Samples are generated by the confounded process: a confounder value c is drawn,
every factor is drawn independently given c, and the observation is rendered
from the factors. Images are small anti-aliased shapes; the tabular mode uses a
fixed linear mixing of one-hot factor codes.
"""

import colorsys
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constant import (
    DATASET_BINARY_NAME,
    DATASET_MAGIC,
    DATASET_META_NAME,
    DATASET_VERSION,
    DEFAULT_IMAGE_SIZE,
    MAX_IMAGE_SIZE,
)
from .logger import get_logger
from .utils import atomic_write_bytes, atomic_write_text, derive_seed, derive_seeds


class DatasetError(Exception):
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class DatasetFormatError(DatasetError):
    """Raised for bad magic, unsupported version or truncated dataset files."""


class ObservationMode(str, Enum):
    IMAGE = "image"
    TABULAR = "tabular"


class MixingMode(str, Enum):
    RANDOM = "random"
    IDENTITY = "identity"


IMAGE_FACTORS = ("shape", "hue", "size", "posx", "posy")
SHAPES = ("square", "circle", "triangle")


@dataclass(frozen=True)
class Factor:
    name: str
    cardinality: int


@dataclass
class FactorSpec:
    """Ordered ground-truth factors."""
    factors: List[Factor]

    def __post_init__(self):
        self.factors = [f if isinstance(f, Factor) else Factor(**f) for f in self.factors]
        if not self.factors:
            raise DatasetError("FactorSpec needs at least one factor")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise DatasetError(f"Factor names must be unique, got {names}")
        for f in self.factors:
            if f.cardinality < 2:
                raise DatasetError(f"Factor '{f.name}' needs cardinality >= 2, got {f.cardinality}")

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.factors]

    @property
    def cards(self) -> List[int]:
        return [f.cardinality for f in self.factors]

    def __len__(self) -> int:
        return len(self.factors)

    def index(self, name: str) -> int:
        if name not in self.names:
            raise DatasetError(f"Unknown factor '{name}'. Available factors: {self.names}")
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {"factors": [{"name": f.name, "cardinality": f.cardinality} for f in self.factors]}

    @classmethod
    def from_dict(cls, data: dict) -> "FactorSpec":
        return cls([Factor(f["name"], int(f["cardinality"])) for f in data["factors"]])


@dataclass
class GenSpec:
    """
    Confounded generative process.

    Args:
        factor_spec: The ground-truth factors.
        confounder_probs: P(C*), one entry per confounder value.
        factor_probs: ``factor_probs[c][k]`` is the categorical P(G_k | C* = c).
        mode: Render images or tabular vectors.
        image_size: (H, W) of rendered images.
        tabular_dim: Length of tabular observations.
        noise_std: Standard deviation of additive Gaussian observation noise.
        mixing: Tabular mixing matrix, random Gaussian or identity.
        mixing_seed: Seed of the random mixing matrix.
    """
    factor_spec: FactorSpec
    confounder_probs: List[float]
    factor_probs: List[List[List[float]]]
    mode: ObservationMode = ObservationMode.TABULAR
    image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE
    tabular_dim: int = 16
    noise_std: float = 0.0
    mixing: MixingMode = MixingMode.RANDOM
    mixing_seed: int = 0

    def __post_init__(self):
        self.mode = ObservationMode(self.mode)
        self.mixing = MixingMode(self.mixing)
        self.image_size = tuple(int(s) for s in self.image_size)
        probs = np.asarray(self.confounder_probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise DatasetError(f"confounder_probs must be a categorical distribution, got {self.confounder_probs}")
        if len(self.factor_probs) != probs.size:
            raise DatasetError(
                f"factor_probs has {len(self.factor_probs)} confounder rows, expected {probs.size}"
            )
        for c, per_factor in enumerate(self.factor_probs):
            if len(per_factor) != len(self.factor_spec):
                raise DatasetError(f"factor_probs[{c}] has {len(per_factor)} factors, expected {len(self.factor_spec)}")
            for k, (p, card) in enumerate(zip(per_factor, self.factor_spec.cards)):
                p = np.asarray(p, dtype=np.float64)
                if p.shape != (card,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                    raise DatasetError(f"factor_probs[{c}][{k}] is not a categorical over {card} values")
        if self.noise_std < 0:
            raise DatasetError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.mode == ObservationMode.IMAGE:
            h, w = self.image_size
            if not (4 <= h <= MAX_IMAGE_SIZE and 4 <= w <= MAX_IMAGE_SIZE):
                raise DatasetError(f"image_size must lie in 4..{MAX_IMAGE_SIZE}, got {self.image_size}")
            unknown = [n for n in self.factor_spec.names if n not in IMAGE_FACTORS]
            if unknown:
                raise DatasetError(f"Image mode cannot render factors {unknown}; known factors: {list(IMAGE_FACTORS)}")
        else:
            if self.tabular_dim < 1:
                raise DatasetError(f"tabular_dim must be >= 1, got {self.tabular_dim}")
            if self.mixing == MixingMode.IDENTITY and self.tabular_dim != sum(self.factor_spec.cards):
                raise DatasetError(
                    f"Identity mixing needs tabular_dim == {sum(self.factor_spec.cards)}, got {self.tabular_dim}"
                )

    @property
    def n_confounder_values(self) -> int:
        return len(self.confounder_probs)

    @property
    def obs_shape(self) -> Tuple[int, ...]:
        if self.mode == ObservationMode.IMAGE:
            return (self.image_size[0], self.image_size[1], 3)
        return (self.tabular_dim,)

    def mixing_matrix(self) -> np.ndarray:
        width = sum(self.factor_spec.cards)
        if self.mixing == MixingMode.IDENTITY:
            return np.eye(width)
        rng = np.random.default_rng(self.mixing_seed)
        return rng.normal(0.0, 1.0, size=(self.tabular_dim, width))

    def factor_marginals(self) -> List[np.ndarray]:
        """Mixture-averaged P(G_k) for every factor."""
        pc = np.asarray(self.confounder_probs, dtype=np.float64)
        return [
            sum(pc[c] * np.asarray(self.factor_probs[c][k], dtype=np.float64) for c in range(pc.size))
            for k in range(len(self.factor_spec))
        ]

    def to_dict(self) -> dict:
        return {
            "factor_spec": self.factor_spec.to_dict(),
            "confounder_probs": [float(p) for p in self.confounder_probs],
            "factor_probs": [[[float(v) for v in p] for p in per_factor] for per_factor in self.factor_probs],
            "mode": self.mode.value,
            "image_size": list(self.image_size),
            "tabular_dim": self.tabular_dim,
            "noise_std": self.noise_std,
            "mixing": self.mixing.value,
            "mixing_seed": self.mixing_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenSpec":
        try:
            data = dict(data)
            data["factor_spec"] = FactorSpec.from_dict(data["factor_spec"])
            return cls(**data)
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"Invalid GenSpec: {e}") from e


@dataclass
class LabeledDataset:
    """
    Observations with ground-truth factors and confounder labels.

    ``confounders`` holds the label set the model conditions on; relabeling keeps
    the ground-truth confounder in ``extras["c_star"]``.
    """
    observations: np.ndarray
    factors: np.ndarray
    confounders: np.ndarray
    factor_spec: FactorSpec
    n_confounder_values: int
    extras: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float32)
        self.factors = np.asarray(self.factors, dtype=np.int64)
        self.confounders = np.asarray(self.confounders, dtype=np.int64)
        n = self.observations.shape[0] if self.observations.ndim else 0
        if n == 0:
            raise DatasetError("A dataset needs at least one sample")
        if self.factors.shape != (n, len(self.factor_spec)):
            raise DatasetError(f"factors has shape {self.factors.shape}, expected {(n, len(self.factor_spec))}")
        if self.confounders.shape != (n,):
            raise DatasetError(f"confounders has shape {self.confounders.shape}, expected {(n,)}")
        cards = np.asarray(self.factor_spec.cards)
        if np.any(self.factors < 0) or np.any(self.factors >= cards):
            raise DatasetError("Factor labels out of range")
        if np.any(self.confounders < 0) or np.any(self.confounders >= self.n_confounder_values):
            raise DatasetError(f"Confounder labels out of range 0..{self.n_confounder_values - 1}")
        if not np.all(np.isfinite(self.observations)):
            raise DatasetError("Observations must be finite")
        self.extras = {k: np.asarray(v) for k, v in self.extras.items()}
        for name, column in self.extras.items():
            if column.shape[0] != n:
                raise DatasetError(f"Extra column '{name}' has {column.shape[0]} rows, expected {n}")

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_shape(self) -> Tuple[int, ...]:
        return tuple(self.observations.shape[1:])

    @property
    def obs_dim(self) -> int:
        return int(np.prod(self.obs_shape))

    def flat_observations(self) -> np.ndarray:
        return self.observations.reshape(len(self), -1)

    def factor(self, name: str) -> np.ndarray:
        return self.factors[:, self.factor_spec.index(name)]

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            self.observations[index], self.factors[index], self.confounders[index],
            self.factor_spec, self.n_confounder_values,
            {k: v[index] for k, v in self.extras.items()}, dict(self.meta),
        )

    def with_labels(self, labels: np.ndarray, n_values: int, name: str) -> "LabeledDataset":
        """Copy with the conditioning labels replaced; the original confounder is kept as c_star."""
        extras = dict(self.extras)
        extras.setdefault("c_star", self.confounders)
        meta = dict(self.meta)
        meta.setdefault("n_c_star", self.n_confounder_values)
        meta["label_set"] = name
        return LabeledDataset(
            self.observations, self.factors, labels, self.factor_spec, n_values, extras, meta
        )


def _coverage(distance: np.ndarray, pixel: float) -> np.ndarray:
    return np.clip(0.5 - distance / pixel, 0.0, 1.0)


def _render_image(spec: GenSpec, g: Dict[str, int], rng: np.random.Generator) -> np.ndarray:
    h, w = spec.image_size
    cards = dict(zip(spec.factor_spec.names, spec.factor_spec.cards))

    def level(name: str, default: float) -> float:
        if name not in g:
            return default
        return g[name] / (cards[name] - 1)

    cy, cx = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    center_x = 0.3 + 0.4 * level("posx", 0.5)
    center_y = 0.3 + 0.4 * level("posy", 0.5)
    radius = 0.12 + 0.1 * level("size", 0.5)
    dx, dy = cx - center_x, cy - center_y

    shape = SHAPES[g.get("shape", 0) % len(SHAPES)]
    if shape == "circle":
        distance = np.sqrt(dx * dx + dy * dy) - radius
    elif shape == "square":
        distance = np.maximum(np.abs(dx), np.abs(dy)) - 0.85 * radius
    else:
        normals = [(0.0, 1.0), (np.sqrt(3) / 2, -0.5), (-np.sqrt(3) / 2, -0.5)]
        distance = np.max([nx_ * dx + ny_ * dy for nx_, ny_ in normals], axis=0) - 0.6 * radius
    cover = _coverage(distance, 1.0 / min(h, w))[..., None]

    hue = g["hue"] / cards["hue"] if "hue" in g else 0.0
    color = np.asarray(colorsys.hsv_to_rgb(hue, 0.9, 0.9))
    image = 0.5 * (1.0 - cover) + color * cover
    if spec.noise_std > 0:
        image = image + spec.noise_std * rng.normal(size=image.shape)
    return image.astype(np.float32)


def render(spec: GenSpec, g: Sequence[int], seed: int, mixing: Optional[np.ndarray] = None) -> np.ndarray:
    """Render one observation from a factor assignment; noise is drawn from seed."""
    g = [int(v) for v in g]
    if len(g) != len(spec.factor_spec) or any(not 0 <= v < c for v, c in zip(g, spec.factor_spec.cards)):
        raise DatasetError(f"Factor assignment {g} is out of range for cardinalities {spec.factor_spec.cards}")
    rng = np.random.default_rng(seed)
    if spec.mode == ObservationMode.IMAGE:
        return _render_image(spec, dict(zip(spec.factor_spec.names, g)), rng)
    A = spec.mixing_matrix() if mixing is None else mixing
    onehot = np.concatenate([np.eye(card)[v] for v, card in zip(g, spec.factor_spec.cards)])
    x = A @ onehot
    if spec.noise_std > 0:
        x = x + spec.noise_std * rng.normal(size=x.shape)
    return x.astype(np.float32)


def render_batch(spec: GenSpec, factors: np.ndarray, seeds: Sequence[int]) -> np.ndarray:
    mixing = spec.mixing_matrix() if spec.mode == ObservationMode.TABULAR else None
    out = np.empty((len(factors),) + spec.obs_shape, dtype=np.float32)
    for i, (g, s) in enumerate(zip(factors, seeds)):
        out[i] = render(spec, g, int(s), mixing)
    return out


def _draw_categorical(rng: np.random.Generator, cdfs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    u = rng.random(rows.size)
    drawn = (cdfs[rows] <= u[:, None]).sum(axis=1)
    return np.minimum(drawn, cdfs.shape[1] - 1)


def sample_factors(spec: GenSpec, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw confounders c ~ P(C*) and factors g_k ~ P(G_k | c) independently per factor."""
    confounders = rng.choice(spec.n_confounder_values, size=n, p=np.asarray(spec.confounder_probs))
    factors = np.empty((n, len(spec.factor_spec)), dtype=np.int64)
    for k in range(len(spec.factor_spec)):
        cdfs = np.cumsum([np.asarray(spec.factor_probs[c][k]) for c in range(spec.n_confounder_values)], axis=1)
        factors[:, k] = _draw_categorical(rng, cdfs, confounders)
    return confounders, factors


def sample_dataset(spec: GenSpec, n: int, seed: int) -> LabeledDataset:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(derive_seed(seed, 0))
    confounders, factors = sample_factors(spec, n, rng)
    observations = render_batch(spec, factors, derive_seeds(derive_seed(seed, 1), n))
    return LabeledDataset(
        observations, factors, confounders, spec.factor_spec, spec.n_confounder_values,
        meta={"gen_spec": spec.to_dict(), "seed": int(seed)},
    )


def confounded_spec(
    factor_spec: FactorSpec,
    n_confounders: int,
    strength: float,
    confounded: Sequence[str] = ("hue", "shape"),
    confounder_probs: Optional[Sequence[float]] = None,
    **gen_kwargs,
) -> GenSpec:
    """GenSpec where each confounded factor prefers value (c mod card) under C* = c.

    P(G_k = c mod card | c) = strength + (1 - strength) / card, the remaining mass is
    spread uniformly. Unconfounded factors are uniform.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    if n_confounders < 1:
        raise ValueError(f"n_confounders must be >= 1, got {n_confounders}")
    for name in confounded:
        factor_spec.index(name)
    if confounder_probs is None:
        confounder_probs = [1.0 / n_confounders] * n_confounders
    factor_probs = []
    for c in range(n_confounders):
        per_factor = []
        for f in factor_spec.factors:
            p = np.full(f.cardinality, 1.0 / f.cardinality)
            if f.name in confounded:
                p = np.full(f.cardinality, (1.0 - strength) / f.cardinality)
                p[c % f.cardinality] += strength
            per_factor.append(p.tolist())
        factor_probs.append(per_factor)
    return GenSpec(factor_spec, list(confounder_probs), factor_probs, **gen_kwargs)


def decorrelated_spec(spec: GenSpec) -> GenSpec:
    """Same confounder prior and factor marginals, factors independent of the confounder."""
    marginals = [m.tolist() for m in spec.factor_marginals()]
    data = spec.to_dict()
    data["factor_probs"] = [marginals for _ in range(spec.n_confounder_values)]
    return GenSpec.from_dict(data)


def concat_datasets(parts: Sequence[LabeledDataset]) -> LabeledDataset:
    parts = [p for p in parts if p is not None]
    first = parts[0]
    keys = set.intersection(*(set(p.extras) for p in parts))
    return LabeledDataset(
        np.concatenate([p.observations for p in parts]),
        np.concatenate([p.factors for p in parts]),
        np.concatenate([p.confounders for p in parts]),
        first.factor_spec,
        max(p.n_confounder_values for p in parts),
        {k: np.concatenate([p.extras[k] for p in parts]) for k in sorted(keys)},
        dict(first.meta),
    )


def shifted_split(
    spec: GenSpec, severity: float, n_train: int, n_target: int, seed: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Train set with round(severity * n_train) correlated samples, decorrelated target set.

    The train set carries an extra column ``regime`` (1 correlated, 0 decorrelated).
    """
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must lie in [0, 1], got {severity}")
    if n_train < 1 or n_target < 1:
        raise ValueError("n_train and n_target must be >= 1")
    decorrelated = decorrelated_spec(spec)
    n_corr = int(round(severity * n_train))
    parts = []
    if n_corr > 0:
        corr = sample_dataset(spec, n_corr, derive_seed(seed, 0))
        corr.extras["regime"] = np.ones(n_corr, dtype=np.int64)
        parts.append(corr)
    if n_train - n_corr > 0:
        dec = sample_dataset(decorrelated, n_train - n_corr, derive_seed(seed, 1))
        dec.extras["regime"] = np.zeros(n_train - n_corr, dtype=np.int64)
        parts.append(dec)
    train = concat_datasets(parts)
    order = np.random.default_rng(derive_seed(seed, 2)).permutation(len(train))
    train = train.subset(order)
    train.meta.update({"seed": int(seed), "severity": float(severity), "gen_spec": spec.to_dict()})

    target = sample_dataset(decorrelated, n_target, derive_seed(seed, 3))
    target.extras["regime"] = np.zeros(n_target, dtype=np.int64)
    target.meta.update({"seed": int(seed), "severity": float(severity)})
    return train, target


def tabular_recipe(
    n_confounders: int = 4, strength: float = 0.8, noise_std: float = 0.1, tabular_dim: int = 16
) -> GenSpec:
    """Desk-scale tabular recipe: four factors, hue and shape confounded."""
    factors = FactorSpec([Factor("shape", 3), Factor("hue", 4), Factor("size", 3), Factor("posx", 4)])
    return confounded_spec(
        factors, n_confounders, strength, ("hue", "shape"),
        mode=ObservationMode.TABULAR, tabular_dim=tabular_dim, noise_std=noise_std,
    )


def image_recipe(
    n_confounders: int = 4, strength: float = 0.8, noise_std: float = 0.02,
    image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE,
) -> GenSpec:
    """Rendered-shape recipe with shape, hue, size and position factors."""
    factors = FactorSpec([
        Factor("shape", 3), Factor("hue", 6), Factor("size", 3), Factor("posx", 4), Factor("posy", 4),
    ])
    return confounded_spec(
        factors, n_confounders, strength, ("hue", "shape"),
        mode=ObservationMode.IMAGE, image_size=image_size, noise_std=noise_std,
    )


RECIPES = {"tabular": tabular_recipe, "image": image_recipe}


def relabel_empty(ds: LabeledDataset) -> LabeledDataset:
    return ds.with_labels(np.zeros(len(ds), dtype=np.int64), 1, "empty")


def _ground_truth_labels(ds: LabeledDataset) -> Tuple[np.ndarray, int]:
    """The original confounder C* and its number of values, whatever label set ds carries."""
    c_star = ds.extras.get("c_star", ds.confounders)
    n_values = int(ds.meta.get("n_c_star", ds.n_confounder_values))
    return c_star, max(n_values, int(c_star.max()) + 1)


def relabel_full(ds: LabeledDataset) -> LabeledDataset:
    c_star, n_values = _ground_truth_labels(ds)
    return ds.with_labels(c_star, n_values, "full")


def relabel_partial(ds: LabeledDataset, n_groups: int = 2) -> LabeledDataset:
    """Merge confounder values with the surjection c -> c mod n_groups."""
    if n_groups < 1:
        raise ValueError(f"n_groups must be >= 1, got {n_groups}")
    c_star = ds.extras.get("c_star", ds.confounders)
    return ds.with_labels(c_star % n_groups, n_groups, "partial")


def relabel_superset(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Refine each confounder value by an irrelevant random bit."""
    c_star, n_values = _ground_truth_labels(ds)
    bit = np.random.default_rng(seed).integers(0, 2, size=len(ds))
    return ds.with_labels(c_star * 2 + bit, n_values * 2, "superset")


def relabel_random(ds: LabeledDataset, n_values: int, seed: int) -> LabeledDataset:
    """Labels drawn uniformly, independent of everything else."""
    labels = np.random.default_rng(seed).integers(0, n_values, size=len(ds))
    return ds.with_labels(labels, n_values, "random")


def _record_dtype(obs_size: int, n_factors: int) -> np.dtype:
    return np.dtype([("obs", "<f4", (obs_size,)), ("g", "<u2", (n_factors,)), ("c", "<u2")])


def encode_dataset(ds: LabeledDataset) -> bytes:
    shape = ds.obs_shape
    header = DATASET_MAGIC + struct.pack("<III", DATASET_VERSION, len(ds), len(shape))
    header += struct.pack(f"<{len(shape)}I", *shape)
    records = np.zeros(len(ds), dtype=_record_dtype(ds.obs_dim, len(ds.factor_spec)))
    records["obs"] = ds.flat_observations()
    records["g"] = ds.factors
    records["c"] = ds.confounders
    return header + records.tobytes()


def decode_dataset(payload: bytes, meta: dict) -> LabeledDataset:
    if payload[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"Bad dataset magic {payload[:4]!r}, expected {DATASET_MAGIC!r}")
    if len(payload) < 16:
        raise DatasetFormatError("Dataset truncated inside the header")
    version, n, rank = struct.unpack_from("<III", payload, 4)
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"Unsupported dataset version {version}, expected {DATASET_VERSION}")
    offset = 16 + 4 * rank
    if len(payload) < offset:
        raise DatasetFormatError("Dataset truncated inside the header")
    shape = struct.unpack_from(f"<{rank}I", payload, 16)
    factor_spec = FactorSpec.from_dict(meta["factor_spec"])
    dtype = _record_dtype(int(np.prod(shape)), len(factor_spec))
    expected = offset + n * dtype.itemsize
    if len(payload) != expected:
        raise DatasetFormatError(f"Dataset payload has {len(payload)} bytes, expected {expected}")
    records = np.frombuffer(payload, dtype=dtype, count=n, offset=offset)
    extras = {k: np.asarray(v) for k, v in meta.get("extras", {}).items()}
    return LabeledDataset(
        records["obs"].reshape((n,) + tuple(shape)).copy(),
        records["g"].astype(np.int64),
        records["c"].astype(np.int64),
        factor_spec,
        int(meta["n_confounder_values"]),
        extras,
        dict(meta.get("meta", {})),
    )


def write_dataset(ds: LabeledDataset, path: Union[str, Path]):
    """Write meta.json and data.cdst into directory path, each atomically."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": DATASET_VERSION,
        "n": len(ds),
        "obs_shape": list(ds.obs_shape),
        "factor_spec": ds.factor_spec.to_dict(),
        "n_confounder_values": ds.n_confounder_values,
        "extras": {k: v.tolist() for k, v in ds.extras.items()},
        "meta": ds.meta,
    }
    atomic_write_bytes(path / DATASET_BINARY_NAME, encode_dataset(ds))
    atomic_write_text(path / DATASET_META_NAME, json.dumps(meta, indent=2))
    get_logger().debug("datagen", f"wrote {len(ds)} samples to {path}")


def read_dataset(path: Union[str, Path]) -> LabeledDataset:
    path = Path(path)
    meta_path, data_path = path / DATASET_META_NAME, path / DATASET_BINARY_NAME
    for p in (meta_path, data_path):
        if not p.exists():
            raise DatasetError(f"Dataset file {p} does not exist")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"Dataset metadata {meta_path} is not valid JSON: {e}") from e
    return decode_dataset(data_path.read_bytes(), meta)
