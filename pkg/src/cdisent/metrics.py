"""
Evaluation metrics for learned representations.

Influence-based scores (IRS, UC, CG) share one :class:`InfluenceMatrix` estimated
by intervening on single factors of the controllable generator. UC and CG are
approximations built on that matrix and are tagged as such in reports.
"""

import itertools
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import entropy, rankdata
from sklearn.linear_model import RidgeClassifier
from sklearn.metrics import mutual_info_score

from .constant import (
    DEAD_LATENT_STD,
    IOSS_MAX_DIMS,
    IOSS_MAX_PAIRS,
    IOSS_QUANTILES,
    IOSS_RESOLUTION,
    MIC_GRID_EXPONENT,
    MIC_MAX_BINS,
    RIDGE_ALPHA,
)
from .datagen import GenSpec, LabeledDataset, render_batch
from .logger import get_logger
from .utils import config_hash, derive_seed, derive_seeds

MIN_METRIC_SAMPLES = 100
MIN_DCI_SAMPLES = 500
MIN_MIC_SAMPLES = 500
APPROXIMATE_METRICS = ("uc", "cg")

EncodeFn = Callable[[np.ndarray], np.ndarray]


class MetricError(Exception):
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class DegenerateLatentError(MetricError):
    """Raised when a latent dimension has zero range."""


@dataclass
class LatentMatrix:
    """Latent codes aligned with ground-truth factors (and optionally confounder labels)."""
    z: np.ndarray
    factors: np.ndarray
    confounders: Optional[np.ndarray] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.factors = np.asarray(self.factors, dtype=np.int64)
        if self.z.ndim != 2 or self.factors.ndim != 2 or self.z.shape[0] != self.factors.shape[0]:
            raise MetricError(f"Misaligned latents {self.z.shape} and factors {self.factors.shape}")
        if self.z.shape[0] < MIN_METRIC_SAMPLES:
            raise MetricError(f"Metrics need N >= {MIN_METRIC_SAMPLES}, got {self.z.shape[0]}")
        if not np.all(np.isfinite(self.z)):
            raise MetricError("Latent codes must be finite")

    @property
    def n(self) -> int:
        return self.z.shape[0]


@dataclass
class InfluenceMatrix:
    """K x D nonnegative sensitivities; ``dead[i]`` marks latents with no spread."""
    values: np.ndarray
    dead: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.dead = np.asarray(self.dead, dtype=bool)
        if self.values.ndim != 2 or self.dead.shape != (self.values.shape[1],):
            raise MetricError(f"Influence values {self.values.shape} and dead mask {self.dead.shape} disagree")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise MetricError("Influence values must be finite and nonnegative")
        silent = (self.values.max(axis=0) <= 0) & ~self.dead
        if np.any(silent):
            get_logger().warning("influence", f"latents {np.flatnonzero(silent).tolist()} have zero influence; flagged dead")
            self.dead = self.dead | silent

    @classmethod
    def from_values(cls, values: np.ndarray) -> "InfluenceMatrix":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.zeros(values.shape[1], dtype=bool))

    @property
    def live(self) -> np.ndarray:
        return np.flatnonzero(~self.dead)

    def assignment(self) -> np.ndarray:
        """Argmax factor per latent (-1 for dead latents)."""
        out = np.argmax(self.values, axis=0)
        out[self.dead] = -1
        return out


@dataclass
class InfluenceProbes:
    """Sample counts for intervention-based estimates."""
    n_base: int = 200
    n_resample: int = 16

    def __post_init__(self):
        if self.n_base < 1 or self.n_resample < 1:
            raise ValueError("Probe counts must be >= 1")


def _draw_independent(spec: GenSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    marginals = spec.factor_marginals()
    return np.stack([rng.choice(len(p), size=n, p=p) for p in marginals], axis=1)


def _encode_factors(encode_fn: EncodeFn, spec: GenSpec, factors: np.ndarray, seed: int) -> np.ndarray:
    observations = render_batch(spec, factors, derive_seeds(seed, len(factors)))
    return np.asarray(encode_fn(observations), dtype=np.float64)


def influence(encode_fn: EncodeFn, spec: GenSpec, probes: InfluenceProbes, seed: int) -> InfluenceMatrix:
    """Sensitivity of each latent to single-factor interventions.

    For base assignments g (factors drawn independently from their marginals),
    M[k, i] = E_g |mean over resampled g_k of z_i - z_i(g)| divided by the
    standard deviation of z_i over the base sample.
    """
    rng = np.random.default_rng(derive_seed(seed, 0))
    base = _draw_independent(spec, probes.n_base, rng)
    z_base = _encode_factors(encode_fn, spec, base, derive_seed(seed, 1))
    std = z_base.std(axis=0)
    dead = std < DEAD_LATENT_STD
    if np.any(dead):
        get_logger().warning("influence", f"dead latents {np.flatnonzero(dead).tolist()} (std < {DEAD_LATENT_STD})")

    marginals = spec.factor_marginals()
    n_factors, dim = len(marginals), z_base.shape[1]
    values = np.zeros((n_factors, dim))
    for k, p in enumerate(marginals):
        probe = np.repeat(base, probes.n_resample, axis=0)
        probe[:, k] = rng.choice(len(p), size=probe.shape[0], p=p)
        z = _encode_factors(encode_fn, spec, probe, derive_seed(seed, 2, k))
        mean_z = z.reshape(probes.n_base, probes.n_resample, dim).mean(axis=1)
        values[k] = np.mean(np.abs(mean_z - z_base), axis=0)
    values[:, ~dead] /= std[~dead]
    values[:, dead] = 0.0
    return InfluenceMatrix(values, dead)


def _require_live(m: InfluenceMatrix) -> np.ndarray:
    live = m.live
    if live.size == 0:
        raise MetricError("Every latent in the influence matrix is dead")
    return live


def irs(m: InfluenceMatrix) -> float:
    """Mean over live latents of 1 - off-assignment influence / total influence."""
    live = _require_live(m)
    cols = m.values[:, live]
    top = cols.max(axis=0)
    total = cols.sum(axis=0)
    robustness = 1.0 - (total - top) / (total + 1e-12)
    return float(np.mean(robustness))


def uc(m: InfluenceMatrix) -> float:
    """1 - mean over live latents of second-largest / largest influence."""
    live = _require_live(m)
    cols = np.sort(m.values[:, live], axis=0)
    if cols.shape[0] < 2:
        return 1.0
    return float(1.0 - np.mean(cols[-2] / cols[-1]))


@dataclass
class CGResult:
    score: float
    per_factor: Dict[int, float]
    skipped: List[int]


def cg_per_factor(
    encode_fn: EncodeFn, m: InfluenceMatrix, spec: GenSpec, probes: InfluenceProbes, seed: int
) -> CGResult:
    """Counterfactual stability of each factor's assigned latents.

    For factor k with latents I_k, CG_k = 1 - E|z_I(g') - z_I(g)| / E|z_I(g'') - z_I(g)|,
    where g' resamples every factor except k and g'' resamples all factors.
    """
    assignment = m.assignment()
    rng = np.random.default_rng(derive_seed(seed, 10))
    base = _draw_independent(spec, probes.n_base, rng)
    z_base = _encode_factors(encode_fn, spec, base, derive_seed(seed, 11))
    probe_all = _draw_independent(spec, probes.n_base * probes.n_resample, rng)
    z_all = _encode_factors(encode_fn, spec, probe_all, derive_seed(seed, 12))
    z_ref = np.repeat(z_base, probes.n_resample, axis=0)
    normalizer = np.mean(np.abs(z_all - z_ref), axis=0)

    per_factor: Dict[int, float] = {}
    skipped: List[int] = []
    for k in range(m.values.shape[0]):
        latents = np.flatnonzero(assignment == k)
        latents = latents[normalizer[latents] > 0]
        if latents.size == 0:
            skipped.append(k)
            continue
        probe = _draw_independent(spec, probes.n_base * probes.n_resample, rng)
        probe[:, k] = np.repeat(base[:, k], probes.n_resample)
        z = _encode_factors(encode_fn, spec, probe, derive_seed(seed, 13, k))
        deviation = np.mean(np.abs(z[:, latents] - z_ref[:, latents]), axis=0)
        per_factor[k] = float(1.0 - np.clip(np.mean(deviation / normalizer[latents]), 0.0, 1.0))
    if skipped:
        get_logger().warning("cg", f"factors {skipped} have no assigned latents and were skipped")
    if not per_factor:
        raise MetricError("No factor has an assigned latent; CG is undefined")
    return CGResult(float(np.mean(list(per_factor.values()))), per_factor, skipped)


def cg(encode_fn: EncodeFn, m: InfluenceMatrix, spec: GenSpec, probes: InfluenceProbes, seed: int) -> float:
    return cg_per_factor(encode_fn, m, spec, probes, seed).score


def _pairs(dim: int, cap_dims: int) -> List[Tuple[int, int]]:
    pairs = list(itertools.combinations(range(dim), 2))
    if dim <= cap_dims:
        return pairs
    chosen = np.random.default_rng(0).permutation(len(pairs))[:IOSS_MAX_PAIRS]
    return [pairs[i] for i in sorted(chosen)]


def ioss(z: np.ndarray) -> float:
    """1 - mean fraction of occupied cells in 2-D quantile boxes (10 x 10 grid per pair)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < MIN_METRIC_SAMPLES or z.shape[1] < 2:
        raise MetricError(f"IOSS needs N >= {MIN_METRIC_SAMPLES} and D >= 2, got shape {z.shape}")
    std = z.std(axis=0)
    if np.any(std == 0):
        raise DegenerateLatentError(f"Latent dimensions {np.flatnonzero(std == 0).tolist()} have zero range")
    standardized = (z - z.mean(axis=0)) / std
    lo, hi = np.quantile(standardized, IOSS_QUANTILES, axis=0)
    if np.any(hi <= lo):
        raise DegenerateLatentError(f"Latent dimensions {np.flatnonzero(hi <= lo).tolist()} have zero quantile range")

    res = IOSS_RESOLUTION
    coverage = []
    for a, b in _pairs(z.shape[1], IOSS_MAX_DIMS):
        u, v = standardized[:, a], standardized[:, b]
        inside = (u >= lo[a]) & (u <= hi[a]) & (v >= lo[b]) & (v <= hi[b])
        cu = np.minimum(((u[inside] - lo[a]) / (hi[a] - lo[a]) * res).astype(np.int64), res - 1)
        cv = np.minimum(((v[inside] - lo[b]) / (hi[b] - lo[b]) * res).astype(np.int64), res - 1)
        occupied = np.unique(cu * res + cv).size
        coverage.append(occupied / float(res * res))
    return float(1.0 - np.mean(coverage))


def disentanglement_from_importance(importance: np.ndarray) -> float:
    """Weighted mean over latents of 1 - H(P_.i)/log K for a K x D importance matrix."""
    r = np.abs(np.asarray(importance, dtype=np.float64))
    n_factors = r.shape[0]
    column_mass = r.sum(axis=0)
    if column_mass.sum() <= 0:
        return 0.0
    live = column_mass > 0
    if n_factors == 1:
        per_latent = np.ones(int(live.sum()))
    else:
        per_latent = 1.0 - entropy(r[:, live], axis=0) / np.log(n_factors)
    rho = column_mass[live] / column_mass.sum()
    return float(np.clip(np.sum(rho * per_latent), 0.0, 1.0))


def importance_matrix(z: np.ndarray, factors: np.ndarray, alpha: float = RIDGE_ALPHA) -> np.ndarray:
    """|coefficients| of one ridge classifier per factor on standardized z, summed over classes."""
    z = np.asarray(z, dtype=np.float64)
    std = z.std(axis=0)
    standardized = np.divide(z - z.mean(axis=0), std, out=np.zeros_like(z), where=std > 0)
    rows = []
    for k in range(factors.shape[1]):
        y = factors[:, k]
        if np.unique(y).size < 2:
            rows.append(np.zeros(z.shape[1]))
            continue
        clf = RidgeClassifier(alpha=alpha).fit(standardized, y)
        rows.append(np.abs(clf.coef_).sum(axis=0))
    return np.stack(rows)


def dci_d(z: np.ndarray, factors: np.ndarray) -> float:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < MIN_DCI_SAMPLES:
        raise MetricError(f"DCI needs N >= {MIN_DCI_SAMPLES}, got {z.shape[0]}")
    return disentanglement_from_importance(importance_matrix(z, np.asarray(factors)))


def _equal_frequency_bins(x: np.ndarray, k: int) -> np.ndarray:
    ranks = rankdata(x, method="min") - 1
    return np.minimum((ranks * k) // x.size, k - 1).astype(np.int64)


def _mic_scores(x: np.ndarray, y: np.ndarray) -> List[float]:
    n = x.size
    budget = n ** MIC_GRID_EXPONENT
    scores = []
    for k in range(2, MIC_MAX_BINS + 1):
        bx = _equal_frequency_bins(x, k)
        kx = np.unique(bx).size
        for l in range(2, MIC_MAX_BINS + 1):
            if k * l > budget:
                continue
            by = _equal_frequency_bins(y, l)
            ly = np.unique(by).size
            if min(kx, ly) < 2:
                continue
            scores.append(mutual_info_score(bx, by) / np.log(min(kx, ly)))
    return scores


def _canonical_pair(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return (x, y) if x.tobytes() <= y.tobytes() else (y, x)


def _mic_inputs(x, y) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise MetricError(f"MIC inputs differ in length: {x.size} vs {y.size}")
    if x.size < MIN_MIC_SAMPLES:
        raise MetricError(f"MIC needs N >= {MIN_MIC_SAMPLES}, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        get_logger().warning("mic", "constant input; returning 0")
        return None
    return _canonical_pair(x, y)


def mic(x: np.ndarray, y: np.ndarray) -> float:
    """Maximal normalized mutual information over equal-frequency grids (k, l <= 8, k*l <= N^0.6)."""
    pair = _mic_inputs(x, y)
    if pair is None:
        return 0.0
    scores = _mic_scores(*pair)
    return float(min(max(scores, default=0.0), 1.0))


def tic(x: np.ndarray, y: np.ndarray) -> float:
    """Mean normalized mutual information over the same grids as :func:`mic`."""
    pair = _mic_inputs(x, y)
    if pair is None:
        return 0.0
    scores = _mic_scores(*pair)
    return float(np.mean(scores)) if scores else 0.0


def mic_matrix(z: np.ndarray, factors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(MIC, TIC) matrices of shape K x D between factors and latents."""
    z = np.asarray(z, dtype=np.float64)
    factors = np.asarray(factors)
    n_factors, dim = factors.shape[1], z.shape[1]
    mic_values = np.zeros((n_factors, dim))
    tic_values = np.zeros((n_factors, dim))
    for k in range(n_factors):
        for i in range(dim):
            mic_values[k, i] = mic(factors[:, k], z[:, i])
            tic_values[k, i] = tic(factors[:, k], z[:, i])
    return mic_values, tic_values


def recon_error(model, ds: LabeledDataset) -> float:
    """Mean squared error per feature between reconstructions and observations."""
    x = ds.flat_observations().astype(np.float64)
    recon = np.asarray(model.reconstruct(x, ds.confounders), dtype=np.float64).reshape(x.shape)
    return float(np.mean((recon - x) ** 2))


CSV_COLUMNS = ["recon", "d", "ioss", "irs", "uc", "cg", "mic_mean", "tic_mean", "settings_hash"]


@dataclass
class MetricReport:
    recon: Optional[float] = None
    d: Optional[float] = None
    ioss: Optional[float] = None
    irs: Optional[float] = None
    uc: Optional[float] = None
    cg: Optional[float] = None
    mic: Optional[List[List[float]]] = None
    tic: Optional[List[List[float]]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("recon", "d", "ioss", "irs", "uc", "cg"):
            value = getattr(self, name)
            if value is not None and not np.isfinite(value):
                raise MetricError(f"Metric '{name}' is not finite: {value}")

    @property
    def mic_mean(self) -> Optional[float]:
        return None if self.mic is None else float(np.mean(self.mic) * 100.0)

    @property
    def tic_mean(self) -> Optional[float]:
        return None if self.tic is None else float(np.mean(self.tic) * 100.0)

    @property
    def settings_hash(self) -> str:
        return config_hash(self.metadata.get("settings", {}))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mic_mean"] = self.mic_mean
        data["tic_mean"] = self.tic_mean
        data["settings_hash"] = self.settings_hash
        data["approx"] = list(APPROXIMATE_METRICS)
        return data

    def csv_row(self) -> Dict[str, Any]:
        data = self.to_dict()
        return {column: data[column] for column in CSV_COLUMNS}


def evaluate_representation(
    model,
    ds: LabeledDataset,
    spec: GenSpec,
    probes: Optional[InfluenceProbes] = None,
    seed: int = 0,
    include: Sequence[str] = ("recon", "d", "ioss", "irs", "uc", "cg", "mic"),
) -> MetricReport:
    """Compute the metric suite for a trained model on an evaluation dataset."""
    probes = probes or InfluenceProbes()
    z = model.encode_mean(ds.flat_observations())
    latents = LatentMatrix(z, ds.factors, ds.confounders)
    report = MetricReport(metadata={
        "n": latents.n,
        "seed": int(seed),
        "settings": {
            "probes": asdict(probes),
            "ioss_resolution": IOSS_RESOLUTION,
            "ioss_quantiles": list(IOSS_QUANTILES),
            "ridge_alpha": RIDGE_ALPHA,
            "mic_max_bins": MIC_MAX_BINS,
            "mic_grid_exponent": MIC_GRID_EXPONENT,
        },
    })
    if "recon" in include and model.config.uses_decoder:
        report.recon = recon_error(model, ds)
    if "d" in include and latents.n >= MIN_DCI_SAMPLES:
        report.d = dci_d(latents.z, latents.factors)
    if "ioss" in include and latents.z.shape[1] >= 2:
        report.ioss = ioss(latents.z)
    if any(name in include for name in ("irs", "uc", "cg")):
        m = influence(model.encode_mean, spec, probes, seed)
        report.metadata["influence"] = m.values.tolist()
        report.metadata["dead_latents"] = np.flatnonzero(m.dead).tolist()
        if m.live.size:
            report.irs = irs(m) if "irs" in include else None
            report.uc = uc(m) if "uc" in include else None
            if "cg" in include:
                result = cg_per_factor(model.encode_mean, m, spec, probes, seed)
                report.cg = result.score
                report.metadata["cg_skipped"] = result.skipped
    if "mic" in include and latents.n >= MIN_MIC_SAMPLES:
        mic_values, tic_values = mic_matrix(latents.z, latents.factors)
        report.mic, report.tic = mic_values.tolist(), tic_values.tolist()
    report.__post_init__()
    return report
