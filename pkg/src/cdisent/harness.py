"""
Experiment orchestration: dataset generation, training, evaluation, the shift-severity
OOD study, the label-set ablation and the baseline comparison.

Every experiment expands into a list of jobs (one per variant, setting and seed). Jobs
run in a thread pool, each seed-isolated, and produce one :class:`RunRecord`. Records
are aggregated over completed seeds and written as CSV or JSON reports.
"""

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constant import CONFIG_VERSION, THREADS_ENV_VAR
from .datagen import (
    RECIPES,
    DatasetError,
    GenSpec,
    LabeledDataset,
    decorrelated_spec,
    read_dataset,
    relabel_empty,
    relabel_full,
    relabel_partial,
    relabel_random,
    relabel_superset,
    sample_dataset,
    shifted_split,
    write_dataset,
)
from .gaussmix import GaussMixError, lc_moment, mixture_from_encoder
from .logger import Logger, LogLevel
from .metrics import InfluenceProbes, MetricError, evaluate_representation, influence, irs
from .models import CdVaeConfig, CVaeModel, CdVaeModel, Model, ModelError, PiPolicy, Variant
from .ndiff import NDiffError, no_grad
from .scm import SCMError
from .trainer import TrainResult, load_model, save_model, train
from .utils import atomic_write_text, config_hash, derive_seed

REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
SUMMARY_CSV = "summary.csv"


class ConfigError(Exception):
    """Invalid or unreadable experiment configuration."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class RunFailure(Exception):
    """A single job could not complete; its record is marked failed."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ExperimentKind(str, Enum):
    GENERATE = "generate"
    TRAIN = "train"
    EVAL = "eval"
    OOD = "ood"
    ABLATE_C = "ablate-c"
    COMPARE = "compare"


class LabelChoice(str, Enum):
    """Label sets the cdVAE can condition on in the ablation."""
    EMPTY = "empty"
    PARTIAL = "partial"
    FULL = "full"
    SUPERSET = "superset"
    RANDOM = "random"


COMPARE_VARIANTS = ("vae", "beta-vae", "cvae", "cdvae", "cdvae-ioss", "vae-ioss")
OOD_VARIANTS = ("cdvae", "beta-vae")


def _default_models(kind: ExperimentKind) -> List[dict]:
    if kind == ExperimentKind.COMPARE:
        return [{"variant": v, **({"beta": 4.0} if v == "beta-vae" else {})} for v in COMPARE_VARIANTS]
    if kind == ExperimentKind.OOD:
        return [{"variant": v, **({"beta": 4.0} if v == "beta-vae" else {})} for v in OOD_VARIANTS]
    return [{"variant": "cdvae"}]


@dataclass
class ExperimentConfig:
    """
    One experiment, as read from a JSON config file.

    Args:
        kind: Experiment to run.
        gen: Inline GenSpec dict, a recipe name ("tabular", "image") or a path to a GenSpec JSON file.
        gen_options: Keyword arguments for the recipe (e.g. strength).
        models: CdVaeConfig overrides, one entry per model; the run seed is filled in.
        severities: Shift severities for the OOD study; the first entry is used by the ablation.
        seeds: Seeds, one run per seed.
        out_dir: Output directory for reports and artifacts.
        n_train, n_eval: Training and evaluation sample counts.
        threads: Worker threads (overridden by --threads and the environment).
        label_choices: Label sets for the ablation.
        partial_groups: Number of merged groups for the partial label set.
        target_factor: Factor predicted by classifier heads.
        metrics: Metric names computed by eval and compare.
        probes: InfluenceProbes overrides.
        dataset: Directory of a generated dataset used by train and eval instead of sampling.
        model_dir: Directory of a trained model (eval).
        cfg_version: Config schema version.
    """
    kind: str
    gen: Union[str, Dict[str, Any]] = "tabular"
    gen_options: Dict[str, Any] = field(default_factory=dict)
    models: List[Dict[str, Any]] = field(default_factory=list)
    severities: List[float] = field(default_factory=lambda: [0.4, 0.5, 0.6])
    seeds: List[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    n_train: int = 8000
    n_eval: int = 2000
    threads: int = 1
    label_choices: List[str] = field(default_factory=lambda: ["empty", "partial", "full", "superset"])
    partial_groups: int = 2
    target_factor: str = "shape"
    metrics: List[str] = field(default_factory=lambda: ["recon", "d", "ioss", "irs", "uc", "cg", "mic"])
    probes: Dict[str, int] = field(default_factory=dict)
    dataset: Optional[str] = None
    model_dir: Optional[str] = None
    cfg_version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.cfg_version != CONFIG_VERSION:
            raise ConfigError(f"Unsupported cfg_version {self.cfg_version}; this release reads version {CONFIG_VERSION}")
        try:
            self.kind = ExperimentKind(self.kind).value
            self.label_choices = [LabelChoice(c).value for c in self.label_choices]
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not self.models:
            self.models = _default_models(ExperimentKind(self.kind))
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds must be non-negative integers, got {self.seeds}")
        if any(not 0.0 <= s <= 1.0 for s in self.severities):
            raise ConfigError(f"severities must lie in [0, 1], got {self.severities}")
        if not self.severities and self.kind in (ExperimentKind.OOD.value, ExperimentKind.ABLATE_C.value):
            raise ConfigError("severities must not be empty")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("n_train and n_eval must be >= 1")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.partial_groups < 1:
            raise ConfigError(f"partial_groups must be >= 1, got {self.partial_groups}")

    @property
    def experiment(self) -> ExperimentKind:
        return ExperimentKind(self.kind)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("Config is missing 'kind'")
        data = dict(data)
        data.setdefault("cfg_version", CONFIG_VERSION)
        if base_dir is not None:
            for key in ("dataset", "model_dir"):
                if data.get(key):
                    data[key] = str((base_dir / data[key]))
            gen = data.get("gen")
            if isinstance(gen, str) and gen not in RECIPES:
                data["gen"] = str(base_dir / gen)
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid experiment config: {e}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        return cls.from_dict(data, path.parent)

    @property
    def hash(self) -> str:
        data = self.to_dict()
        data.pop("threads")
        data.pop("out_dir")
        return config_hash(data)

    def resolve_gen(self) -> GenSpec:
        """Build the GenSpec named by ``gen``."""
        try:
            if isinstance(self.gen, dict):
                return GenSpec.from_dict(self.gen)
            if self.gen in RECIPES:
                return RECIPES[self.gen](**self.gen_options)
            path = Path(self.gen)
            if not path.is_file():
                raise ConfigError(f"GenSpec file {path} does not exist")
            return GenSpec.from_dict(json.loads(path.read_text()))
        except (DatasetError, TypeError, ValueError) as e:
            message = getattr(e, "message", str(e))
            raise ConfigError(f"Invalid generator spec: {message}") from e

    def probe_counts(self) -> InfluenceProbes:
        try:
            return InfluenceProbes(**self.probes)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid probes {self.probes}: {e}") from e


def resolve_threads(cli_threads: Optional[int], config_threads: Optional[int]) -> int:
    """Thread count: environment variable, then --threads, then the config, then 1."""
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from e
    for source, given in (("--threads", cli_threads), ("config threads", config_threads)):
        if given is not None and given < 1:
            raise ConfigError(f"{source} must be >= 1, got {given}")
    if not env:
        value = next((t for t in (cli_threads, config_threads) if t is not None), 1)
    if value < 1:
        raise ConfigError(f"Thread count must be >= 1, got {value}")
    return value


@dataclass
class RunRecord:
    """One (variant, setting, seed) run."""
    config_hash: str
    experiment: str
    variant: str
    setting: str
    seed: int
    status: str = "ok"
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)
    report: Optional[Dict[str, Any]] = None
    wall_clock: float = 0.0
    artifacts: Dict[str, str] = field(default_factory=dict)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def group(self) -> Tuple[str, str, str]:
        return (self.experiment, self.variant, self.setting)

    def row(self, metric_columns: Sequence[str]) -> Dict[str, Any]:
        base = {
            "config_hash": self.config_hash,
            "experiment": self.experiment,
            "variant": self.variant,
            "setting": self.setting,
            "seed": self.seed,
            "status": self.status,
        }
        base.update({name: self.metrics.get(name) for name in metric_columns})
        return base


@dataclass
class Job:
    variant: str
    setting: str
    seed: int
    model_overrides: Dict[str, Any]
    run: Callable[["Job"], RunRecord] = field(repr=False, default=None)


@dataclass
class TrendOutcome:
    name: str
    held: int
    total: int
    passed: bool
    soft: bool
    detail: str = ""


@dataclass
class TrendCheck:
    """An ordering expected across variants or settings, evaluated per seed.

    Args:
        name: Check name.
        holds: Maps one seed's metric table {(variant, setting): metrics} to True/False,
            or None when the needed values are missing for that seed.
        min_fraction: Fraction of evaluable seeds on which the ordering must hold.
        soft: Soft checks are reported but never counted as failures.
    """
    name: str
    holds: Callable[[Dict[Tuple[str, str], Dict[str, float]]], Optional[bool]]
    min_fraction: float = 0.8
    soft: bool = False

    def evaluate(self, records: Sequence[RunRecord]) -> TrendOutcome:
        by_seed: Dict[int, Dict[Tuple[str, str], Dict[str, float]]] = {}
        for record in records:
            if record.ok:
                by_seed.setdefault(record.seed, {})[(record.variant, record.setting)] = record.metrics
        results = [self.holds(table) for _, table in sorted(by_seed.items())]
        results = [r for r in results if r is not None]
        held = sum(bool(r) for r in results)
        passed = bool(results) and held >= self.min_fraction * len(results)
        return TrendOutcome(self.name, held, len(results), passed, self.soft, f"held in {held}/{len(results)} seeds")


def _value(table, variant: str, setting: str, metric: str) -> Optional[float]:
    value = table.get((variant, setting), {}).get(metric)
    return None if value is None else float(value)


def ordering(name: str, lhs: Tuple[str, str], rhs: Tuple[str, str], metric: str,
             strict: bool = True, soft: bool = False, smaller: bool = False) -> TrendCheck:
    """TrendCheck asserting metric(lhs) > metric(rhs) (or < with smaller=True)."""

    def holds(table):
        a, b = _value(table, *lhs, metric), _value(table, *rhs, metric)
        if a is None or b is None:
            return None
        if smaller:
            a, b = b, a
        return a > b if strict else a >= b

    return TrendCheck(name, holds, soft=soft)


def _d_not_max(table) -> Optional[bool]:
    scores = {variant: m.get("d") for (variant, _), m in table.items() if m.get("d") is not None}
    if "cdvae" not in scores or len(scores) < 2:
        return None
    return scores["cdvae"] < max(scores.values())


def default_trends(config: ExperimentConfig) -> List[TrendCheck]:
    kind = config.experiment
    if kind == ExperimentKind.ABLATE_C:
        return [
            ordering("acc_full_gt_partial", ("cdvae", "full"), ("cdvae", "partial"), "acc_t"),
            ordering("acc_partial_gt_empty", ("cdvae", "partial"), ("cdvae", "empty"), "acc_t"),
        ]
    if kind == ExperimentKind.COMPARE:
        return [
            ordering("ioss_cdvae_lt_vae", ("cdvae", ""), ("vae", ""), "ioss", smaller=True),
            ordering("irs_cdvae_ge_vae", ("cdvae", ""), ("vae", ""), "irs", strict=False),
            TrendCheck("d_cdvae_not_max", _d_not_max, soft=True),
            ordering("recon_cdvae_ioss_lt_vae_ioss", ("cdvae-ioss", ""), ("vae-ioss", ""), "recon", smaller=True, soft=True),
        ]
    if kind == ExperimentKind.OOD:
        return [
            ordering(f"drop_cdvae_le_beta_vae@{s}", ("cdvae", f"{s}"), ("beta-vae", f"{s}"), "drop",
                     strict=False, smaller=True)
            for s in config.severities
        ]
    return []


def superset_gap(records: Sequence[RunRecord]) -> Optional[float]:
    """|mean Acc-T(superset) - mean Acc-T(full)| over completed seeds."""
    full = [r.metrics["acc_t"] for r in records if r.ok and r.setting == "full"]
    sup = [r.metrics["acc_t"] for r in records if r.ok and r.setting == "superset"]
    if not full or not sup:
        return None
    return abs(float(np.mean(sup)) - float(np.mean(full)))


def aggregate(records: Sequence[RunRecord]) -> List[Dict[str, Any]]:
    """Mean and sample std per (experiment, variant, setting) over completed seeds."""
    groups: Dict[Tuple[str, str, str], List[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.group, []).append(record)
    rows = []
    for (experiment, variant, setting), members in groups.items():
        ok = [r for r in members if r.ok]
        row: Dict[str, Any] = {
            "experiment": experiment,
            "variant": variant,
            "setting": setting,
            "n_ok": len(ok),
            "n_failed": len(members) - len(ok),
        }
        names = sorted({name for r in ok for name, v in r.metrics.items() if v is not None})
        for name in names:
            values = np.asarray([r.metrics[name] for r in ok if r.metrics.get(name) is not None], dtype=np.float64)
            row[f"{name}_mean"] = float(np.mean(values))
            row[f"{name}_std"] = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        rows.append(row)
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[RunRecord]
    summary: List[Dict[str, Any]]
    trends: List[TrendOutcome]
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.records)

    @property
    def metric_columns(self) -> List[str]:
        return sorted({name for r in self.records for name in r.metrics})

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.hash,
            "records": [asdict(r) for r in self.records],
            "summary": self.summary,
            "trends": [asdict(t) for t in self.trends],
            "extras": self.extras,
            "counts": {"total": len(self.records), "failed": self.n_failed},
        }

    def records_csv(self) -> str:
        columns = self.metric_columns
        buffer = io.StringIO()
        writer = csv.DictWriter(
            buffer, fieldnames=["config_hash", "experiment", "variant", "setting", "seed", "status", *columns],
            lineterminator="\n",
        )
        writer.writeheader()
        for record in self.records:
            writer.writerow({k: ("" if v is None else v) for k, v in record.row(columns).items()})
        return buffer.getvalue()

    def summary_csv(self) -> str:
        columns = []
        for row in self.summary:
            columns.extend(k for k in row if k not in columns)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n", restval="")
        writer.writeheader()
        writer.writerows(self.summary)
        return buffer.getvalue()

    def write(self, fmt: str = "csv") -> List[Path]:
        """Write the reports for fmt. compare always writes the summary CSV and the per-seed JSON."""
        out = Path(self.config.out_dir)
        both = self.config.experiment == ExperimentKind.COMPARE
        paths = []
        if fmt == "csv" or both:
            paths += [out / REPORT_CSV, out / SUMMARY_CSV]
            atomic_write_text(out / REPORT_CSV, self.records_csv())
            atomic_write_text(out / SUMMARY_CSV, self.summary_csv())
        if fmt == "json" or both:
            paths.append(out / REPORT_JSON)
            atomic_write_text(out / REPORT_JSON, json.dumps(self.to_dict(), indent=2))
        return paths


def model_config(overrides: Dict[str, Any], seed: int, n_labels: int, epochs: Optional[int] = None,
                 classifier: Optional[Tuple[str, int]] = None) -> CdVaeConfig:
    data = {"n_labels": n_labels, **overrides, "seed": int(seed)}
    if epochs is not None:
        data.setdefault("epochs", epochs)
    if classifier is not None:
        target, n_classes = classifier
        data.setdefault("head", "classifier")
        data.setdefault("target_factor", target)
        data.setdefault("n_classes", n_classes)
    try:
        return CdVaeConfig.from_dict(data)
    except ModelError as e:
        raise ConfigError(f"Invalid model config {overrides}: {e.message}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid model config {overrides}: {e}") from e


def accuracy(model: Model, ds: LabeledDataset, target_factor: str) -> float:
    labels = ds.confounders if isinstance(model, CVaeModel) else None
    probs = model.classify(ds.flat_observations(), labels)
    return float(np.mean(np.argmax(probs, axis=1) == ds.factor(target_factor)))


def latent_mixture_lc(model: Model, ds: LabeledDataset, max_samples: int = 1024) -> Optional[float]:
    """l_c of the batch-averaged mixture of encoder heads (mixture models only)."""
    if not isinstance(model, CdVaeModel):
        return None
    x = ds.flat_observations()[:max_samples]
    with no_grad():
        enc = model.encode(x)
    weights = model.assignment(x)
    if PiPolicy(model.config.pi_policy) == PiPolicy.L2:
        # l2-normalized rows square to probability vectors
        weights = np.square(weights)
    weights = weights.mean(axis=0)
    mixture = mixture_from_encoder(enc.mu.data.mean(axis=0), enc.logvar.data.mean(axis=0), weights)
    return lc_moment(mixture, reduce="mean")


LABEL_BUILDERS: Dict[LabelChoice, Callable[[LabeledDataset, ExperimentConfig, int], LabeledDataset]] = {
    LabelChoice.EMPTY: lambda ds, cfg, seed: relabel_empty(ds),
    LabelChoice.PARTIAL: lambda ds, cfg, seed: relabel_partial(ds, cfg.partial_groups),
    LabelChoice.FULL: lambda ds, cfg, seed: relabel_full(ds),
    LabelChoice.SUPERSET: lambda ds, cfg, seed: relabel_superset(ds, derive_seed(seed, 5)),
    LabelChoice.RANDOM: lambda ds, cfg, seed: relabel_random(ds, ds.n_confounder_values, derive_seed(seed, 6)),
}


class ExperimentRunner:
    """
    Expands an ExperimentConfig into jobs, runs them and collects the result.

    Args:
        config: The experiment.
        threads: Worker threads; jobs are independent and seed-isolated.
        log_level: Verbosity of the runner's logger.
    """

    def __init__(self, config: ExperimentConfig, threads: int = 1, log_level: LogLevel = LogLevel.INFO):
        self.config = config
        self.threads = threads
        self.logger = Logger(log_level)
        self.hash = config.hash
        self.spec: Optional[GenSpec] = None

    @property
    def run_dir(self) -> Path:
        return Path(self.config.out_dir) / "runs" / self.hash

    def _classifier(self) -> Tuple[str, int]:
        spec = self.spec.factor_spec
        try:
            return self.config.target_factor, spec.cards[spec.index(self.config.target_factor)]
        except DatasetError as e:
            raise ConfigError(e.message) from e

    def _train(self, job: Job, cfg: CdVaeConfig, train_ds: LabeledDataset, tag: str) -> TrainResult:
        result = train(cfg, train_ds)
        if not result.ok:
            raise RunFailure(f"training diverged after {result.epochs_run} epochs: {result.message}")
        save_model(result, self.run_dir / tag)
        return result

    @staticmethod
    def _tag(job: Job) -> str:
        setting = f"-{job.setting}" if job.setting else ""
        return f"{job.variant}{setting}-s{job.seed}"

    # job bodies

    def _generate(self, job: Job) -> RunRecord:
        ds = sample_dataset(self.spec, self.config.n_train, job.seed)
        path = Path(self.config.out_dir) / "datasets" / f"{self.hash}-s{job.seed}"
        write_dataset(ds, path)
        record = self._record(job)
        record.metrics = {"n": float(len(ds))}
        record.artifacts = {"dataset": str(path)}
        return record

    def _training_data(self, seed: int) -> LabeledDataset:
        if self.config.dataset:
            return read_dataset(self.config.dataset)
        return sample_dataset(self.spec, self.config.n_train, derive_seed(seed, 1))

    def _train_job(self, job: Job) -> RunRecord:
        train_ds = self._training_data(job.seed)
        cfg = model_config(job.model_overrides, job.seed, train_ds.n_confounder_values)
        result = self._train(job, cfg, train_ds, self._tag(job))
        record = self._record(job)
        last = result.history[-1] if result.history else None
        record.metrics = {"loss": None if last is None else last.total, "epochs": float(result.epochs_run)}
        record.artifacts = {"model": str(self.run_dir / self._tag(job))}
        return record

    def _eval_job(self, job: Job) -> RunRecord:
        model = load_model(self.config.model_dir)
        eval_ds = (read_dataset(self.config.dataset) if self.config.dataset
                   else sample_dataset(self.spec, self.config.n_eval, derive_seed(job.seed, 2)))
        report = evaluate_representation(
            model, eval_ds, decorrelated_spec(self.spec), self.config.probe_counts(), job.seed, self.config.metrics,
        )
        record = self._record(job)
        record.metrics = _report_metrics(report)
        record.report = report.to_dict()
        return record

    def _ood_job(self, job: Job) -> RunRecord:
        severity = float(job.setting)
        train_ds, target_ds = shifted_split(self.spec, severity, self.config.n_train, self.config.n_eval,
                                            derive_seed(job.seed, 1))
        source_ds, _ = shifted_split(self.spec, severity, self.config.n_eval, 1, derive_seed(job.seed, 2))
        cfg = model_config(job.model_overrides, job.seed, train_ds.n_confounder_values, classifier=self._classifier())
        result = self._train(job, cfg, train_ds, self._tag(job))
        acc_s = accuracy(result.model, source_ds, cfg.target_factor)
        acc_t = accuracy(result.model, target_ds, cfg.target_factor)
        record = self._record(job)
        record.metrics = {"acc_s": acc_s, "acc_t": acc_t, "drop": acc_s - acc_t}
        return record

    def _ablate_job(self, job: Job) -> RunRecord:
        severity = float(self.config.severities[0])
        train_ds, target_ds = shifted_split(self.spec, severity, self.config.n_train, self.config.n_eval,
                                            derive_seed(job.seed, 1))
        train_ds = LABEL_BUILDERS[LabelChoice(job.setting)](train_ds, self.config, job.seed)
        cfg = model_config(job.model_overrides, job.seed, train_ds.n_confounder_values, classifier=self._classifier())
        result = self._train(job, cfg, train_ds, self._tag(job))
        record = self._record(job)
        record.metrics = {"acc_t": accuracy(result.model, target_ds, cfg.target_factor)}
        if "irs" in self.config.metrics:
            m = influence(result.model.encode_mean, decorrelated_spec(self.spec), self.config.probe_counts(), job.seed)
            try:
                record.metrics["irs"] = irs(m)
            except MetricError as e:
                self.logger.warning(self._tag(job), f"IRS unavailable: {e.message}")
                record.metrics["irs"] = None
        return record

    def _compare_job(self, job: Job) -> RunRecord:
        train_ds = sample_dataset(self.spec, self.config.n_train, derive_seed(job.seed, 1))
        eval_ds = sample_dataset(self.spec, self.config.n_eval, derive_seed(job.seed, 2))
        cfg = model_config(job.model_overrides, job.seed, train_ds.n_confounder_values)
        if cfg.uses_classifier:
            raise ConfigError(f"compare needs generative variants, got '{cfg.variant}' with head '{cfg.head}'")
        result = self._train(job, cfg, train_ds, self._tag(job))
        report = evaluate_representation(
            result.model, eval_ds, decorrelated_spec(self.spec), self.config.probe_counts(), job.seed,
            self.config.metrics,
        )
        record = self._record(job)
        record.metrics = _report_metrics(report)
        record.metrics["lc"] = latent_mixture_lc(result.model, eval_ds)
        record.report = report.to_dict()
        return record

    def _record(self, job: Job) -> RunRecord:
        return RunRecord(self.hash, self.config.kind, job.variant, job.setting, int(job.seed))

    def jobs(self) -> List[Job]:
        cfg = self.config
        kind = cfg.experiment
        body = {
            ExperimentKind.GENERATE: self._generate,
            ExperimentKind.TRAIN: self._train_job,
            ExperimentKind.EVAL: self._eval_job,
            ExperimentKind.OOD: self._ood_job,
            ExperimentKind.ABLATE_C: self._ablate_job,
            ExperimentKind.COMPARE: self._compare_job,
        }[kind]
        if kind == ExperimentKind.GENERATE:
            return [Job("data", "", s, {}, body) for s in cfg.seeds]
        if kind == ExperimentKind.EVAL:
            return [Job("model", "", s, {}, body) for s in cfg.seeds]
        if kind == ExperimentKind.OOD:
            settings = [f"{s}" for s in cfg.severities]
        elif kind == ExperimentKind.ABLATE_C:
            settings = list(cfg.label_choices)
        else:
            settings = [""]
        out = []
        for overrides in cfg.models:
            variant = str(overrides.get("variant", "cdvae"))
            try:
                Variant(variant)
            except ValueError as e:
                raise ConfigError(f"Unknown variant '{variant}'") from e
            for setting in settings:
                for seed in cfg.seeds:
                    out.append(Job(variant, setting, seed, overrides, body))
        return out

    def _run_job(self, job: Job) -> RunRecord:
        start = time.perf_counter()
        tag = self._tag(job)
        self.logger.debug(tag, "started")
        try:
            record = job.run(job)
        except ConfigError:
            raise
        except (
            RunFailure, ModelError, MetricError, DatasetError, NDiffError, GaussMixError, SCMError, OSError, ValueError,
        ) as e:
            message = getattr(e, "message", str(e))
            self.logger.error(tag, f"run failed: {message}")
            record = self._record(job)
            record.status = "failed"
            record.message = message
        record.wall_clock = time.perf_counter() - start
        if record.ok:
            self.logger.info(tag, f"done in {record.wall_clock:.1f}s")
        return record

    def _check_paths(self):
        cfg = self.config
        if cfg.experiment == ExperimentKind.EVAL and not cfg.model_dir:
            raise ConfigError("eval needs 'model_dir'")
        for key in ("dataset", "model_dir"):
            value = getattr(cfg, key)
            if value and not Path(value).is_dir():
                raise ConfigError(f"{key} {value} does not exist")

    def run(self) -> ExperimentResult:
        cfg = self.config
        self._check_paths()
        self.spec = cfg.resolve_gen()
        jobs = self.jobs()
        self.logger.info(
            f"Experiment {cfg.kind}",
            f"config={self.hash} jobs={len(jobs)} seeds={cfg.seeds} threads={self.threads}",
        )
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                records = list(pool.map(self._run_job, jobs))
        else:
            records = [self._run_job(job) for job in jobs]

        trends = [check.evaluate(records) for check in default_trends(cfg)]
        for outcome in trends:
            if outcome.passed:
                self.logger.info(f"Trend {outcome.name}", outcome.detail)
            else:
                self.logger.warning(f"Trend {outcome.name}{' (soft)' if outcome.soft else ''}", f"not met: {outcome.detail}")
        extras: Dict[str, Any] = {}
        if cfg.experiment == ExperimentKind.ABLATE_C:
            extras["superset_full_gap"] = superset_gap(records)
        result = ExperimentResult(cfg, records, aggregate(records), trends, extras)
        self.logger.info(
            f"Experiment {cfg.kind}", f"config={self.hash} finished: {len(records) - result.n_failed}/{len(records)} ok",
        )
        return result


def _report_metrics(report) -> Dict[str, Optional[float]]:
    return {
        "recon": report.recon, "d": report.d, "ioss": report.ioss, "irs": report.irs,
        "uc": report.uc, "cg": report.cg, "mic_mean": report.mic_mean, "tic_mean": report.tic_mean,
    }


def run_experiment(config: ExperimentConfig, threads: int = 1, log_level: LogLevel = LogLevel.INFO) -> ExperimentResult:
    return ExperimentRunner(config, threads, log_level).run()


def run_generate(config: ExperimentConfig, **kwargs) -> ExperimentResult:
    return run_experiment(_as_kind(config, ExperimentKind.GENERATE), **kwargs)


def run_train(config: ExperimentConfig, **kwargs) -> ExperimentResult:
    return run_experiment(_as_kind(config, ExperimentKind.TRAIN), **kwargs)


def run_eval(config: ExperimentConfig, **kwargs) -> ExperimentResult:
    return run_experiment(_as_kind(config, ExperimentKind.EVAL), **kwargs)


def run_ood(config: ExperimentConfig, **kwargs) -> ExperimentResult:
    return run_experiment(_as_kind(config, ExperimentKind.OOD), **kwargs)


def run_ablate_c(config: ExperimentConfig, **kwargs) -> ExperimentResult:
    return run_experiment(_as_kind(config, ExperimentKind.ABLATE_C), **kwargs)


def run_compare(config: ExperimentConfig, **kwargs) -> ExperimentResult:
    return run_experiment(_as_kind(config, ExperimentKind.COMPARE), **kwargs)


def _as_kind(config: ExperimentConfig, kind: ExperimentKind) -> ExperimentConfig:
    if config.experiment != kind:
        raise ConfigError(f"Expected a '{kind.value}' config, got '{config.kind}'")
    return config
