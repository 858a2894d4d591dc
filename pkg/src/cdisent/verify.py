"""
Named property checks over the exact oracles and the gradient engine.

Each check is small enough to run in seconds; ``cdisent verify`` runs the default
suite and exits non-zero if any check fails.
"""

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .gaussmix import ComponentGaussian, MixtureLatent, kl_unit_cov, lc_moment
from .logger import get_logger
from .models import CdVaeConfig, Variant, build_model
from .ndiff import grad_check
from .scm import (
    DoRule,
    RandomSCMSpec,
    ZeroSupportPolicy,
    check_rule,
    confounding_gap,
    random_dag_scm,
    random_scm,
)
from .utils import derive_seed


@dataclass
class CheckOutcome:
    """Result of one property check."""
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


class PropertyCheck(ABC):
    """Abstract base class for property checks.

    Subclasses implement :meth:`evaluate`, returning whether the property held and
    a one-line detail message.
    """

    def __init__(self, name: str, description: str):
        self.name = name
        self.description = description

    @abstractmethod
    def evaluate(self, seed: int) -> CheckOutcome:
        pass

    def run(self, seed: int) -> CheckOutcome:
        start = time.perf_counter()
        outcome = self.evaluate(seed)
        outcome.seconds = time.perf_counter() - start
        return outcome

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name='{self.name}')"


class AdjustmentOracleCheck(PropertyCheck):
    """Adjusting over a superset of the true confounders recovers P(G1 | do(G0)) exactly;
    the empty adjustment set leaves a visible gap in most SCMs."""

    def __init__(self, n_scms: int = 100, tolerance: float = 1e-12, gap: float = 0.01, min_gap_fraction: float = 0.9):
        super().__init__("adjustment_oracle", "backdoor adjustment over C* matches the interventional table")
        self.n_scms = n_scms
        self.tolerance = tolerance
        self.gap = gap
        self.min_gap_fraction = min_gap_fraction

    def evaluate(self, seed: int) -> CheckOutcome:
        worst = 0.0
        gapped = 0
        for i in range(self.n_scms):
            spec = RandomSCMSpec(n_confounders=1, n_factors=2, n_irrelevant=i % 2, max_cardinality=3, min_strength=0.2)
            scm = random_scm(spec, derive_seed(seed, i))
            superset = scm.confounders + [n for n in scm.names if n.startswith("U")]
            for adjust in (scm.confounders, superset):
                worst = max(worst, confounding_gap(scm, "G1", "G0", adjust, ZeroSupportPolicy.ERROR))
            if confounding_gap(scm, "G1", "G0", []) > self.gap:
                gapped += 1
        fraction = gapped / self.n_scms
        passed = worst <= self.tolerance and fraction >= self.min_gap_fraction
        return CheckOutcome(
            self.name, passed,
            f"max |adjusted - interventional| = {worst:.3e}; empty-set gap > {self.gap} in {fraction:.0%} of SCMs",
        )


class DoCalculusCheck(PropertyCheck):
    """Whenever a rule's d-separation condition holds, both sides agree exactly."""

    def __init__(self, n_graphs: int = 40, tolerance: float = 1e-10):
        super().__init__("do_calculus", "rules 1-3 hold on random 3-4 node DAGs")
        self.n_graphs = n_graphs
        self.tolerance = tolerance

    def evaluate(self, seed: int) -> CheckOutcome:
        worst = 0.0
        applicable: Dict[DoRule, int] = {rule: 0 for rule in DoRule}
        for i in range(self.n_graphs):
            scm = random_dag_scm(3 + i % 2, derive_seed(seed, i), edge_prob=0.5, max_cardinality=2)
            rng = np.random.default_rng(derive_seed(seed, i, 1))
            names = list(rng.permutation(scm.names))
            y, x, z = [names[0]], [names[1]], [names[2]]
            w = [names[3]] if len(names) > 3 else []
            for rule in DoRule:
                result = check_rule(scm, rule, y, x, z, w)
                if result.applicable:
                    applicable[rule] += 1
                    worst = max(worst, result.max_diff)
        passed = worst <= self.tolerance and all(count > 0 for count in applicable.values())
        counts = ", ".join(f"rule {int(rule)}: {count}" for rule, count in applicable.items())
        return CheckOutcome(self.name, passed, f"max diff where applicable = {worst:.3e} ({counts})")


def random_diagonal_mixture(rng: np.random.Generator) -> MixtureLatent:
    dim = int(rng.integers(2, 5))
    n_comp = int(rng.integers(1, 4))
    components = [
        ComponentGaussian(rng.normal(0.0, 2.0, size=dim), var=rng.uniform(0.25, 4.0, size=dim))
        for _ in range(n_comp)
    ]
    return MixtureLatent(components, rng.dirichlet(np.ones(n_comp)))


def random_correlated_mixture(rng: np.random.Generator) -> MixtureLatent:
    """Diagonal mixture in which one component (weight >= 0.1) has a correlated coordinate pair."""
    dim = int(rng.integers(2, 5))
    n_comp = int(rng.integers(1, 4))
    weights = 0.1 + (1.0 - 0.1 * n_comp) * rng.dirichlet(np.ones(n_comp))
    components = [
        ComponentGaussian(rng.normal(0.0, 2.0, size=dim), var=rng.uniform(0.25, 4.0, size=dim))
        for _ in range(n_comp - 1)
    ]
    std = rng.uniform(0.5, 2.0, size=dim)
    corr = np.eye(dim)
    a, b = rng.choice(dim, size=2, replace=False)
    rho = rng.uniform(0.2, 0.9) * rng.choice([-1.0, 1.0])
    corr[a, b] = corr[b, a] = rho
    components.append(ComponentGaussian(rng.normal(0.0, 2.0, size=dim), cov=corr * np.outer(std, std)))
    return MixtureLatent(components, weights)


class MixtureIndependenceCheck(PropertyCheck):
    """Diagonal components give l_c = 0; a correlated component makes it positive."""

    def __init__(self, n_mixtures: int = 200, zero_tol: float = 1e-9, positive_floor: float = 1e-3):
        super().__init__("mixture_independence", "l_c vanishes exactly for diagonal mixture components")
        self.n_mixtures = n_mixtures
        self.zero_tol = zero_tol
        self.positive_floor = positive_floor

    def evaluate(self, seed: int) -> CheckOutcome:
        rng = np.random.default_rng(derive_seed(seed, 0))
        diag_max = max(lc_moment(random_diagonal_mixture(rng), reduce="sup") for _ in range(self.n_mixtures))
        corr_min = min(lc_moment(random_correlated_mixture(rng), reduce="sup") for _ in range(self.n_mixtures))
        passed = diag_max <= self.zero_tol and corr_min > self.positive_floor
        return CheckOutcome(self.name, passed, f"diagonal max l_c = {diag_max:.3e}; correlated min l_c = {corr_min:.3e}")


class KLNonNegativityCheck(PropertyCheck):
    def __init__(self, n_draws: int = 500):
        super().__init__("kl_nonnegative", "variance-only KL is >= 0 and zero at unit variance")
        self.n_draws = n_draws

    def evaluate(self, seed: int) -> CheckOutcome:
        rng = np.random.default_rng(seed)
        values = [kl_unit_cov(np.exp(rng.uniform(-5, 5, size=int(rng.integers(1, 9))))) for _ in range(self.n_draws)]
        at_unit = kl_unit_cov(np.ones(4))
        passed = min(values) >= 0.0 and at_unit == 0.0
        return CheckOutcome(self.name, passed, f"min KL = {min(values):.3e}; KL at unit variance = {at_unit}")


def tiny_config(variant: Variant, seed: int) -> CdVaeConfig:
    """Small float64 configuration with every loss weight positive."""
    head = "classifier" if variant == Variant.CLASSIFIER else "decoder"
    return CdVaeConfig(
        latent_dim=2, n_labels=2, encoder_hidden=[3], decoder_hidden=[3], classifier_hidden=[],
        beta=1.5 if variant == Variant.BETA_VAE else 1.0,
        lambda_rec=1.0, lambda_cls=0.7, lambda_kl=0.5, lambda_ioss=0.3, lambda_task=1.0,
        seed=seed, variant=variant.value, head=head, n_classes=2, target_factor="g0", dtype="float64",
    )


def variant_grad_error(variant: Variant, seed: int, obs_dim: int = 3, eps: float = 1e-4) -> float:
    """Relative gradient error of the full training loss (sampled noise included)."""
    config = tiny_config(variant, seed)
    model = build_model(config, obs_dim)
    batch = 32 if config.uses_ioss else 2
    rng = np.random.default_rng(derive_seed(seed, 7))
    x = rng.normal(size=(batch, obs_dim))
    labels = rng.integers(0, 2, size=batch)
    targets = rng.integers(0, 2, size=batch)
    noise = model.draw_noise(batch, rng)

    def fn(params):
        return model.loss(x, labels, targets if config.uses_classifier else None, noise, params)[0]

    return grad_check(fn, model.params, eps)


class GradientIntegrityCheck(PropertyCheck):
    def __init__(self, seeds: Sequence[int] = tuple(range(20)), tolerance: float = 1e-4,
                 variants: Optional[Sequence[Variant]] = None):
        super().__init__("gradient_integrity", "analytic gradients of every variant's loss match finite differences")
        self.seeds = list(seeds)
        self.tolerance = tolerance
        self.variants = list(variants) if variants is not None else list(Variant)

    def evaluate(self, seed: int) -> CheckOutcome:
        worst: Dict[str, float] = {}
        for variant in self.variants:
            worst[variant.value] = max(variant_grad_error(variant, derive_seed(seed, s)) for s in self.seeds)
        top = max(worst, key=worst.get)
        passed = worst[top] < self.tolerance
        return CheckOutcome(self.name, passed, f"max relative error {worst[top]:.3e} ({top})")


class PropertyVerifier:
    """Runs a suite of property checks.

    Example:
        >>> verifier = PropertyVerifier([KLNonNegativityCheck(), MixtureIndependenceCheck()])
        >>> outcomes = verifier.run(seed=0)
        >>> all(o.passed for o in outcomes)

    Args:
        checks: Checks to run, in order.

    Raises:
        ValueError: If two checks share a name.
    """

    def __init__(self, checks: List[PropertyCheck]):
        self.checks: List[PropertyCheck] = []
        for check in checks:
            self.add_check(check)

    def add_check(self, check: PropertyCheck):
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"Check with name '{check.name}' already exists")
        self.checks.append(check)

    def run(self, seed: int = 0, on_outcome: Optional[Callable[[CheckOutcome], None]] = None) -> List[CheckOutcome]:
        logger = get_logger()
        outcomes = []
        for check in self.checks:
            try:
                outcome = check.run(seed)
            except Exception as e:
                outcome = CheckOutcome(check.name, False, f"raised {type(e).__name__}: {e}")
            if outcome.passed:
                logger.info(f"verify {outcome.name}", f"passed in {outcome.seconds:.2f}s: {outcome.detail}")
            else:
                logger.error(f"verify {outcome.name}", f"FAILED: {outcome.detail}")
            if on_outcome is not None:
                on_outcome(outcome)
            outcomes.append(outcome)
        return outcomes


def default_verifier() -> PropertyVerifier:
    return PropertyVerifier([
        AdjustmentOracleCheck(),
        DoCalculusCheck(),
        MixtureIndependenceCheck(),
        KLNonNegativityCheck(),
        GradientIntegrityCheck(),
    ])
