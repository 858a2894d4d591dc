"""
Exact discrete structural causal models.

A :class:`DiscreteSCM` holds a small DAG of categorical variables with one
conditional probability table (CPT) per variable. Joint and interventional
distributions are computed exactly as dense tables, which makes the module an
oracle for the backdoor adjustment formula and for the do-calculus rules.
"""

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .constant import MAX_JOINT_ENTRIES, MAX_SCM_CARDINALITY, MAX_SCM_VARIABLES, TABLE_TOLERANCE
from .logger import get_logger
from .utils import atomic_write_text


class SCMError(Exception):
    """Base error for structural causal model operations."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ZeroSupportError(SCMError):
    """Raised when an adjustment needs P(treatment, c) for a cell with zero probability."""

    def __init__(self, message: str, cells: List[Dict[str, int]]):
        self.cells = cells
        super().__init__(message)


class TableSizeError(SCMError):
    """Raised when a joint table would exceed the entry cap."""


class VariableRole(str, Enum):
    CONFOUNDER = "confounder"
    FACTOR = "factor"
    OTHER = "other"


class ZeroSupportPolicy(str, Enum):
    ERROR = "error"
    SKIP = "skip"


@dataclass(frozen=True)
class Variable:
    name: str
    cardinality: int
    role: VariableRole = VariableRole.OTHER


class DistTable:
    """
    Dense probability table over the joint assignments of a variable subset.

    Args:
        variables: Variable names, one per table axis.
        cards: Cardinality of each variable.
        table: Probabilities with shape ``cards``; must be nonnegative and sum to 1.
    """

    def __init__(self, variables: Sequence[str], cards: Sequence[int], table: np.ndarray):
        self.variables: Tuple[str, ...] = tuple(variables)
        self.cards: Tuple[int, ...] = tuple(int(c) for c in cards)
        table = np.array(table, dtype=np.float64)
        if table.shape != self.cards:
            raise SCMError(f"Table shape {table.shape} does not match cardinalities {self.cards}")
        if np.any(table < 0):
            raise SCMError("Distribution table has negative entries")
        total = float(table.sum())
        if abs(total - 1.0) > TABLE_TOLERANCE:
            raise SCMError(f"Distribution table sums to {total!r}, expected 1")
        table.setflags(write=False)
        self.table = table

    def axis(self, name: str) -> int:
        if name not in self.variables:
            raise SCMError(f"Variable '{name}' is not in table over {list(self.variables)}")
        return self.variables.index(name)

    def marginal(self, names: Sequence[str]) -> "DistTable":
        """Marginal over names, with axes in the given order."""
        names = list(names)
        if len(set(names)) != len(names):
            raise SCMError(f"Duplicate variables in marginal request {names}")
        keep = [self.axis(n) for n in names]
        drop = tuple(i for i in range(len(self.variables)) if i not in keep)
        summed = self.table.sum(axis=drop) if drop else self.table
        remaining = [i for i in range(len(self.variables)) if i in keep]
        order = [remaining.index(i) for i in keep]
        return DistTable(names, [self.cards[i] for i in keep], np.transpose(summed, order))

    def prob(self, assignment: Mapping[str, int]) -> float:
        return float(self.table[tuple(assignment[n] for n in self.variables)])

    def __repr__(self) -> str:
        return f"DistTable(variables={list(self.variables)}, cards={list(self.cards)})"


@dataclass(frozen=True)
class ConditionalTable:
    """P(targets | given) with axes ``given + targets``; unsupported rows are zero and masked."""
    given: Tuple[str, ...]
    targets: Tuple[str, ...]
    table: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class InterventionalTable:
    """Row t holds the estimate of P(target | do(treatment = t))."""
    treatment: str
    target: str
    table: np.ndarray
    skipped: List[Dict[str, int]] = field(default_factory=list)

    def row(self, value: int) -> np.ndarray:
        return self.table[value]


class DiscreteSCM:
    """
    Immutable discrete structural causal model.

    Args:
        variables: Ordered variables with cardinalities and role tags.
        parents: Parent list per variable name; missing entries mean no parents.
        cpts: Per variable, an array of shape ``(*parent_cards, card)`` whose last axis
            sums to one.
    """

    def __init__(
        self,
        variables: Sequence[Variable],
        parents: Mapping[str, Sequence[str]],
        cpts: Mapping[str, np.ndarray],
    ):
        self.variables: Tuple[Variable, ...] = tuple(variables)
        self.names: Tuple[str, ...] = tuple(v.name for v in self.variables)
        self._by_name = {v.name: v for v in self.variables}
        if len(self._by_name) != len(self.variables):
            raise SCMError(f"Variable names must be unique, got {list(self.names)}")
        if len(self.variables) > MAX_SCM_VARIABLES:
            raise SCMError(f"At most {MAX_SCM_VARIABLES} variables are supported, got {len(self.variables)}")
        for v in self.variables:
            if not 1 <= v.cardinality <= MAX_SCM_CARDINALITY:
                raise SCMError(f"Variable '{v.name}' has cardinality {v.cardinality}, allowed 1..{MAX_SCM_CARDINALITY}")

        unknown = set(parents) - set(self.names)
        if unknown:
            raise SCMError(f"Parents given for unknown variables {sorted(unknown)}")
        self.parents: Dict[str, Tuple[str, ...]] = {n: tuple(parents.get(n, ())) for n in self.names}

        graph = nx.DiGraph()
        graph.add_nodes_from(self.names)
        for child, plist in self.parents.items():
            for parent in plist:
                if parent not in self._by_name:
                    raise SCMError(f"Variable '{child}' has unknown parent '{parent}'")
                graph.add_edge(parent, child)
        if not nx.is_directed_acyclic_graph(graph):
            raise SCMError(f"Graph is not acyclic: cycle {nx.find_cycle(graph)}")
        self.graph = nx.freeze(graph)
        self._check_roles()

        self.cpts: Dict[str, np.ndarray] = {}
        for name in self.names:
            if name not in cpts:
                raise SCMError(f"Missing CPT for variable '{name}'")
            expected = tuple(self.card(p) for p in self.parents[name]) + (self.card(name),)
            cpt = np.array(cpts[name], dtype=np.float64)
            if cpt.shape != expected:
                raise SCMError(f"CPT for '{name}' has shape {cpt.shape}, expected {expected}")
            if np.any(cpt < 0):
                raise SCMError(f"CPT for '{name}' has negative entries")
            worst = float(np.max(np.abs(cpt.sum(axis=-1) - 1.0)))
            if worst > TABLE_TOLERANCE:
                raise SCMError(f"CPT rows for '{name}' deviate from 1 by {worst:.3e}")
            cpt.setflags(write=False)
            self.cpts[name] = cpt

        position = {n: i for i, n in enumerate(self.names)}
        self.order: Tuple[str, ...] = tuple(nx.lexicographical_topological_sort(self.graph, key=position.get))

    def _check_roles(self):
        factors = set(self.factors)
        for name in self.confounders:
            bad = [p for p in self.parents[name] if self.role(p) != VariableRole.CONFOUNDER]
            if bad:
                raise SCMError(f"Confounder '{name}' has non-confounder parents {bad}")
        for name in factors:
            bad = [p for p in self.parents[name] if p in factors]
            if bad:
                raise SCMError(f"Factor '{name}' is caused by other factors {bad}")

    def card(self, name: str) -> int:
        return self.variable(name).cardinality

    def role(self, name: str) -> VariableRole:
        return self.variable(name).role

    def variable(self, name: str) -> Variable:
        if name not in self._by_name:
            raise SCMError(f"Unknown variable '{name}'. Available variables: {list(self.names)}")
        return self._by_name[name]

    @property
    def confounders(self) -> List[str]:
        return [v.name for v in self.variables if v.role == VariableRole.CONFOUNDER]

    @property
    def factors(self) -> List[str]:
        return [v.name for v in self.variables if v.role == VariableRole.FACTOR]

    def descendants(self, name: str) -> set:
        return nx.descendants(self.graph, self.variable(name).name)

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "cardinality": v.cardinality, "role": VariableRole(v.role).value}
                for v in self.variables
            ],
            "edges": [[p, child] for child in self.names for p in self.parents[child]],
            "cpts": {name: self.cpts[name].tolist() for name in self.names},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteSCM":
        try:
            variables = [
                Variable(v["name"], int(v["cardinality"]), VariableRole(v.get("role", "other")))
                for v in data["variables"]
            ]
            parents: Dict[str, List[str]] = {v.name: [] for v in variables}
            for parent, child in data.get("edges", []):
                if child not in parents:
                    raise SCMError(f"Edge points to unknown variable '{child}'")
                parents[child].append(parent)
            return cls(variables, parents, {k: np.asarray(v) for k, v in data["cpts"].items()})
        except (KeyError, TypeError, ValueError) as e:
            raise SCMError(f"Invalid SCM description: {e}") from e

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteSCM):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.parents == other.parents
            and all(np.array_equal(self.cpts[n], other.cpts[n]) for n in self.names)
        )

    def __repr__(self) -> str:
        return f"DiscreteSCM(variables={list(self.names)}, edges={list(self.graph.edges)})"


def joint(scm: DiscreteSCM) -> DistTable:
    """Exact joint distribution by chain-rule product over the topological order."""
    cards = [v.cardinality for v in scm.variables]
    size = int(np.prod(cards))
    if size > MAX_JOINT_ENTRIES:
        raise TableSizeError(f"Joint table would have {size} entries, cap is {MAX_JOINT_ENTRIES}")
    index = {n: i for i, n in enumerate(scm.names)}
    table = np.ones(cards, dtype=np.float64)
    for name in scm.order:
        axes = [index[p] for p in scm.parents[name]] + [index[name]]
        cpt = np.transpose(scm.cpts[name], np.argsort(axes))
        shape = [cards[i] if i in axes else 1 for i in range(len(cards))]
        table = table * cpt.reshape(shape)
    return DistTable(scm.names, cards, table)


def intervene(scm: DiscreteSCM, assignments: Mapping[str, int]) -> DiscreteSCM:
    """Graph surgery: cut incoming edges of each assigned variable and fix its value."""
    parents = dict(scm.parents)
    cpts = dict(scm.cpts)
    for name, value in assignments.items():
        card = scm.card(name)
        if not 0 <= int(value) < card:
            raise SCMError(f"Value {value} is out of range for '{name}' with cardinality {card}")
        parents[name] = ()
        point = np.zeros(card)
        point[int(value)] = 1.0
        cpts[name] = point
    return DiscreteSCM(scm.variables, parents, cpts)


def interventional_dist(scm: DiscreteSCM, target: Union[str, Sequence[str]], do_map: Mapping[str, int]) -> DistTable:
    """Exact P(target | do(do_map)) by truncated factorization."""
    targets = [target] if isinstance(target, str) else list(target)
    return joint(intervene(scm, do_map)).marginal(targets)


def conditional(table: DistTable, targets: Sequence[str], given: Sequence[str]) -> ConditionalTable:
    """P(targets | given) from a joint table; given-cells with zero mass are masked out."""
    targets, given = list(targets), list(given)
    overlap = set(targets) & set(given)
    if overlap:
        raise SCMError(f"Targets and conditioning set overlap on {sorted(overlap)}")
    m = table.marginal(given + targets).table
    n_given = len(given)
    mass = m.reshape(m.shape[:n_given] + (-1,)).sum(axis=-1)
    support = mass > 0
    expanded = mass.reshape(mass.shape + (1,) * len(targets))
    cond = np.divide(m, expanded, out=np.zeros_like(m), where=np.broadcast_to(expanded > 0, m.shape))
    return ConditionalTable(tuple(given), tuple(targets), cond, support)


def adjustment_estimate(
    joint_table: DistTable,
    target: str,
    treatment: str,
    adjust_set: Sequence[str],
    policy: ZeroSupportPolicy = ZeroSupportPolicy.ERROR,
) -> InterventionalTable:
    """Backdoor adjustment: sum over c of P(target | treatment, c) P(c).

    Args:
        joint_table: Joint distribution containing target, treatment and adjust_set.
        target: Outcome variable.
        treatment: Intervened variable.
        adjust_set: Label set to adjust over; may be empty.
        policy: What to do with (treatment, c) cells of zero mass while P(c) > 0.
            ERROR raises ZeroSupportError; SKIP drops those cells, renormalizes the
            remaining weights and reports them in ``skipped``.
    """
    adjust = list(adjust_set)
    if target in adjust or treatment in adjust or target == treatment:
        raise SCMError(
            f"Adjustment set {adjust} must be disjoint from target '{target}' and treatment '{treatment}'"
        )
    m = joint_table.marginal([treatment] + adjust + [target]).table
    p_c = joint_table.marginal(adjust).table
    n_treat = joint_table.cards[joint_table.axis(treatment)]
    n_target = joint_table.cards[joint_table.axis(target)]

    p_tc = m.sum(axis=-1)
    support = p_tc > 0
    cond = np.divide(m, p_tc[..., None], out=np.zeros_like(m), where=support[..., None])
    weights = np.broadcast_to(p_c, p_tc.shape) * support

    missing = np.argwhere(~support & (np.broadcast_to(p_c, p_tc.shape) > 0))
    skipped = [
        {treatment: int(cell[0]), **{name: int(v) for name, v in zip(adjust, cell[1:])}}
        for cell in missing
    ]
    policy = ZeroSupportPolicy(policy)
    if skipped and policy == ZeroSupportPolicy.ERROR:
        raise ZeroSupportError(f"Zero-support conditioning cells: {skipped}", skipped)

    estimate = (cond * weights[..., None]).reshape(n_treat, -1, n_target).sum(axis=1)
    if skipped:
        rows = sorted({cell[treatment] for cell in skipped})
        for t in rows:
            norm = float(weights[t].sum())
            if norm <= 0:
                raise ZeroSupportError(f"Treatment value {treatment}={t} has no support in any stratum", skipped)
            estimate[t] = estimate[t] / norm
        get_logger().warning("adjustment", f"skipped {len(skipped)} zero-support cells and renormalized rows {rows}")
    return InterventionalTable(treatment, target, estimate, skipped)


def adjustment_violations(scm: DiscreteSCM, treatment: str, adjust_set: Sequence[str]) -> List[str]:
    """Members of the adjustment set that descend from the treatment."""
    descendants = scm.descendants(treatment)
    return sorted(name for name in adjust_set if name in descendants)


def confounding_gap(
    scm: DiscreteSCM,
    target: str,
    treatment: str,
    adjust_set: Sequence[str],
    policy: ZeroSupportPolicy = ZeroSupportPolicy.ERROR,
) -> float:
    """Max absolute difference between the adjustment estimate and the true interventional table."""
    violations = adjustment_violations(scm, treatment, adjust_set)
    if violations:
        get_logger().warning(
            "adjustment",
            f"adjustment set contains descendants of '{treatment}': {violations}; the formula need not hold",
        )
    estimate = adjustment_estimate(joint(scm), target, treatment, adjust_set, policy)
    gap = 0.0
    for t in range(scm.card(treatment)):
        truth = interventional_dist(scm, target, {treatment: t}).table
        gap = max(gap, float(np.max(np.abs(estimate.table[t] - truth))))
    return gap


@dataclass
class RandomSCMSpec:
    """Bounds for the confounded SCM generator (confounders -> factors, plus irrelevant roots)."""
    n_confounders: int = 1
    n_factors: int = 2
    n_irrelevant: int = 0
    min_cardinality: int = 2
    max_cardinality: int = 3
    min_strength: float = 0.2
    dirichlet_alpha: float = 2.0
    prior_alpha: float = 5.0

    def __post_init__(self):
        total = self.n_confounders + self.n_factors + self.n_irrelevant
        if self.n_confounders < 1 or self.n_factors < 1 or self.n_irrelevant < 0:
            raise ValueError("Need at least one confounder and one factor")
        if total > MAX_SCM_VARIABLES:
            raise ValueError(f"At most {MAX_SCM_VARIABLES} variables are supported, got {total}")
        if not 2 <= self.min_cardinality <= self.max_cardinality <= MAX_SCM_CARDINALITY:
            raise ValueError(f"Cardinality bounds must satisfy 2 <= min <= max <= {MAX_SCM_CARDINALITY}")
        if not 0.0 <= self.min_strength <= 0.9:
            raise ValueError(f"min_strength must lie in [0, 0.9], got {self.min_strength}")


def _total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def _sharpen(rows: np.ndarray, min_strength: float) -> np.ndarray:
    """Pull the first and last rows toward distinct one-hots until their TV reaches min_strength."""
    first, last = rows[0].copy(), rows[-1].copy()
    e0 = np.eye(first.size)[0]
    e1 = np.eye(first.size)[1]
    lam = 0.0
    while _total_variation(rows[0], rows[-1]) < min_strength and lam < 0.95:
        lam = min(lam + 0.05, 0.95)
        rows[0] = (1 - lam) * first + lam * e0
        rows[-1] = (1 - lam) * last + lam * e1
    return rows


def random_scm(spec: RandomSCMSpec, seed: int) -> DiscreteSCM:
    """Random SCM of the confounded class: confounders are roots and parents of every factor."""
    rng = np.random.default_rng(seed)

    def draw_card() -> int:
        return int(rng.integers(spec.min_cardinality, spec.max_cardinality + 1))

    variables: List[Variable] = []
    parents: Dict[str, List[str]] = {}
    cpts: Dict[str, np.ndarray] = {}

    confounders = [f"C{i}" for i in range(spec.n_confounders)]
    for name in confounders:
        card = draw_card()
        variables.append(Variable(name, card, VariableRole.CONFOUNDER))
        cpts[name] = rng.dirichlet(np.full(card, spec.prior_alpha))
    conf_cards = [v.cardinality for v in variables]
    n_configs = int(np.prod(conf_cards))

    for i in range(spec.n_factors):
        name = f"G{i}"
        card = draw_card()
        variables.append(Variable(name, card, VariableRole.FACTOR))
        parents[name] = list(confounders)
        rows = rng.dirichlet(np.full(card, spec.dirichlet_alpha), size=n_configs)
        rows = _sharpen(rows, spec.min_strength)
        rows = rows / rows.sum(axis=-1, keepdims=True)
        cpts[name] = rows.reshape(conf_cards + [card])

    for i in range(spec.n_irrelevant):
        name = f"U{i}"
        card = draw_card()
        variables.append(Variable(name, card, VariableRole.OTHER))
        cpts[name] = rng.dirichlet(np.full(card, spec.prior_alpha))
    return DiscreteSCM(variables, parents, cpts)


def confounder_strength(scm: DiscreteSCM, factor: str) -> float:
    """Largest total variation between CPT rows of factor across parent configurations."""
    rows = scm.cpts[factor].reshape(-1, scm.card(factor))
    return max(
        (_total_variation(rows[a], rows[b]) for a, b in itertools.combinations(range(len(rows)), 2)),
        default=0.0,
    )


def random_dag_scm(n_vars: int, seed: int, edge_prob: float = 0.5, max_cardinality: int = 3) -> DiscreteSCM:
    """Random DAG over V0..V{n-1} (edges only from lower to higher index) with Dirichlet CPTs."""
    if not 1 <= n_vars <= MAX_SCM_VARIABLES:
        raise ValueError(f"n_vars must lie in 1..{MAX_SCM_VARIABLES}")
    rng = np.random.default_rng(seed)
    names = [f"V{i}" for i in range(n_vars)]
    cards = [int(rng.integers(2, max_cardinality + 1)) for _ in names]
    parents: Dict[str, List[str]] = {}
    cpts: Dict[str, np.ndarray] = {}
    for j, name in enumerate(names):
        parents[name] = [names[i] for i in range(j) if rng.random() < edge_prob]
        shape = [cards[names.index(p)] for p in parents[name]]
        rows = rng.dirichlet(np.ones(cards[j]), size=int(np.prod(shape)) if shape else 1)
        cpts[name] = rows.reshape(shape + [cards[j]])
    return DiscreteSCM([Variable(n, c) for n, c in zip(names, cards)], parents, cpts)


def surgered_graph(
    scm: DiscreteSCM, cut_incoming: Sequence[str] = (), cut_outgoing: Sequence[str] = ()
) -> nx.DiGraph:
    """Copy of the causal graph without edges into cut_incoming and out of cut_outgoing."""
    graph = nx.DiGraph(scm.graph)
    graph.remove_edges_from([(p, c) for p, c in scm.graph.edges if c in cut_incoming or p in cut_outgoing])
    return graph


def d_separated(graph: nx.DiGraph, xs: Sequence[str], ys: Sequence[str], zs: Sequence[str]) -> bool:
    if not xs or not ys:
        return True
    return nx.is_d_separator(graph, set(xs), set(ys), set(zs))


class DoRule(int, Enum):
    """The three do-calculus rules: observation, action/observation exchange, action deletion."""
    INSERT_OBSERVATION = 1
    EXCHANGE_ACTION = 2
    DELETE_ACTION = 3


@dataclass(frozen=True)
class RuleCheck:
    rule: DoRule
    applicable: bool
    max_diff: float


def _assignments(scm: DiscreteSCM, names: Sequence[str]):
    for values in itertools.product(*(range(scm.card(n)) for n in names)):
        yield dict(zip(names, values))


def _cond_under(scm: DiscreteSCM, do_map: Mapping[str, int], ys: Sequence[str], given: Sequence[str]) -> ConditionalTable:
    return conditional(joint(intervene(scm, do_map)), ys, given)


def check_rule(
    scm: DiscreteSCM,
    rule: Union[DoRule, int],
    y: Sequence[str],
    x: Sequence[str],
    z: Sequence[str],
    w: Sequence[str] = (),
) -> RuleCheck:
    """Evaluate a do-calculus rule on an SCM.

    ``applicable`` reports whether the rule's d-separation condition holds on the
    surgered graph; ``max_diff`` is the largest absolute difference between the two
    sides of the rule over all supported assignments, computed exactly.
    """
    rule = DoRule(rule)
    y, x, z, w = list(y), list(x), list(z), list(w)
    groups = y + x + z + w
    if len(set(groups)) != len(groups):
        raise SCMError(f"Variable sets must be disjoint, got y={y} x={x} z={z} w={w}")
    for name in groups:
        scm.variable(name)

    if rule == DoRule.INSERT_OBSERVATION:
        graph = surgered_graph(scm, cut_incoming=x)
    elif rule == DoRule.EXCHANGE_ACTION:
        graph = surgered_graph(scm, cut_incoming=x, cut_outgoing=z)
    else:
        without_x = surgered_graph(scm, cut_incoming=x)
        ancestors_of_w = set().union(*(nx.ancestors(without_x, n) | {n} for n in w)) if w else set()
        z_of_w = [n for n in z if n not in ancestors_of_w]
        graph = surgered_graph(scm, cut_incoming=x + z_of_w)
    applicable = d_separated(graph, y, z, x + w)

    max_diff = 0.0
    for x_val in _assignments(scm, x):
        if rule == DoRule.INSERT_OBSERVATION:
            lhs = _cond_under(scm, x_val, y, z + w)
            rhs = _cond_under(scm, x_val, y, w)
            expanded = rhs.table[(None,) * len(z)]
            diff = np.abs(lhs.table - expanded)
            mask = lhs.support.reshape(lhs.support.shape + (1,) * len(y))
            max_diff = max(max_diff, float(np.max(np.where(mask, diff, 0.0))))
            continue
        rhs_given = z + w if rule == DoRule.EXCHANGE_ACTION else w
        rhs = _cond_under(scm, x_val, y, rhs_given)
        for z_val in _assignments(scm, z):
            lhs = _cond_under(scm, {**x_val, **z_val}, y, w)
            if rule == DoRule.EXCHANGE_ACTION:
                index = tuple(z_val[n] for n in z)
                rhs_table, rhs_support = rhs.table[index], rhs.support[index]
            else:
                rhs_table, rhs_support = rhs.table, rhs.support
            support = lhs.support & rhs_support
            mask = support.reshape(support.shape + (1,) * len(y))
            diff = np.abs(lhs.table - rhs_table)
            max_diff = max(max_diff, float(np.max(np.where(mask, diff, 0.0))))
    return RuleCheck(rule, bool(applicable), max_diff)


def save_scm(scm: DiscreteSCM, path: Union[str, Path]):
    atomic_write_text(path, json.dumps(scm.to_dict(), indent=2))


def load_scm(path: Union[str, Path]) -> DiscreteSCM:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SCMError(f"SCM file {path} is not valid JSON: {e}") from e
    return DiscreteSCM.from_dict(data)
