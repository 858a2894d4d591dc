import itertools

import numpy as np
import pytest

from cdisent.scm import (
    DiscreteSCM,
    DistTable,
    DoRule,
    RandomSCMSpec,
    SCMError,
    TableSizeError,
    Variable,
    VariableRole,
    ZeroSupportError,
    ZeroSupportPolicy,
    adjustment_estimate,
    adjustment_violations,
    check_rule,
    conditional,
    confounder_strength,
    confounding_gap,
    interventional_dist,
    intervene,
    joint,
    load_scm,
    random_dag_scm,
    random_scm,
    save_scm,
)

CONF = VariableRole.CONFOUNDER
FACT = VariableRole.FACTOR


@pytest.fixture
def chain_scm():
    """A -> B -> C with hand-set tables."""
    variables = [Variable("A", 2), Variable("B", 2), Variable("C", 3)]
    cpts = {
        "A": np.array([0.3, 0.7]),
        "B": np.array([[0.9, 0.1], [0.2, 0.8]]),
        "C": np.array([[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]),
    }
    return DiscreteSCM(variables, {"B": ["A"], "C": ["B"]}, cpts)


@pytest.fixture
def confounded_scm():
    """C -> G0 and C -> G1 with a strong confounder effect."""
    variables = [Variable("C", 2, CONF), Variable("G0", 2, FACT), Variable("G1", 2, FACT)]
    cpts = {
        "C": np.array([0.5, 0.5]),
        "G0": np.array([[0.9, 0.1], [0.2, 0.8]]),
        "G1": np.array([[0.8, 0.2], [0.1, 0.9]]),
    }
    return DiscreteSCM(variables, {"G0": ["C"], "G1": ["C"]}, cpts)


@pytest.fixture
def collider_scm():
    """X -> Y, and D is a noisy xor of X and Y."""
    variables = [Variable("X", 2), Variable("Y", 2), Variable("D", 2)]
    d = np.zeros((2, 2, 2))
    for x, y in itertools.product(range(2), range(2)):
        d[x, y] = [0.1, 0.9] if x != y else [0.9, 0.1]
    cpts = {"X": np.array([0.5, 0.5]), "Y": np.array([[0.8, 0.2], [0.3, 0.7]]), "D": d}
    return DiscreteSCM(variables, {"Y": ["X"], "D": ["X", "Y"]}, cpts)


class TestModel:
    """Construction and validation of discrete SCMs."""

    def test_cycle_rejected(self):
        variables = [Variable("A", 2), Variable("B", 2)]
        cpts = {"A": np.full((2, 2), 0.5), "B": np.full((2, 2), 0.5)}
        with pytest.raises(SCMError):
            DiscreteSCM(variables, {"A": ["B"], "B": ["A"]}, cpts)

    def test_cpt_rows_must_sum_to_one(self):
        with pytest.raises(SCMError):
            DiscreteSCM([Variable("A", 2)], {}, {"A": np.array([0.5, 0.6])})

    def test_factor_cannot_cause_factor(self):
        variables = [Variable("G0", 2, FACT), Variable("G1", 2, FACT)]
        cpts = {"G0": np.array([0.5, 0.5]), "G1": np.full((2, 2), 0.5)}
        with pytest.raises(SCMError):
            DiscreteSCM(variables, {"G1": ["G0"]}, cpts)

    def test_dist_table_validation(self):
        with pytest.raises(SCMError):
            DistTable(["A"], [2], np.array([0.4, 0.4]))

    def test_save_load_round_trip(self, tmp_path, chain_scm):
        path = tmp_path / "scm.json"
        save_scm(chain_scm, path)
        assert load_scm(path) == chain_scm

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "scm.json"
        path.write_text("{not json")
        with pytest.raises(SCMError):
            load_scm(path)


class TestJoint:
    def test_single_fair_binary(self):
        scm = DiscreteSCM([Variable("A", 2)], {}, {"A": np.array([0.5, 0.5])})
        assert np.array_equal(joint(scm).table, [0.5, 0.5])

    def test_two_independent_fair_binaries(self):
        scm = DiscreteSCM(
            [Variable("A", 2), Variable("B", 2)], {}, {"A": np.array([0.5, 0.5]), "B": np.array([0.5, 0.5])}
        )
        assert np.allclose(joint(scm).table, np.full((2, 2), 0.25), atol=0)

    def test_chain_matches_enumeration(self, chain_scm):
        table = joint(chain_scm).table
        for a, b, c in itertools.product(range(2), range(2), range(3)):
            expected = chain_scm.cpts["A"][a] * chain_scm.cpts["B"][a, b] * chain_scm.cpts["C"][b, c]
            assert table[a, b, c] == pytest.approx(expected, abs=1e-15)

    def test_conditional_then_marginal(self, chain_scm):
        table = joint(chain_scm)
        cond = conditional(table, ["C"], ["A"])
        p_a = table.marginal(["A"]).table
        recovered = np.einsum("a,ac->c", p_a, cond.table)
        assert np.allclose(recovered, table.marginal(["C"]).table, atol=1e-12)

    def test_size_cap(self):
        names = [f"V{i}" for i in range(8)]
        scm = DiscreteSCM([Variable(n, 6) for n in names], {}, {n: np.full(6, 1.0 / 6.0) for n in names})
        with pytest.raises(TableSizeError):
            joint(scm)


class TestIntervention:
    def test_intervening_on_root_equals_conditioning(self, confounded_scm):
        dist = interventional_dist(confounded_scm, "G0", {"C": 1})
        assert np.allclose(dist.table, confounded_scm.cpts["G0"][1], atol=1e-15)

    def test_no_path_to_target(self, confounded_scm):
        dist = interventional_dist(confounded_scm, "G1", {"G0": 0})
        marginal = joint(confounded_scm).marginal(["G1"])
        assert np.allclose(dist.table, marginal.table, atol=1e-15)

    def test_unconfounded_edge_equals_conditional(self, chain_scm):
        dist = interventional_dist(chain_scm, "C", {"B": 1})
        assert np.allclose(dist.table, chain_scm.cpts["C"][1], atol=1e-15)

    def test_intervene_cuts_incoming_edges(self, chain_scm):
        surgered = intervene(chain_scm, {"B": 0})
        assert surgered.parents["B"] == ()
        assert np.array_equal(surgered.cpts["B"], [1.0, 0.0])

    def test_intervene_is_idempotent(self, chain_scm):
        once = intervene(chain_scm, {"B": 1, "A": 0})
        twice = intervene(once, {"B": 1, "A": 0})
        assert twice == once
        assert np.array_equal(joint(twice).table, joint(once).table)

    def test_unknown_variable(self, chain_scm):
        with pytest.raises(SCMError):
            intervene(chain_scm, {"Q": 0})

    def test_out_of_range_value(self, chain_scm):
        with pytest.raises(SCMError):
            intervene(chain_scm, {"A": 2})


class TestAdjustment:
    """Backdoor adjustment against the truncated-factorization oracle."""

    def test_full_confounder_set_is_exact(self, confounded_scm):
        assert confounding_gap(confounded_scm, "G1", "G0", ["C"]) <= 1e-12

    def test_empty_set_shows_confounding(self, confounded_scm):
        assert confounding_gap(confounded_scm, "G1", "G0", []) > 0.01

    def test_empty_set_is_exact_without_confounding(self, chain_scm):
        estimate = adjustment_estimate(joint(chain_scm), "C", "B", [])
        for b in range(2):
            truth = interventional_dist(chain_scm, "C", {"B": b}).table
            assert np.allclose(estimate.table[b], truth, atol=1e-12)

    def test_superset_with_irrelevant_root(self):
        spec = RandomSCMSpec(n_confounders=1, n_factors=2, n_irrelevant=1)
        for seed in range(10):
            scm = random_scm(spec, seed)
            assert confounding_gap(scm, "G1", "G0", ["C0", "U0"]) <= 1e-12

    def test_descendant_in_adjustment_set(self, collider_scm):
        assert adjustment_violations(collider_scm, "X", ["D"]) == ["D"]
        assert confounding_gap(collider_scm, "Y", "X", ["D"]) > 0.01

    def test_adjustment_set_must_be_disjoint(self, confounded_scm):
        with pytest.raises(SCMError):
            adjustment_estimate(joint(confounded_scm), "G1", "G0", ["G0"])

    def test_zero_support_cells(self):
        variables = [Variable("C", 2, CONF), Variable("G0", 2, FACT), Variable("G1", 2, FACT)]
        cpts = {
            "C": np.array([0.5, 0.5]),
            "G0": np.array([[1.0, 0.0], [0.5, 0.5]]),
            "G1": np.array([[0.7, 0.3], [0.2, 0.8]]),
        }
        scm = DiscreteSCM(variables, {"G0": ["C"], "G1": ["C"]}, cpts)

        with pytest.raises(ZeroSupportError) as info:
            adjustment_estimate(joint(scm), "G1", "G0", ["C"], ZeroSupportPolicy.ERROR)
        assert info.value.cells == [{"G0": 1, "C": 0}]

        estimate = adjustment_estimate(joint(scm), "G1", "G0", ["C"], ZeroSupportPolicy.SKIP)
        assert estimate.skipped == [{"G0": 1, "C": 0}]
        assert np.allclose(estimate.row(1), cpts["G1"][1], atol=1e-12)
        assert np.allclose(estimate.table.sum(axis=1), 1.0, atol=1e-12)


class TestRandomSCM:
    def test_seed_is_deterministic(self):
        spec = RandomSCMSpec(n_confounders=2, n_factors=3, n_irrelevant=1)
        assert random_scm(spec, 7) == random_scm(spec, 7)

    def test_confounder_strength_bound(self):
        spec = RandomSCMSpec(min_strength=0.3)
        for seed in range(20):
            scm = random_scm(spec, seed)
            for factor in scm.factors:
                assert confounder_strength(scm, factor) >= 0.3 - 1e-12

    def test_gap_appears_in_most_sampled_scms(self):
        spec = RandomSCMSpec(n_confounders=1, n_factors=2, min_strength=0.2)
        gapped = 0
        for seed in range(100):
            scm = random_scm(spec, seed)
            assert confounding_gap(scm, "G1", "G0", scm.confounders) <= 1e-12
            gapped += confounding_gap(scm, "G1", "G0", []) > 0.01
        assert gapped >= 90

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            RandomSCMSpec(n_confounders=0)
        with pytest.raises(ValueError):
            RandomSCMSpec(n_confounders=4, n_factors=4, n_irrelevant=1)


class TestDoCalculus:
    @pytest.fixture
    def edge_scm(self):
        variables = [Variable("Z", 2), Variable("Y", 3)]
        cpts = {"Z": np.array([0.4, 0.6]), "Y": np.array([[0.2, 0.5, 0.3], [0.6, 0.3, 0.1]])}
        return DiscreteSCM(variables, {"Y": ["Z"]}, cpts)

    def test_exchange_on_unconfounded_edge(self, edge_scm):
        result = check_rule(edge_scm, DoRule.EXCHANGE_ACTION, ["Y"], [], ["Z"])
        assert result.applicable
        assert result.max_diff <= 1e-12

    def test_deletion_not_applicable_on_direct_effect(self, edge_scm):
        result = check_rule(edge_scm, DoRule.DELETE_ACTION, ["Y"], [], ["Z"])
        assert not result.applicable
        assert result.max_diff > 0.1

    def test_rules_hold_where_applicable(self):
        for seed in range(15):
            scm = random_dag_scm(4, seed, edge_prob=0.5, max_cardinality=2)
            for rule in DoRule:
                result = check_rule(scm, rule, ["V3"], ["V0"], ["V1"], ["V2"])
                if result.applicable:
                    assert result.max_diff <= 1e-10

    def test_sets_must_be_disjoint(self, edge_scm):
        with pytest.raises(SCMError):
            check_rule(edge_scm, DoRule.INSERT_OBSERVATION, ["Y"], ["Z"], ["Z"])
