"""Direct colony-partition simulation."""

import math

import numpy as np
import pytest

from colonist import colony
from colonist.colony import (ColonyPartition, SterilizedOutcome,
                             laplace_functional_estimate, simulate_partition,
                             simulate_sterilized, sterilized_sample)
from colonist.cumulant import TestFunction
from colonist.kernels import StepBudgetExceeded
from colonist.offspring import ConcreteModel, MigrationRule, OffspringLaw

SUB = OffspringLaw.custom([0.60, 0.0, 0.30, 0.10])        # mean 0.9
GEO = OffspringLaw.geometric()
TWO_POINT = OffspringLaw.custom([0.5, 0.0, 0.5])


def _model(law, rule):
    return ConcreteModel(law, rule, 1, 1, 1)


class TestValidation:
    def test_partition_totals_must_be_consistent(self):
        with pytest.raises(ValueError):
            ColonyPartition(colony_sizes=[2, 3], zeta=4, gamma=2, a=1,
                            xi_total=3, migrant_total=1)

    def test_sterilized_needs_positive_colony(self):
        with pytest.raises(ValueError):
            SterilizedOutcome(C=0, M=0)


class TestConservation:
    @pytest.mark.parametrize("rule", [
        MigrationRule.thinning(0.3),
        MigrationRule.all_or_nothing(4),
        MigrationRule.cutoff(2),
    ])
    def test_subcritical_identities(self, rule):
        model = _model(SUB, rule)
        for i in range(300):
            p = simulate_partition(model, 3, (11, i))
            assert p.zeta == 3 + p.xi_total
            assert p.gamma == 3 + p.migrant_total
            assert int(p.colony_sizes.sum()) == p.zeta
            assert p.colony_sizes.size == p.gamma

    def test_critical_identities(self):
        model = _model(GEO, MigrationRule.thinning(0.1))
        for i in range(200):
            p = simulate_partition(model, 2, (12, i), budget=10**9)
            assert p.zeta == 2 + p.xi_total
            assert p.gamma == 2 + p.migrant_total


class TestTrivialLaws:
    def test_childless_law_gives_singletons(self):
        model = _model(OffspringLaw.custom([1.0]),
                       MigrationRule.thinning(0.5))
        p = simulate_partition(model, 7, 123)
        assert p.zeta == 7 and p.gamma == 7
        assert (p.colony_sizes == 1).all()
        out = simulate_sterilized(model, 5)
        assert (out.C, out.M) == (1, 0)


class TestSterilizedLaw:
    def test_enumerable_cell(self):
        # two-point law {0, 2} with half-thinning: the ancestor is childless
        # with prob 1/2, or has 2 children of which each stays w.p. 1/2;
        # conditioning colonies of size 1: 1/2 + 1/2 * 1/4 = 5/8
        model = _model(TWO_POINT, MigrationRule.thinning(0.5))
        C, M = sterilized_sample(model, 10**5, 42)
        phat = float(np.mean(C == 1))
        se = math.sqrt(0.625 * 0.375 / C.size)
        assert abs(phat - 0.625) <= 3 * se

    def test_outputs_in_range(self):
        model = _model(GEO, MigrationRule.cutoff(3))
        C, M = sterilized_sample(model, 5000, 43)
        assert (C >= 1).all() and (M >= 0).all()

    def test_geometric_colony_mean(self):
        # with per-child thinning p the homebody mean is 1-p, so E C = 1/p
        model = _model(GEO, MigrationRule.thinning(0.05))
        C, _ = sterilized_sample(model, 4 * 10**4, 44)
        se = float(C.std(ddof=1) / math.sqrt(C.size))
        assert abs(C.mean() - 20.0) <= 4 * se


class TestLaplaceFunctional:
    def test_zero_function_is_exactly_one(self):
        model = _model(SUB, MigrationRule.thinning(0.3))
        f = TestFunction.indicator(1.0, 2.0, 0.0)
        est, se, info = laplace_functional_estimate(model, 2, f, 500, 45)
        assert est == 1.0 and se == 0.0

    def test_function_off_support_is_exactly_one(self):
        # colony sizes are integers >= 1; f supported inside (0, 1) is
        # never hit
        model = _model(SUB, MigrationRule.thinning(0.3))
        f = TestFunction.indicator(0.25, 0.75, 3.0)
        est, se, _ = laplace_functional_estimate(model, 2, f, 500, 46)
        assert est == 1.0 and se == 0.0

    def test_stop_threshold_reports_bias(self):
        model = _model(GEO, MigrationRule.thinning(0.01))
        f = TestFunction.indicator(1.0, 50.0, 1.0)
        est, se, info = laplace_functional_estimate(
            model, 20, f, 300, 47, stop_threshold=4.0)
        assert 0.0 <= info["bias_bound"] <= math.exp(-4.0)
        assert info["stopped_fraction"] > 0.5   # 20 colonies of >= 1 unit


class TestBudget:
    def test_budget_error(self):
        model = _model(GEO, MigrationRule.thinning(0.001))
        with pytest.raises(StepBudgetExceeded):
            simulate_partition(model, 50, 48, budget=25)


class TestDeterminism:
    def test_same_seed_same_partition(self):
        model = _model(SUB, MigrationRule.thinning(0.3))
        p1 = simulate_partition(model, 4, 99)
        p2 = simulate_partition(model, 4, 99)
        assert (p1.colony_sizes == p2.colony_sizes).all()

    def test_different_seeds_differ(self):
        model = _model(SUB, MigrationRule.thinning(0.3))
        runs = {simulate_partition(model, 4, s).zeta for s in range(20)}
        assert len(runs) > 1


class TestSerialization:
    def test_csv_and_jsonl(self, tmp_path):
        model = _model(SUB, MigrationRule.thinning(0.3))
        parts = [simulate_partition(model, 2, (1, i)) for i in range(5)]
        csv_path = tmp_path / "p.csv"
        jsonl_path = tmp_path / "p.jsonl"
        colony.partitions_to_csv(parts, csv_path)
        colony.partitions_to_jsonl(parts, jsonl_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "replica_id,colony_size"
        assert len(lines) == 1 + sum(p.gamma for p in parts)
        import json
        rows = [json.loads(x) for x in jsonl_path.read_text().splitlines()]
        assert [r["zeta"] for r in rows] == [p.zeta for p in parts]
