import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import linear_normal_evpi
from tables import TABLE_S1_CSV, TABLE_S2_CSV
from voikit.errors import FormatError, NumericError, ParseError, SchemaError
from voikit.model import run_psa
from voikit.psa import (AugmentedPsaDataset, PsaDataset, WtpThreshold, best_strategy,
                        compute_incremental_net_benefit, compute_net_benefit,
                        decision_uncertainty_curves, default_strategies, evpi, load_psa_dataset,
                        save_psa_dataset)


def toy(effects, costs, params=None, names=("p",)):
    effects = np.asarray(effects, dtype=float)
    s, t = effects.shape
    params = np.arange(s, dtype=float)[:, None] if params is None else params
    return PsaDataset(names, params, default_strategies(t), effects, np.asarray(costs, dtype=float))


class TestLoad:
    def test_table_s1_first_row(self):
        ds = load_psa_dataset(TABLE_S1_CSV.encode())
        assert ds.n_samples == 20 and ds.n_strategies == 3
        assert ds.param("p.dr.t1")[0] == 0.259
        assert ds.effects[0, 0] == 8.596
        assert ds.costs[0, 0] == 37407.287
        assert ds.parameter_names[:3] == ("p.dr.t1", "hr.dr.t2", "hr.dr.t3")

    def test_table_s2_alias_loads_into_eta(self):
        aug = load_psa_dataset(TABLE_S2_CSV.encode())
        assert isinstance(aug, AugmentedPsaDataset)
        assert aug.eta[0, 0] == 17869394.0
        assert aug.nmb[0, 1] == 844093.4111
        assert aug.base.has_outcomes is False

    def test_table_s2_incremental_example(self):
        aug = load_psa_dataset(TABLE_S2_CSV.encode())
        inc = compute_incremental_net_benefit(aug.nmb, reference=1)
        assert round(inc.values[0, 1], 4) == 6714.2087

    def test_header_only(self):
        with pytest.raises(FormatError, match="S ≥ 2"):
            load_psa_dataset(b"sim,p,qaly.t1,cost.t1,qaly.t2,cost.t2\n")

    def test_missing_header(self):
        with pytest.raises(FormatError, match="header"):
            load_psa_dataset(b"")

    def test_non_numeric_cell_names_row_and_column(self):
        text = b"p,qaly.t1,cost.t1,qaly.t2,cost.t2\n0.1,1,2,3,4\n0.2,1,x,3,4\n"
        with pytest.raises(ParseError) as exc:
            load_psa_dataset(text)
        assert "row 2" in str(exc.value) and "cost.t1" in str(exc.value)

    @pytest.mark.parametrize("cell", ["1,000", "1e", "nan", "inf", "0x10", ""])
    def test_rejects_non_decimal(self, cell):
        text = f'p,qaly.t1,cost.t1,qaly.t2,cost.t2\n0.1,1,2,3,4\n0.2,1,"{cell}",3,4\n'.encode()
        with pytest.raises(ParseError):
            load_psa_dataset(text)

    def test_duplicate_column(self):
        with pytest.raises(SchemaError, match="duplicate"):
            load_psa_dataset(b"p,p,qaly.t1,cost.t1,qaly.t2,cost.t2\n1,1,1,1,1,1\n2,2,2,2,2,2\n")

    def test_sim_column_validated(self):
        with pytest.raises(FormatError, match="1..S"):
            load_psa_dataset(b"sim,p,qaly.t1,cost.t1,qaly.t2,cost.t2\n1,1,1,1,1,1\n3,2,2,2,2,2\n")

    def test_missing_cost_column(self):
        with pytest.raises(SchemaError):
            load_psa_dataset(b"p,qaly.t1,cost.t1,qaly.t2\n1,1,1,1\n2,2,2,2\n")

    def test_single_strategy_rejected(self):
        with pytest.raises(SchemaError):
            load_psa_dataset(b"p,qaly.t1,cost.t1\n1,1,1\n2,2,2\n")


class TestSave:
    def test_header_for_toy(self):
        ds = toy([[1, 2], [3, 4]], [[0, 0], [0, 0]])
        assert save_psa_dataset(ds).decode().splitlines()[0] == "sim,p,qaly.t1,cost.t1,qaly.t2,cost.t2"

    def test_augmented_header_order(self):
        ds = toy([[1, 2], [3, 4]], [[0, 0], [0, 0]])
        aug = AugmentedPsaDataset(ds, np.ones((2, 2)), np.ones((2, 2)), ("p",))
        head = save_psa_dataset(aug).decode().splitlines()[0].split(",")
        assert head[-4:] == ["nmb.t1", "nmb.t2", "enb.t1", "enb.t2"]

    def test_table_s1_round_trip_field_exact(self):
        first = load_psa_dataset(TABLE_S1_CSV.encode())
        second = load_psa_dataset(save_psa_dataset(first))
        assert first.parameter_names == second.parameter_names
        for a, b in [(first.params, second.params), (first.effects, second.effects),
                     (first.costs, second.costs)]:
            assert np.array_equal(a, b)
        assert save_psa_dataset(second) == save_psa_dataset(first)

    def test_generated_round_trip(self, beta_binomial):
        ds = run_psa(beta_binomial, 100, 11)
        raw = save_psa_dataset(ds)
        back = load_psa_dataset(raw)
        assert np.array_equal(back.params, ds.params)
        assert np.array_equal(back.effects, ds.effects) and np.array_equal(back.costs, ds.costs)
        assert save_psa_dataset(back) == raw

    def test_augmented_round_trip(self, ln_aug):
        _, aug = ln_aug
        back = load_psa_dataset(save_psa_dataset(aug), phi_names=["phi"])
        assert np.array_equal(back.eta, aug.eta) and np.array_equal(back.nmb, aug.nmb)

    def test_at_least_ten_significant_digits(self):
        ds = toy([[1 / 3, 2 / 3], [1.0, 2.0]], [[0.1, 0.2], [0.3, 0.4]])
        line = save_psa_dataset(ds).decode().splitlines()[1]
        assert "0.3333333333" in line


class TestNetBenefit:
    def test_zero_cost(self):
        nb = compute_net_benefit(toy([[2, 0], [2, 0]], [[0, 0], [0, 0]]), 1000)
        assert nb.values[0, 0] == 2000

    @pytest.mark.parametrize("lam", [1.0, 1e3, 1e6])
    def test_zero_effect(self, lam):
        nb = compute_net_benefit(toy([[0, 0], [0, 0]], [[500, 0], [500, 0]]), lam)
        assert nb.values[0, 0] == -500

    def test_threshold_must_be_positive(self):
        with pytest.raises(ValueError):
            WtpThreshold(0.0)

    def test_overflow_names_row(self):
        ds = toy([[1, 1], [1e308, 1]], [[0, 0], [0, 0]])
        with pytest.raises(NumericError, match="row 2"):
            compute_net_benefit(ds, 10.0)

    def test_recomputation_row_by_row(self, linear_normal):
        ds = run_psa(linear_normal, 1000, 1)
        nb = compute_net_benefit(ds, 1e4).values
        for s in range(ds.n_samples):
            phi, psi = ds.params[s]
            assert nb[s, 0] == 1e4 * 1.0 - 1000.0
            assert nb[s, 1] == 1e4 * (1.0 + phi) - (1950.0 + psi)


class TestIncremental:
    def test_auto_reference_is_best_mean(self):
        inc = compute_incremental_net_benefit([[1.0, 3.0], [1.0, 3.0]])
        assert inc.reference == 2 and np.all(inc.values[:, 0] == -2.0)

    def test_ties_go_to_lowest_index(self):
        assert best_strategy([[1.0, 1.0], [2.0, 2.0]]) == 1

    def test_identical_strategies_zero(self):
        inc = compute_incremental_net_benefit(np.ones((4, 3)) * 7.0)
        assert np.all(inc.values == 0.0)

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(2, 5)),
                      elements=st.floats(-1e6, 1e6, allow_nan=False)),
           st.integers(1, 5))
    def test_reference_column_zero_and_reconstruction(self, nb, ref):
        ref = min(ref, nb.shape[1])
        inc = compute_incremental_net_benefit(nb, ref)
        assert np.all(inc.values[:, ref - 1] == 0.0)
        rebuilt = inc.values + nb[:, [ref - 1]]
        rebuilt[:, ref - 1] = nb[:, ref - 1]
        assert np.allclose(rebuilt, nb, rtol=0, atol=1e-9 * (np.abs(nb).max() + 1))


class TestEvpi:
    def test_hand_example(self):
        assert evpi([[1.0, 0.0], [0.0, 2.0]]).value == 0.5

    def test_dominance(self):
        assert evpi([[2.0, 1.0], [5.0, 0.0]]).value == 0.0

    def test_linear_normal_closed_form(self, linear_normal):
        ds = run_psa(linear_normal, 20000, 2)
        est = evpi(compute_net_benefit(ds, 1e4))
        assert abs(est.value - linear_normal_evpi()) < 3 * est.mc_se


class TestCurves:
    def test_dominant_strategy(self):
        ds = toy([[1, 2], [1, 3], [1, 4]], [[0, 0], [0, 0], [0, 0]])
        c = decision_uncertainty_curves(ds, [1.0, 10.0])
        assert np.all(c.ceac[:, 1] == 1.0) and np.all(c.ceaf == 2)

    def test_identical_strategies_tie_rule(self):
        ds = toy([[1, 1], [2, 2]], [[0, 0], [0, 0]])
        c = decision_uncertainty_curves(ds, [5.0])
        assert c.ceac[0].tolist() == [1.0, 0.0]

    def test_invariants_and_elc_equals_evpi(self, bb_psa):
        lams = [2000.0, 7000.0, 10000.0, 20000.0]
        c = decision_uncertainty_curves(bb_psa, lams)
        assert np.all(c.ceac.sum(axis=1) == 1.0)
        assert np.all(c.ceaf_indicator().sum(axis=1) == 1)
        for i, lam in enumerate(lams):
            e = evpi(compute_net_benefit(bb_psa, lam)).value
            assert c.elc[i].min() == c.elc[i, c.ceaf[i] - 1]
            assert abs(c.elc[i].min() - e) <= 1e-9 * max(e, 1.0)

    @pytest.mark.parametrize("lams", [[], [0.0, 1.0], [2.0, 1.0]])
    def test_bad_grid(self, bb_psa, lams):
        with pytest.raises(ValueError):
            decision_uncertainty_curves(bb_psa, lams)

    def test_csv_layout(self, bb_psa):
        lines = decision_uncertainty_curves(bb_psa, [1e4]).to_csv().splitlines()
        assert lines[0] == "lambda,strategy,ceac,elc,ceaf" and len(lines) == 3
