"""
incentive_policies 测试，以 services.oracles 的穷举实现为预言
"""
import pytest
from hypothesis import given, settings, strategies as st

from crowdchain_sim.core import policies
from crowdchain_sim.core.exceptions import DecodeError
from crowdchain_sim.core.policies import BOTTOM, PolicySpec
from crowdchain_sim.services.oracles import flat_oracle, lowest_k_oracle, plurality_oracle

answers = st.lists(st.one_of(st.none(), st.sampled_from(["A", "B", "C"])), min_size=1, max_size=11)
budgets = st.integers(min_value=0, max_value=10 ** 6)


class TestMajority:
    def test_plurality_wins(self):
        assert policies.evaluate_majority(["A", "A", "B"], 30) == [10, 10, 0]

    def test_ties_all_win(self):
        assert policies.evaluate_majority(["A", "B", "A", "B", "C"], 50) == [10, 10, 10, 10, 0]

    def test_bottom_never_paid(self):
        assert policies.evaluate_majority([BOTTOM, "A", BOTTOM], 30) == [0, 10, 0]
        assert policies.evaluate_majority([BOTTOM, BOTTOM], 30) == [0, 0]

    def test_floor_division(self):
        assert policies.evaluate_majority(["A"] * 9, 100) == [11] * 9

    def test_empty(self):
        with pytest.raises(ValueError):
            policies.evaluate_majority([], 10)

    @given(answers, budgets)
    def test_matches_oracle(self, values, tau):
        rewards = policies.evaluate_majority(values, tau)
        assert rewards == plurality_oracle(values, tau)
        assert sum(rewards) <= tau

    @given(answers, budgets, st.data())
    def test_permutation_equivariant(self, values, tau, data):
        order = data.draw(st.permutations(range(len(values))))
        rewards = policies.evaluate_majority(values, tau)
        permuted = policies.evaluate_majority([values[i] for i in order], tau)
        assert permuted == [rewards[i] for i in order]


class TestFlat:
    def test_flat(self):
        assert policies.evaluate_flat(["A", BOTTOM, "C", "B"], 40) == [10, 0, 10, 10]

    @given(answers, budgets)
    def test_matches_oracle(self, values, tau):
        assert policies.evaluate_flat(values, tau) == flat_oracle(values, tau)


class TestDispatch:
    def test_answers_outside_set_are_bottom(self):
        spec = PolicySpec("majority", 30, 3, ("A", "B"))
        assert policies.evaluate(spec, ["A", "Z", "Z"]) == [10, 0, 0]

    def test_empty_answer_set_accepts_anything(self):
        spec = PolicySpec("majority", 30, 3)
        assert policies.evaluate(spec, ["Z", "Z", "A"]) == [10, 10, 0]

    def test_length_must_match_n(self):
        with pytest.raises(ValueError):
            policies.evaluate(PolicySpec("flat", 30, 3), ["A"])

    def test_unknown_policy(self):
        with pytest.raises(DecodeError):
            policies.evaluate(PolicySpec("lottery", 30, 1), ["A"])

    def test_spec_codec(self):
        spec = PolicySpec("majority", 70, 7, ("yes", "no"), 0)
        assert PolicySpec.from_bytes(spec.to_bytes()) == spec

    def test_registry_lists_auction(self):
        assert set(policies.available_policies()) == {"majority", "flat", "auction_lowest_k"}


class TestAuctionSelection:
    def test_lowest_k(self):
        outcome = policies.evaluate_auction_selection([5, 7, 3, 9], 2, 20)
        assert outcome.selected == (2, 0)
        assert outcome.payments == (3, 5)
        assert outcome.feasible

    def test_ties_by_submission_order(self):
        assert policies.evaluate_auction_selection([4, 4, 4], 2, 20).selected == (0, 1)

    def test_invalid_bids_never_selected(self):
        outcome = policies.evaluate_auction_selection([None, 9, None], 2, 20)
        assert outcome.selected == (1,)

    def test_infeasible_when_over_budget(self):
        assert not policies.evaluate_auction_selection([15, 10], 2, 20).feasible

    def test_negative_k(self):
        with pytest.raises(ValueError):
            policies.evaluate_auction_selection([1], -1, 10)

    @given(
        st.lists(st.one_of(st.none(), st.integers(min_value=0, max_value=50)), max_size=7),
        st.integers(min_value=0, max_value=7),
    )
    def test_matches_oracle(self, bids, k):
        outcome = policies.evaluate_auction_selection(bids, k, 10 ** 6)
        assert (outcome.selected, outcome.payments) == lowest_k_oracle(bids, k)


@settings(max_examples=10_000)
@given(answers, budgets, st.sampled_from(["majority", "flat"]))
def test_rewards_within_budget(values, tau, name):
    rewards = policies.evaluate(PolicySpec(name, tau, len(values)), values)
    assert all(r >= 0 for r in rewards)
    assert sum(rewards) <= tau
