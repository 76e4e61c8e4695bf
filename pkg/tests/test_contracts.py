"""
task_contracts 测试：部署检查、认证门槛、伪造移除、奖励指令与超时、拍卖流程
"""
from dataclasses import replace

import pytest

from crowdchain_sim.core import crypto_core
from crowdchain_sim.core.actors import TaskSpec
from crowdchain_sim.core.adversaries import DoubleSubmitWorker, GarbageWorker
from crowdchain_sim.core.contracts import Phase, TaskParams
from crowdchain_sim.core.encoding import encode_int, encode_int_list, encode_str
from crowdchain_sim.core.ledger import DEPLOY, ExecutionContext, call_payload
from crowdchain_sim.core.policies import PolicySpec
from crowdchain_sim.core.proof_system import PROOF_SIZE, RelationId
from crowdchain_sim.core.relations import contract_prefix, seal_payload


def _view(ledger, task):
    return ledger.get_contract(task.contract).snapshot()


def _reasons(view):
    return [reason for _, reason in view.dropped]


def _bogus_proof(relation: RelationId) -> bytes:
    return relation.code + b"\x00" * (PROOF_SIZE - 1)


class TestDeploy:
    def test_enters_collecting(self, publish, ledger):
        task = publish(t_a=5)
        view = _view(ledger, task)
        assert view.phase == Phase.COLLECTING
        assert view.deadline == 6
        assert [phase for phase, _ in view.phase_heights] == [Phase.INIT, Phase.COLLECTING]
        assert ledger.get_balance(task.contract) == 30

    def test_insufficient_deposit_refunded(self, publish, ledger):
        task = publish(deposit=5)
        assert ledger.get_contract(task.contract) is None
        assert ledger.blocks[-1].receipts[0].reason == "insufficient_deposit"
        assert ledger.get_balance(task.alpha_r) == 30

    def test_invalid_params(self, publish, ledger):
        task = publish(t_i=0)
        assert ledger.get_contract(task.contract) is None
        assert ledger.blocks[-1].receipts[0].reason == "invalid_params"

    def test_auction_needs_k_and_bidding_window(self, publish, ledger):
        task = publish(policy="auction_lowest_k", contract_type="auction", n=4, tau=20, t_b=0, k=2)
        assert ledger.blocks[-1].receipts[0].reason == "invalid_params"
        assert ledger.get_contract(task.contract) is None


class TestDeployAuthentication:
    @pytest.fixture
    def prepared(self, requester, ledger):
        spec = TaskSpec(PolicySpec("majority", 30, 3), 5, 5)
        task = requester.prepare(spec)
        outsider = requester.fresh_address()
        ledger.genesis({task.alpha_r: 30, crypto_core.derive_address(outsider.pk): 30})
        return task, outsider

    def _params(self, requester, task, contract, prefix_contract=None):
        system = requester.system
        spec = task.spec
        pi_r = requester.authenticate(contract_prefix(prefix_contract or contract) + task.alpha_r)
        return TaskParams(
            alpha_r=task.alpha_r, pi_r=pi_r, mpk=system.mpk, tau=30, epk=task.enc_keys.epk,
            pp_auth=system.pp_auth, pp_reward=system.pp_reward, pp_fake=system.pp_fake,
            n=3, t_a=spec.t_a, t_i=spec.t_i, policy=spec.policy,
        )

    def _deploy(self, requester, ledger, keys, params, value=30):
        requester.send(keys, DEPLOY, call_payload("deploy", encode_str("quality_aware"), params.to_bytes()), value)
        return ledger.mine_block().receipts[0]

    def test_pi_r_must_cover_contract_address(self, prepared, requester, ledger):
        task, _ = prepared
        contract = ledger.next_contract_address(task.alpha_r)
        params = self._params(requester, task, contract, prefix_contract=b"\x42" * 20)
        receipt = self._deploy(requester, ledger, task.address_keys, params)
        assert receipt.reason == "requester_unauthenticated"
        assert ledger.get_balance(task.alpha_r) == 30

    def test_sender_must_be_alpha_r(self, prepared, requester, ledger):
        task, outsider = prepared
        contract = ledger.next_contract_address(crypto_core.derive_address(outsider.pk))
        receipt = self._deploy(requester, ledger, outsider, self._params(requester, task, contract))
        assert receipt.reason == "sender_mismatch"

    def test_malformed_params(self, prepared, requester, ledger):
        task, _ = prepared
        requester.send(task.address_keys, DEPLOY, call_payload("deploy", encode_str("quality_aware"), b"junk"), 30)
        assert ledger.mine_block().receipts[0].reason == "malformed_params"

    def test_unknown_contract_type(self, prepared, requester, ledger):
        task, _ = prepared
        contract = ledger.next_contract_address(task.alpha_r)
        params = self._params(requester, task, contract)
        requester.send(task.address_keys, DEPLOY, call_payload("deploy", encode_str("lottery"), params.to_bytes()), 30)
        assert ledger.mine_block().receipts[0].reason == "unknown_contract_type:lottery"

    @pytest.mark.parametrize("field, value", [("tau", 25), ("n", 2)])
    def test_policy_must_match_params(self, prepared, requester, ledger, field, value):
        task, _ = prepared
        contract = ledger.next_contract_address(task.alpha_r)
        params = replace(self._params(requester, task, contract), **{field: value})
        receipt = self._deploy(requester, ledger, task.address_keys, params)
        assert receipt.reason == "policy_mismatch"
        assert ledger.get_contract(contract) is None
        assert ledger.get_balance(task.alpha_r) == 30

    def test_params_codec(self, prepared, requester, ledger):
        task, _ = prepared
        params = self._params(requester, task, b"\x01" * 20)
        assert TaskParams.from_bytes(params.to_bytes()) == params
        auction = replace(params, pp_auction=requester.system.pp_auction, t_b=3, k=2)
        assert TaskParams.from_bytes(auction.to_bytes()) == auction


class TestSubmissions:
    def test_honest_flow(self, publish, ledger, requester, make_worker):
        task = publish(answer_set=("A", "B"))
        workers = [make_worker("w1", "A"), make_worker("w2", "A"), make_worker("w3", "B")]
        for worker in workers:
            worker.submit(task.contract)
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.AWAITING_INSTRUCTION
        assert view.deadline == 2 + 5
        assert [r.slot for r in view.records] == [0, 1, 2]

        requester.settle(task)
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.SETTLED
        assert view.settlement.kind == "instruction"
        assert view.settlement.refund == 10
        assert [ledger.get_balance(w.address_for(task.contract)) for w in workers] == [10, 10, 0]
        assert ledger.get_balance(task.contract) == 0

    def test_first_n_only(self, publish, ledger, make_worker):
        task = publish(n=1, tau=10)
        make_worker("w1").submit(task.contract)
        make_worker("w2").submit(task.contract)
        ledger.mine_block()
        view = _view(ledger, task)
        assert len(view.records) == 1
        assert _reasons(view) == ["full"]

    def test_same_certificate_rejected(self, publish, ledger, make_worker):
        task = publish()
        make_worker("w1", cls=DoubleSubmitWorker).submit(task.contract)
        ledger.mine_block()
        view = _view(ledger, task)
        assert len(view.records) == 1
        assert _reasons(view) == ["linked_to_existing"]

    def test_requester_cannot_submit(self, publish, ledger, requester):
        task = publish()
        requester.sealed_call(task.contract, task.enc_keys.epk, "submit", b"A")
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == ["linked_to_requester"]

    def test_attestation_must_bind_sender(self, publish, ledger, make_worker):
        task = publish()
        worker = make_worker("w1")
        keys = worker.fresh_address()
        ciphertext = worker.encrypt_to(task.enc_keys.epk, seal_payload(keys.sk, keys.pk, task.contract, b"A"))
        attestation = worker.authenticate(contract_prefix(task.contract) + b"\x00" * 20 + ciphertext)
        worker.send(keys, task.contract, call_payload("submit", attestation.to_bytes(), ciphertext))
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == ["attestation_invalid"]

    def test_late_submission(self, publish, ledger, make_worker):
        task = publish(t_a=1)
        ledger.mine_block()
        assert _view(ledger, task).phase == Phase.AWAITING_INSTRUCTION
        worker = make_worker("w1")
        assert worker.submit(task.contract) is None
        worker.sealed_call(task.contract, task.enc_keys.epk, "submit", b"A")
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == ["wrong_phase"]

    @pytest.mark.parametrize("payload, reason", [
        (b"\xff\xff", "malformed_payload"),
        (call_payload("submit", b"only-one"), "malformed_payload"),
        (call_payload("submit", b"\x00" * 5, b"c"), "malformed_payload"),
        (call_payload("poke"), "unknown_method:poke"),
    ])
    def test_malformed_calls(self, publish, ledger, make_worker, payload, reason):
        task = publish()
        worker = make_worker("w1")
        worker.send(worker.fresh_address(), task.contract, payload)
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == [reason]


class TestFakeRemoval:
    def test_garbage_removed_and_slot_reopened(self, publish, ledger, requester, make_worker):
        task = publish(t_a=8)
        make_worker("g", cls=GarbageWorker).submit(task.contract)
        ledger.mine_block()
        assert len(requester.police(task)) == 1
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.removed_slots == (0,)
        assert view.records == ()

        for name in ("w1", "w2", "w3"):
            make_worker(name).submit(task.contract)
        ledger.mine_block()
        view = _view(ledger, task)
        assert [r.slot for r in view.records] == [1, 2, 3]
        assert view.phase == Phase.AWAITING_INSTRUCTION

    def test_honest_submission_not_policed(self, publish, ledger, requester, make_worker):
        task = publish()
        make_worker("w1").submit(task.contract)
        ledger.mine_block()
        assert requester.police(task) == []

    def test_only_requester_may_remove(self, publish, ledger, make_worker):
        task = publish()
        worker = make_worker("w1")
        worker.submit(task.contract)
        ledger.mine_block()
        payload = call_payload("fake", encode_int(0), _bogus_proof(RelationId.FAKE))
        worker.send(worker.fresh_address(), task.contract, payload)
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == ["not_requester"]

    def test_unknown_slot_and_invalid_proof(self, publish, ledger, requester, make_worker):
        task = publish()
        make_worker("w1").submit(task.contract)
        ledger.mine_block()
        for slot in (99, 0):
            payload = call_payload("fake", encode_int(slot), _bogus_proof(RelationId.FAKE))
            requester.send(task.address_keys, task.contract, payload)
        ledger.mine_block()
        view = _view(ledger, task)
        assert _reasons(view) == ["unknown_slot", "fake_proof_invalid"]
        assert len(view.records) == 1


class TestInstruction:
    @pytest.fixture
    def collected(self, publish, ledger, make_worker):
        task = publish(t_i=3)
        for name in ("w1", "w2", "w3"):
            make_worker(name).submit(task.contract)
        ledger.mine_block()
        return task

    def test_reward_length(self, collected, ledger, requester):
        payload = call_payload("reward", encode_int_list([10, 10]), _bogus_proof(RelationId.REWARD))
        requester.send(collected.address_keys, collected.contract, payload)
        ledger.mine_block()
        assert _reasons(_view(ledger, collected)) == ["reward_length"]

    def test_forged_reward_proof(self, collected, ledger, requester):
        payload = call_payload("reward", encode_int_list([30, 0, 0]), _bogus_proof(RelationId.REWARD))
        requester.send(collected.address_keys, collected.contract, payload)
        ledger.mine_block()
        assert _reasons(_view(ledger, collected)) == ["reward_proof_invalid"]
        assert _view(ledger, collected).phase == Phase.AWAITING_INSTRUCTION

    def test_worker_cannot_instruct(self, collected, ledger, make_worker):
        worker = make_worker("w9")
        payload = call_payload("reward", encode_int_list([0, 0, 0]), _bogus_proof(RelationId.REWARD))
        worker.send(worker.fresh_address(), collected.contract, payload)
        ledger.mine_block()
        assert _reasons(_view(ledger, collected)) == ["not_requester"]

    def test_timeout_splits_budget(self, publish, ledger, make_worker):
        task = publish(tau=10, t_i=2)
        for name in ("w1", "w2", "w3"):
            make_worker(name).submit(task.contract)
        ledger.mine_block()
        ledger.mine_block()
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.SETTLED
        assert view.settlement.kind == "timeout"
        assert [amount for _, amount in view.settlement.payouts] == [3, 3, 3]
        assert view.settlement.refund == 1
        assert ledger.get_balance(task.alpha_r) == 1

    def test_empty_task_refunds_everything(self, publish, ledger):
        task = publish(t_a=1, t_i=1)
        ledger.mine_block()
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.settlement.kind == "timeout"
        assert view.settlement.payouts == ()
        assert ledger.get_balance(task.alpha_r) == 30

    def test_phases_never_go_back(self, collected, ledger):
        contract = ledger.get_contract(collected.contract)
        with pytest.raises(RuntimeError):
            contract._enter(ExecutionContext(ledger, ledger.height, collected.contract), Phase.COLLECTING)


class TestAuction:
    @pytest.fixture
    def auction(self, publish, ledger, make_worker):
        task = publish(policy="auction_lowest_k", contract_type="auction", n=4, tau=20, t_a=3, t_i=3, t_b=3, k=2)
        bidders = [make_worker(f"b{i}", bid=bid) for i, bid in enumerate((5, 7, 3, 9))]
        for bidder in bidders:
            bidder.place_bid(task.contract)
        ledger.mine_block()
        return task, bidders

    def test_lowest_two_paid_on_answer(self, auction, ledger, requester):
        task, bidders = auction
        assert _view(ledger, task).phase == Phase.AWAITING_SELECTION
        requester.select(task)
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.ANSWERING
        assert sorted(amount for _, amount in view.selection) == [3, 5]

        assert bidders[1].deliver(task.contract) is None
        for bidder in bidders:
            bidder.deliver(task.contract)
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.SETTLED
        assert view.settlement.kind == "auction"
        assert view.settlement.refund == 12
        assert [ledger.get_balance(b.address_for(task.contract)) for b in bidders] == [5, 0, 3, 0]
        assert len(view.answers) == 2

    def test_loser_cannot_answer(self, auction, ledger, requester):
        task, bidders = auction
        requester.select(task)
        ledger.mine_block()
        loser = bidders[3]
        loser.send(loser.task_addresses[task.contract], task.contract, call_payload("answer", b"x"))
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == ["not_selected"]

    def test_selection_checks(self, auction, ledger, requester):
        task, _ = auction
        bad_index = call_payload("select", encode_int_list([10]), encode_int_list([3]), _bogus_proof(RelationId.AUCTION))
        bad_proof = call_payload("select", encode_int_list([3]), encode_int_list([20]), _bogus_proof(RelationId.AUCTION))
        requester.send(task.address_keys, task.contract, bad_index)
        requester.send(task.address_keys, task.contract, bad_proof)
        ledger.mine_block()
        assert _reasons(_view(ledger, task)) == ["selection_malformed", "selection_proof_invalid"]

    def test_no_selection_falls_back_to_all_bidders(self, auction, ledger):
        task, bidders = auction
        for _ in range(3):
            ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.ANSWERING
        assert ledger.get_contract(task.contract).fallback
        assert sorted(amount for _, amount in view.selection) == [5, 5, 5, 5]
        for bidder in bidders[:3]:
            bidder.deliver(task.contract)
        ledger.mine_block()
        for _ in range(3):
            ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.SETTLED
        assert view.settlement.refund == 5
        assert [ledger.get_balance(b.address_for(task.contract)) for b in bidders] == [5, 5, 5, 0]

    def test_shared_address_paid_per_selected_slot(self, publish, ledger, requester, make_worker):
        task = publish(policy="auction_lowest_k", contract_type="auction", n=3, tau=20, t_a=3, t_i=3, t_b=3, k=2)
        first, second, third = make_worker("b0", bid=4), make_worker("b1", bid=6), make_worker("b2", bid=9)
        first.place_bid(task.contract)
        shared = first.task_addresses[task.contract]
        epk = _view(ledger, task).params.epk
        second.sealed_call(task.contract, epk, "bid", encode_int(6), keys=shared)
        third.place_bid(task.contract)
        ledger.mine_block()
        assert len(_view(ledger, task).records) == 3

        requester.select(task)
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.selection == ((0, 4), (1, 6))

        first.deliver(task.contract)
        first.deliver(task.contract)
        ledger.mine_block()
        view = _view(ledger, task)
        assert view.phase == Phase.SETTLED
        assert ledger.get_balance(first.address_for(task.contract)) == 10
        assert view.settlement.refund == 10
