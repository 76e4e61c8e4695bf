"""
ledger_sim 测试
"""
import pytest

from crowdchain_sim.core import crypto_core
from crowdchain_sim.core.encoding import encode_str
from crowdchain_sim.core.exceptions import ConfigError, ContractReject, DeployRejected, LedgerInvariantError, TxRejected
from crowdchain_sim.core.ledger import DEPLOY, Ledger, RejectReason, TraceWriter, Transaction, call_payload, parse_call
from crowdchain_sim.core.mempool import CallbackPolicy, DelayPolicy, FrontRunPolicy, ReversePolicy, create_policy


def _keys(label):
    return crypto_core.sig_keygen(crypto_core.derive_seed(0, label))


def _addr(keys):
    return crypto_core.derive_address(keys.pk)


class Echo:
    """测试用合约：记录调用，方法名为 reject 时拒绝"""

    def __init__(self, address):
        self.address = address
        self.calls = []
        self.blocks = []

    def handle(self, ctx, tx):
        method, args = parse_call(tx.payload)
        if method == "reject":
            ctx.pay(tx.sender, 1)
            raise ContractReject("nope")
        if method == "refund":
            ctx.pay(tx.sender, tx.value)
        self.calls.append(method)

    def on_block(self, ctx):
        self.blocks.append(ctx.height)


def echo_factory(kind, address, init, ctx, tx):
    if kind != "echo":
        raise DeployRejected(f"unknown_contract_type:{kind}")
    return Echo(address)


@pytest.fixture
def alice():
    return _keys("alice")


@pytest.fixture
def bob():
    return _keys("bob")


@pytest.fixture
def chain(alice, bob):
    ledger = Ledger(delta=2, contract_factory=echo_factory)
    ledger.genesis({_addr(alice): 100, _addr(bob): 50})
    return ledger


def _send(ledger, keys, target, value=0, payload=b""):
    tx = Transaction.create(keys, target, value, payload, ledger.next_nonce(_addr(keys)))
    return ledger.submit_or_raise(tx)


def test_genesis_only_once(chain):
    assert chain.total_supply == 150
    with pytest.raises(LedgerInvariantError):
        chain.genesis({b"x" * 20: 1})


def test_transfer(chain, alice, bob):
    _send(chain, alice, _addr(bob), 30)
    block = chain.mine_block()
    assert block.receipts[0].ok
    assert chain.get_balance(_addr(alice)) == 70
    assert chain.get_balance(_addr(bob)) == 80
    assert chain.get_balance(b"\x00" * 20) == 0


class TestSubmission:
    def test_bad_nonce(self, chain, alice, bob):
        tx = Transaction.create(alice, _addr(bob), 1, b"", 5)
        assert chain.submit_tx(tx).reason == RejectReason.BAD_NONCE

    def test_bad_signature(self, chain, alice, bob):
        tx = Transaction.create(alice, _addr(bob), 1, b"", 0)
        forged = Transaction(tx.sender, tx.sender_pk, tx.target, 99, tx.payload, tx.nonce, tx.sig)
        assert chain.submit_tx(forged).reason == RejectReason.BAD_SIGNATURE

    def test_bad_sender(self, chain, alice, bob):
        tx = Transaction.create(alice, _addr(bob), 1, b"", 0)
        spoofed = Transaction(_addr(bob), tx.sender_pk, tx.target, tx.value, tx.payload, tx.nonce, tx.sig)
        assert chain.submit_tx(spoofed).reason == RejectReason.BAD_SENDER

    def test_pending_outgoing_counts_against_balance(self, chain, alice, bob):
        _send(chain, alice, _addr(bob), 60)
        with pytest.raises(TxRejected) as excinfo:
            _send(chain, alice, _addr(bob), 60)
        assert excinfo.value.reason == RejectReason.INSUFFICIENT_BALANCE.value

    def test_mempool_is_public(self, chain, alice, bob):
        tx = _send(chain, alice, _addr(bob), 1)
        assert chain.pending() == [tx]


class TestScheduling:
    def test_delay_is_bounded_by_delta(self, chain, alice, bob):
        _send(chain, alice, _addr(bob), 1)
        policy = DelayPolicy(delay=10)
        assert chain.mine_block(policy).txs == ()
        assert len(chain.mine_block(policy).txs) == 1

    def test_delay_only_targeted_senders(self, chain, alice, bob):
        _send(chain, alice, _addr(bob), 1)
        _send(chain, bob, _addr(alice), 1)
        block = chain.mine_block(DelayPolicy(delay=1, senders=[_addr(alice)]))
        assert [tx.sender for tx in block.txs] == [_addr(bob)]

    def test_reverse_keeps_nonce_order_per_sender(self, chain, alice, bob):
        first = _send(chain, alice, _addr(bob), 1)
        second = _send(chain, alice, _addr(bob), 2)
        other = _send(chain, bob, _addr(alice), 3)
        block = chain.mine_block(ReversePolicy())
        assert block.txs[0] == other
        assert [tx for tx in block.txs if tx.sender == _addr(alice)] == [first, second]
        assert all(r.ok for r in block.receipts)

    def test_front_run(self, chain, alice, bob):
        victim = _send(chain, alice, _addr(bob), 1)
        attacker = _send(chain, bob, _addr(alice), 1)
        block = chain.mine_block(FrontRunPolicy([_addr(bob)]))
        assert block.txs == (attacker, victim)

    def test_policy_cannot_duplicate(self, chain, alice, bob):
        _send(chain, alice, _addr(bob), 1)
        policy = CallbackPolicy(lambda pending, height: (pending + pending, []))
        with pytest.raises(LedgerInvariantError):
            chain.mine_block(policy)

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            create_policy("teleport")


class TestContracts:
    def _deploy(self, chain, keys, value=10, kind="echo"):
        address = chain.next_contract_address(_addr(keys))
        _send(chain, keys, DEPLOY, value, call_payload("deploy", encode_str(kind), b""))
        block = chain.mine_block()
        return address, block.receipts[-1]

    def test_deploy_predicts_address(self, chain, alice):
        address, receipt = self._deploy(chain, alice)
        assert receipt.ok and receipt.contract == address
        assert chain.get_balance(address) == 10
        assert chain.get_contract(address).blocks == [1]

    def test_rejected_deploy_refunds(self, chain, alice):
        address, receipt = self._deploy(chain, alice, kind="mystery")
        assert not receipt.ok and receipt.reason == "unknown_contract_type:mystery"
        assert chain.get_contract(address) is None
        assert chain.get_balance(_addr(alice)) == 100
        # 失败的部署仍占用计数
        assert chain.next_contract_address(_addr(alice)) != address

    def test_rejected_call_reverts_transfers(self, chain, alice, bob):
        address, _ = self._deploy(chain, alice)
        _send(chain, bob, address, 5, call_payload("reject"))
        receipt = chain.mine_block().receipts[0]
        assert receipt.status == "failed:nope"
        assert chain.get_balance(_addr(bob)) == 50
        assert chain.get_balance(address) == 10

    def test_call_and_payout(self, chain, alice, bob):
        address, _ = self._deploy(chain, alice)
        _send(chain, bob, address, 5, call_payload("refund"))
        chain.mine_block()
        assert chain.get_contract(address).calls == ["refund"]
        assert chain.get_balance(_addr(bob)) == 50
        assert "payout" in chain.trace.to_text()

    def test_every_contract_ticks(self, chain, alice):
        address, _ = self._deploy(chain, alice)
        chain.mine_block()
        chain.mine_block()
        assert chain.get_contract(address).blocks == [1, 2, 3]


def test_trace_format(chain, alice, bob):
    _send(chain, alice, _addr(bob), 7)
    chain.mine_block()
    rows = [line.split("\t") for line in chain.trace.to_text().splitlines() if not line.startswith("#")]
    assert rows == [["1", _addr(alice).hex(), _addr(bob).hex(), "transfer", "ok", "7"]]


def test_identical_runs_are_byte_identical(alice, bob):
    def run():
        ledger = Ledger(delta=1, trace=TraceWriter())
        ledger.genesis({_addr(alice): 10})
        for value in (1, 2, 3):
            _send(ledger, alice, _addr(bob), value)
            ledger.mine_block(ReversePolicy())
        return ledger.trace.to_text(), ledger.blocks[-1].block_hash

    assert run() == run()


def test_conservation_is_checked(chain):
    chain._balances[b"\x09" * 20] = 1
    with pytest.raises(LedgerInvariantError):
        chain.mine_block()
