"""
理想公共账本仿真
签名交易、带对手重排的交易池、离散时钟出块、合约账户与余额转账

账本没有分叉：一旦上链的交易效果永不回滚；同一种子与对手策略产生字节一致的区块序列。
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from . import crypto_core
from .crypto_core import SigKeyPair, derive_address, hash_bytes
from .encoding import decode_fields, decode_str, encode_fields, encode_int, encode_str
from .exceptions import ContractReject, DecodeError, LedgerInvariantError, TxRejected
from .mempool import FifoPolicy, MempoolPolicy, PendingTx
from ..logger import logger

# 部署交易的目标地址
DEPLOY = b""
GENESIS_PARENT = b"\x00" * crypto_core.DIGEST_SIZE


def address_hex(address: Optional[bytes]) -> str:
    if not address:
        return "-"
    return address.hex()


def call_payload(method: str, *args: bytes) -> bytes:
    """合约调用负载：方法名 + 参数，长度前缀编码"""
    return encode_fields(encode_str(method), *args)


def parse_call(payload: bytes) -> Tuple[str, List[bytes]]:
    fields = decode_fields(payload)
    if not fields:
        raise DecodeError("空调用负载")
    return decode_str(fields[0]), fields[1:]


@dataclass(frozen=True)
class Transaction:
    """签名交易"""
    sender: bytes
    sender_pk: bytes
    target: bytes
    value: int
    payload: bytes
    nonce: int
    sig: bytes

    @staticmethod
    def signing_bytes(sender: bytes, target: bytes, value: int, payload: bytes, nonce: int) -> bytes:
        return encode_fields(b"tx", sender, target, encode_int(value), payload, encode_int(nonce))

    @classmethod
    def create(cls, keys: SigKeyPair, target: bytes, value: int, payload: bytes, nonce: int) -> "Transaction":
        sender = derive_address(keys.pk)
        sig = crypto_core.sign(keys.sk, cls.signing_bytes(sender, target, value, payload, nonce))
        return cls(sender, keys.pk, target, value, payload, nonce, sig)

    def to_bytes(self) -> bytes:
        return encode_fields(
            self.sender, self.sender_pk, self.target, encode_int(self.value),
            self.payload, encode_int(self.nonce), self.sig,
        )

    @property
    def tx_id(self) -> bytes:
        return hash_bytes(self.to_bytes())

    @property
    def kind(self) -> str:
        try:
            method, _ = parse_call(self.payload)
        except DecodeError:
            return "transfer" if not self.payload else "raw"
        return method

    def signature_valid(self) -> bool:
        return crypto_core.verify_sig(
            self.sender_pk,
            self.signing_bytes(self.sender, self.target, self.value, self.payload, self.nonce),
            self.sig,
        )


class RejectReason(str, Enum):
    """交易池拒绝原因"""
    BAD_SIGNATURE = "bad_signature"
    BAD_SENDER = "bad_sender"
    BAD_NONCE = "bad_nonce"
    INSUFFICIENT_BALANCE = "insufficient_balance"
    NEGATIVE_VALUE = "negative_value"


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: Optional[RejectReason] = None


@dataclass(frozen=True)
class Receipt:
    """交易执行回执"""
    height: int
    tx_id: bytes
    sender: bytes
    target: bytes
    kind: str
    ok: bool
    value: int
    reason: str = ""
    contract: Optional[bytes] = None

    @property
    def status(self) -> str:
        return "ok" if self.ok else f"failed:{self.reason}"


@dataclass(frozen=True)
class Block:
    height: int
    parent: bytes
    txs: Tuple[Transaction, ...]
    receipts: Tuple[Receipt, ...] = field(repr=False)

    @property
    def block_hash(self) -> bytes:
        return hash_bytes(encode_fields(encode_int(self.height), self.parent, *(tx.to_bytes() for tx in self.txs)))


class TraceWriter:
    """
    轨迹输出

    文件头以 # 开头，记录种子与密码原语；之后每条交易或合约事件一行，
    制表符分隔：高度、发送方、目标、类型、状态、金额。
    """

    def __init__(self):
        self.lines: List[str] = []

    def header(self, **items):
        for key, value in items.items():
            self.lines.append(f"# {key}={value}")

    def comment(self, text: str):
        self.lines.append(f"# {text}")

    def row(self, height: int, source: str, target: str, kind: str, status: str, value: int):
        self.lines.append("\t".join([str(height), source, target, kind, status, str(value)]))

    def to_text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def save(self, path: Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")


class ExecutionContext:
    """区块执行期间交给合约的上下文，转账记入日志以便回滚"""

    def __init__(self, ledger: "Ledger", height: int, contract: Optional[bytes] = None):
        self.ledger = ledger
        self.height = height
        self.contract = contract
        self._journal: List[Tuple[bytes, bytes, int]] = []
        self._events: List[Tuple[str, str, str, int]] = []

    def balance(self, address: bytes) -> int:
        return self.ledger.get_balance(address)

    def transfer(self, src: bytes, dst: bytes, value: int) -> bool:
        ok = self.ledger.transfer(src, dst, value)
        if ok and value:
            self._journal.append((src, dst, value))
        return ok

    def pay(self, dst: bytes, value: int, kind: str = "payout") -> bool:
        """从当前合约向 dst 转账并记录轨迹事件"""
        ok = self.transfer(self.contract, dst, value)
        self._events.append((address_hex(dst), kind, "ok" if ok else "failed:insufficient_balance", value))
        return ok

    def emit(self, kind: str, target: Optional[bytes] = None, value: int = 0):
        self._events.append((address_hex(target), kind, "ok", value))

    def revert(self):
        for src, dst, value in reversed(self._journal):
            self.ledger.transfer(dst, src, value)
        self._journal.clear()
        self._events.clear()

    def flush_events(self, trace: TraceWriter):
        for target, kind, status, value in self._events:
            trace.row(self.height, address_hex(self.contract), target, kind, status, value)
        self._events.clear()
        self._journal.clear()


ContractFactory = Callable[[str, bytes, bytes, ExecutionContext, Transaction], object]


class Ledger:
    """账本状态机（单写者）"""

    def __init__(self, delta: int = 1, trace: Optional[TraceWriter] = None,
                 contract_factory: Optional[ContractFactory] = None, proof_backend=None):
        if delta < 1:
            raise ValueError("同步上界 Δ 必须 ≥ 1")
        self.delta = delta
        self.trace = trace or TraceWriter()
        self.blocks: List[Block] = []
        self._balances: Dict[bytes, int] = {}
        self._contracts: Dict[bytes, object] = {}
        self._nonces: Dict[bytes, int] = {}
        self._deploy_counters: Dict[bytes, int] = {}
        self._mempool: List[PendingTx] = []
        self._seq = 0
        self._supply = 0
        self._contract_factory = contract_factory
        # 合约验证证明时使用的后端，None 表示全局默认后端
        self.proof_backend = proof_backend

    # ------------------------------------------------------------------
    # 状态查询
    # ------------------------------------------------------------------

    @property
    def height(self) -> int:
        """已出块的最高高度（创世后为 0）"""
        return len(self.blocks)

    @property
    def total_supply(self) -> int:
        return self._supply

    def get_balance(self, address: bytes) -> int:
        """未知地址余额为 0"""
        return self._balances.get(address, 0)

    def balances(self) -> Dict[bytes, int]:
        return dict(self._balances)

    def get_contract(self, address: bytes):
        return self._contracts.get(address)

    def contracts(self) -> Dict[bytes, object]:
        return dict(self._contracts)

    def pending(self) -> List[Transaction]:
        """交易池的公开视图（对手可见）"""
        return [item.tx for item in self._mempool]

    def next_nonce(self, address: bytes) -> int:
        return self._nonces.get(address, 0) + sum(1 for item in self._mempool if item.tx.sender == address)

    @staticmethod
    def contract_address(deployer: bytes, counter: int) -> bytes:
        """合约地址 = H(α_R || counter) 截断"""
        return hash_bytes(deployer + encode_int(counter))[:crypto_core.ADDRESS_SIZE]

    def next_contract_address(self, deployer: bytes) -> bytes:
        pending_deploys = sum(1 for item in self._mempool if item.tx.sender == deployer and item.tx.target == DEPLOY)
        return self.contract_address(deployer, self._deploy_counters.get(deployer, 0) + pending_deploys)

    def iter_ledger_bytes(self) -> Iterator[bytes]:
        """所有已上链交易的字节（结构化匿名性扫描使用）"""
        for block in self.blocks:
            for tx in block.txs:
                yield tx.to_bytes()

    # ------------------------------------------------------------------
    # 创世与交易提交
    # ------------------------------------------------------------------

    def genesis(self, allocations: Dict[bytes, int]):
        """创世分配，确定总供应量"""
        if self.blocks or self._supply:
            raise LedgerInvariantError("创世只能执行一次")
        for address, amount in allocations.items():
            if amount < 0:
                raise ValueError("创世余额不能为负")
            self._balances[address] = self._balances.get(address, 0) + amount
            self._supply += amount
        self.trace.comment(f"genesis supply={self._supply} accounts={len(allocations)}")

    def submit_tx(self, tx: Transaction) -> SubmitResult:
        """校验签名、发送方推导、nonce 与余额后放入交易池"""
        reason = None
        if tx.value < 0:
            reason = RejectReason.NEGATIVE_VALUE
        elif derive_address(tx.sender_pk) != tx.sender:
            reason = RejectReason.BAD_SENDER
        elif not tx.signature_valid():
            reason = RejectReason.BAD_SIGNATURE
        elif tx.nonce != self.next_nonce(tx.sender):
            reason = RejectReason.BAD_NONCE
        else:
            outgoing = sum(item.tx.value for item in self._mempool if item.tx.sender == tx.sender)
            if self.get_balance(tx.sender) - outgoing < tx.value:
                reason = RejectReason.INSUFFICIENT_BALANCE

        if reason is not None:
            logger.debug(f"交易被拒绝: {tx.kind} from {address_hex(tx.sender)[:12]} ({reason.value})")
            return SubmitResult(False, reason)

        self._mempool.append(PendingTx(tx, self.height, self._seq))
        self._seq += 1
        return SubmitResult(True)

    def submit_or_raise(self, tx: Transaction) -> Transaction:
        result = self.submit_tx(tx)
        if not result.accepted:
            raise TxRejected(result.reason.value)
        return tx

    # ------------------------------------------------------------------
    # 出块
    # ------------------------------------------------------------------

    def _schedule(self, policy: MempoolPolicy, height: int) -> List[PendingTx]:
        include, defer = policy.schedule(list(self._mempool), height)
        known = {item.seq for item in self._mempool}
        chosen = [item for item in include if item.seq in known]
        chosen_seqs = {item.seq for item in chosen}
        if len(chosen_seqs) != len(chosen):
            raise LedgerInvariantError("交易池策略重复打包了同一交易")

        # Δ 到期的交易强制打包
        for item in self._mempool:
            if item.seq not in chosen_seqs and item.submitted_height + self.delta <= height:
                chosen.append(item)
                chosen_seqs.add(item.seq)

        # 同一发送方：nonce 较小的交易被推迟时，较大的也必须推迟
        blocked: Dict[bytes, int] = {}
        for item in self._mempool:
            if item.seq not in chosen_seqs:
                sender = item.tx.sender
                blocked[sender] = min(blocked.get(sender, item.tx.nonce), item.tx.nonce)
        chosen = [item for item in chosen if item.tx.nonce < blocked.get(item.tx.sender, item.tx.nonce + 1)]

        # 同一发送方的交易在其占据的位置上按 nonce 重新排列
        positions: Dict[bytes, List[int]] = {}
        for index, item in enumerate(chosen):
            positions.setdefault(item.tx.sender, []).append(index)
        ordered = list(chosen)
        for sender, indexes in positions.items():
            by_nonce = sorted((chosen[i] for i in indexes), key=lambda item: item.tx.nonce)
            for index, item in zip(indexes, by_nonce):
                ordered[index] = item
        return ordered

    def mine_block(self, policy: Optional[MempoolPolicy] = None) -> Block:
        """
        打包并执行一个区块

        交易按对手策略排序后依次执行；合约拒绝的交易仍然上链但标记失败并回滚转账。
        所有交易执行完毕后驱动各合约的区块时钟。
        """
        policy = policy or FifoPolicy()
        height = self.height + 1
        ordered = self._schedule(policy, height)
        included = {item.seq for item in ordered}
        self._mempool = [item for item in self._mempool if item.seq not in included]

        self.trace.comment(
            f"block {height} policy={policy.name} "
            f"submitted={','.join(str(item.seq) for item in sorted(ordered, key=lambda i: i.seq))} "
            f"executed={','.join(str(item.seq) for item in ordered)}"
        )

        receipts = [self._execute(item.tx, height) for item in ordered]

        for address, contract in list(self._contracts.items()):
            ctx = ExecutionContext(self, height, address)
            contract.on_block(ctx)
            ctx.flush_events(self.trace)

        parent = self.blocks[-1].block_hash if self.blocks else GENESIS_PARENT
        block = Block(height, parent, tuple(item.tx for item in ordered), tuple(receipts))
        self.blocks.append(block)
        self.check_conservation()
        logger.debug(f"出块 #{height}: {len(ordered)} 笔交易，交易池剩余 {len(self._mempool)}")
        return block

    def _execute(self, tx: Transaction, height: int) -> Receipt:
        self._nonces[tx.sender] = self._nonces.get(tx.sender, 0) + 1

        if self.get_balance(tx.sender) < tx.value:
            receipt = Receipt(height, tx.tx_id, tx.sender, tx.target, tx.kind, False, tx.value, "insufficient_balance")
            self._record(receipt)
            return receipt

        if tx.target == DEPLOY:
            ctx = ExecutionContext(self, height)
            contract_address, reason = self.deploy_contract(tx, height, ctx)
            receipt = Receipt(height, tx.tx_id, tx.sender, contract_address or DEPLOY, tx.kind,
                              contract_address is not None, tx.value, reason, contract_address)
            self._record(receipt)
            ctx.flush_events(self.trace)
            return receipt

        ctx = ExecutionContext(self, height, tx.target)
        ctx.transfer(tx.sender, tx.target, tx.value)
        contract = self._contracts.get(tx.target)
        ok, reason = True, ""
        if contract is not None:
            try:
                contract.handle(ctx, tx)
            except ContractReject as e:
                ctx.revert()
                ok, reason = False, e.reason
                logger.debug(f"合约拒绝 {tx.kind}: {e.reason}")
        receipt = Receipt(height, tx.tx_id, tx.sender, tx.target, tx.kind, ok, tx.value, reason)
        self._record(receipt)
        ctx.flush_events(self.trace)
        return receipt

    def _record(self, receipt: Receipt):
        target = receipt.contract if receipt.contract else receipt.target
        self.trace.row(
            receipt.height, address_hex(receipt.sender),
            "deploy" if target == DEPLOY else address_hex(target),
            receipt.kind, receipt.status, receipt.value,
        )

    def deploy_contract(self, tx: Transaction, height: int,
                        ctx: Optional[ExecutionContext] = None) -> Tuple[Optional[bytes], str]:
        """
        部署合约：地址由部署者与其部署计数推导，押金转入合约地址

        构造函数拒绝时押金退回，计数仍然递增。

        Returns:
            (合约地址或 None, 失败原因)
        """
        counter = self._deploy_counters.get(tx.sender, 0)
        address = self.contract_address(tx.sender, counter)
        self._deploy_counters[tx.sender] = counter + 1

        try:
            method, args = parse_call(tx.payload)
            if method != "deploy" or len(args) != 2:
                raise ContractReject("malformed_deploy")
            contract_type = decode_str(args[0])
        except DecodeError:
            return None, "malformed_deploy"
        except ContractReject as e:
            return None, e.reason

        own_ctx = ctx is None
        ctx = ctx or ExecutionContext(self, height)
        ctx.contract = address
        ctx.transfer(tx.sender, address, tx.value)
        factory = self._contract_factory
        if factory is None:
            from .contracts.base import create_contract
            factory = create_contract
        try:
            contract = factory(contract_type, address, args[1], ctx, tx)
        except ContractReject as e:
            ctx.revert()
            logger.info(f"合约部署被拒绝: {e.reason}")
            return None, e.reason
        self._contracts[address] = contract
        if own_ctx:
            ctx.flush_events(self.trace)
        logger.debug(f"合约已部署: {contract_type} @ {address_hex(address)}")
        return address, ""

    def transfer(self, src: bytes, dst: bytes, value: int) -> bool:
        """余额不足时返回 False 且不改变状态"""
        if value < 0:
            return False
        if self.get_balance(src) < value:
            return False
        if value == 0:
            return True
        self._balances[src] = self._balances[src] - value
        self._balances[dst] = self._balances.get(dst, 0) + value
        return True

    def check_conservation(self):
        total = sum(self._balances.values())
        if total != self._supply:
            raise LedgerInvariantError(f"总量不守恒: {total} != {self._supply}")
        if any(v < 0 for v in self._balances.values()):
            raise LedgerInvariantError("出现负余额")
