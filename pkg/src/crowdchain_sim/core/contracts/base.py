"""
任务合约基础设施
合约类型注册、阶段状态机、初始化参数编码以及两类合约共用的匿名认证门槛
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, Type

from .. import cpla_auth
from ..cpla_auth import Attestation
from ..encoding import decode_fields, decode_int, encode_fields, encode_int
from ..exceptions import ContractReject, DecodeError, DeployRejected
from ..ledger import ExecutionContext, Transaction, address_hex, parse_call
from ..relations import contract_prefix
from ..policies import PolicySpec
from ..proof_system import ProofBackend, PublicParams, proof_backend
from ...logger import logger


class Phase(str, Enum):
    """合约阶段，只能前进，SETTLED 为终态"""
    INIT = "init"
    COLLECTING = "collecting"
    AWAITING_INSTRUCTION = "awaiting_instruction"
    BIDDING = "bidding"
    AWAITING_SELECTION = "awaiting_selection"
    ANSWERING = "answering"
    SETTLED = "settled"


@dataclass(frozen=True)
class TaskParams:
    """合约初始化参数（部署负载）"""
    alpha_r: bytes
    pi_r: Attestation
    mpk: bytes
    tau: int
    epk: bytes
    pp_auth: PublicParams
    pp_reward: PublicParams
    pp_fake: PublicParams
    n: int
    t_a: int
    t_i: int
    policy: PolicySpec
    pp_auction: Optional[PublicParams] = None
    t_b: int = 0
    k: int = 0

    def to_bytes(self) -> bytes:
        return encode_fields(
            self.alpha_r,
            self.pi_r.to_bytes(),
            self.mpk,
            encode_int(self.tau),
            self.epk,
            self.pp_auth.to_bytes(),
            self.pp_reward.to_bytes(),
            self.pp_fake.to_bytes(),
            encode_int(self.n),
            encode_int(self.t_a),
            encode_int(self.t_i),
            self.policy.to_bytes(),
            self.pp_auction.to_bytes() if self.pp_auction else b"",
            encode_int(self.t_b),
            encode_int(self.k),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "TaskParams":
        (alpha_r, pi_r, mpk, tau, epk, pp_auth, pp_reward, pp_fake,
         n, t_a, t_i, policy, pp_auction, t_b, k) = decode_fields(data, 15)
        return cls(
            alpha_r=alpha_r,
            pi_r=Attestation.from_bytes(pi_r),
            mpk=mpk,
            tau=decode_int(tau),
            epk=epk,
            pp_auth=PublicParams.from_bytes(pp_auth),
            pp_reward=PublicParams.from_bytes(pp_reward),
            pp_fake=PublicParams.from_bytes(pp_fake),
            n=decode_int(n),
            t_a=decode_int(t_a),
            t_i=decode_int(t_i),
            policy=PolicySpec.from_bytes(policy),
            pp_auction=PublicParams.from_bytes(pp_auction) if pp_auction else None,
            t_b=decode_int(t_b),
            k=decode_int(k),
        )


@dataclass(frozen=True)
class SubmissionRecord:
    """链上记录的一份提交（或出价）"""
    slot: int
    worker: bytes
    attestation: Attestation
    ciphertext: bytes
    accepted_at: int


@dataclass(frozen=True)
class Settlement:
    """结算结果"""
    kind: str
    payouts: Tuple[Tuple[bytes, int], ...]
    refund: int
    height: int

    def paid_to(self, address: bytes) -> int:
        return sum(amount for payee, amount in self.payouts if payee == address)


@dataclass(frozen=True)
class ContractView:
    """合约状态的只读快照，供参与方与测试读取"""
    address: bytes
    kind: str
    phase: Phase
    params: TaskParams
    records: Tuple[SubmissionRecord, ...]
    phase_heights: Tuple[Tuple[Phase, int], ...]
    deadline: int
    settlement: Optional[Settlement]
    # 拍卖中标：(槽位, 支付额)
    selection: Tuple[Tuple[int, int], ...] = ()
    removed_slots: Tuple[int, ...] = ()
    answers: Tuple[Tuple[bytes, bytes], ...] = ()
    dropped: Tuple[Tuple[int, str], ...] = field(default=(), repr=False)


_contract_types: Dict[str, Type["TaskContract"]] = {}


def register_contract(kind: str):
    """装饰器：注册合约类型，部署负载按名称引用"""
    def _register(cls: Type["TaskContract"]) -> Type["TaskContract"]:
        cls.kind = kind
        _contract_types[kind] = cls
        return cls
    return _register


def create_contract(kind: str, address: bytes, init: bytes, ctx: ExecutionContext, tx: Transaction) -> "TaskContract":
    """账本部署时调用的合约工厂"""
    cls = _contract_types.get(kind)
    if cls is None:
        # 延迟导入，确保内置合约已注册
        from . import auction, quality_aware  # noqa: F401
        cls = _contract_types.get(kind)
    if cls is None:
        raise DeployRejected(f"unknown_contract_type:{kind}")
    try:
        params = TaskParams.from_bytes(init)
    except DecodeError:
        raise DeployRejected("malformed_params")
    backend = getattr(ctx.ledger, "proof_backend", None) or proof_backend
    contract = cls(address, params, backend)
    contract.construct(ctx, tx)
    return contract


class TaskContract:
    """任务合约基类"""

    kind = "base"
    PHASE_ORDER: Tuple[Phase, ...] = ()
    FIRST_PHASE = Phase.INIT

    def __init__(self, address: bytes, params: TaskParams, backend: ProofBackend):
        self.address = address
        self.params = params
        self.backend = backend
        self.phase = Phase.INIT
        self.phase_heights: List[Tuple[Phase, int]] = [(Phase.INIT, 0)]
        self.records: List[SubmissionRecord] = []
        self.removed_slots: List[int] = []
        self.dropped: List[Tuple[int, str]] = []
        self.deadline = 0
        self.settlement: Optional[Settlement] = None
        self._next_slot = 0
        self._handlers: Dict[str, Callable[[ExecutionContext, Transaction, List[bytes]], None]] = {}

    # ------------------------------------------------------------------
    # 阶段管理
    # ------------------------------------------------------------------

    def _enter(self, ctx: ExecutionContext, phase: Phase, deadline: int = 0):
        order = self.PHASE_ORDER
        if order.index(phase) <= order.index(self.phase):
            raise RuntimeError(f"阶段不能回退: {self.phase.value} -> {phase.value}")
        self.phase = phase
        self.deadline = deadline
        self.phase_heights.append((phase, ctx.height))
        ctx.emit(f"phase:{phase.value}")
        logger.debug(f"合约 {address_hex(self.address)[:12]} 进入阶段 {phase.value} @ {ctx.height}")

    def _reject(self, ctx: ExecutionContext, reason: str):
        self.dropped.append((ctx.height, reason))
        raise ContractReject(reason)

    # ------------------------------------------------------------------
    # 部署
    # ------------------------------------------------------------------

    def construct(self, ctx: ExecutionContext, tx: Transaction):
        """
        构造函数：押金不足或请求者认证失败时拒绝部署

        押金检查与认证检查对应“未认证请求者或无押金”的退款分支。
        """
        params = self.params
        if params.n < 1 or params.t_a < 1 or params.t_i < 1:
            raise DeployRejected("invalid_params")
        if tx.sender != params.alpha_r:
            raise DeployRejected("sender_mismatch")
        if ctx.balance(self.address) < params.tau:
            raise DeployRejected("insufficient_deposit")
        if not cpla_auth.verify(contract_prefix(self.address) + params.alpha_r, params.pi_r, params.mpk, params.pp_auth, self.backend):
            raise DeployRejected("requester_unauthenticated")
        self.validate_extra(params)
        self.start(ctx)

    def validate_extra(self, params: TaskParams):
        """策略描述必须与合约的 τ、n 一致，子类可追加检查"""
        if params.policy.tau != params.tau or params.policy.n != params.n:
            raise DeployRejected("policy_mismatch")

    def start(self, ctx: ExecutionContext):
        raise NotImplementedError

    # ------------------------------------------------------------------
    # 调用分发
    # ------------------------------------------------------------------

    def handle(self, ctx: ExecutionContext, tx: Transaction):
        try:
            method, args = parse_call(tx.payload)
        except DecodeError:
            self._reject(ctx, "malformed_payload")
        handler = self._handlers.get(method)
        if handler is None:
            self._reject(ctx, f"unknown_method:{method}")
        try:
            handler(ctx, tx, args)
        except DecodeError as e:
            logger.debug(f"调用负载解析失败: {e}")
            self._reject(ctx, "malformed_payload")

    def on_block(self, ctx: ExecutionContext):
        """区块时钟：每个区块执行完交易后调用"""

    # ------------------------------------------------------------------
    # 匿名认证门槛
    # ------------------------------------------------------------------

    def _admit(self, ctx: ExecutionContext, sender: bytes, attestation: Attestation, ciphertext: bytes):
        """
        认证门槛：凭据对 H(α_C)||α_i||C_i 有效，且不与 π_R 或任何已收录凭据链接

        通过后记录提交；任何检查失败都拒绝调用。
        """
        params = self.params
        if cpla_auth.link(attestation, params.pi_r):
            self._reject(ctx, "linked_to_requester")
        for record in self.records:
            if cpla_auth.link(attestation, record.attestation):
                self._reject(ctx, "linked_to_existing")
        message = contract_prefix(self.address) + sender + ciphertext
        if not cpla_auth.verify(message, attestation, params.mpk, params.pp_auth, self.backend):
            self._reject(ctx, "attestation_invalid")
        record = SubmissionRecord(self._next_slot, sender, attestation, ciphertext, ctx.height)
        self._next_slot += 1
        self.records.append(record)
        ctx.emit("accepted", sender)
        return record

    def _find_slot(self, slot: int) -> Optional[SubmissionRecord]:
        for record in self.records:
            if record.slot == slot:
                return record
        return None

    def _remove_slot(self, ctx: ExecutionContext, slot: int):
        record = self._find_slot(slot)
        self.records.remove(record)
        self.removed_slots.append(slot)
        ctx.emit("removed", record.worker)

    # ------------------------------------------------------------------
    # 结算
    # ------------------------------------------------------------------

    def _settle(self, ctx: ExecutionContext, kind: str, payouts: List[Tuple[bytes, int]],
                already_paid: Tuple[Tuple[bytes, int], ...] = ()):
        """按 payouts 转账，余额全部退回 α_R，进入 SETTLED"""
        paid = list(already_paid)
        for payee, amount in payouts:
            if ctx.pay(payee, amount):
                paid.append((payee, amount))
        refund = ctx.balance(self.address)
        ctx.pay(self.params.alpha_r, refund, "refund")
        self.settlement = Settlement(kind, tuple(paid), refund, ctx.height)
        self._enter(ctx, Phase.SETTLED)

    def snapshot(self) -> ContractView:
        return ContractView(
            address=self.address,
            kind=self.kind,
            phase=self.phase,
            params=self.params,
            records=tuple(self.records),
            phase_heights=tuple(self.phase_heights),
            deadline=self.deadline,
            settlement=self.settlement,
            selection=tuple(sorted(getattr(self, "selection", {}).items())),
            removed_slots=tuple(self.removed_slots),
            answers=tuple(getattr(self, "answers", ())),
            dropped=tuple(self.dropped),
        )
