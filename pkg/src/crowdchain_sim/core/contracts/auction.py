"""
拍卖激励合约
工人先提交加密出价，请求者证明中标集合与支付额，中标者提交答案后按证明的金额付款
"""
from typing import Dict, List, Tuple

from ..cpla_auth import Attestation
from ..encoding import decode_int, decode_int_list
from ..exceptions import DecodeError, DeployRejected
from ..ledger import ExecutionContext, Transaction
from ..proof_system import Proof
from ..relations import auction_statement, fake_statement
from .base import Phase, TaskContract, TaskParams, register_contract
from ...logger import logger


@register_contract("auction")
class AuctionContract(TaskContract):
    """
    阶段：INIT → BIDDING(T_B) → AWAITING_SELECTION(T_I) → ANSWERING(T_A) → SETTLED

    调用：
        bid(attestation, ciphertext)       任意一次性地址
        fake(slot, proof)                  仅 α_R，BIDDING 或 AWAITING_SELECTION 阶段
        select(indices, payments, proof)   仅 α_R，AWAITING_SELECTION 阶段
        answer(ciphertext)                 仅中标地址，ANSWERING 阶段
    """

    PHASE_ORDER = (
        Phase.INIT,
        Phase.BIDDING,
        Phase.AWAITING_SELECTION,
        Phase.ANSWERING,
        Phase.SETTLED,
    )

    def __init__(self, address, params, backend):
        super().__init__(address, params, backend)
        # 槽位 → 支付额
        self.selection: Dict[int, int] = {}
        self.answers: List[Tuple[bytes, bytes]] = []
        self.fallback = False
        self._paid: List[Tuple[bytes, int]] = []
        self._handlers = {
            "bid": self._on_bid,
            "fake": self._on_fake_bid_proof,
            "select": self._on_selection,
            "answer": self._on_answer,
        }

    def validate_extra(self, params: TaskParams):
        if params.pp_auction is None or params.t_b < 1 or params.k < 1:
            raise DeployRejected("invalid_params")
        super().validate_extra(params)
        if params.policy.k != params.k:
            raise DeployRejected("policy_mismatch")

    def start(self, ctx: ExecutionContext):
        self._enter(ctx, Phase.BIDDING, ctx.height + self.params.t_b)

    # ------------------------------------------------------------------
    # 调用处理
    # ------------------------------------------------------------------

    def _on_bid(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 2:
            raise DecodeError("bid 需要 2 个参数")
        if self.phase != Phase.BIDDING or ctx.height > self.deadline:
            self._reject(ctx, "wrong_phase")
        if len(self.records) >= self.params.n:
            self._reject(ctx, "full")
        self._admit(ctx, tx.sender, Attestation.from_bytes(args[0]), args[1])

    def _on_fake_bid_proof(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 2:
            raise DecodeError("fake 需要 2 个参数")
        if tx.sender != self.params.alpha_r:
            self._reject(ctx, "not_requester")
        if self.phase not in (Phase.BIDDING, Phase.AWAITING_SELECTION):
            self._reject(ctx, "wrong_phase")
        record = self._find_slot(decode_int(args[0]))
        if record is None:
            self._reject(ctx, "unknown_slot")
        statement = fake_statement(record.ciphertext, self.params.epk, record.worker, self.address)
        if not self.backend.verify(self.params.pp_fake, statement, Proof.from_bytes(args[1])):
            self._reject(ctx, "fake_proof_invalid")
        self._remove_slot(ctx, record.slot)

    def selection_statement(self, selected, payments):
        params = self.params
        return auction_statement(
            params.epk, params.tau, params.k, self.address,
            [r.ciphertext for r in self.records],
            [r.worker for r in self.records],
            selected, payments,
        )

    def _on_selection(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 3:
            raise DecodeError("select 需要 3 个参数")
        if tx.sender != self.params.alpha_r:
            self._reject(ctx, "not_requester")
        if self.phase != Phase.AWAITING_SELECTION or ctx.height > self.deadline:
            self._reject(ctx, "wrong_phase")
        selected = decode_int_list(args[0])
        payments = decode_int_list(args[1])
        if len(selected) != len(payments) or any(i >= len(self.records) for i in selected):
            self._reject(ctx, "selection_malformed")
        statement = self.selection_statement(selected, payments)
        if not self.backend.verify(self.params.pp_auction, statement, Proof.from_bytes(args[2])):
            self._reject(ctx, "selection_proof_invalid")
        self.selection = {self.records[i].slot: amount for i, amount in zip(selected, payments)}
        self._enter(ctx, Phase.ANSWERING, ctx.height + self.params.t_a)
        logger.info(f"拍卖选择已生效: {len(self.selection)} 名中标者，支付总额 {sum(payments)}")

    def _on_answer(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 1:
            raise DecodeError("answer 需要 1 个参数")
        if self.phase != Phase.ANSWERING or ctx.height > self.deadline:
            self._reject(ctx, "wrong_phase")
        slots = [slot for slot in self.selection if self._find_slot(slot).worker == tx.sender]
        if not slots:
            self._reject(ctx, "not_selected")
        # 同一地址中标多个槽位时，每次交付只结算一个
        amount = self.selection.pop(min(slots))
        self.answers.append((tx.sender, args[0]))
        if amount and ctx.pay(tx.sender, amount):
            self._paid.append((tx.sender, amount))

    # ------------------------------------------------------------------
    # 区块时钟
    # ------------------------------------------------------------------

    def on_block(self, ctx: ExecutionContext):
        if self.phase == Phase.BIDDING:
            if len(self.records) >= self.params.n or ctx.height >= self.deadline:
                self._enter(ctx, Phase.AWAITING_SELECTION, ctx.height + self.params.t_i)
        elif self.phase == Phase.AWAITING_SELECTION and ctx.height >= self.deadline:
            self._on_selection_timeout(ctx)
        elif self.phase == Phase.ANSWERING and (not self.selection or ctx.height >= self.deadline):
            self._settle(ctx, "auction", [], tuple(self._paid))

    def _on_selection_timeout(self, ctx: ExecutionContext):
        """选择超时：全部出价者视为中标，各得 floor(τ/|W|)"""
        if not self.records:
            self._settle(ctx, "timeout", [])
            return
        share = self.params.tau // len(self.records)
        self.selection = {record.slot: share for record in self.records}
        self.fallback = True
        self._enter(ctx, Phase.ANSWERING, ctx.height + self.params.t_a)
        logger.info(f"拍卖选择超时，{len(self.records)} 名出价者各得 {share}")
