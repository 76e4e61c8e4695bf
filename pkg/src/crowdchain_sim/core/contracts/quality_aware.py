"""
质量感知激励合约
收集 n 份加密答案，请求者用零知识证明给出奖励指令；请求者拒不指令时平均分配押金
"""
from typing import List

from ..cpla_auth import Attestation
from ..encoding import decode_int, decode_int_list
from ..exceptions import DecodeError
from ..ledger import ExecutionContext, Transaction
from ..proof_system import Proof
from ..relations import fake_statement, reward_statement
from .base import Phase, TaskContract, register_contract
from ...logger import logger


@register_contract("quality_aware")
class QualityAwareContract(TaskContract):
    """
    阶段：INIT → COLLECTING(T_A) → AWAITING_INSTRUCTION(T_I) → SETTLED

    调用：
        submit(attestation, ciphertext)   任意一次性地址
        fake(slot, proof)                 仅 α_R，COLLECTING 阶段
        reward(rewards, proof)            仅 α_R，AWAITING_INSTRUCTION 阶段
    """

    PHASE_ORDER = (Phase.INIT, Phase.COLLECTING, Phase.AWAITING_INSTRUCTION, Phase.SETTLED)

    def __init__(self, address, params, backend):
        super().__init__(address, params, backend)
        self._handlers = {
            "submit": self._on_submit,
            "fake": self._on_fake_proof,
            "reward": self._on_instruction,
        }

    def start(self, ctx: ExecutionContext):
        self._enter(ctx, Phase.COLLECTING, ctx.height + self.params.t_a)

    # ------------------------------------------------------------------
    # 调用处理
    # ------------------------------------------------------------------

    def _on_submit(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 2:
            raise DecodeError("submit 需要 2 个参数")
        if self.phase != Phase.COLLECTING or ctx.height > self.deadline:
            self._reject(ctx, "wrong_phase")
        if len(self.records) >= self.params.n:
            self._reject(ctx, "full")
        attestation = Attestation.from_bytes(args[0])
        self._admit(ctx, tx.sender, attestation, args[1])

    def _on_fake_proof(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 2:
            raise DecodeError("fake 需要 2 个参数")
        if tx.sender != self.params.alpha_r:
            self._reject(ctx, "not_requester")
        if self.phase != Phase.COLLECTING:
            self._reject(ctx, "wrong_phase")
        record = self._find_slot(decode_int(args[0]))
        if record is None:
            self._reject(ctx, "unknown_slot")
        statement = fake_statement(record.ciphertext, self.params.epk, record.worker, self.address)
        if not self.backend.verify(self.params.pp_fake, statement, Proof.from_bytes(args[1])):
            self._reject(ctx, "fake_proof_invalid")
        self._remove_slot(ctx, record.slot)
        logger.info(f"伪造提交已移除: 槽位 {record.slot}")

    def reward_inputs(self):
        """奖励陈述中的密文与地址向量，不足 n 的部分以 ⊥ 填充"""
        pad = self.params.n - len(self.records)
        ciphertexts = [r.ciphertext for r in self.records] + [b""] * pad
        addresses = [r.worker for r in self.records] + [b""] * pad
        return ciphertexts, addresses

    def _on_instruction(self, ctx: ExecutionContext, tx: Transaction, args: List[bytes]):
        if len(args) != 2:
            raise DecodeError("reward 需要 2 个参数")
        params = self.params
        if tx.sender != params.alpha_r:
            self._reject(ctx, "not_requester")
        if self.phase != Phase.AWAITING_INSTRUCTION or ctx.height > self.deadline:
            self._reject(ctx, "wrong_phase")
        rewards = decode_int_list(args[0])
        if len(rewards) != params.n:
            self._reject(ctx, "reward_length")
        ciphertexts, addresses = self.reward_inputs()
        statement = reward_statement(
            params.epk, params.tau, params.policy, self.address, ciphertexts, addresses, rewards
        )
        if not self.backend.verify(params.pp_reward, statement, Proof.from_bytes(args[1])):
            self._reject(ctx, "reward_proof_invalid")
        payouts = [(record.worker, amount) for record, amount in zip(self.records, rewards) if amount]
        self._settle(ctx, "instruction", payouts)
        logger.info(f"奖励指令已执行: 支付 {sum(a for _, a in payouts)}，退款 {self.settlement.refund}")

    # ------------------------------------------------------------------
    # 区块时钟
    # ------------------------------------------------------------------

    def on_block(self, ctx: ExecutionContext):
        if self.phase == Phase.COLLECTING:
            if len(self.records) >= self.params.n or ctx.height >= self.deadline:
                self._enter(ctx, Phase.AWAITING_INSTRUCTION, ctx.height + self.params.t_i)
        elif self.phase == Phase.AWAITING_INSTRUCTION and ctx.height >= self.deadline:
            self._on_timeout(ctx)

    def _on_timeout(self, ctx: ExecutionContext):
        """指令超时：每个已收录的工人得 floor(τ/|W|)，余额退回 α_R"""
        workers = [record.worker for record in self.records]
        if not workers:
            self._settle(ctx, "timeout", [])
            return
        share = self.params.tau // len(workers)
        self._settle(ctx, "timeout", [(worker, share) for worker in workers if share])
        logger.info(f"奖励指令超时，{len(workers)} 名工人各得 {share}")
