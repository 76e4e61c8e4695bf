"""
脚本化的对手行为
对应恶意请求者（拒付、少付、冒充工人）与恶意工人（重复提交、抄袭抢跑、女巫、垃圾密文）
"""
from typing import Dict, List, Optional, Type

from . import crypto_core
from .actors import Credential, RegistrationAuthority, RequesterClient, RequesterTask, WorkerClient
from .contracts.base import ContractView, Phase
from .encoding import encode_int, encode_int_list
from .exceptions import DecodeError, ProveFailed
from .ledger import Transaction, call_payload, parse_call
from .mempool import FrontRunPolicy
from .proof_system import PROOF_SIZE, RelationId
from .relations import contract_prefix
from ..logger import logger

_strategies: Dict[str, type] = {}


def register_strategy(name: str):
    """装饰器：注册对手策略，场景文件按名称引用"""
    def _register(cls):
        cls.strategy = name
        _strategies[name] = cls
        return cls
    return _register


def get_strategy(name: str) -> type:
    return _strategies[name]


def available_strategies() -> List[str]:
    return sorted(_strategies)


# ---------------------------------------------------------------------------
# 恶意工人
# ---------------------------------------------------------------------------

@register_strategy("honest")
class HonestWorker(WorkerClient):
    """诚实工人"""


@register_strategy("double_submit")
class DoubleSubmitWorker(WorkerClient):
    """同一证书从两个一次性地址提交两次，第二次应被链接拒绝"""

    def submit(self, contract: bytes, answer: Optional[str] = None) -> Optional[Transaction]:
        first = super().submit(contract, answer)
        if first is not None:
            super().submit(contract, answer)
        return first


@register_strategy("garbage_ciphertext")
class GarbageWorker(WorkerClient):
    """提交无法解密的随机密文（认证本身有效）"""

    writes_answer = False

    def submit(self, contract: bytes, answer: Optional[str] = None) -> Optional[Transaction]:
        view = self.validate_task(contract)
        if view is None or view.phase != Phase.COLLECTING:
            return None
        keys = self.fresh_address()
        sender = crypto_core.derive_address(keys.pk)
        ciphertext = self.random.read(crypto_core.CIPHERTEXT_OVERHEAD + 16)
        attestation = self.authenticate(contract_prefix(contract) + sender + ciphertext)
        tx = self.send(keys, contract, call_payload("submit", attestation.to_bytes(), ciphertext))
        self.task_addresses.setdefault(contract, keys)
        self.submissions.append(tx)
        return tx


@register_strategy("copycat")
class CopycatWorker(WorkerClient):
    """
    抄袭者：从交易池读取他人尚未上链的密文，用自己的证书和地址重新认证后抢先提交

    配合 FrontRunPolicy 使用，抄袭交易会被排在原交易之前执行。
    """

    writes_answer = False
    places_bid = False

    def __init__(self, *args, front_run: Optional[FrontRunPolicy] = None, limit: int = 1, **kwargs):
        super().__init__(*args, **kwargs)
        self.front_run = front_run
        self.limit = limit
        self.copied: List[bytes] = []

    def submit(self, contract: bytes, answer: Optional[str] = None) -> Optional[Transaction]:
        """抄袭者自己没有答案，只能复制"""
        return self.copy_pending(contract)

    def copy_pending(self, contract: bytes) -> Optional[Transaction]:
        view = self.validate_task(contract)
        if view is None or view.phase != Phase.COLLECTING or len(self.copied) >= self.limit:
            return None
        for pending in self.ledger.pending():
            if pending.target != contract or pending.sender in self.used_addresses:
                continue
            try:
                method, args = parse_call(pending.payload)
            except DecodeError:
                continue
            if method != "submit" or len(args) != 2 or args[1] in self.copied:
                continue
            ciphertext = args[1]
            keys = self.fresh_address()
            sender = crypto_core.derive_address(keys.pk)
            if self.front_run is not None:
                self.front_run.add_attacker(sender)
            attestation = self.authenticate(contract_prefix(contract) + sender + ciphertext)
            tx = self.send(keys, contract, call_payload("submit", attestation.to_bytes(), ciphertext))
            self.copied.append(ciphertext)
            self.task_addresses.setdefault(contract, keys)
            self.submissions.append(tx)
            logger.info(f"'{self.identity}' 抄袭了交易池中的密文")
            return tx
        return None


@register_strategy("sybil")
class SybilWorker(WorkerClient):
    """
    女巫攻击：持有 q 张证书，向同一任务提交 q+1 次

    最多 q 份被收录，第 q+1 份必然与前面某份链接。
    """

    def __init__(self, *args, certificates: int = 2, **kwargs):
        super().__init__(*args, **kwargs)
        self.certificates = certificates
        self.credentials: List[Credential] = []

    def register(self, ra: RegistrationAuthority):
        for index in range(self.certificates):
            keys = crypto_core.sig_keygen(crypto_core.sub_seed(self.seed, f"sybil:{index}"))
            cert = ra.register(f"{self.identity}#{index}", keys.pk)
            self.credentials.append(Credential(keys, cert))
        self.credential = self.credentials[0]
        return self.credential.cert

    def submit(self, contract: bytes, answer: Optional[str] = None) -> Optional[Transaction]:
        view = self.validate_task(contract)
        if view is None or view.phase != Phase.COLLECTING:
            return None
        answer = self.answer if answer is None else answer
        first = None
        for index in range(len(self.credentials) + 1):
            credential = self.credentials[index % len(self.credentials)]
            tx = self.sealed_call(contract, view.params.epk, "submit", answer.encode("utf-8"), credential=credential)
            first = first or tx
        return first


@register_strategy("duplicate_bid")
class DuplicateBidWorker(WorkerClient):
    """拍卖中用同一证书出价两次"""

    def place_bid(self, contract: bytes, amount: Optional[int] = None) -> Optional[Transaction]:
        first = super().place_bid(contract, amount)
        if first is not None:
            view = self.validate_task(contract)
            second_amount = max(0, (self.bid if amount is None else amount) - 1)
            self.sealed_call(contract, view.params.epk, "bid", encode_int(second_amount))
        return first


# ---------------------------------------------------------------------------
# 恶意请求者
# ---------------------------------------------------------------------------

@register_strategy("honest_requester")
class HonestRequester(RequesterClient):
    """诚实请求者"""


@register_strategy("withhold_instruction")
class WithholdingRequester(RequesterClient):
    """收集答案后拒不给出奖励指令（也不巡查）"""

    def step(self):
        return None


@register_strategy("false_report")
class FalseReportRequester(RequesterClient):
    """
    谎报奖励：把某个应得奖励的工人报为 0 后尝试证明

    证明生成失败后改为发送伪造的证明标签，合约验证失败后只能等待超时。
    """

    def __init__(self, *args, victim: int = 0, **kwargs):
        super().__init__(*args, **kwargs)
        self.victim = victim
        self.prove_failures = 0
        self.forged_attempts = 0

    def compute_rewards(self, task: RequesterTask, view: ContractView) -> List[int]:
        rewards = list(super().compute_rewards(task, view))
        positive = [i for i, r in enumerate(rewards) if r > 0]
        if positive:
            victim = positive[self.victim % len(positive)]
            rewards[victim] = 0
        return rewards

    def settle(self, task: RequesterTask) -> Optional[Transaction]:
        view = self.view(task)
        if view is None or view.phase != Phase.AWAITING_INSTRUCTION:
            return None
        rewards = self.compute_rewards(task, view)
        try:
            proof = self.reward_proof(task, view, rewards)
        except ProveFailed:
            self.prove_failures += 1
            proof = RelationId.REWARD.code + self.random.read(PROOF_SIZE - 1)
        self.forged_attempts += 1
        task.instruction_attempts += 1
        return self.send(task.address_keys, view.address, call_payload("reward", encode_int_list(rewards), proof))


@register_strategy("requester_self_submit")
class SelfSubmittingRequester(RequesterClient):
    """请求者用自己的证书冒充工人提交答案，应与 π_R 链接而被拒绝"""

    def __init__(self, *args, answer: str = "", **kwargs):
        super().__init__(*args, **kwargs)
        self.answer = answer
        self.self_submitted: Dict[bytes, Transaction] = {}

    def self_submit(self, task: RequesterTask) -> Optional[Transaction]:
        view = self.view(task)
        if view is None or view.phase != Phase.COLLECTING or view.address in self.self_submitted:
            return None
        tx = self.sealed_call(view.address, view.params.epk, "submit", self.answer.encode("utf-8"))
        self.self_submitted[view.address] = tx
        logger.info(f"请求者 '{self.identity}' 尝试以工人身份提交")
        return tx

    def step(self):
        for task in self.tasks:
            self.self_submit(task)
        super().step()


def worker_class(name: str) -> Type[WorkerClient]:
    cls = _strategies.get(name)
    if cls is None or not issubclass(cls, WorkerClient):
        raise KeyError(name)
    return cls


def requester_class(name: str) -> Type[RequesterClient]:
    cls = _strategies.get(name)
    if cls is None or not issubclass(cls, RequesterClient):
        raise KeyError(name)
    return cls
