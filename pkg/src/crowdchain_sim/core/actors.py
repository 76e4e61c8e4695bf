"""
参与方
注册机构、请求者与工人的客户端逻辑，按协议在账本上发布任务、提交答案与结算

所有密钥都由参与方种子确定性派生；每个任务使用新的一次性账本地址。
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

from . import cpla_auth, crypto_core, policies
from .contracts.base import ContractView, Phase, TaskParams
from .cpla_auth import Attestation, Certificate, IdentityRegistry, MasterKeys
from .crypto_core import EncKeyPair, RandomStream, SigKeyPair
from .encoding import encode_int, encode_int_list, encode_str
from .exceptions import CrowdSimError
from .ledger import DEPLOY, Ledger, Transaction, address_hex, call_payload
from .policies import PolicySpec
from .proof_system import ProofBackend, PublicParams, RelationId, proof_backend
from .relations import (
    auction_statement,
    contract_prefix,
    decrypt_answers,
    decrypt_bids,
    esk_witness,
    fake_statement,
    open_ciphertext,
    reward_statement,
    seal_payload,
)
from ..config import config
from ..logger import logger


@dataclass(frozen=True)
class SystemParams:
    """系统公共参数：RA 主公钥与四种关系的证明参数"""
    mpk: bytes
    pp_auth: PublicParams
    pp_reward: PublicParams
    pp_fake: PublicParams
    pp_auction: PublicParams


class RegistrationAuthority:
    """注册机构：为每个唯一身份签发一张证书"""

    def __init__(self, seed: bytes, backend: Optional[ProofBackend] = None):
        self.backend = backend or proof_backend
        keys, pp_auth = cpla_auth.setup(seed, self.backend)
        self.keys: MasterKeys = keys
        self.registry = IdentityRegistry()
        self.params = SystemParams(
            mpk=keys.mpk,
            pp_auth=pp_auth,
            pp_reward=self.backend.setup(RelationId.REWARD, crypto_core.sub_seed(seed, "pp-reward")),
            pp_fake=self.backend.setup(RelationId.FAKE, crypto_core.sub_seed(seed, "pp-fake")),
            pp_auction=self.backend.setup(RelationId.AUCTION, crypto_core.sub_seed(seed, "pp-auction")),
        )

    @property
    def mpk(self) -> bytes:
        return self.keys.mpk

    def register(self, identity: str, pk: bytes) -> Certificate:
        """
        登记身份并签发证书

        Raises:
            DuplicateRegistration: 身份已注册
        """
        cert = cpla_auth.cert_gen(self.keys.msk, pk, identity, self.registry)
        logger.debug(f"RA 已为 '{identity}' 签发证书")
        return cert


@dataclass(frozen=True)
class Credential:
    """长期凭据：签名密钥对 + RA 证书"""
    keys: SigKeyPair
    cert: Certificate


class Participant:
    """请求者与工人的共同部分：长期凭据、一次性地址派生与匿名认证"""

    def __init__(self, identity: str, seed: bytes, ledger: Ledger, system: SystemParams,
                 backend: Optional[ProofBackend] = None):
        self.identity = identity
        self.seed = seed
        self.ledger = ledger
        self.system = system
        self.backend = backend or proof_backend
        self.long_term = crypto_core.sig_keygen(crypto_core.sub_seed(seed, "long-term"))
        self.credential: Optional[Credential] = None
        self.random = RandomStream(crypto_core.sub_seed(seed, "randomness"))
        self._address_counter = 0
        self.used_addresses: List[bytes] = []
        self.task_addresses: Dict[bytes, SigKeyPair] = {}
        self.submissions: List[Transaction] = []

    def register(self, ra: RegistrationAuthority) -> Certificate:
        cert = ra.register(self.identity, self.long_term.pk)
        self.credential = Credential(self.long_term, cert)
        return cert

    def fresh_address(self) -> SigKeyPair:
        """生成新的一次性账本地址"""
        keys = crypto_core.sig_keygen(crypto_core.sub_seed(self.seed, f"one-time:{self._address_counter}"))
        self._address_counter += 1
        self.used_addresses.append(crypto_core.derive_address(keys.pk))
        return keys

    def authenticate(self, message: bytes, credential: Optional[Credential] = None) -> Attestation:
        credential = credential or self.credential
        if credential is None:
            raise CrowdSimError(f"'{self.identity}' 尚未注册")
        return cpla_auth.auth(
            message, credential.keys.sk, credential.keys.pk, credential.cert,
            self.system.mpk, self.system.pp_auth, self.backend,
        )

    def encrypt_to(self, epk: bytes, plaintext: bytes) -> bytes:
        return crypto_core.encrypt(
            epk, plaintext,
            self.random.read(crypto_core.ENCRYPTION_RANDOMNESS_SIZE),
            max_plaintext=config.get_max_plaintext_bytes(),
        )

    def send(self, keys: SigKeyPair, target: bytes, payload: bytes, value: int = 0) -> Transaction:
        sender = crypto_core.derive_address(keys.pk)
        tx = Transaction.create(keys, target, value, payload, self.ledger.next_nonce(sender))
        self.ledger.submit_or_raise(tx)
        return tx

    def has_pending(self, address: bytes) -> bool:
        return any(tx.sender == address for tx in self.ledger.pending())

    def sealed_call(self, contract: bytes, epk: bytes, method: str, payload: bytes,
                    keys: Optional[SigKeyPair] = None, credential: Optional[Credential] = None) -> Transaction:
        """
        签名、加密并匿名认证一份负载，从一次性地址发送

        明文为 (负载, pk_αi, σ_i)，认证消息为 H(α_C) || α_i || C_i。
        """
        keys = keys or self.fresh_address()
        sender = crypto_core.derive_address(keys.pk)
        ciphertext = self.encrypt_to(epk, seal_payload(keys.sk, keys.pk, contract, payload))
        attestation = self.authenticate(contract_prefix(contract) + sender + ciphertext, credential)
        tx = self.send(keys, contract, call_payload(method, attestation.to_bytes(), ciphertext))
        self.task_addresses.setdefault(contract, keys)
        self.submissions.append(tx)
        return tx


# ---------------------------------------------------------------------------
# 请求者
# ---------------------------------------------------------------------------

@dataclass
class TaskSpec:
    """请求者要发布的任务"""
    policy: PolicySpec
    t_a: int
    t_i: int
    contract_type: str = "quality_aware"
    t_b: int = 0


@dataclass
class RequesterTask:
    """请求者为单个任务持有的状态"""
    index: int
    spec: TaskSpec
    address_keys: SigKeyPair
    enc_keys: EncKeyPair
    contract: Optional[bytes] = None
    params: Optional[TaskParams] = None
    policed: Set[int] = field(default_factory=set)
    instruction_attempts: int = 0

    @property
    def alpha_r(self) -> bytes:
        return crypto_core.derive_address(self.address_keys.pk)


class RequesterClient(Participant):
    """诚实请求者"""

    def __init__(self, identity: str, seed: bytes, ledger: Ledger, system: SystemParams,
                 backend: Optional[ProofBackend] = None):
        super().__init__(identity, seed, ledger, system, backend)
        self.tasks: List[RequesterTask] = []

    def prepare(self, spec: TaskSpec) -> RequesterTask:
        """为新任务生成一次性地址 α_R 与加密密钥对（发布前需先给 α_R 注资）"""
        index = len(self.tasks)
        task = RequesterTask(
            index=index,
            spec=spec,
            address_keys=self.fresh_address(),
            enc_keys=crypto_core.enc_keygen(crypto_core.sub_seed(self.seed, f"task-enc:{index}")),
        )
        self.tasks.append(task)
        return task

    def publish(self, task: RequesterTask, deposit: Optional[int] = None) -> bytes:
        """
        发布任务：预测合约地址，离线计算 π_R，随押金部署合约

        Returns:
            预测的合约地址 α_C（部署是否成功需出块后查看账本）
        """
        spec = task.spec
        alpha_r = task.alpha_r
        contract = self.ledger.next_contract_address(alpha_r)
        pi_r = self.authenticate(contract_prefix(contract) + alpha_r)
        system = self.system
        params = TaskParams(
            alpha_r=alpha_r,
            pi_r=pi_r,
            mpk=system.mpk,
            tau=spec.policy.tau,
            epk=task.enc_keys.epk,
            pp_auth=system.pp_auth,
            pp_reward=system.pp_reward,
            pp_fake=system.pp_fake,
            n=spec.policy.n,
            t_a=spec.t_a,
            t_i=spec.t_i,
            policy=spec.policy,
            pp_auction=system.pp_auction if spec.contract_type == "auction" else None,
            t_b=spec.t_b,
            k=spec.policy.k,
        )
        payload = call_payload("deploy", encode_str(spec.contract_type), params.to_bytes())
        value = spec.policy.tau if deposit is None else deposit
        self.send(task.address_keys, DEPLOY, payload, value)
        task.contract = contract
        task.params = params
        logger.info(f"'{self.identity}' 发布任务 {spec.contract_type} @ {address_hex(contract)[:12]}，预算 {spec.policy.tau}")
        return contract

    def view(self, task: RequesterTask) -> Optional[ContractView]:
        contract = self.ledger.get_contract(task.contract) if task.contract else None
        return contract.snapshot() if contract is not None else None

    # ------------------------------------------------------------------
    # 巡查伪造提交
    # ------------------------------------------------------------------

    def police(self, task: RequesterTask) -> List[Transaction]:
        """对签名无效或无法解密的提交生成 π_fake 并请求移除"""
        view = self.view(task)
        if view is None or view.phase not in (Phase.COLLECTING, Phase.BIDDING, Phase.AWAITING_SELECTION):
            return []
        txs = []
        for record in view.records:
            if record.slot in task.policed:
                continue
            task.policed.add(record.slot)
            if open_ciphertext(task.enc_keys.esk, record.ciphertext, record.worker, view.address) is not None:
                continue
            statement = fake_statement(record.ciphertext, task.enc_keys.epk, record.worker, view.address)
            proof = self.backend.prove(self.system.pp_fake, statement, esk_witness(RelationId.FAKE, task.enc_keys.esk))
            payload = call_payload("fake", encode_int(record.slot), proof.to_bytes())
            txs.append(self.send(task.address_keys, view.address, payload))
            logger.info(f"请求者发现伪造提交: 槽位 {record.slot}")
        return txs

    # ------------------------------------------------------------------
    # 结算
    # ------------------------------------------------------------------

    def reward_inputs(self, view: ContractView):
        pad = view.params.n - len(view.records)
        ciphertexts = [r.ciphertext for r in view.records] + [b""] * pad
        addresses = [r.worker for r in view.records] + [b""] * pad
        return ciphertexts, addresses

    def compute_rewards(self, task: RequesterTask, view: ContractView) -> List[int]:
        """解密全部答案（⊥ 填充），按策略计算奖励向量"""
        ciphertexts, addresses = self.reward_inputs(view)
        answers = decrypt_answers(task.enc_keys.esk, view.params.policy, view.address, ciphertexts, addresses)
        return policies.evaluate(view.params.policy, answers)

    def reward_proof(self, task: RequesterTask, view: ContractView, rewards: List[int]) -> bytes:
        """
        证明奖励向量的正确性

        Raises:
            ProveFailed: 奖励向量与策略不符
        """
        ciphertexts, addresses = self.reward_inputs(view)
        statement = reward_statement(
            task.enc_keys.epk, view.params.tau, view.params.policy, view.address, ciphertexts, addresses, rewards
        )
        return self.backend.prove(
            self.system.pp_reward, statement, esk_witness(RelationId.REWARD, task.enc_keys.esk)
        ).to_bytes()

    def settle(self, task: RequesterTask) -> Optional[Transaction]:
        view = self.view(task)
        if view is None or view.phase != Phase.AWAITING_INSTRUCTION:
            return None
        rewards = self.compute_rewards(task, view)
        proof = self.reward_proof(task, view, rewards)
        task.instruction_attempts += 1
        logger.info(f"请求者提交奖励指令: {rewards}")
        return self.send(task.address_keys, view.address, call_payload("reward", encode_int_list(rewards), proof))

    def select(self, task: RequesterTask) -> Optional[Transaction]:
        """拍卖：解密出价，按最低 k 价规则选择并证明"""
        view = self.view(task)
        if view is None or view.phase != Phase.AWAITING_SELECTION:
            return None
        params = view.params
        bids = [r.ciphertext for r in view.records]
        addresses = [r.worker for r in view.records]
        values = decrypt_bids(task.enc_keys.esk, view.address, bids, addresses)
        outcome = policies.evaluate_auction_selection(values, params.k, params.tau)
        statement = auction_statement(
            task.enc_keys.epk, params.tau, params.k, view.address, bids, addresses,
            outcome.selected, outcome.payments,
        )
        proof = self.backend.prove(
            self.system.pp_auction, statement, esk_witness(RelationId.AUCTION, task.enc_keys.esk)
        )
        task.instruction_attempts += 1
        payload = call_payload(
            "select", encode_int_list(outcome.selected), encode_int_list(outcome.payments), proof.to_bytes()
        )
        logger.info(f"请求者提交拍卖选择: 下标 {list(outcome.selected)} 支付 {list(outcome.payments)}")
        return self.send(task.address_keys, view.address, payload)

    def step(self):
        """每个区块调用一次：巡查、结算或选择"""
        for task in self.tasks:
            if task.contract is None or self.has_pending(task.alpha_r):
                continue
            view = self.view(task)
            if view is None:
                continue
            if view.phase in (Phase.COLLECTING, Phase.BIDDING, Phase.AWAITING_SELECTION):
                self.police(task)
            if self.has_pending(task.alpha_r):
                continue
            if view.phase == Phase.AWAITING_INSTRUCTION:
                self.settle(task)
            elif view.phase == Phase.AWAITING_SELECTION:
                self.select(task)


# ---------------------------------------------------------------------------
# 工人
# ---------------------------------------------------------------------------

class WorkerClient(Participant):
    """诚实工人：每个任务使用新的一次性地址"""

    # 场景中是否需要脚本化的答案与出价
    writes_answer = True
    places_bid = True

    def __init__(self, identity: str, seed: bytes, ledger: Ledger, system: SystemParams,
                 backend: Optional[ProofBackend] = None, answer: Optional[str] = None, bid: Optional[int] = None):
        super().__init__(identity, seed, ledger, system, backend)
        self.answer = answer
        self.bid = bid

    def address_for(self, contract: bytes) -> bytes:
        return crypto_core.derive_address(self.task_addresses[contract].pk)

    def validate_task(self, contract: bytes) -> Optional[ContractView]:
        """检查合约参数与请求者认证，合约不存在或参数不合法时返回 None"""
        instance = self.ledger.get_contract(contract)
        if instance is None:
            return None
        view = instance.snapshot()
        params = view.params
        if params.mpk != self.system.mpk:
            return None
        if not cpla_auth.verify(contract_prefix(contract) + params.alpha_r, params.pi_r, params.mpk, params.pp_auth, self.backend):
            return None
        return view

    def submit(self, contract: bytes, answer: Optional[str] = None) -> Optional[Transaction]:
        view = self.validate_task(contract)
        if view is None or view.phase != Phase.COLLECTING:
            logger.debug(f"'{self.identity}' 跳过不可提交的合约 {address_hex(contract)[:12]}")
            return None
        answer = self.answer if answer is None else answer
        return self.sealed_call(contract, view.params.epk, "submit", answer.encode("utf-8"))

    def place_bid(self, contract: bytes, amount: Optional[int] = None) -> Optional[Transaction]:
        view = self.validate_task(contract)
        if view is None or view.phase != Phase.BIDDING:
            return None
        amount = self.bid if amount is None else amount
        return self.sealed_call(contract, view.params.epk, "bid", encode_int(amount))

    def deliver(self, contract: bytes, answer: Optional[str] = None) -> Optional[Transaction]:
        """拍卖：中标后从出价地址提交加密答案"""
        keys = self.task_addresses.get(contract)
        instance = self.ledger.get_contract(contract)
        if keys is None or instance is None:
            return None
        view = instance.snapshot()
        sender = crypto_core.derive_address(keys.pk)
        selected = dict(view.selection)
        if view.phase != Phase.ANSWERING or not any(r.worker == sender and r.slot in selected for r in view.records):
            return None
        answer = self.answer if answer is None else answer
        ciphertext = self.encrypt_to(view.params.epk, seal_payload(keys.sk, keys.pk, contract, answer.encode("utf-8")))
        return self.send(keys, contract, call_payload("answer", ciphertext))
