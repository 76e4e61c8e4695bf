"""
场景服务
场景配置校验、仿真驱动与运行报告

一个场景完全由配置和种子决定：同一配置与种子两次运行产生字节一致的轨迹。
"""
from collections import Counter
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..config import config
from ..core import crypto_core
from ..core.actors import RegistrationAuthority, RequesterClient, RequesterTask, TaskSpec, WorkerClient
from ..core.adversaries import CopycatWorker, SybilWorker, available_strategies, requester_class, worker_class
from ..core.contracts.base import ContractView, Phase
from ..core.cpla_auth import Attestation
from ..core.exceptions import ConfigError, DecodeError
from ..core.ledger import Ledger, TraceWriter, address_hex, parse_call
from ..core.mempool import FrontRunPolicy, available_policies as mempool_policies, create_policy
from ..core.policies import POLICY_AUCTION, PolicySpec, available_policies
from ..core.proof_system import HonestEvalBackend, ProofBackend
from ..logger import logger, run_context
from . import file_service
from .oracles import lowest_k_oracle, oracle_rewards


# ---------------------------------------------------------------------------
# 场景配置
# ---------------------------------------------------------------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioSection(_Section):
    name: str
    description: str = ""
    seed: int = Field(0, ge=0, lt=2 ** 64)


class LedgerSection(_Section):
    delta: Optional[int] = Field(None, ge=1)
    mempool_policy: str = "fifo"
    delay: int = Field(1, ge=0)
    max_blocks: Optional[int] = Field(None, ge=1)

    @field_validator("mempool_policy")
    @classmethod
    def _known_policy(cls, value: str) -> str:
        if value not in mempool_policies():
            raise ValueError(f"未知的交易池策略 '{value}'，可选: {', '.join(mempool_policies())}")
        return value


class TaskSection(_Section):
    contract: str = "quality_aware"
    policy: str = "majority"
    n: int = Field(..., ge=1)
    tau: int = Field(..., ge=0)
    answer_set: List[str] = Field(default_factory=list)
    t_a: int = Field(..., ge=1)
    t_i: int = Field(..., ge=1)
    t_b: int = Field(0, ge=0)
    k: int = Field(0, ge=0)
    deposit: Optional[int] = Field(None, ge=0)
    publish_at: int = Field(1, ge=1)
    copies: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_contract(self):
        if self.contract not in ("quality_aware", "auction"):
            raise ValueError(f"未知的合约类型 '{self.contract}'")
        if self.contract == "auction":
            if self.policy != POLICY_AUCTION:
                raise ValueError(f"拍卖合约的策略必须是 {POLICY_AUCTION}")
            if self.t_b < 1 or self.k < 1:
                raise ValueError("拍卖合约需要 t_b ≥ 1 且 k ≥ 1")
        elif self.policy not in available_policies() or self.policy == POLICY_AUCTION:
            raise ValueError(f"未知的奖励策略 '{self.policy}'")
        return self


class RequesterSection(_Section):
    name: str = "requester"
    strategy: str = "honest_requester"
    funds: Optional[int] = Field(None, ge=0)
    answer: str = ""
    victim: int = Field(0, ge=0)

    @field_validator("strategy")
    @classmethod
    def _known_strategy(cls, value: str) -> str:
        try:
            requester_class(value)
        except KeyError:
            raise ValueError(f"未知的请求者策略 '{value}'")
        return value


class WorkerSection(_Section):
    name: str
    strategy: str = "honest"
    answer: Optional[str] = None
    bid: Optional[int] = Field(None, ge=0)
    submit_at: int = Field(2, ge=1)
    certificates: int = Field(2, ge=1)
    copy_limit: int = Field(1, ge=1)
    deliver: bool = True

    @field_validator("strategy")
    @classmethod
    def _known_strategy(cls, value: str) -> str:
        try:
            worker_class(value)
        except KeyError:
            raise ValueError(f"未知的工人策略 '{value}'，可选: {', '.join(available_strategies())}")
        return value


class ExpectSection(_Section):
    phase: str = Phase.SETTLED.value
    settlement: Optional[str] = None
    deploy_rejected: bool = False
    accepted: Optional[int] = None
    removed: Optional[int] = None
    payouts: Dict[str, int] = Field(default_factory=dict)
    refund: Optional[int] = None
    rejections: Dict[str, int] = Field(default_factory=dict)
    oracle: bool = True
    anonymity_scan: bool = False


class ScenarioConfig(_Section):
    """场景配置（YAML 顶层结构）"""
    scenario: ScenarioSection
    ledger: LedgerSection = Field(default_factory=LedgerSection)
    task: TaskSection
    requester: RequesterSection = Field(default_factory=RequesterSection)
    workers: List[WorkerSection] = Field(default_factory=list)
    expect: ExpectSection = Field(default_factory=ExpectSection)

    @model_validator(mode="after")
    def _unique_names(self):
        names = [w.name for w in self.workers] + [self.requester.name]
        duplicates = [name for name, count in Counter(names).items() if count > 1]
        if duplicates:
            raise ValueError(f"参与方名称重复: {', '.join(duplicates)}")
        for worker in self.workers:
            if worker.submit_at <= self.task.publish_at:
                raise ValueError(f"工人 '{worker.name}' 的 submit_at 必须晚于 task.publish_at")
        return self

    @model_validator(mode="after")
    def _scripted_inputs(self):
        auction = self.task.contract == "auction"
        for index, worker in enumerate(self.workers):
            cls = worker_class(worker.strategy)
            if auction:
                required = ["bid", "answer"] if worker.deliver else ["bid"]
                required = required if cls.places_bid else []
            else:
                required = ["answer"] if cls.writes_answer else []
            missing = [field for field in required if getattr(worker, field) is None]
            if missing:
                paths = ", ".join(f"workers.{index}.{field}" for field in missing)
                raise ValueError(f"工人 '{worker.name}'（策略 {worker.strategy}）缺少 {paths}")
        return self

    def with_seed(self, seed: Optional[int]) -> "ScenarioConfig":
        if seed is None:
            return self
        return self.model_copy(update={"scenario": self.scenario.model_copy(update={"seed": seed})})


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    """
    解析并校验场景文本

    Raises:
        ConfigError: YAML 语法错误或字段校验失败（附字段路径与行号）
    """
    data = file_service.parse_yaml(text, source)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        loc = [part for part in error["loc"]]
        field = ".".join(str(part) for part in loc) or None
        raise ConfigError(
            f"{source}: {error['msg']}",
            field=field,
            line=file_service.field_line(text, loc),
        )


def load_scenario(ref: str) -> ScenarioConfig:
    """按路径或内置场景名加载场景"""
    path = file_service.resolve_scenario(ref)
    return parse_scenario(file_service.read_scenario_file(str(path)), str(path))


# ---------------------------------------------------------------------------
# 运行报告
# ---------------------------------------------------------------------------

class AssertionResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class ContractReport(BaseModel):
    address: str
    kind: str
    phase: str
    phase_heights: Dict[str, int]
    deposit: int
    accepted: int
    removed: int
    settlement: Optional[str] = None
    payouts: Dict[str, int] = Field(default_factory=dict)
    refund: int = 0
    oracle_payouts: Dict[str, int] = Field(default_factory=dict)
    rejections: Dict[str, int] = Field(default_factory=dict)


class RunReport(BaseModel):
    """单次场景运行的结果"""
    scenario: str
    seed: int
    blocks: int
    deploy_failures: List[str] = Field(default_factory=list)
    contracts: List[ContractReport] = Field(default_factory=list)
    payouts: Dict[str, int] = Field(default_factory=dict)
    balances: Dict[str, int] = Field(default_factory=dict)
    conservation_delta: int = 0
    trace_digest: str = ""
    assertions: List[AssertionResult] = Field(default_factory=list)
    trace: str = Field("", exclude=True)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def failures(self) -> List[AssertionResult]:
        return [a for a in self.assertions if not a.passed]


# ---------------------------------------------------------------------------
# 仿真驱动
# ---------------------------------------------------------------------------

class Simulation:
    """按区块推进一个场景：每个区块先让参与方行动，再出块"""

    def __init__(self, cfg: ScenarioConfig, backend: Optional[ProofBackend] = None):
        self.cfg = cfg
        seed = cfg.scenario.seed
        self.backend = backend or HonestEvalBackend()
        delta = cfg.ledger.delta or config.get_default_delta()
        self.max_blocks = cfg.ledger.max_blocks or config.get_max_blocks()

        trace = TraceWriter()
        trace.header(scenario=cfg.scenario.name, seed=seed, delta=delta, mempool=cfg.ledger.mempool_policy)
        trace.header(**crypto_core.PRIMITIVES)
        self.ledger = Ledger(delta=delta, trace=trace, proof_backend=self.backend)

        if cfg.ledger.mempool_policy == "delay":
            self.policy = create_policy("delay", delay=cfg.ledger.delay)
        else:
            self.policy = create_policy(cfg.ledger.mempool_policy)

        self.ra = RegistrationAuthority(crypto_core.derive_seed(seed, "ra"), self.backend)
        system = self.ra.params

        req = cfg.requester
        extra: Dict[str, Any] = {}
        if req.strategy == "false_report":
            extra["victim"] = req.victim
        elif req.strategy == "requester_self_submit":
            extra["answer"] = req.answer
        self.requester: RequesterClient = requester_class(req.strategy)(
            req.name, crypto_core.derive_seed(seed, f"requester:{req.name}"), self.ledger, system, self.backend, **extra
        )
        self.requester.register(self.ra)

        self.workers: List[Tuple[WorkerSection, WorkerClient]] = []
        for section in cfg.workers:
            cls = worker_class(section.strategy)
            kwargs: Dict[str, Any] = {"answer": section.answer, "bid": section.bid}
            if issubclass(cls, CopycatWorker):
                kwargs["front_run"] = self.policy if isinstance(self.policy, FrontRunPolicy) else None
                kwargs["limit"] = section.copy_limit
            if issubclass(cls, SybilWorker):
                kwargs["certificates"] = section.certificates
            worker = cls(section.name, crypto_core.derive_seed(seed, f"worker:{section.name}"),
                         self.ledger, system, self.backend, **kwargs)
            worker.register(self.ra)
            self.workers.append((section, worker))

        task = cfg.task
        policy = PolicySpec(task.policy, task.tau, task.n, tuple(task.answer_set), task.k)
        spec = TaskSpec(policy=policy, t_a=task.t_a, t_i=task.t_i, contract_type=task.contract, t_b=task.t_b)
        self.tasks: List[RequesterTask] = [self.requester.prepare(spec) for _ in range(task.copies)]
        funds = req.funds if req.funds is not None else (task.deposit if task.deposit is not None else task.tau)
        self.ledger.genesis({t.alpha_r: funds for t in self.tasks})
        self.delivered: set = set()

    # ------------------------------------------------------------------

    def _live_contracts(self) -> List[bytes]:
        return [t.contract for t in self.tasks if t.contract and self.ledger.get_contract(t.contract) is not None]

    def _done(self) -> bool:
        height = self.ledger.height
        if height < self.cfg.task.publish_at:
            return False
        for task in self.tasks:
            contract = self.ledger.get_contract(task.contract) if task.contract else None
            if contract is not None and contract.phase != Phase.SETTLED:
                return False
        return True

    def _worker_actions(self, height: int):
        auction = self.cfg.task.contract == "auction"
        for section, worker in self.workers:
            for contract in self._live_contracts():
                if isinstance(worker, CopycatWorker):
                    if height >= section.submit_at:
                        worker.copy_pending(contract)
                elif height == section.submit_at:
                    if auction:
                        worker.place_bid(contract)
                    else:
                        worker.submit(contract)
                elif auction and section.deliver and (section.name, contract) not in self.delivered:
                    if worker.deliver(contract) is not None:
                        self.delivered.add((section.name, contract))

    def run(self) -> "Simulation":
        publish_at = self.cfg.task.publish_at
        for height in range(1, self.max_blocks + 1):
            if height == publish_at:
                for task in self.tasks:
                    self.requester.publish(task, self.cfg.task.deposit)
            elif height > publish_at:
                self.requester.step()
            self._worker_actions(height)
            self.ledger.mine_block(self.policy)
            if self._done():
                break
        else:
            logger.warning(f"场景 '{self.cfg.scenario.name}' 达到出块上限 {self.max_blocks}")
        return self

    # ------------------------------------------------------------------
    # 报告
    # ------------------------------------------------------------------

    def owner_names(self) -> Dict[bytes, str]:
        owners = {address: self.requester.identity for address in self.requester.used_addresses}
        for _, worker in self.workers:
            for address in worker.used_addresses:
                owners[address] = worker.identity
        return owners

    def _scripted_answer(self, owners: Dict[bytes, str], address: bytes, policy: PolicySpec) -> Optional[str]:
        """预言使用的答案：收录地址所属工人的脚本答案，抄袭者与垃圾提交视为 ⊥"""
        name = owners.get(address)
        for section, worker in self.workers:
            if worker.identity == name:
                if not worker.writes_answer:
                    return None
                return policy.normalize(section.answer)
        return None

    def _scripted_bid(self, owners: Dict[bytes, str], address: bytes) -> Optional[int]:
        name = owners.get(address)
        for section, worker in self.workers:
            if worker.identity == name:
                return section.bid
        return None

    def _contract_report(self, view: ContractView, owners: Dict[bytes, str]) -> ContractReport:
        def name(address: bytes) -> str:
            return owners.get(address, address_hex(address))

        payouts: Dict[str, int] = {}
        refund = 0
        settlement = view.settlement
        if settlement is not None:
            for payee, amount in settlement.payouts:
                payouts[name(payee)] = payouts.get(name(payee), 0) + amount
            refund = settlement.refund

        oracle: Dict[str, int] = {}
        params = view.params
        if view.kind == "quality_aware" and settlement is not None:
            if settlement.kind == "instruction":
                vector = [self._scripted_answer(owners, r.worker, params.policy) for r in view.records]
                vector += [None] * (params.n - len(vector))
                rewards = oracle_rewards(params.policy.policy_id, vector, params.tau)
                for record, amount in zip(view.records, rewards):
                    oracle[name(record.worker)] = oracle.get(name(record.worker), 0) + amount
            elif view.records:
                share = params.tau // len(view.records)
                for record in view.records:
                    oracle[name(record.worker)] = oracle.get(name(record.worker), 0) + share
        elif view.kind == "auction" and settlement is not None:
            if any(kind == Phase.ANSWERING for kind, _ in view.phase_heights) and not self._fallback(view):
                bids = [self._scripted_bid(owners, r.worker) for r in view.records]
                selected, amounts = lowest_k_oracle(bids, params.k)
                for index, amount in zip(selected, amounts):
                    oracle[name(view.records[index].worker)] = amount
            elif view.records:
                share = params.tau // len(view.records)
                for record in view.records:
                    oracle[name(record.worker)] = share

        rejections = Counter(reason for _, reason in view.dropped)
        return ContractReport(
            address=address_hex(view.address),
            kind=view.kind,
            phase=view.phase.value,
            phase_heights={phase.value: height for phase, height in view.phase_heights},
            deposit=self._deposit(view.address),
            accepted=len(view.records) + len(view.removed_slots),
            removed=len(view.removed_slots),
            settlement=settlement.kind if settlement else None,
            payouts=payouts,
            refund=refund,
            oracle_payouts=oracle,
            rejections=dict(sorted(rejections.items())),
        )

    def _fallback(self, view: ContractView) -> bool:
        contract = self.ledger.get_contract(view.address)
        return bool(getattr(contract, "fallback", False))

    def _deposit(self, contract: bytes) -> int:
        for block in self.ledger.blocks:
            for receipt in block.receipts:
                if receipt.contract == contract:
                    return receipt.value
        return 0

    def report(self) -> RunReport:
        owners = self.owner_names()
        ledger = self.ledger
        contracts = []
        failures = []
        for task in self.tasks:
            instance = ledger.get_contract(task.contract) if task.contract else None
            if instance is None:
                failures.append(address_hex(task.contract))
                continue
            contracts.append(self._contract_report(instance.snapshot(), owners))

        payouts: Dict[str, int] = {}
        for contract in contracts:
            for who, amount in contract.payouts.items():
                payouts[who] = payouts.get(who, 0) + amount
        balances: Dict[str, int] = {}
        for address, amount in ledger.balances().items():
            if amount:
                who = owners.get(address, address_hex(address))
                balances[who] = balances.get(who, 0) + amount

        trace = ledger.trace.to_text()
        report = RunReport(
            scenario=self.cfg.scenario.name,
            seed=self.cfg.scenario.seed,
            blocks=ledger.height,
            deploy_failures=failures,
            contracts=contracts,
            payouts=dict(sorted(payouts.items())),
            balances=dict(sorted(balances.items())),
            conservation_delta=sum(ledger.balances().values()) - ledger.total_supply,
            trace_digest=crypto_core.hash_bytes(trace.encode("utf-8")).hex(),
            trace=trace,
        )
        report.assertions = check_assertions(self, report)
        return report


# ---------------------------------------------------------------------------
# 断言
# ---------------------------------------------------------------------------

def _submitted_tags(worker: WorkerClient) -> List[Tuple[bytes, bytes]]:
    """工人每份提交的 (合约, t1)"""
    tags = []
    for tx in worker.submissions:
        try:
            method, args = parse_call(tx.payload)
            if method in ("submit", "bid"):
                tags.append((tx.target, Attestation.from_bytes(args[0]).t1))
        except (DecodeError, IndexError):
            continue
    return tags


def anonymity_scan(sim: Simulation, window: int = 8) -> List[str]:
    """在全部上链字节中查找长期公钥、证书与身份的 8 字节片段"""
    blob = b"".join(sim.ledger.iter_ledger_bytes())
    leaks = []
    for _, worker in sim.workers:
        secrets = [worker.long_term.pk, worker.identity.encode("utf-8")]
        if worker.credential is not None:
            secrets.append(worker.credential.cert.sigma)
        for secret in secrets:
            for start in range(0, max(len(secret) - window + 1, 0)):
                if secret[start:start + window] in blob:
                    leaks.append(f"{worker.identity}: 片段 {secret[start:start + window].hex()}")
                    break
        tags = [t1 for _, t1 in _submitted_tags(worker)]
        if len(set(tags)) != len(tags):
            leaks.append(f"{worker.identity}: 不同任务的 t1 标签重复")
    return leaks


def check_assertions(sim: Simulation, report: RunReport) -> List[AssertionResult]:
    cfg = sim.cfg
    expect = cfg.expect
    results: List[AssertionResult] = []

    def check(name: str, passed: bool, detail: str = ""):
        results.append(AssertionResult(name=name, passed=bool(passed), detail=detail))
        if not passed:
            logger.warning(f"断言失败 [{cfg.scenario.name}] {name}: {detail}")

    check("conservation", report.conservation_delta == 0, f"delta={report.conservation_delta}")

    if expect.deploy_rejected:
        check("deploy_rejected", len(report.deploy_failures) == len(sim.tasks),
              f"{len(report.deploy_failures)} 个部署失败")
        funds = sum(sim.ledger.get_balance(t.alpha_r) for t in sim.tasks)
        check("deposit_returned", funds == sim.ledger.total_supply, f"请求者余额 {funds}")
        return results

    check("deployed", not report.deploy_failures, ", ".join(report.deploy_failures))
    for contract in report.contracts:
        prefix = f"{contract.kind}@{contract.address[:8]}"
        check(f"{prefix}.phase", contract.phase == expect.phase, f"phase={contract.phase}")
        if contract.settlement is not None:
            paid = sum(contract.payouts.values())
            check(f"{prefix}.lifecycle_conservation", paid + contract.refund == contract.deposit,
                  f"payouts={paid} refund={contract.refund} deposit={contract.deposit}")
        if expect.oracle and contract.settlement is not None:
            check(f"{prefix}.oracle", contract.payouts == {k: v for k, v in contract.oracle_payouts.items() if v},
                  f"payouts={contract.payouts} oracle={contract.oracle_payouts}")
        if expect.settlement is not None:
            check(f"{prefix}.settlement", contract.settlement == expect.settlement, f"settlement={contract.settlement}")
        if expect.accepted is not None:
            check(f"{prefix}.accepted", contract.accepted == expect.accepted, f"accepted={contract.accepted}")
        if expect.removed is not None:
            check(f"{prefix}.removed", contract.removed == expect.removed, f"removed={contract.removed}")
        if expect.refund is not None:
            check(f"{prefix}.refund", contract.refund == expect.refund, f"refund={contract.refund}")
        for reason, count in expect.rejections.items():
            actual = contract.rejections.get(reason, 0)
            check(f"{prefix}.rejections.{reason}", actual == count, f"{reason}={actual}")

    for who, amount in expect.payouts.items():
        actual = report.payouts.get(who, 0)
        check(f"payout.{who}", actual == amount, f"{who}={actual}")

    # 每个参与方在不同合约中使用不同的一次性地址
    for _, worker in sim.workers:
        per_contract: Dict[bytes, set] = {}
        for tx in worker.submissions:
            per_contract.setdefault(tx.target, set()).add(tx.sender)
        seen: set = set()
        clash = False
        for senders in per_contract.values():
            if seen & senders:
                clash = True
            seen |= senders
        check(f"address_hygiene.{worker.identity}", not clash)

    if expect.anonymity_scan:
        leaks = anonymity_scan(sim)
        check("anonymity_scan", not leaks, "; ".join(leaks[:3]))

    return results


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """运行一个场景并返回报告（不写文件）"""
    with run_context(cfg.scenario.name, cfg.scenario.seed):
        logger.info(f"运行场景 '{cfg.scenario.name}' (seed={cfg.scenario.seed})")
        report = Simulation(cfg).run().report()
        status = "通过" if report.passed else "失败"
        logger.info(f"场景 '{cfg.scenario.name}' {status}: {report.blocks} 个区块，{len(report.failures())} 项断言失败")
    return report
