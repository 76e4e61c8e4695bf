"""
测试共享夹具
"""
import pytest
from hypothesis import HealthCheck, settings

from crowdchain_sim.config import config
from crowdchain_sim.core import crypto_core
from crowdchain_sim.core.actors import RegistrationAuthority, RequesterClient, TaskSpec, WorkerClient
from crowdchain_sim.core.ledger import Ledger
from crowdchain_sim.core.policies import PolicySpec
from crowdchain_sim.core.proof_system import HonestEvalBackend

# 配置夹具是函数作用域的
settings.register_profile(
    "crowdchain",
    suppress_health_check=[HealthCheck.function_scoped_fixture],
    deadline=None,
)
settings.load_profile("crowdchain")

_ENV_VARS = (
    "CROWDCHAIN_CONFIG_FILE",
    "CROWDCHAIN_SCENARIOS_DIR",
    "CROWDCHAIN_OUTPUT_DIR",
    "CROWDCHAIN_MAX_PLAINTEXT",
    "LOG_LEVEL",
)


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    for name in _ENV_VARS:
        monkeypatch.delenv(name, raising=False)
    config.reset()
    yield config
    config.reset()


def seed_for(label: str) -> bytes:
    return crypto_core.derive_seed(0, label)


@pytest.fixture
def backend():
    return HonestEvalBackend()


@pytest.fixture
def ledger(backend):
    return Ledger(delta=1, proof_backend=backend)


@pytest.fixture
def ra(backend):
    return RegistrationAuthority(seed_for("ra"), backend)


@pytest.fixture
def requester(ledger, ra, backend):
    client = RequesterClient("requester", seed_for("requester"), ledger, ra.params, backend)
    client.register(ra)
    return client


@pytest.fixture
def make_worker(ledger, ra, backend):
    def _make(name, answer="A", bid=None, cls=WorkerClient, **kwargs):
        worker = cls(name, seed_for(f"worker:{name}"), ledger, ra.params, backend, answer=answer, bid=bid, **kwargs)
        worker.register(ra)
        return worker
    return _make


@pytest.fixture
def publish(ledger, requester):
    """发布一个任务并出块，返回 RequesterTask（每个测试只能调用一次，创世只执行一次）"""
    def _publish(policy="majority", n=3, tau=30, t_a=5, t_i=5, answer_set=(), contract_type="quality_aware",
                 t_b=0, k=0, deposit=None, funds=None):
        spec = TaskSpec(PolicySpec(policy, tau, n, tuple(answer_set), k), t_a, t_i, contract_type, t_b)
        task = requester.prepare(spec)
        ledger.genesis({task.alpha_r: tau if funds is None else funds})
        requester.publish(task, deposit)
        ledger.mine_block()
        return task
    return _publish
