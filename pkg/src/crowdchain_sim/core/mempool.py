"""
交易池调度策略
网络对手可以在同步上界 Δ 内重排与延迟尚未上链的交易，但不能伪造、丢弃或篡改
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple, Type

from .exceptions import ConfigError


@dataclass(frozen=True)
class PendingTx:
    """交易池中的交易：submitted_height 为提交时账本的高度，seq 为全局提交序号"""
    tx: "object"
    submitted_height: int
    seq: int


Schedule = Tuple[List[PendingTx], List[PendingTx]]


class MempoolPolicy(ABC):
    """对手钩子：决定本区块打包哪些交易以及顺序，其余交易延后"""

    name = "base"

    @abstractmethod
    def schedule(self, pending: List[PendingTx], height: int) -> Schedule:
        ...


_policies: Dict[str, Type[MempoolPolicy]] = {}


def register_policy(name: str):
    """装饰器：注册交易池策略"""
    def _register(cls: Type[MempoolPolicy]) -> Type[MempoolPolicy]:
        cls.name = name
        _policies[name] = cls
        return cls
    return _register


@register_policy("fifo")
class FifoPolicy(MempoolPolicy):
    """按提交顺序全部打包"""

    def schedule(self, pending: List[PendingTx], height: int) -> Schedule:
        return list(pending), []


@register_policy("reverse")
class ReversePolicy(MempoolPolicy):
    """按提交顺序的逆序打包"""

    def schedule(self, pending: List[PendingTx], height: int) -> Schedule:
        return list(reversed(pending)), []


@register_policy("delay")
class DelayPolicy(MempoolPolicy):
    """
    把交易推迟 delay 个区块（可只针对部分发送方）

    超过 Δ 的推迟会被账本强制打包。
    """

    def __init__(self, delay: int = 1, senders: Optional[Iterable[bytes]] = None):
        self.delay = delay
        self.senders: Optional[Set[bytes]] = set(senders) if senders is not None else None

    def schedule(self, pending: List[PendingTx], height: int) -> Schedule:
        include, defer = [], []
        for item in pending:
            targeted = self.senders is None or item.tx.sender in self.senders
            if targeted and height < item.submitted_height + 1 + self.delay:
                defer.append(item)
            else:
                include.append(item)
        return include, defer


@register_policy("front_run")
class FrontRunPolicy(MempoolPolicy):
    """把攻击者发送的交易排到最前面，其余保持提交顺序"""

    def __init__(self, attackers: Optional[Iterable[bytes]] = None):
        self.attackers: Set[bytes] = set(attackers or ())

    def add_attacker(self, address: bytes):
        self.attackers.add(address)

    def schedule(self, pending: List[PendingTx], height: int) -> Schedule:
        first = [item for item in pending if item.tx.sender in self.attackers]
        rest = [item for item in pending if item.tx.sender not in self.attackers]
        return first + rest, []


@register_policy("callback")
class CallbackPolicy(MempoolPolicy):
    """由任意函数决定调度（测试用）"""

    def __init__(self, func: Callable[[List[PendingTx], int], Schedule]):
        self.func = func

    def schedule(self, pending: List[PendingTx], height: int) -> Schedule:
        return self.func(list(pending), height)


def create_policy(name: str, **kwargs) -> MempoolPolicy:
    """按名称创建策略"""
    cls = _policies.get(name)
    if cls is None:
        raise ConfigError(f"未知的交易池策略: {name}（可选: {', '.join(sorted(_policies))}）", field="ledger.mempool_policy")
    return cls(**kwargs)


def available_policies() -> List[str]:
    return sorted(name for name in _policies if name != "callback")
