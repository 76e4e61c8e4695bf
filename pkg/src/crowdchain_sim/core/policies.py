"""
激励策略
R(A_j; A_1..A_n, τ) 的可插拔实现，请求者、奖励关系与测试预言共用同一份逻辑
"""
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .encoding import (
    decode_fields,
    decode_int,
    decode_list,
    decode_str,
    encode_fields,
    encode_int,
    encode_list,
    encode_str,
)
from .exceptions import DecodeError

# 缺失答案 ⊥
BOTTOM = None
Answer = Optional[str]

POLICY_MAJORITY = "majority"
POLICY_FLAT = "flat"
POLICY_AUCTION = "auction_lowest_k"

RewardFunction = Callable[[Sequence[Answer], int], List[int]]

_policies: Dict[str, RewardFunction] = {}


def register_policy(policy_id: str):
    """装饰器：注册质量感知奖励函数"""
    def _register(func: RewardFunction) -> RewardFunction:
        _policies[policy_id] = func
        return func
    return _register


@dataclass(frozen=True)
class PolicySpec:
    """激励策略描述，作为合约初始化负载的一部分上链"""
    policy_id: str
    tau: int
    n: int
    answer_set: Tuple[str, ...] = field(default_factory=tuple)
    k: int = 0

    def to_bytes(self) -> bytes:
        return encode_fields(
            encode_str(self.policy_id),
            encode_list([encode_str(a) for a in self.answer_set]),
            encode_int(self.tau),
            encode_int(self.n),
            encode_int(self.k),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PolicySpec":
        policy_id, answers, tau, n, k = decode_fields(data, 5)
        return cls(
            policy_id=decode_str(policy_id),
            answer_set=tuple(decode_str(a) for a in decode_list(answers)),
            tau=decode_int(tau),
            n=decode_int(n),
            k=decode_int(k),
        )

    def normalize(self, answer: Answer) -> Answer:
        """不在答案集合内的取值按 ⊥ 处理"""
        if answer is BOTTOM or (self.answer_set and answer not in self.answer_set):
            return BOTTOM
        return answer


@dataclass(frozen=True)
class AuctionOutcome:
    """拍卖选择结果：按出价升序排列的中标下标与支付额"""
    selected: Tuple[int, ...]
    payments: Tuple[int, ...]
    feasible: bool


@register_policy(POLICY_MAJORITY)
def evaluate_majority(answers: Sequence[Answer], tau: int) -> List[int]:
    """
    多数投票奖励

    对非 ⊥ 答案取众数；所有并列众数都视为正确，答对者得 floor(τ/n)，
    其余（含 ⊥）得 0。
    """
    n = len(answers)
    if n < 1:
        raise ValueError("n 必须 ≥ 1")
    counts = Counter(a for a in answers if a is not BOTTOM)
    if not counts:
        return [0] * n
    top = max(counts.values())
    winners = {value for value, count in counts.items() if count == top}
    share = tau // n
    return [share if a is not BOTTOM and a in winners else 0 for a in answers]


@register_policy(POLICY_FLAT)
def evaluate_flat(answers: Sequence[Answer], tau: int) -> List[int]:
    """统一费率：每个非 ⊥ 答案得 floor(τ/n)"""
    n = len(answers)
    if n < 1:
        raise ValueError("n 必须 ≥ 1")
    share = tau // n
    return [0 if a is BOTTOM else share for a in answers]


def evaluate_auction_selection(bids: Sequence[Optional[int]], k: int, tau: int) -> AuctionOutcome:
    """
    最低 k 价反向拍卖，按出价支付

    无效出价（None）永远不会中标；有效出价少于 k 时全部中标。
    并列出价按提交顺序决胜。支付总额超过 τ 时 feasible 为 False。
    """
    if k < 0:
        raise ValueError("k 必须非负")
    valid = [(bid, index) for index, bid in enumerate(bids) if bid is not None]
    valid.sort()
    chosen = valid[:k]
    payments = tuple(bid for bid, _ in chosen)
    return AuctionOutcome(
        selected=tuple(index for _, index in chosen),
        payments=payments,
        feasible=sum(payments) <= tau,
    )


def evaluate(spec: PolicySpec, answers: Sequence[Answer]) -> List[int]:
    """按策略描述计算奖励向量"""
    func = _policies.get(spec.policy_id)
    if func is None:
        raise DecodeError(f"未知的奖励策略: {spec.policy_id}")
    if len(answers) != spec.n:
        raise ValueError(f"答案数 {len(answers)} 与 n={spec.n} 不符")
    return func([spec.normalize(a) for a in answers], spec.tau)


def available_policies() -> List[str]:
    return sorted(_policies) + [POLICY_AUCTION]
