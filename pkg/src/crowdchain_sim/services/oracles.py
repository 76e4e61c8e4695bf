"""
测试预言
与 core.policies 相互独立的穷举实现，用来核对链上结算结果
"""
from itertools import combinations
from typing import List, Optional, Sequence, Tuple


def plurality_oracle(answers: Sequence[Optional[str]], tau: int) -> List[int]:
    """
    多数投票预言：逐个候选答案数票，票数等于最高票的答案都算正确

    ⊥（None）不参与计票且永远得 0。
    """
    n = len(answers)
    candidates = []
    for answer in answers:
        if answer is not None and answer not in candidates:
            candidates.append(answer)
    votes = {}
    for candidate in candidates:
        count = 0
        for answer in answers:
            if answer == candidate:
                count += 1
        votes[candidate] = count
    best = 0
    for count in votes.values():
        if count > best:
            best = count
    rewards = []
    for answer in answers:
        if answer is not None and votes.get(answer) == best:
            rewards.append(tau // n)
        else:
            rewards.append(0)
    return rewards


def flat_oracle(answers: Sequence[Optional[str]], tau: int) -> List[int]:
    n = len(answers)
    return [0 if answer is None else tau // n for answer in answers]


def lowest_k_oracle(bids: Sequence[Optional[int]], k: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """
    最低 k 价预言：枚举所有大小为 min(k, 有效出价数) 的子集，取总价最低者

    总价相同时比较（排序后的出价, 下标）序列，与按提交顺序决胜一致。
    返回按出价升序排列的 (中标下标, 支付额)。
    """
    valid = [index for index, bid in enumerate(bids) if bid is not None]
    size = min(k, len(valid))
    best = None
    for subset in combinations(valid, size):
        ranked = sorted((bids[i], i) for i in subset)
        key = (sum(bid for bid, _ in ranked), ranked)
        if best is None or key < best:
            best = key
    if best is None:
        return (), ()
    ranked = best[1]
    return tuple(i for _, i in ranked), tuple(bid for bid, _ in ranked)


def oracle_rewards(policy_id: str, answers: Sequence[Optional[str]], tau: int) -> List[int]:
    if policy_id == "majority":
        return plurality_oracle(answers, tau)
    if policy_id == "flat":
        return flat_oracle(answers, tau)
    raise ValueError(f"没有对应的预言: {policy_id}")
