"""
安全博弈服务
可链接性、匿名性与不可伪造性三个博弈的挑战者与对手策略，输出经验胜率

对手只能使用 cpla_auth 的公开接口与挑战者提供的预言。
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel

from ..core import cpla_auth, crypto_core
from ..core.cpla_auth import Attestation, Certificate, MasterKeys
from ..core.crypto_core import RandomStream, SigKeyPair
from ..core.exceptions import AuthError, CrowdSimError
from ..core.proof_system import PROOF_SIZE, HonestEvalBackend, Proof, RelationId
from ..core.relations import PREFIX_LEN
from ..logger import logger

GAMES = ("linkability", "anonymity", "forgery")
ANONYMITY_BAND = (0.45, 0.55)


class GameResult(BaseModel):
    game: str
    trials: int
    wins: int
    rate: float
    lower: float
    upper: float
    q: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.lower <= self.rate <= self.upper


class _Challenger:
    """持有 RA 主密钥，按需签发证书"""

    def __init__(self, seed: bytes, backend: HonestEvalBackend):
        self.backend = backend
        self.keys: MasterKeys
        self.keys, self.pp = cpla_auth.setup(seed, backend)
        self.registry = cpla_auth.IdentityRegistry()
        self._users = 0

    @property
    def mpk(self) -> bytes:
        return self.keys.mpk

    def enroll(self, seed: bytes) -> Tuple[SigKeyPair, Certificate]:
        keys = crypto_core.sig_keygen(seed)
        cert = cpla_auth.cert_gen(self.keys.msk, keys.pk, f"user-{self._users}", self.registry)
        self._users += 1
        return keys, cert

    def auth(self, message: bytes, keys: SigKeyPair, cert: Certificate) -> Attestation:
        return cpla_auth.auth(message, keys.sk, keys.pk, cert, self.mpk, self.pp, self.backend)

    def verify(self, message: bytes, attestation: Attestation) -> bool:
        return cpla_auth.verify(message, attestation, self.mpk, self.pp, self.backend)


# ---------------------------------------------------------------------------
# 可链接性：q 张证书产生 q+1 份共享前缀且两两不链接的有效凭据即获胜
# ---------------------------------------------------------------------------

def _linkability_trial(challenger: _Challenger, q: int, rng: RandomStream, strategy: int) -> bool:
    users = [challenger.enroll(rng.read(32)) for _ in range(q)]
    prefix = rng.read(PREFIX_LEN)
    outputs: List[Tuple[bytes, Attestation]] = []
    for index in range(q + 1):
        message = prefix + rng.read(16)
        if index < q:
            keys, cert = users[index]
            outputs.append((message, challenger.auth(message, keys, cert)))
            continue
        # 第 q+1 份：各策略尝试避开链接
        keys, cert = users[rng.randbelow(q)]
        try:
            if strategy == 0:
                # 未认证密钥借用他人证书
                rogue = crypto_core.sig_keygen(rng.read(32))
                attestation = challenger.auth(message, rogue, cert)
            elif strategy == 1:
                # 篡改前缀标签
                honest = challenger.auth(message, keys, cert)
                attestation = Attestation(rng.read(32), honest.t2, honest.eta)
            elif strategy == 2:
                # 把另一前缀下的凭据挪用过来
                other = rng.read(PREFIX_LEN) + message[PREFIX_LEN:]
                attestation = challenger.auth(other, keys, cert)
            else:
                # 老实复用某张证书
                attestation = challenger.auth(message, keys, cert)
        except AuthError:
            return False
        outputs.append((message, attestation))

    if not all(challenger.verify(m, a) for m, a in outputs):
        return False
    for i in range(len(outputs)):
        for j in range(i + 1, len(outputs)):
            if cpla_auth.link(outputs[i][1], outputs[j][1]):
                return False
    return True


# ---------------------------------------------------------------------------
# 匿名性：挑战消息由两名用户之一认证，对手猜是谁
# ---------------------------------------------------------------------------

def _matches(target: bytes, transcripts: List[bytes]) -> bool:
    return any(target in item or item in target for item in transcripts if item)


def _anonymity_guess(strategy: int, challenge: Attestation, seen: Dict[int, List[Attestation]],
                     rng: RandomStream) -> int:
    """四种对手策略：比对 t1、比对 t2、比对 η、在全部转录上做字节匹配"""
    for user in (0, 1):
        history = seen[user]
        if strategy == 0 and _matches(challenge.t1, [a.t1 for a in history]):
            return user
        if strategy == 1 and _matches(challenge.t2, [a.t2 for a in history]):
            return user
        if strategy == 2 and _matches(challenge.eta.tag, [a.eta.tag for a in history]):
            return user
        if strategy == 3:
            blob = challenge.to_bytes()
            for attestation in history:
                data = attestation.to_bytes()
                # 8 字节窗口比对
                for start in range(0, len(data) - 8, 8):
                    if data[start:start + 8] in blob:
                        return user
    return rng.coin()


def _anonymity_trial(challenger: _Challenger, users, rng: RandomStream, adversary: RandomStream,
                     strategy: int) -> bool:
    challenge_prefix = rng.read(PREFIX_LEN)
    seen: Dict[int, List[Attestation]] = {0: [], 1: []}
    for user in (0, 1):
        for _ in range(2):
            prefix = rng.read(PREFIX_LEN)
            if prefix == challenge_prefix:
                continue
            keys, cert = users[user]
            seen[user].append(challenger.auth(prefix + adversary.read(8), keys, cert))
    b = rng.coin()
    keys, cert = users[b]
    challenge = challenger.auth(challenge_prefix + adversary.read(8), keys, cert)
    return _anonymity_guess(strategy, challenge, seen, adversary) == b


# ---------------------------------------------------------------------------
# 不可伪造性：对手拿到认证预言后，给出未查询过的消息上的有效凭据即获胜
# ---------------------------------------------------------------------------

def _forgery_trial(challenger: _Challenger, users, rng: RandomStream, strategy: int) -> bool:
    keys, cert = users[0]
    queried = []
    for _ in range(3):
        message = rng.read(PREFIX_LEN + 8)
        queried.append((message, challenger.auth(message, keys, cert)))
    target = rng.read(PREFIX_LEN + 8)
    message, attestation = queried[rng.randbelow(len(queried))]
    if strategy == 0:
        forged = attestation
    elif strategy == 1:
        forged = Attestation(attestation.t1, crypto_core.hash_bytes(target), attestation.eta)
    elif strategy == 2:
        forged = Attestation(attestation.t1, attestation.t2, Proof(RelationId.AUTH, rng.read(PROOF_SIZE - 1)))
    else:
        # 同前缀拼接：保留 t1，重新计算不了 t2，只能挪用另一份的 t2
        other = queried[(queried.index((message, attestation)) + 1) % len(queried)][1]
        forged = Attestation(attestation.t1, other.t2, other.eta)
        target = message[:PREFIX_LEN] + target[PREFIX_LEN:]
    if any(target == m for m, _ in queried):
        return False
    return challenger.verify(target, forged)


# ---------------------------------------------------------------------------

def run_game(game: str, trials: int, seed: int, q: int = 2) -> GameResult:
    """
    运行安全博弈并返回经验胜率

    linkability/forgery 的合格带为 [0, 0]，anonymity 为 [0.45, 0.55]。

    Raises:
        CrowdSimError: 未知博弈或参数非法
    """
    if game not in GAMES:
        raise CrowdSimError(f"未知的博弈: {game}（可选: {', '.join(GAMES)}）")
    if trials < 1:
        raise CrowdSimError("trials 必须 ≥ 1")
    if game == "linkability" and q < 1:
        raise CrowdSimError("q 必须 ≥ 1")

    base = crypto_core.derive_seed(seed, f"game:{game}")
    backend = HonestEvalBackend()
    challenger = _Challenger(crypto_core.sub_seed(base, "challenger"), backend)
    rng = RandomStream(crypto_core.sub_seed(base, "challenger-coins"))
    adversary = RandomStream(crypto_core.sub_seed(base, "adversary-coins"))

    wins = 0
    if game == "linkability":
        for trial in range(trials):
            wins += _linkability_trial(challenger, q, rng, trial % 4)
        lower, upper = 0.0, 0.0
    elif game == "anonymity":
        users = [challenger.enroll(rng.read(32)) for _ in range(2)]
        for trial in range(trials):
            wins += _anonymity_trial(challenger, users, rng, adversary, trial % 4)
        lower, upper = ANONYMITY_BAND
    else:
        users = [challenger.enroll(rng.read(32))]
        for trial in range(trials):
            wins += _forgery_trial(challenger, users, adversary, trial % 4)
        lower, upper = 0.0, 0.0

    rate = wins / trials
    logger.info(f"博弈 {game}: {wins}/{trials} = {rate:.4f}")
    return GameResult(
        game=game, trials=trials, wins=wins, rate=rate, lower=lower, upper=upper,
        q=q if game == "linkability" else None,
    )
