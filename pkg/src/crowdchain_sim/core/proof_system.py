"""
零知识证明接口
四种 NP 关系共用的 setup / prove / verify 接口，以及默认的“诚实求值 + 陷门 MAC”后端

后端在 prove 时用见证重新计算关系谓词，谓词为真才输出
tag = HMAC(陷门, H(关系码 || 验证材料 || 陈述))；verify 重新计算该标签。
陷门只保存在后端实例内部，参与方拿到的 PublicParams 只含验证材料指纹。
"""
import hmac
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

from .crypto_core import DIGEST_SIZE, hash_bytes, mac, sub_seed
from .exceptions import DecodeError, ProveFailed, RelationMismatch
from ..logger import logger


class RelationId(str, Enum):
    """四种 NP 关系"""
    AUTH = "auth"
    REWARD = "reward"
    FAKE = "fake"
    AUCTION = "auction"

    @property
    def code(self) -> bytes:
        return bytes([_RELATION_CODES[self]])

    @classmethod
    def from_code(cls, value: int) -> "RelationId":
        for relation_id, code in _RELATION_CODES.items():
            if code == value:
                return relation_id
        raise DecodeError(f"未知的关系码: {value}")


_RELATION_CODES = {
    RelationId.AUTH: 1,
    RelationId.REWARD: 2,
    RelationId.FAKE: 3,
    RelationId.AUCTION: 4,
}

PROOF_SIZE = 1 + DIGEST_SIZE


@dataclass(frozen=True)
class PublicParams:
    """
    证明系统公共参数

    verifier_material 是陷门的承诺指纹；prover_material（陷门）由后端托管，不随参数分发。
    """
    relation_id: RelationId
    verifier_material: bytes

    def to_bytes(self) -> bytes:
        return self.relation_id.code + self.verifier_material

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicParams":
        if len(data) != 1 + DIGEST_SIZE:
            raise DecodeError("公共参数长度错误")
        return cls(RelationId.from_code(data[0]), bytes(data[1:]))


@dataclass(frozen=True)
class Statement:
    """陈述：关系类型 + 公开输入的规范编码"""
    relation_id: RelationId
    public_inputs: bytes

    def to_bytes(self) -> bytes:
        return self.relation_id.code + self.public_inputs


@dataclass(frozen=True)
class Witness:
    """见证：只在链下使用，不会出现在任何上链数据中"""
    relation_id: RelationId
    private_inputs: bytes = field(repr=False)


@dataclass(frozen=True)
class Proof:
    """证明：关系码 + 定长认证标签"""
    relation_id: RelationId
    tag: bytes

    def to_bytes(self) -> bytes:
        return self.relation_id.code + self.tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "Proof":
        if len(data) != PROOF_SIZE:
            raise DecodeError(f"证明长度必须为 {PROOF_SIZE}")
        return cls(RelationId.from_code(data[0]), bytes(data[1:]))


@dataclass(frozen=True)
class ProofRecord:
    """后端记录的一次成功证明（测试预言使用）"""
    statement: Statement
    witness: Witness
    proof: Proof


def eval_relation(relation_id: RelationId, x: Statement, w: Witness) -> bool:
    """
    关系谓词求值

    Raises:
        RelationMismatch: 陈述或见证的关系类型不符
        DecodeError: 编码畸形
    """
    from .relations import get_relation

    if x.relation_id != relation_id or w.relation_id != relation_id:
        raise RelationMismatch(f"关系类型不一致: {relation_id.value} / {x.relation_id.value} / {w.relation_id.value}")
    return get_relation(relation_id)(x.public_inputs, w.private_inputs)


class ProofBackend(ABC):
    """证明系统后端接口，可替换为真实 SNARK 实现"""

    @abstractmethod
    def setup(self, relation_id: RelationId, seed: bytes) -> PublicParams:
        ...

    @abstractmethod
    def prove(self, pp: PublicParams, x: Statement, w: Witness) -> Proof:
        ...

    @abstractmethod
    def verify(self, pp: PublicParams, x: Statement, proof: Proof) -> bool:
        ...

    def prover(self, pp: PublicParams) -> "ProvingHandle":
        return ProvingHandle(self, pp)


class ProvingHandle:
    """参与方持有的证明句柄：只能为自己提供见证的陈述生成证明"""

    def __init__(self, backend: ProofBackend, pp: PublicParams):
        self._backend = backend
        self.pp = pp

    def prove(self, x: Statement, w: Witness) -> Proof:
        return self._backend.prove(self.pp, x, w)


class HonestEvalBackend(ProofBackend):
    """诚实求值 + 陷门 MAC 后端"""

    def __init__(self, record: bool = False):
        self._trapdoors: Dict[bytes, bytes] = {}
        self._lock = threading.Lock()
        self.record = record
        self.transcript: List[ProofRecord] = []

    def setup(self, relation_id: RelationId, seed: bytes) -> PublicParams:
        """由种子确定性生成某个关系的参数，陷门登记在后端内部"""
        trapdoor = sub_seed(seed, f"trapdoor:{relation_id.value}")
        fingerprint = hash_bytes(b"verifier-material" + relation_id.code + trapdoor)
        with self._lock:
            self._trapdoors[fingerprint] = trapdoor
        logger.debug(f"证明参数已生成: {relation_id.value} {fingerprint.hex()[:16]}")
        return PublicParams(relation_id, fingerprint)

    def _trapdoor(self, pp: PublicParams) -> Optional[bytes]:
        with self._lock:
            return self._trapdoors.get(pp.verifier_material)

    @staticmethod
    def _tag(trapdoor: bytes, pp: PublicParams, x: Statement) -> bytes:
        return mac(trapdoor, hash_bytes(pp.relation_id.code + pp.verifier_material + x.to_bytes()))

    def prove(self, pp: PublicParams, x: Statement, w: Witness) -> Proof:
        """
        生成证明

        Raises:
            RelationMismatch: 关系类型不一致或参数不属于本后端
            ProveFailed: 关系谓词为假
        """
        if x.relation_id != pp.relation_id or w.relation_id != pp.relation_id:
            raise RelationMismatch("参数、陈述与见证的关系类型不一致")
        trapdoor = self._trapdoor(pp)
        if trapdoor is None:
            raise RelationMismatch("公共参数不属于当前证明后端")
        try:
            holds = eval_relation(pp.relation_id, x, w)
        except DecodeError as e:
            raise ProveFailed(f"{pp.relation_id.value} 编码非法: {e}")
        if not holds:
            raise ProveFailed(f"{pp.relation_id.value} 关系不成立，拒绝生成证明")
        proof = Proof(pp.relation_id, self._tag(trapdoor, pp, x))
        if self.record:
            with self._lock:
                self.transcript.append(ProofRecord(x, w, proof))
        return proof

    def verify(self, pp: PublicParams, x: Statement, proof: Proof) -> bool:
        """验证证明，任何畸形或跨关系输入都返回 False"""
        if not isinstance(proof, Proof) or not isinstance(x, Statement):
            return False
        if proof.relation_id != pp.relation_id or x.relation_id != pp.relation_id:
            return False
        if len(proof.tag) != DIGEST_SIZE:
            return False
        trapdoor = self._trapdoor(pp)
        if trapdoor is None:
            return False
        return hmac.compare_digest(proof.tag, self._tag(trapdoor, pp, x))


# 全局默认后端
proof_backend = HonestEvalBackend()


def setup(relation_id: RelationId, seed: bytes, backend: Optional[ProofBackend] = None) -> PublicParams:
    return (backend or proof_backend).setup(relation_id, seed)


def prove(pp: PublicParams, x: Statement, w: Witness, backend: Optional[ProofBackend] = None) -> Proof:
    return (backend or proof_backend).prove(pp, x, w)


def verify(pp: PublicParams, x: Statement, proof: Proof, backend: Optional[ProofBackend] = None) -> bool:
    return (backend or proof_backend).verify(pp, x, proof)
