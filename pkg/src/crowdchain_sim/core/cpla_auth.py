"""
公共前缀可链接匿名认证
证书签发、基于标签的匿名认证、验证与链接

同一密钥对共享 λ 字节前缀 p 的两条消息认证时 t1 = H(p, sk) 相同，可被公开链接；
不同前缀下的认证彼此不可链接。
"""
import hmac
import threading
from dataclasses import dataclass, field
from typing import Optional, Set, Tuple

from . import crypto_core, proof_system
from .exceptions import AuthError, DecodeError, DuplicateRegistration, ProofError
from .proof_system import PROOF_SIZE, Proof, ProofBackend, PublicParams, RelationId
from .relations import PREFIX_LEN, auth_statement, auth_witness, cert_message, compute_tag
from .relations import cert_verify as _cert_sig_verify
from ..logger import logger

ATTESTATION_SIZE = 2 * crypto_core.DIGEST_SIZE + PROOF_SIZE


@dataclass(frozen=True)
class MasterKeys:
    """RA 主密钥"""
    mpk: bytes
    msk: bytes = field(repr=False)


@dataclass(frozen=True)
class Certificate:
    """证书：RA 对用户公钥的签名"""
    subject_pk: bytes
    sigma: bytes


@dataclass(frozen=True)
class Attestation:
    """认证凭据 (t1, t2, η)，t1 为前缀链接标签"""
    t1: bytes
    t2: bytes
    eta: Proof

    def to_bytes(self) -> bytes:
        return self.t1 + self.t2 + self.eta.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Attestation":
        if len(data) != ATTESTATION_SIZE:
            raise DecodeError(f"认证凭据长度必须为 {ATTESTATION_SIZE}")
        size = crypto_core.DIGEST_SIZE
        return cls(bytes(data[:size]), bytes(data[size:2 * size]), Proof.from_bytes(data[2 * size:]))


class IdentityRegistry:
    """RA 的身份登记表：一个真实身份只能领取一张证书"""

    def __init__(self):
        self._identities: Set[str] = set()
        self._lock = threading.Lock()

    def claim(self, identity: str):
        with self._lock:
            if identity in self._identities:
                raise DuplicateRegistration(f"身份 '{identity}' 已注册")
            self._identities.add(identity)

    def __contains__(self, identity: str) -> bool:
        return identity in self._identities

    def __len__(self) -> int:
        return len(self._identities)


def setup(seed: bytes, backend: Optional[ProofBackend] = None) -> Tuple[MasterKeys, PublicParams]:
    """生成 RA 主密钥与认证关系的证明参数"""
    keys = crypto_core.sig_keygen(crypto_core.sub_seed(seed, "ra-master"))
    pp = proof_system.setup(RelationId.AUTH, crypto_core.sub_seed(seed, "pp-auth"), backend)
    return MasterKeys(mpk=keys.pk, msk=keys.sk), pp


def cert_gen(msk: bytes, pk: bytes, identity: str, registry: Optional[IdentityRegistry] = None) -> Certificate:
    """
    为公钥签发证书

    Raises:
        DuplicateRegistration: 身份已在登记表中
    """
    if registry is not None:
        registry.claim(identity)
    return Certificate(subject_pk=pk, sigma=crypto_core.sign(msk, cert_message(pk)))


def cert_verify(cert: Certificate, pk: bytes, mpk: bytes) -> bool:
    return cert.subject_pk == pk and _cert_sig_verify(cert.sigma, pk, mpk)


def auth(
    message: bytes,
    sk: bytes,
    pk: bytes,
    cert: Certificate,
    mpk: bytes,
    pp: PublicParams,
    backend: Optional[ProofBackend] = None,
) -> Attestation:
    """
    对 p||m 生成匿名认证凭据

    Raises:
        AuthError: 消息短于前缀长度、证书无效或密钥不配对
    """
    if len(message) < PREFIX_LEN:
        raise AuthError(f"消息长度必须至少为前缀长度 {PREFIX_LEN}")
    t1 = compute_tag(message[:PREFIX_LEN], sk)
    t2 = compute_tag(message, sk)
    try:
        eta = proof_system.prove(
            pp,
            auth_statement(t1, t2, message, mpk),
            auth_witness(sk, pk, cert.sigma),
            backend,
        )
    except ProofError as e:
        raise AuthError(f"匿名认证失败: {e}")
    return Attestation(t1=t1, t2=t2, eta=eta)


def verify(
    message: bytes,
    attestation: Attestation,
    mpk: bytes,
    pp: PublicParams,
    backend: Optional[ProofBackend] = None,
) -> bool:
    """验证认证凭据，畸形输入返回 False"""
    if not isinstance(attestation, Attestation) or len(message) < PREFIX_LEN:
        return False
    statement = auth_statement(attestation.t1, attestation.t2, message, mpk)
    ok = proof_system.verify(pp, statement, attestation.eta, backend)
    if not ok:
        logger.debug("匿名认证凭据验证失败")
    return ok


def link(att1: Attestation, att2: Attestation) -> bool:
    """两份凭据的前缀标签相同即链接"""
    return hmac.compare_digest(att1.t1, att2.t1)
