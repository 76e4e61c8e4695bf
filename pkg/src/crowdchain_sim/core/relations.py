"""
NP 关系
认证关系、奖励关系、伪造提交关系与拍卖选择关系的规范编码与谓词

字段顺序（均为长度前缀编码）：
  认证  陈述 (t1, t2, p||m, mpk)                           见证 (sk, pk, cert)
  奖励  陈述 (epk, τ, 策略, 合约地址, [C_j], [α_j], [R_j])   见证 (esk)
  伪造  陈述 (C_i, epk, α_i, 合约地址)                       见证 (esk)
  拍卖  陈述 (epk, τ, k, 合约地址, [B_j], [α_j], [下标], [支付])  见证 (esk)
缺失槽位（⊥）的密文与地址编码为空字节串。
"""
from typing import Callable, Dict, List, Optional, Sequence

from . import crypto_core, policies
from .encoding import (
    decode_fields,
    decode_int,
    decode_int_list,
    decode_list,
    encode_fields,
    encode_int,
    encode_int_list,
    encode_list,
)
from .exceptions import DecodeError, DecryptionError
from .proof_system import RelationId, Statement, Witness

PREFIX_LEN = 32

_CERT_DOMAIN = b"crowdchain-sim/cert"
_SEAL_DOMAIN = b"crowdchain-sim/sealed-payload"

Predicate = Callable[[bytes, bytes], bool]

_relations: Dict[RelationId, Predicate] = {}


def register_relation(relation_id: RelationId):
    """装饰器：登记关系谓词"""
    def _register(func: Predicate) -> Predicate:
        _relations[relation_id] = func
        return func
    return _register


def get_relation(relation_id: RelationId) -> Predicate:
    try:
        return _relations[relation_id]
    except KeyError:
        raise DecodeError(f"未登记的关系: {relation_id}")


# ---------------------------------------------------------------------------
# 认证关系辅助函数
# ---------------------------------------------------------------------------

def contract_prefix(contract: bytes) -> bytes:
    """协议中的认证前缀 p：合约地址的摘要（λ = 32 字节）"""
    return crypto_core.hash_bytes(contract)


def compute_tag(data: bytes, sk: bytes) -> bytes:
    """标签 H(len(data) || data || sk)"""
    return crypto_core.hash_bytes(encode_fields(data) + sk)


def cert_message(pk: bytes) -> bytes:
    return _CERT_DOMAIN + pk


def cert_verify(sigma: bytes, pk: bytes, mpk: bytes) -> bool:
    return crypto_core.verify_sig(mpk, cert_message(pk), sigma)


def auth_statement(t1: bytes, t2: bytes, message: bytes, mpk: bytes) -> Statement:
    return Statement(RelationId.AUTH, encode_fields(t1, t2, message, mpk))


def auth_witness(sk: bytes, pk: bytes, cert_sigma: bytes) -> Witness:
    return Witness(RelationId.AUTH, encode_fields(sk, pk, cert_sigma))


@register_relation(RelationId.AUTH)
def _auth_relation(public_inputs: bytes, private_inputs: bytes) -> bool:
    t1, t2, message, mpk = decode_fields(public_inputs, 4)
    sk, pk, sigma = decode_fields(private_inputs, 3)
    if len(message) < PREFIX_LEN:
        return False
    prefix = message[:PREFIX_LEN]
    return (
        cert_verify(sigma, pk, mpk)
        and crypto_core.pair(pk, sk)
        and t1 == compute_tag(prefix, sk)
        and t2 == compute_tag(message, sk)
    )


# ---------------------------------------------------------------------------
# 双层绑定：答案/出价明文 = (负载, pk_αi, σ_i)
# ---------------------------------------------------------------------------

def _seal_message(contract: bytes, payload: bytes) -> bytes:
    return encode_fields(_SEAL_DOMAIN, contract, payload)


def seal_payload(sk: bytes, pk: bytes, contract: bytes, payload: bytes) -> bytes:
    """用一次性地址的私钥签名负载，返回待加密的明文"""
    sigma = crypto_core.sign(sk, _seal_message(contract, payload))
    return encode_fields(payload, pk, sigma)


def open_payload(plaintext: bytes, address: bytes, contract: bytes) -> Optional[bytes]:
    """
    检查明文是否由 address 的持有者签名

    Returns:
        签名有效时返回负载，否则返回 None
    """
    try:
        payload, pk, sigma = decode_fields(plaintext, 3)
    except DecodeError:
        return None
    if crypto_core.derive_address(pk) != address:
        return None
    if not crypto_core.verify_sig(pk, _seal_message(contract, payload), sigma):
        return None
    return payload


def open_ciphertext(esk: bytes, ciphertext: bytes, address: bytes, contract: bytes) -> Optional[bytes]:
    """解密并检查签名；⊥ 槽位、解密失败或签名无效时返回 None"""
    if not ciphertext or not address:
        return None
    try:
        plaintext = crypto_core.decrypt(esk, ciphertext)
    except DecryptionError:
        return None
    return open_payload(plaintext, address, contract)


def decode_answer(payload: Optional[bytes], spec: policies.PolicySpec) -> policies.Answer:
    if payload is None:
        return policies.BOTTOM
    try:
        value = payload.decode("utf-8")
    except UnicodeDecodeError:
        return policies.BOTTOM
    return spec.normalize(value)


def decode_bid(payload: Optional[bytes]) -> Optional[int]:
    if payload is None or len(payload) != 8:
        return None
    return decode_int(payload)


def decrypt_answers(
    esk: bytes,
    spec: policies.PolicySpec,
    contract: bytes,
    ciphertexts: Sequence[bytes],
    addresses: Sequence[bytes],
) -> List[policies.Answer]:
    """把一组（可能含 ⊥ 的）密文还原为答案向量"""
    return [
        decode_answer(open_ciphertext(esk, c, a, contract), spec)
        for c, a in zip(ciphertexts, addresses)
    ]


def decrypt_bids(esk: bytes, contract: bytes, ciphertexts: Sequence[bytes], addresses: Sequence[bytes]) -> List[Optional[int]]:
    return [decode_bid(open_ciphertext(esk, c, a, contract)) for c, a in zip(ciphertexts, addresses)]


# ---------------------------------------------------------------------------
# 奖励关系
# ---------------------------------------------------------------------------

def reward_statement(
    epk: bytes,
    tau: int,
    spec: policies.PolicySpec,
    contract: bytes,
    ciphertexts: Sequence[bytes],
    addresses: Sequence[bytes],
    rewards: Sequence[int],
) -> Statement:
    return Statement(
        RelationId.REWARD,
        encode_fields(
            epk,
            encode_int(tau),
            spec.to_bytes(),
            contract,
            encode_list(ciphertexts),
            encode_list(addresses),
            encode_int_list(rewards),
        ),
    )


def esk_witness(relation_id: RelationId, esk: bytes) -> Witness:
    return Witness(relation_id, encode_fields(esk))


@register_relation(RelationId.REWARD)
def _reward_relation(public_inputs: bytes, private_inputs: bytes) -> bool:
    epk, tau_raw, spec_raw, contract, c_raw, a_raw, r_raw = decode_fields(public_inputs, 7)
    (esk,) = decode_fields(private_inputs, 1)
    tau = decode_int(tau_raw)
    spec = policies.PolicySpec.from_bytes(spec_raw)
    ciphertexts = decode_list(c_raw)
    addresses = decode_list(a_raw)
    rewards = decode_int_list(r_raw)
    if not crypto_core.pair(epk, esk):
        return False
    if spec.n < 1 or spec.tau != tau or not (len(ciphertexts) == len(addresses) == len(rewards) == spec.n):
        return False
    if sum(rewards) > tau:
        return False
    answers = decrypt_answers(esk, spec, contract, ciphertexts, addresses)
    return policies.evaluate(spec, answers) == list(rewards)


# ---------------------------------------------------------------------------
# 伪造提交关系
# ---------------------------------------------------------------------------

def fake_statement(ciphertext: bytes, epk: bytes, address: bytes, contract: bytes) -> Statement:
    return Statement(RelationId.FAKE, encode_fields(ciphertext, epk, address, contract))


@register_relation(RelationId.FAKE)
def _fake_relation(public_inputs: bytes, private_inputs: bytes) -> bool:
    ciphertext, epk, address, contract = decode_fields(public_inputs, 4)
    (esk,) = decode_fields(private_inputs, 1)
    if not crypto_core.pair(epk, esk):
        return False
    try:
        plaintext = crypto_core.decrypt(esk, ciphertext)
    except DecryptionError:
        # 无法解密的密文也视为伪造
        return True
    return open_payload(plaintext, address, contract) is None


# ---------------------------------------------------------------------------
# 拍卖选择关系
# ---------------------------------------------------------------------------

def auction_statement(
    epk: bytes,
    tau: int,
    k: int,
    contract: bytes,
    bids: Sequence[bytes],
    addresses: Sequence[bytes],
    selected: Sequence[int],
    payments: Sequence[int],
) -> Statement:
    return Statement(
        RelationId.AUCTION,
        encode_fields(
            epk,
            encode_int(tau),
            encode_int(k),
            contract,
            encode_list(bids),
            encode_list(addresses),
            encode_int_list(selected),
            encode_int_list(payments),
        ),
    )


@register_relation(RelationId.AUCTION)
def _auction_relation(public_inputs: bytes, private_inputs: bytes) -> bool:
    epk, tau_raw, k_raw, contract, b_raw, a_raw, s_raw, p_raw = decode_fields(public_inputs, 8)
    (esk,) = decode_fields(private_inputs, 1)
    bids = decode_list(b_raw)
    addresses = decode_list(a_raw)
    if not crypto_core.pair(epk, esk) or len(bids) != len(addresses):
        return False
    outcome = policies.evaluate_auction_selection(
        decrypt_bids(esk, contract, bids, addresses), decode_int(k_raw), decode_int(tau_raw)
    )
    return (
        outcome.feasible
        and list(outcome.selected) == decode_int_list(s_raw)
        and list(outcome.payments) == decode_int_list(p_raw)
    )
