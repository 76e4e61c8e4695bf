"""
密码原语
哈希、数字签名、混合公钥加密与密钥配对检查，所有密钥生成都接受显式种子
"""
import hashlib
import hmac
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .encoding import encode_fields, encode_int
from .exceptions import CryptoError, DecryptionError, PlaintextTooLarge

DIGEST_SIZE = 32
ADDRESS_SIZE = 20
KEY_SIZE = 32
SIGNATURE_SIZE = 64
NONCE_SIZE = 12
TAG_SIZE = 16
ENCRYPTION_RANDOMNESS_SIZE = KEY_SIZE + NONCE_SIZE
CIPHERTEXT_OVERHEAD = KEY_SIZE + NONCE_SIZE + TAG_SIZE
DEFAULT_MAX_PLAINTEXT = 65536

# 写入轨迹文件头，保证轨迹可自描述
PRIMITIVES: Dict[str, str] = {
    "hash": "SHA-256",
    "signature": "Ed25519",
    "encryption": "X25519-HKDF-SHA256-AES256GCM",
    "mac": "HMAC-SHA256",
}

_HKDF_INFO = b"crowdchain-sim/hybrid-encryption/v1"

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NO_ENC = serialization.NoEncryption()


@dataclass(frozen=True)
class SigKeyPair:
    """签名密钥对（Ed25519 原始字节）"""
    sk: bytes = field(repr=False)
    pk: bytes


@dataclass(frozen=True)
class EncKeyPair:
    """加密密钥对（X25519 原始字节）"""
    esk: bytes = field(repr=False)
    epk: bytes


def hash_bytes(data: bytes) -> bytes:
    """SHA-256，输出 32 字节"""
    return hashlib.sha256(data).digest()


def mac(key: bytes, data: bytes) -> bytes:
    """HMAC-SHA256"""
    return hmac.new(key, data, hashlib.sha256).digest()


def derive_address(pk: bytes) -> bytes:
    """账户地址：公钥哈希截断为 20 字节"""
    return hash_bytes(pk)[:ADDRESS_SIZE]


def derive_seed(scenario_seed: int, actor_id: str) -> bytes:
    """由场景种子与参与方标识派生 32 字节种子"""
    return hash_bytes(encode_fields(encode_int(scenario_seed), actor_id.encode("utf-8")))


def sub_seed(seed: bytes, label: str) -> bytes:
    """由已有种子派生带标签的子种子"""
    return hash_bytes(encode_fields(seed, label.encode("utf-8")))


class RandomStream:
    """
    基于 SHA-256 计数器模式的确定性字节流

    同一种子产生同一字节序列，用于加密随机数与对手的抛硬币
    """

    def __init__(self, seed: bytes):
        self._seed = hash_bytes(b"stream" + seed)
        self._counter = 0
        self._buffer = b""

    def read(self, size: int) -> bytes:
        while len(self._buffer) < size:
            self._buffer += hash_bytes(self._seed + encode_int(self._counter))
            self._counter += 1
        out, self._buffer = self._buffer[:size], self._buffer[size:]
        return out

    def randbelow(self, bound: int) -> int:
        """[0, bound) 上的均匀整数（拒绝采样）"""
        if bound <= 0:
            raise ValueError("bound 必须为正")
        width = (bound.bit_length() + 7) // 8 + 1
        limit = (256 ** width // bound) * bound
        while True:
            value = int.from_bytes(self.read(width), "big")
            if value < limit:
                return value % bound

    def coin(self) -> int:
        return self.read(1)[0] & 1


def _check_seed(seed: bytes):
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != KEY_SIZE:
        raise CryptoError(f"种子必须是 {KEY_SIZE} 字节")


def sig_keygen(seed: bytes) -> SigKeyPair:
    """由 32 字节种子确定性生成签名密钥对"""
    _check_seed(seed)
    private_key = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    return SigKeyPair(
        sk=private_key.private_bytes(_RAW, _RAW_PRIV, _NO_ENC),
        pk=private_key.public_key().public_bytes(_RAW, _RAW_PUB),
    )


def sign(sk: bytes, message: bytes) -> bytes:
    """Ed25519 签名（签名本身是确定性的）"""
    try:
        private_key = Ed25519PrivateKey.from_private_bytes(sk)
    except ValueError as e:
        raise CryptoError(f"非法签名私钥: {e}")
    return private_key.sign(message)


def verify_sig(pk: bytes, message: bytes, signature: bytes) -> bool:
    """验证签名，任何畸形输入都返回 False"""
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def enc_keygen(seed: bytes) -> EncKeyPair:
    """由 32 字节种子确定性生成加密密钥对"""
    _check_seed(seed)
    private_key = X25519PrivateKey.from_private_bytes(bytes(seed))
    return EncKeyPair(
        esk=private_key.private_bytes(_RAW, _RAW_PRIV, _NO_ENC),
        epk=private_key.public_key().public_bytes(_RAW, _RAW_PUB),
    )


def _derive_key(shared: bytes, ephemeral_pk: bytes, epk: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=KEY_SIZE,
        salt=None,
        info=_HKDF_INFO + ephemeral_pk + epk,
    ).derive(shared)


def encrypt(
    epk: bytes,
    plaintext: bytes,
    randomness: Optional[bytes] = None,
    max_plaintext: int = DEFAULT_MAX_PLAINTEXT,
) -> bytes:
    """
    混合加密：临时 X25519 密钥协商 + HKDF + AES-256-GCM

    密文格式为 临时公钥(32) || nonce(12) || AES-GCM 密文，
    长度恒为 len(plaintext) + 60。

    Args:
        epk: 接收方加密公钥
        plaintext: 明文
        randomness: 44 字节随机数（临时私钥 + nonce），为空时取系统随机数
        max_plaintext: 明文上限

    Raises:
        PlaintextTooLarge: 明文超过上限
        CryptoError: 公钥或随机数非法
    """
    if len(plaintext) > max_plaintext:
        raise PlaintextTooLarge(f"明文长度 {len(plaintext)} 超过上限 {max_plaintext}")
    if randomness is None:
        randomness = os.urandom(ENCRYPTION_RANDOMNESS_SIZE)
    if len(randomness) != ENCRYPTION_RANDOMNESS_SIZE:
        raise CryptoError(f"加密随机数必须是 {ENCRYPTION_RANDOMNESS_SIZE} 字节")
    try:
        peer = X25519PublicKey.from_public_bytes(epk)
    except ValueError as e:
        raise CryptoError(f"非法加密公钥: {e}")

    ephemeral = X25519PrivateKey.from_private_bytes(randomness[:KEY_SIZE])
    ephemeral_pk = ephemeral.public_key().public_bytes(_RAW, _RAW_PUB)
    nonce = randomness[KEY_SIZE:]
    key = _derive_key(ephemeral.exchange(peer), ephemeral_pk, epk)
    body = AESGCM(key).encrypt(nonce, plaintext, ephemeral_pk)
    return ephemeral_pk + nonce + body


def decrypt(esk: bytes, ciphertext: bytes) -> bytes:
    """
    解密混合密文

    Raises:
        DecryptionError: 密文畸形、密钥错误或认证标签不匹配
    """
    if len(ciphertext) < CIPHERTEXT_OVERHEAD:
        raise DecryptionError("密文长度不足")
    ephemeral_pk = ciphertext[:KEY_SIZE]
    nonce = ciphertext[KEY_SIZE:KEY_SIZE + NONCE_SIZE]
    body = ciphertext[KEY_SIZE + NONCE_SIZE:]
    try:
        private_key = X25519PrivateKey.from_private_bytes(esk)
        epk = private_key.public_key().public_bytes(_RAW, _RAW_PUB)
        shared = private_key.exchange(X25519PublicKey.from_public_bytes(ephemeral_pk))
        key = _derive_key(shared, ephemeral_pk, epk)
        return AESGCM(key).decrypt(nonce, body, ephemeral_pk)
    except (InvalidTag, ValueError) as e:
        raise DecryptionError(f"解密失败: {type(e).__name__}")


def pair(pk_any: bytes, sk_any: bytes) -> bool:
    """检查公私钥是否一致（签名密钥或加密密钥均可）"""
    if not isinstance(pk_any, (bytes, bytearray)) or not isinstance(sk_any, (bytes, bytearray)):
        return False
    if len(pk_any) != KEY_SIZE or len(sk_any) != KEY_SIZE:
        return False
    try:
        sig_pk = Ed25519PrivateKey.from_private_bytes(bytes(sk_any)).public_key().public_bytes(_RAW, _RAW_PUB)
        if hmac.compare_digest(sig_pk, bytes(pk_any)):
            return True
        enc_pk = X25519PrivateKey.from_private_bytes(bytes(sk_any)).public_key().public_bytes(_RAW, _RAW_PUB)
        return hmac.compare_digest(enc_pk, bytes(pk_any))
    except ValueError:
        return False
