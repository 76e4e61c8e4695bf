"""
异常定义
所有模块共享的错误层次
"""
from typing import Optional


class CrowdSimError(Exception):
    """仿真器错误基类"""


class CryptoError(CrowdSimError):
    """密码原语错误"""


class PlaintextTooLarge(CryptoError):
    """明文超过配置上限"""


class DecryptionError(CryptoError):
    """解密失败（密钥不匹配或密文被篡改）"""


class DecodeError(CrowdSimError):
    """规范编码解析失败"""


class ProofError(CrowdSimError):
    """证明系统错误"""


class ProveFailed(ProofError):
    """关系谓词不成立，拒绝生成证明"""


class RelationMismatch(ProofError):
    """参数、陈述与见证的关系类型不一致"""


class AuthError(CrowdSimError):
    """匿名认证失败（证书无效或密钥不配对）"""


class DuplicateRegistration(CrowdSimError):
    """同一身份重复注册"""


class TxRejected(CrowdSimError):
    """交易未进入交易池"""

    def __init__(self, reason: str):
        super().__init__(f"交易被拒绝: {reason}")
        self.reason = reason


class ContractReject(CrowdSimError):
    """合约处理函数拒绝调用，账本会回滚本次调用的转账"""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class DeployRejected(ContractReject):
    """合约构造函数拒绝部署"""


class LedgerInvariantError(CrowdSimError):
    """账本不变量被破坏（总量不守恒等）"""


class ConfigError(CrowdSimError):
    """场景配置错误，附带字段路径或行号"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if line is not None:
            location.append(f"第 {line} 行")
        if field:
            location.append(f"字段 {field}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
        self.field = field
        self.line = line
