"""
任务合约
"""
from .base import (
    ContractView,
    Phase,
    Settlement,
    SubmissionRecord,
    TaskContract,
    TaskParams,
    create_contract,
    register_contract,
)
from .auction import AuctionContract
from .quality_aware import QualityAwareContract

__all__ = [
    "AuctionContract",
    "ContractView",
    "Phase",
    "QualityAwareContract",
    "Settlement",
    "SubmissionRecord",
    "TaskContract",
    "TaskParams",
    "create_contract",
    "register_contract",
]
