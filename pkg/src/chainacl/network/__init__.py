"""Node composition: deterministic simulator and live socket transport."""

from .messages import (
    BlockAnnounce,
    ChainQuery,
    ChainReply,
    Message,
    MessageError,
    RedeemCall,
    RedeemReply,
    ResultDelivery,
    TipNotice,
    TxGossip,
    decode_message,
    encode_message,
)
from .nodes import StorageCore, UserCore, ValidatorCore
from .simulator import (
    ADVERSARY_BEHAVIORS,
    ConvergenceReport,
    NetworkConfig,
    SimNode,
    World,
)

__all__ = [
    "ADVERSARY_BEHAVIORS",
    "BlockAnnounce",
    "ChainQuery",
    "ChainReply",
    "ConvergenceReport",
    "Message",
    "MessageError",
    "NetworkConfig",
    "RedeemCall",
    "RedeemReply",
    "ResultDelivery",
    "SimNode",
    "StorageCore",
    "TipNotice",
    "TxGossip",
    "UserCore",
    "ValidatorCore",
    "World",
    "decode_message",
    "encode_message",
]
