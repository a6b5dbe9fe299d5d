"""Wire messages exchanged between nodes, canonical-encoded.

The same encoding serves the in-memory simulator traces and the socket
transport, so simulated and live runs speak an identical protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..blocks import Block, decode_block, encode_block
from ..codec import Reader, Writer
from ..transactions import Transaction, decode_transaction, encode_transaction

_KIND_TX = 1
_KIND_BLOCK = 2
_KIND_TIP = 3
_KIND_CHAIN_QUERY = 4
_KIND_CHAIN = 5
_KIND_RESULT = 6
_KIND_REDEEM = 7
_KIND_REDEEM_REPLY = 8


class MessageError(ValueError):
    pass


@dataclass(frozen=True)
class TxGossip:
    tx: Transaction


@dataclass(frozen=True)
class BlockAnnounce:
    block: Block


@dataclass(frozen=True)
class TipNotice:
    height: int
    tip_hash: bytes


@dataclass(frozen=True)
class ChainQuery:
    after_height: int


@dataclass(frozen=True)
class ChainReply:
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class ResultDelivery:
    """Validator-to-storage envelope with one encrypted RequestResult."""

    envelope: bytes


@dataclass(frozen=True)
class RedeemCall:
    link_token: bytes
    nonce: bytes
    operation: int
    reply_to: str


@dataclass(frozen=True)
class RedeemReply:
    ok: bool
    reason: str
    payload: bytes


Message = Union[
    TxGossip,
    BlockAnnounce,
    TipNotice,
    ChainQuery,
    ChainReply,
    ResultDelivery,
    RedeemCall,
    RedeemReply,
]


def encode_message(msg: Message) -> bytes:
    w = Writer()
    if isinstance(msg, TxGossip):
        w.u8(_KIND_TX)
        w.bytes_(encode_transaction(msg.tx))
    elif isinstance(msg, BlockAnnounce):
        w.u8(_KIND_BLOCK)
        w.bytes_(encode_block(msg.block))
    elif isinstance(msg, TipNotice):
        w.u8(_KIND_TIP)
        w.u64(msg.height)
        w.bytes_(msg.tip_hash)
    elif isinstance(msg, ChainQuery):
        w.u8(_KIND_CHAIN_QUERY)
        w.u64(msg.after_height)
    elif isinstance(msg, ChainReply):
        w.u8(_KIND_CHAIN)
        w.u32(len(msg.blocks))
        for block in msg.blocks:
            w.bytes_(encode_block(block))
    elif isinstance(msg, ResultDelivery):
        w.u8(_KIND_RESULT)
        w.bytes_(msg.envelope)
    elif isinstance(msg, RedeemCall):
        w.u8(_KIND_REDEEM)
        w.bytes_(msg.link_token)
        w.bytes_(msg.nonce)
        w.u8(msg.operation)
        w.string(msg.reply_to)
    elif isinstance(msg, RedeemReply):
        w.u8(_KIND_REDEEM_REPLY)
        w.boolean(msg.ok)
        w.string(msg.reason)
        w.bytes_(msg.payload)
    else:
        raise MessageError(f"unknown message type {type(msg).__name__}")
    return w.getvalue()


def decode_message(data: bytes) -> Message:
    r = Reader(data)
    kind = r.u8()
    msg: Message
    if kind == _KIND_TX:
        msg = TxGossip(tx=decode_transaction(r.bytes_()))
    elif kind == _KIND_BLOCK:
        msg = BlockAnnounce(block=decode_block(r.bytes_()))
    elif kind == _KIND_TIP:
        msg = TipNotice(height=r.u64(), tip_hash=r.bytes_())
    elif kind == _KIND_CHAIN_QUERY:
        msg = ChainQuery(after_height=r.u64())
    elif kind == _KIND_CHAIN:
        msg = ChainReply(blocks=tuple(decode_block(r.bytes_()) for _ in range(r.u32())))
    elif kind == _KIND_RESULT:
        msg = ResultDelivery(envelope=r.bytes_())
    elif kind == _KIND_REDEEM:
        msg = RedeemCall(link_token=r.bytes_(), nonce=r.bytes_(), operation=r.u8(), reply_to=r.string())
    elif kind == _KIND_REDEEM_REPLY:
        msg = RedeemReply(ok=r.boolean(), reason=r.string(), payload=r.bytes_())
    else:
        raise MessageError(f"unknown message kind {kind}")
    r.expect_end()
    return msg
