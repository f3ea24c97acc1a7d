"""Byte-exact wire format for protocol messages.

Every encoding starts with a version byte and a tag byte, followed by fields
in fixed order: integers as signed 64-bit big-endian, byte strings and nested
structures as a 4-byte big-endian length followed by the bytes.  The signing
bytes of a message are its encoding with an empty signature.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import replace
from typing import List, Tuple

from ..models.crypto import Role
from ..models.protocol import (
    Block, BlockHeader, MessageB, MessageM, MessageT, SortEvidence, Transaction, ZERO_HASH,
)

CODEC_VERSION = 1

TAG_M = 1
TAG_T = 2
TAG_B = 3
TAG_TX = 4
TAG_HEADER = 5
TAG_EVIDENCE = 6
TAG_BLOCK = 7

_INT = struct.Struct(">q")
_LEN = struct.Struct(">I")


class CodecError(ValueError):
    pass


class _Writer:
    def __init__(self, tag: int):
        self.parts: List[bytes] = [bytes([CODEC_VERSION, tag])]

    def int(self, value: int) -> "_Writer":
        self.parts.append(_INT.pack(value))
        return self

    def bytes(self, value: bytes) -> "_Writer":
        self.parts.append(_LEN.pack(len(value)))
        self.parts.append(value)
        return self

    def done(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, tag: int):
        if len(data) < 2:
            raise CodecError("Truncated message")
        if data[0] != CODEC_VERSION:
            raise CodecError(f"Unsupported codec version {data[0]}")
        if data[1] != tag:
            raise CodecError(f"Expected tag {tag}, got {data[1]}")
        self.data = data
        self.pos = 2

    def int(self) -> int:
        if self.pos + 8 > len(self.data):
            raise CodecError("Truncated integer")
        (value,) = _INT.unpack_from(self.data, self.pos)
        self.pos += 8
        return value

    def bytes(self) -> bytes:
        if self.pos + 4 > len(self.data):
            raise CodecError("Truncated length prefix")
        (n,) = _LEN.unpack_from(self.data, self.pos)
        self.pos += 4
        if self.pos + n > len(self.data):
            raise CodecError("Truncated field")
        value = self.data[self.pos:self.pos + n]
        self.pos += n
        return value

    def end(self) -> None:
        if self.pos != len(self.data):
            raise CodecError(f"{len(self.data) - self.pos} trailing bytes")


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# Transactions -----------------------------------------------------------------

def encode_tx(tx: Transaction, with_signature: bool = True) -> bytes:
    return (_Writer(TAG_TX).bytes(tx.id).bytes(tx.payload).int(tx.originator)
            .bytes(tx.signature if with_signature else b"").done())


def decode_tx(data: bytes) -> Transaction:
    r = _Reader(data, TAG_TX)
    tx = Transaction(id=r.bytes(), payload=r.bytes(), originator=r.int(), signature=r.bytes())
    r.end()
    return tx


def tx_signing_bytes(tx: Transaction) -> bytes:
    return encode_tx(tx, with_signature=False)


# Sortition evidence -------------------------------------------------------------

def encode_evidence(ev: SortEvidence) -> bytes:
    return (_Writer(TAG_EVIDENCE).bytes(ev.role.to_bytes()).int(ev.w).bytes(ev.h)
            .bytes(ev.pi).int(ev.l0).done())


def decode_evidence(data: bytes) -> SortEvidence:
    r = _Reader(data, TAG_EVIDENCE)
    try:
        role = Role(r.bytes().decode())
    except (UnicodeDecodeError, ValueError) as e:
        raise CodecError(f"Bad role: {e}") from None
    ev = SortEvidence(role=role, w=r.int(), h=r.bytes(), pi=r.bytes(), l0=r.int())
    r.end()
    return ev


# Headers and blocks ---------------------------------------------------------------

def _header_body(header: BlockHeader) -> _Writer:
    return (_Writer(TAG_HEADER).int(header.epoch).bytes(header.prev_hash).int(header.leader)
            .bytes(header.tx_root).bytes(header.evidence_digest))


def header_hash(header: BlockHeader) -> bytes:
    return _sha256(_header_body(header).done())


def encode_header(header: BlockHeader) -> bytes:
    return _header_body(header).bytes(header.hash).done()


def decode_header(data: bytes) -> BlockHeader:
    r = _Reader(data, TAG_HEADER)
    header = BlockHeader(epoch=r.int(), prev_hash=r.bytes(), leader=r.int(),
                         tx_root=r.bytes(), evidence_digest=r.bytes(), hash=r.bytes())
    r.end()
    return header


def tx_root(txs: Tuple[Transaction, ...]) -> bytes:
    h = hashlib.sha256()
    for tx in txs:
        h.update(_sha256(encode_tx(tx)))
    return h.digest()


def evidence_digest(ev: SortEvidence | None) -> bytes:
    return _sha256(encode_evidence(ev)) if ev is not None else ZERO_HASH


def seal_header(header: BlockHeader) -> BlockHeader:
    return replace(header, hash=header_hash(header))


def encode_block(block: Block) -> bytes:
    w = _Writer(TAG_BLOCK).bytes(encode_header(block.header)).int(len(block.txs))
    for tx in block.txs:
        w.bytes(encode_tx(tx))
    w.bytes(encode_evidence(block.sort_evidence) if block.sort_evidence else b"")
    return w.done()


def decode_block(data: bytes) -> Block:
    r = _Reader(data, TAG_BLOCK)
    header = decode_header(r.bytes())
    count = r.int()
    if count < 0:
        raise CodecError("Negative transaction count")
    txs = tuple(decode_tx(r.bytes()) for _ in range(count))
    raw_ev = r.bytes()
    r.end()
    return Block(header=header, txs=txs, sort_evidence=decode_evidence(raw_ev) if raw_ev else None)


# Messages -------------------------------------------------------------------------

def encode_message(msg, with_signature: bool = True) -> bytes:
    sig = msg.signature if with_signature else b""
    if isinstance(msg, MessageM):
        return (_Writer(TAG_M).int(msg.epoch).int(msg.i).int(msg.l).int(msg.sender)
                .bytes(sig).done())
    if isinstance(msg, MessageT):
        return (_Writer(TAG_T).int(msg.epoch).int(msg.j).int(msg.l).bytes(encode_tx(msg.tx))
                .int(msg.sender).bytes(sig).done())
    if isinstance(msg, MessageB):
        w = _Writer(TAG_B).int(msg.epoch).int(msg.j).int(msg.l).int(len(msg.headers))
        for header in msg.headers:
            w.bytes(encode_header(header))
        return (w.bytes(encode_block(msg.block)).bytes(encode_evidence(msg.sort_evidence))
                .int(msg.sender).bytes(sig).done())
    raise CodecError(f"Cannot encode {type(msg).__name__}")


def decode_message(data: bytes):
    if len(data) < 2:
        raise CodecError("Truncated message")
    tag = data[1]
    if tag == TAG_M:
        r = _Reader(data, TAG_M)
        msg = MessageM(epoch=r.int(), i=r.int(), l=r.int(), sender=r.int(), signature=r.bytes())
    elif tag == TAG_T:
        r = _Reader(data, TAG_T)
        epoch, j, l = r.int(), r.int(), r.int()
        tx = decode_tx(r.bytes())
        msg = MessageT(tx=tx, epoch=epoch, j=j, l=l, sender=r.int(), signature=r.bytes())
    elif tag == TAG_B:
        r = _Reader(data, TAG_B)
        epoch, j, l, count = r.int(), r.int(), r.int(), r.int()
        if count < 0:
            raise CodecError("Negative header count")
        headers = tuple(decode_header(r.bytes()) for _ in range(count))
        block = decode_block(r.bytes())
        ev = decode_evidence(r.bytes())
        msg = MessageB(headers=headers, block=block, epoch=epoch, j=j, l=l,
                       sort_evidence=ev, sender=r.int(), signature=r.bytes())
    else:
        raise CodecError(f"Unknown message tag {tag}")
    r.end()
    return msg


def signing_bytes(msg) -> bytes:
    return encode_message(msg, with_signature=False)
