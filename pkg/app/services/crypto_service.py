"""Signatures and the verifiable random function behind one pluggable backend.

``ed25519`` signs with Ed25519 and derives the VRF from the deterministic
Ed25519 signature (pi = Sign_sk(input), h = SHA-256(pi)).  ``hmac`` is a fast
keyed-hash stand-in for property tests: the public key equals the secret key,
so it offers no unforgeability against a party that knows pk.
"""
from __future__ import annotations

import hashlib
import hmac
import logging
from functools import lru_cache
from typing import Dict, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey, Ed25519PublicKey,
)

from ..models.crypto import KeyPair, VrfOutput

logger = logging.getLogger(__name__)

HASH_BITS = 256


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class CryptoBackend:
    name = "abstract"

    def keygen(self, seed: bytes) -> KeyPair:
        raise NotImplementedError

    def sign(self, sk: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, pk: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError

    def vrf_eval(self, sk: bytes, data: bytes) -> VrfOutput:
        raise NotImplementedError

    def vrf_verify(self, pk: bytes, h: bytes, pi: bytes, data: bytes) -> bool:
        raise NotImplementedError


class Ed25519Backend(CryptoBackend):
    name = "ed25519"

    def __init__(self):
        self._private: Dict[bytes, Ed25519PrivateKey] = {}

    def _key(self, sk: bytes) -> Ed25519PrivateKey:
        key = self._private.get(sk)
        if key is None:
            key = Ed25519PrivateKey.from_private_bytes(sk)
            self._private[sk] = key
        return key

    def keygen(self, seed: bytes) -> KeyPair:
        sk = sha256(seed)
        pk = self._key(sk).public_key().public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )
        return KeyPair(sk=sk, pk=pk)

    def sign(self, sk: bytes, message: bytes) -> bytes:
        return self._key(sk).sign(message)

    def verify(self, pk: bytes, message: bytes, signature: bytes) -> bool:
        return _ed25519_verify(bytes(pk), bytes(message), bytes(signature))

    def vrf_eval(self, sk: bytes, data: bytes) -> VrfOutput:
        pi = self.sign(sk, data)
        return VrfOutput(h=sha256(pi), pi=pi)

    def vrf_verify(self, pk: bytes, h: bytes, pi: bytes, data: bytes) -> bool:
        if not self.verify(pk, data, pi):
            return False
        return hmac.compare_digest(sha256(pi), h)


# Every listener of a decoded slot checks the same (pk, message, signature);
# the result is a pure function of those bytes.
@lru_cache(maxsize=1 << 16)
def _ed25519_verify(pk: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


class HmacBackend(CryptoBackend):
    name = "hmac"

    def keygen(self, seed: bytes) -> KeyPair:
        sk = sha256(b"hmac-key" + seed)
        return KeyPair(sk=sk, pk=sk)

    def sign(self, sk: bytes, message: bytes) -> bytes:
        return hmac.new(sk, message, hashlib.sha256).digest()

    def verify(self, pk: bytes, message: bytes, signature: bytes) -> bool:
        try:
            expected = hmac.new(pk, message, hashlib.sha256).digest()
        except TypeError:
            return False
        return hmac.compare_digest(expected, bytes(signature))

    def vrf_eval(self, sk: bytes, data: bytes) -> VrfOutput:
        pi = hmac.new(sk, b"vrf-proof" + data, hashlib.sha256).digest()
        return VrfOutput(h=sha256(pi), pi=pi)

    def vrf_verify(self, pk: bytes, h: bytes, pi: bytes, data: bytes) -> bool:
        expected = hmac.new(pk, b"vrf-proof" + data, hashlib.sha256).digest()
        if not hmac.compare_digest(expected, bytes(pi)):
            return False
        return hmac.compare_digest(sha256(pi), bytes(h))


_BACKENDS = {
    Ed25519Backend.name: Ed25519Backend,
    HmacBackend.name: HmacBackend,
}
_instances: Dict[str, CryptoBackend] = {}


def get_backend(name: Optional[str] = None) -> CryptoBackend:
    if name is None:
        from ..core.config import get_settings
        name = get_settings().crypto_backend
    backend = _instances.get(name)
    if backend is None:
        try:
            backend = _BACKENDS[name]()
        except KeyError:
            raise ValueError(f"Unknown crypto backend '{name}'") from None
        _instances[name] = backend
        logger.debug(f"Crypto backend initialized: {name}")
    return backend


def derive_keypair(rng_seed: int, node_id: int, backend: CryptoBackend) -> KeyPair:
    """Node keys are a deterministic function of the run seed"""
    seed = b"blown-node-key" + rng_seed.to_bytes(8, "big") + node_id.to_bytes(4, "big")
    return backend.keygen(seed)


def sign(sk: bytes, message: bytes, backend: Optional[CryptoBackend] = None) -> bytes:
    return (backend or get_backend("ed25519")).sign(sk, message)


def verify(pk: bytes, message: bytes, signature: bytes,
           backend: Optional[CryptoBackend] = None) -> bool:
    return (backend or get_backend("ed25519")).verify(pk, message, signature)


def vrf_eval(sk: bytes, data: bytes, backend: Optional[CryptoBackend] = None) -> VrfOutput:
    return (backend or get_backend("ed25519")).vrf_eval(sk, data)


def vrf_verify(pk: bytes, h: bytes, pi: bytes, data: bytes,
               backend: Optional[CryptoBackend] = None) -> bool:
    return (backend or get_backend("ed25519")).vrf_verify(pk, h, pi, data)
