"""Stake-weighted cryptographic sortition.

The VRF hash, read as a fraction of [0, 1], is located inside the cumulative
binomial partition B(k; w, p), and the index of the interval it falls in is
the node's initial leader counter.
"""
from __future__ import annotations

import logging
import math
from bisect import bisect_left
from functools import lru_cache
from typing import List, Optional, Tuple, Union

from ..models.crypto import Role, SortitionOutcome, Stake
from .crypto_service import CryptoBackend, get_backend

logger = logging.getLogger(__name__)


def binomial_pmf(k: int, w: int, p: float) -> float:
    if not (0 <= k <= w):
        raise ValueError(f"binomial_pmf needs 0 <= k <= w, got k={k}, w={w}")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"binomial_pmf needs p in [0, 1], got {p}")
    return math.comb(w, k) * p ** k * (1.0 - p) ** (w - k)


@lru_cache(maxsize=4096)
def binomial_cdf_bounds(w: int, p: float) -> Tuple[float, ...]:
    """Right endpoints Σ_{k≤l} B(k; w, p) for l = 0..w"""
    total = 0.0
    bounds = []
    for k in range(w + 1):
        total += binomial_pmf(k, w, p)
        bounds.append(total)
    return tuple(bounds)


def normalized_hash(h: bytes) -> float:
    """h / 2^ℓ with ℓ the bit length of h (correctly rounded integer division)"""
    if not h:
        raise ValueError("Empty hash")
    return int.from_bytes(h, "big") / (1 << (8 * len(h)))


def counter_for_fraction(x: float, w: int, p: float) -> int:
    """Index l of the interval I(l) holding x; I(0) is closed, the rest are (a, b]"""
    bounds = binomial_cdf_bounds(w, p)
    return min(bisect_left(bounds, x), w)


def leader_counter(role: Role, w: int, h: Union[bytes, float], p: float) -> int:
    if role is Role.FOLLOWER:
        return 0
    x = normalized_hash(h) if isinstance(h, (bytes, bytearray)) else float(h)
    return counter_for_fraction(x, w, p)


def vrf_input(seed: bytes, role: Role, w: int) -> bytes:
    # stake is bound into the input so a forged w cannot reuse an honest proof
    return seed + b"||" + role.to_bytes() + b"||" + w.to_bytes(8, "big")


def sortition(sk: bytes, seed: bytes, role: Role, tau: float, w: int, W: int,
              backend: Optional[CryptoBackend] = None) -> SortitionOutcome:
    backend = backend or get_backend()
    stake = Stake(w=w, W=W, tau=tau)
    out = backend.vrf_eval(sk, vrf_input(seed, role, w))
    l0 = leader_counter(role, w, out.h, stake.p)
    return SortitionOutcome(h=out.h, pi=out.pi, l0=l0, role=role)


def verify_sortition(pk: bytes, h: bytes, pi: bytes, seed: bytes, role: Role,
                     tau: float, w: int, W: int, l: int,
                     backend: Optional[CryptoBackend] = None) -> bool:
    backend = backend or get_backend()
    try:
        role = Role(role)
        stake = Stake(w=w, W=W, tau=tau)
        if not h:
            return False
        if not backend.vrf_verify(pk, h, pi, vrf_input(seed, role, w)):
            return False
        return leader_counter(role, w, h, stake.p) == l
    except (ValueError, TypeError, OverflowError):
        return False


def split_stake(w: int, parts: int) -> List[int]:
    """Split w coins into `parts` sub-accounts whose sizes differ by at most one"""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    base, extra = divmod(w, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]
