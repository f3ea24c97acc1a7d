import math
from typing import Optional

import numpy as np
import pytest

from app.models.crypto import Role
from app.models.protocol import NodeState
from app.models.radio import Position, RadioParams
from app.models.simulation import SimConfig
from app.services import ledger_service
from app.services.crypto_service import HmacBackend, derive_keypair
from app.services.node_service import ProtocolParams, begin_epoch
from app.services.sinr_service import SinrMedium
from app.services.sortition_service import sortition

SEED = b"test-epoch-seed"


@pytest.fixture
def hmac_backend():
    return HmacBackend()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line_medium():
    """Three nodes on a line, P=16, alpha=4: node 1 hears node 0 at 16 and node 2 at 1"""
    radio = RadioParams(power=16.0, alpha=4.0, beta=2.0, theta=2.0)
    return SinrMedium([Position(0.0, 0.0), Position(1.0, 0.0), Position(3.0, 0.0)], radio)


def square_medium(n: int, d: float, rng: np.random.Generator) -> SinrMedium:
    xy = rng.uniform(0.0, d, size=(n, 2))
    return SinrMedium([Position(float(x), float(y)) for x, y in xy], RadioParams.for_square(d))


@pytest.fixture
def small_config():
    return SimConfig.build(N=8, c=2, epochs=1, rng_seed=3, crypto_backend="hmac")


class World:
    """A handful of node states sharing one ProtocolParams, outside the engine"""

    def __init__(self, backend, n: int = 4, w: int = 20, epoch: int = 1, tau: Optional[float] = None):
        self.backend = backend
        self.W = n * w
        self.tau = tau if tau is not None else float(self.W)
        self.nodes = [
            NodeState(id=v, keys=derive_keypair(7, v, backend), w=w, chain=ledger_service.new_chain())
            for v in range(n)
        ]
        self.params = ProtocolParams(
            p_hat=0.1, gamma=0.1, c=2, tau=self.tau, W=self.W, theta=2.0, seed=SEED,
            epoch=epoch, backend=backend,
            public_keys={s.id: s.keys.pk for s in self.nodes},
            stakes={s.id: s.w for s in self.nodes},
        )

    def start(self, leader: int) -> NodeState:
        """Give `leader` a real LEADER sortition and make everyone else a follower"""
        for s in self.nodes:
            role = Role.LEADER if s.id == leader else Role.FOLLOWER
            outcome = sortition(s.keys.sk, SEED, role, self.tau, s.w, self.W, self.backend)
            begin_epoch(s, outcome, self.params.p_hat)
        chief = self.nodes[leader]
        chief.leader_id = leader
        chief.i_k = 1
        for s in self.nodes:
            s.leader_id = leader
        return chief


@pytest.fixture
def world(hmac_backend):
    return World(hmac_backend)


def approx(a: float, b: float, rel: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)


@pytest.fixture
def tmp_output(tmp_path, monkeypatch):
    """Point OUTPUT_DIR at a temporary directory for code that falls back to settings"""
    from app.core.config import get_settings

    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path))
    get_settings.cache_clear()
    yield tmp_path
    get_settings.cache_clear()
