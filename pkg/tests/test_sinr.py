import logging
import math

import numpy as np
import pytest

from app.core.errors import ContractViolation
from app.models.radio import ObservationKind, Position, RadioParams, SlotAir
from app.services.sinr_service import (
    SinrMedium, distance, observe, r0_bound, received_power, residual_interference, rss,
)
from tests.conftest import square_medium


def test_distance():
    assert distance(Position(0, 0), Position(0, 0)) == 0
    assert distance(Position(0, 0), Position(3, 4)) == 5
    assert distance(Position(1, 1), Position(2, 2)) == pytest.approx(math.sqrt(2))


def test_received_power():
    assert received_power(16, 1, 4) == 16
    assert received_power(16, 2, 4) == 1
    assert received_power(1, 10, 2) == pytest.approx(0.01)
    with pytest.raises(ContractViolation):
        received_power(16, 0, 4)


def test_r0_bound():
    assert r0_bound(4, 2, 2, 4) == pytest.approx(1.0)
    assert r0_bound(32, 2, 2, 4) == pytest.approx(1.6818, abs=1e-4)
    radio = RadioParams.for_square(10.0)
    assert r0_bound(radio.power, 2, 2, 4) == pytest.approx(math.sqrt(2) * 10)


def test_radio_params_ranges():
    with pytest.raises(ValueError):
        RadioParams(power=1.0, alpha=2.0)
    with pytest.raises(ValueError):
        RadioParams(power=1.0, beta=1.0)
    with pytest.raises(ValueError):
        RadioParams(power=1.0, theta=0.0)


def test_rss(line_medium):
    assert rss(1, SlotAir(), line_medium) == 0
    assert rss(1, SlotAir({0: "a"}), line_medium) == 16
    # node 2 sits at distance 2 from node 1
    assert rss(1, SlotAir({0: "a", 2: "b"}, adv_noise=0.5), line_medium) == pytest.approx(17.5)


def test_rss_rejects_transmitting_listener(line_medium):
    with pytest.raises(ContractViolation):
        rss(0, SlotAir({0: "a"}), line_medium)


def test_observe(line_medium):
    assert observe(1, SlotAir(), line_medium).kind is ObservationKind.IDLE

    obs = observe(1, SlotAir({0: "hello"}, adv_noise=1.0), line_medium)
    assert obs.is_received and obs.payload == "hello" and obs.sender == 0
    assert obs.residual == pytest.approx(1.0)


def test_observe_equal_power_collision():
    radio = RadioParams(power=16.0, alpha=4.0, beta=2.0, theta=2.0)
    medium = SinrMedium([Position(0, 0), Position(1, 0), Position(2, 0)], radio)
    assert observe(1, SlotAir({0: "a", 2: "b"}), medium).is_busy


def test_residual_interference(line_medium):
    assert residual_interference(1, 0, SlotAir({0: "a"}), line_medium) == 0
    assert residual_interference(1, 0, SlotAir({0: "a", 2: "b"}, adv_noise=0.5), line_medium) == pytest.approx(1.5)
    assert residual_interference(1, 0, SlotAir({0: "a"}, adv_noise=3.0), line_medium) == pytest.approx(3.0)
    with pytest.raises(ContractViolation):
        residual_interference(1, 2, SlotAir({0: "a"}), line_medium)


def test_slot_air_rejects_negative_noise():
    with pytest.raises(ValueError):
        SlotAir(adv_noise=-1.0)


def test_lone_transmitter_reaches_whole_square(rng):
    medium = square_medium(50, 10.0, rng)
    obs = medium.resolve(SlotAir({7: "m"}))
    assert len(obs) == 49
    assert all(o.is_received and o.sender == 7 for o in obs.values())


def _oracle(medium: SinrMedium, listener: int, air: SlotAir):
    """Tests the SINR condition for every transmitter independently"""
    radio = medium.radio
    p = medium.positions
    signals = {
        u: radio.power * math.hypot(p[u].x - p[listener].x, p[u].y - p[listener].y) ** (-radio.alpha)
        for u in air.transmitters
    }
    total = sum(signals.values()) + radio.env_noise + air.adv_noise
    if total < radio.theta:
        return ObservationKind.IDLE, None, total, []
    decodable = [u for u, s in signals.items() if s >= radio.beta * (total - s)]
    margins = [abs(s - radio.beta * (total - s)) / max(s, 1e-300) for s in signals.values()]
    if decodable:
        return ObservationKind.RECEIVED, decodable, total, margins
    return ObservationKind.BUSY, None, total, margins


def test_resolve_matches_brute_force_oracle():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 9))
        d = float(rng.uniform(1.0, 20.0))
        medium = square_medium(n, d, rng)
        k = int(rng.integers(0, min(n - 1, 6) + 1))
        senders = rng.choice(n, size=k, replace=False)
        noise = float(rng.choice([0.0, rng.uniform(0.0, 5.0)]))
        air = SlotAir({int(u): f"m{u}" for u in senders}, adv_noise=noise)

        observed = medium.resolve(air)
        for listener in range(n):
            if listener in air.transmitters:
                assert listener not in observed
                continue
            kind, decodable, total, margins = _oracle(medium, listener, air)
            # skip floating-point knife edges
            if abs(total - medium.radio.theta) < 1e-9 or any(m < 1e-9 for m in margins):
                continue
            obs = observed[listener]
            assert obs.kind is kind
            assert medium.observe(listener, air).kind is kind
            if kind is ObservationKind.RECEIVED:
                assert len(decodable) == 1
                assert obs.sender == decodable[0]
                assert obs.payload == air.transmitters[decodable[0]]
            checked += 1
    assert checked > 10_000


def test_medium_warns_beyond_single_hop_range(caplog):
    radio = RadioParams(power=16.0, alpha=4.0, beta=2.0, theta=2.0)
    with caplog.at_level(logging.WARNING, logger="app.services.sinr_service"):
        medium = SinrMedium([Position(0, 0), Position(1, 0), Position(2, 0)], radio)
    assert medium.max_distance == 2.0
    assert medium.r0 == pytest.approx(math.sqrt(2))
    assert "single-hop" in caplog.text


def test_square_placement_stays_in_range(rng, caplog):
    with caplog.at_level(logging.WARNING, logger="app.services.sinr_service"):
        medium = square_medium(50, 10.0, rng)
    assert medium.max_distance <= medium.r0
    assert "single-hop" not in caplog.text
