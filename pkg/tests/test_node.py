from dataclasses import replace

import numpy as np
import pytest

from app.core.errors import ContractViolation
from app.models.crypto import Role
from app.models.protocol import LISTEN, MessageB, MessageM, MessageT, P1Outcome, transmit
from app.models.radio import BUSY, IDLE, received
from app.services import ledger_service, node_service
from app.services.adversary_service import forge_block_message
from app.services.node_service import P_FLOOR
from tests.conftest import World


def contender(world, v=0, l=3, p=0.1):
    s = world.nodes[v]
    s.role, s.l0, s.l, s.p, s.c, s.T_est = Role.LEADER, l, l, p, 0, 1
    return s


def test_poc_decide_requires_counter(world):
    s = contender(world, l=0)
    with pytest.raises(ContractViolation):
        node_service.poc_decide(s, 0.0, world.params)


def test_poc_decide_transmit_fraction(world):
    s = contender(world, p=0.1)
    u = np.random.default_rng(5).random(100_000)
    sent = sum(node_service.poc_decide(s, x, world.params).transmits for x in u)
    sigma = (100_000 * 0.1 * 0.9) ** 0.5
    assert abs(sent - 10_000) < 3 * sigma


def test_poc_decide_is_deterministic_for_fixed_draws(world):
    s = contender(world)
    draws = np.random.default_rng(1).random(50)
    first = [node_service.poc_decide(s, x, world.params).transmits for x in draws]
    second = [node_service.poc_decide(s, x, world.params).transmits for x in draws]
    assert first == second


def test_poc_decide_zero_probability_never_transmits(world):
    s = contender(world, p=0.0)
    assert not any(node_service.poc_decide(s, x, world.params).transmits for x in np.linspace(0, 0.999, 100))


def test_poc_update_idle_raises_p(world):
    s = contender(world, p=0.05)
    s.T_est = 3
    node_service.poc_update(s, IDLE, False, world.params)
    assert s.p == pytest.approx(0.055)
    assert s.T_est == 2
    assert s.c == 1


def test_poc_update_received_lowers_p_and_counter(world):
    s = contender(world, p=0.055, l=3)
    s.T_est = 5
    node_service.poc_update(s, received(MessageM(1, 1, 2, 1), 1), False, world.params)
    assert s.p == pytest.approx(0.05)
    assert s.l == 2


def test_poc_update_window_without_idle_backs_off(world):
    s = contender(world, p=0.1)
    s.c, s.T_est, s.rounds_since_idle = 2, 3, 2
    node_service.poc_update(s, BUSY, False, world.params)
    assert s.c == 1
    assert s.p == pytest.approx(0.1 / 1.1)
    assert s.T_est == 5


def test_transmitting_node_does_not_adapt_on_own_slot(world):
    s = contender(world, p=0.05, l=2)
    s.T_est = 5
    node_service.poc_update(s, BUSY, True, world.params)
    assert s.p == 0.05 and s.l == 2


def test_random_updates_keep_invariants(world):
    rng = np.random.default_rng(99)
    s = contender(world, l=20, p=0.1)
    heard = received(MessageM(1, 1, 1, 1), 1)
    kinds = rng.integers(0, 3, size=1_000_000)
    transmitting = rng.random(1_000_000) < 0.1
    last_l = s.l
    for kind, tx in zip(kinds.tolist(), transmitting.tolist()):
        obs = (IDLE, BUSY, heard)[kind]
        node_service.poc_update(s, obs, tx, world.params)
        assert 0 < s.p <= world.params.p_hat
        assert s.T_est >= 1 and s.c >= 0
        assert 0 <= s.l <= last_l
        last_l = s.l
    assert s.p >= P_FLOOR


def test_slot_two_lone_contender_elected(world):
    params = world.params
    leader = contender(world, v=0, l=2)
    slot1 = transmit(MessageM(1, 1, 2, 0))
    decision = node_service.p1_slot2_transition(leader, True, slot1, None, IDLE, params)
    assert decision.outcome is P1Outcome.ELECTED and decision.i_k == 1

    follower = world.nodes[1]
    heard = received(MessageM(1, 1, 2, 0), 0, residual=0.0)
    assert node_service.p1_slot2_action(follower, False, LISTEN, heard, params) == LISTEN
    decision = node_service.p1_slot2_transition(follower, False, LISTEN, heard, IDLE, params)
    assert decision.outcome is P1Outcome.RECOGNIZED_LEADER
    assert decision.leader == 0 and decision.i_k == 1


def test_slot_two_follower_busy_continues(world):
    follower = world.nodes[1]
    heard = received(MessageM(1, 1, 2, 0), 0, residual=0.0)
    decision = node_service.p1_slot2_transition(follower, False, LISTEN, heard, BUSY, world.params)
    assert decision.outcome is P1Outcome.CONTINUE


def test_slot_two_broadcasters(world):
    params = world.params
    listening_contender = contender(world, v=0)
    decision = node_service.p1_slot2_transition(listening_contender, True, LISTEN, BUSY, None, params)
    assert decision.outcome is P1Outcome.BROADCAST
    assert isinstance(decision.message, MessageM)

    # noisy reception is not enough to stay silent
    follower = world.nodes[1]
    noisy = received(MessageM(1, 1, 2, 0), 0, residual=params.theta)
    assert node_service.p1_slot2_action(follower, False, LISTEN, noisy, params).transmits
    assert node_service.p1_slot2_action(follower, False, LISTEN, BUSY, params).transmits


def test_two_contenders_in_medium_neither_elected(hmac_backend, rng):
    from app.models.radio import SlotAir
    from tests.conftest import square_medium

    world = World(hmac_backend, n=6)
    medium = square_medium(6, 10.0, rng)
    a, b = contender(world, 0), contender(world, 1)
    slot1 = [transmit(MessageM(1, 1, 3, 0)), transmit(MessageM(1, 1, 3, 1))] + [LISTEN] * 4
    obs1 = medium.resolve(SlotAir({v: act.message for v, act in enumerate(slot1) if act.transmits}))
    slot2 = [
        node_service.p1_slot2_action(s, s.id in (0, 1), slot1[s.id], obs1.get(s.id), world.params)
        for s in world.nodes
    ]
    obs2 = medium.resolve(SlotAir({v: act.message for v, act in enumerate(slot2) if act.transmits}))
    for s in (a, b):
        d = node_service.p1_slot2_transition(s, True, slot1[s.id], None, obs2[s.id], world.params)
        assert d.outcome is not P1Outcome.ELECTED


def test_send_transaction_step(world):
    params = world.params
    s = world.nodes[1]
    s.p, s.l = 0.05, 0
    s.T_est = 10
    action = node_service.send_transaction_decide(s, 0.0, params)
    assert action.transmits and isinstance(action.message, MessageT)
    assert action.message.tx.originator == 1

    node_service.send_transaction_update(s, IDLE, False, params)
    assert s.p == pytest.approx(0.055)
    node_service.send_transaction_update(s, received(action.message, 2), False, params)
    assert s.p == pytest.approx(0.05)
    assert s.l == 0

    s.p = params.p_hat
    node_service.send_transaction_update(s, IDLE, False, params)
    assert s.p == params.p_hat


def test_transactions_have_unique_ids(world):
    s = world.nodes[2]
    ids = {node_service.next_transaction(s).id for _ in range(100)}
    assert len(ids) == 100
    assert node_service.next_transaction(world.nodes[3]).id not in ids


def signed_tx_message(world, v):
    f = world.nodes[v]
    msg = MessageT(tx=node_service.next_transaction(f), epoch=world.params.epoch, j=1, l=0, sender=v)
    return node_service.seal(msg, f.keys.sk, world.backend)


def test_leader_collect_dedupes_and_verifies(world):
    chief = world.start(leader=0)
    msg = signed_tx_message(world, 1)
    assert node_service.p2_leader_collect(chief, received(msg, 1), world.params)
    assert len(chief.txp) == 1
    assert not node_service.p2_leader_collect(chief, received(msg, 1), world.params)
    assert len(chief.txp) == 1
    assert not node_service.p2_leader_collect(chief, BUSY, world.params)

    forged = replace(signed_tx_message(world, 2), signature=b"\x00" * 32)
    assert not node_service.p2_leader_collect(chief, received(forged, 2), world.params)
    assert len(chief.txp) == 1


def test_finalize_block(world):
    chief = world.start(leader=0)
    tip = chief.chain.tip.hash
    msgs = [signed_tx_message(world, v) for v in (3, 1, 2)]
    for m in msgs:
        node_service.p2_leader_collect(chief, received(m, m.sender), world.params)

    out = node_service.finalize_block(chief, world.params)
    assert isinstance(out, MessageB)
    assert [tx.id for tx in out.block.txs] == [m.tx.id for m in msgs]
    assert out.block.prev_hash == tip
    assert len(chief.chain) == 2 and chief.chain.tip == out.block
    assert out.sort_evidence.l0 == chief.l0 and out.sort_evidence.role is Role.LEADER


def test_finalize_empty_block(world):
    chief = world.start(leader=0)
    out = node_service.finalize_block(chief, world.params)
    assert out.block.txs == ()
    assert len(chief.chain) == 2


def test_finalize_requires_leadership(world):
    world.start(leader=0)
    with pytest.raises(ContractViolation):
        node_service.finalize_block(world.nodes[1], world.params)


def test_accept_honest_block(world):
    chief = world.start(leader=0)
    node_service.p2_leader_collect(chief, received(signed_tx_message(world, 1), 1), world.params)
    msg = node_service.finalize_block(chief, world.params)
    for v in (1, 2, 3):
        result = node_service.accept_block(world.nodes[v], received(msg, 0), world.params)
        assert result.accepted and not result.synced
        assert world.nodes[v].chain.hashes == chief.chain.hashes


def test_accept_rejects_forged_evidence(world):
    chief = world.start(leader=0)
    forged = forge_block_message(chief, world.params)
    before = world.nodes[1].chain.hashes
    result = node_service.accept_block(world.nodes[1], received(forged, 0), world.params)
    assert not result.accepted
    assert world.nodes[1].chain.hashes == before


def test_accept_rejects_bad_signature_and_mutations(world):
    chief = world.start(leader=0)
    node_service.p2_leader_collect(chief, received(signed_tx_message(world, 2), 2), world.params)
    msg = node_service.build_block_message(chief, world.params)
    follower = world.nodes[1]

    tampered = [
        replace(msg, signature=bytes(32)),
        replace(msg, l=msg.l + 1),
        replace(msg, block=replace(msg.block, txs=())),
    ]
    for bad in tampered:
        assert not node_service.accept_block(follower, received(bad, 0), world.params).accepted
    assert len(follower.chain) == 1


def test_accept_rejects_unrecognized_sender(world):
    chief = world.start(leader=0)
    msg = node_service.finalize_block(chief, world.params)
    follower = world.nodes[2]
    follower.leader_id = 3
    assert node_service.accept_block(follower, received(msg, 0), world.params).reason == "unrecognized leader"


def test_accept_adopts_longer_chain_through_sync(hmac_backend):
    w1 = World(hmac_backend, epoch=1)
    chief = w1.start(leader=0)
    first = node_service.finalize_block(chief, w1.params)
    store = ledger_service.BlockStore()
    store.put(first.block)
    # node 1 missed epoch 1; the leader of epoch 2 ships both headers
    w2 = World(hmac_backend, epoch=2)
    w2.nodes[0].chain = chief.chain.copy()
    chief2 = w2.start(leader=0)
    second = node_service.finalize_block(chief2, w2.params)
    follower = w2.nodes[1]

    assert not node_service.accept_block(follower, received(second, 0), w2.params, store, allow_sync=False).accepted
    result = node_service.accept_block(follower, received(second, 0), w2.params, store)
    assert result.accepted and result.synced
    assert follower.chain.hashes == chief2.chain.hashes
    assert len(follower.chain) == 3
