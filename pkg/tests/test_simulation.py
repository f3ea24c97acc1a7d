import pytest

from app.core.errors import ClassificationError, InvariantViolation, RoundCapExceeded
from app.models.crypto import Role
from app.models.simulation import Phase, SimConfig, StateSnapshot, SystemState
from app.services import simulation_service
from app.services.crypto_service import HmacBackend
from app.services.simulation_service import (
    SimulationEngine, classify_state, initial_seed, next_seed, run_simulation,
)


def config(**values):
    base = {"N": 8, "c": 2, "epochs": 1, "rng_seed": 3, "crypto_backend": "hmac"}
    return SimConfig.build(**{**base, **values})


def rig_single_leader(engine, monkeypatch, leader=1):
    """Only `leader` draws a LEADER sortition; every other node becomes a follower"""
    real = simulation_service.sortition
    leader_sk = engine.nodes[leader].keys.sk

    def rigged(sk, seed, role, tau, w, W, backend=None):
        return real(sk, seed, Role.LEADER if sk == leader_sk else Role.FOLLOWER, tau, w, W, backend)

    monkeypatch.setattr(simulation_service, "sortition", rigged)


def make_sybil(engine, v):
    engine.nodes[v].sybil = True
    engine.sybils = {v}
    engine.honest.discard(v)


def honest_hashes(engine):
    return {tuple(n.chain.hashes) for n in engine.nodes if n.id in engine.honest}


# System states -------------------------------------------------------------

@pytest.mark.parametrize("snapshot, expected", [
    (StateSnapshot(Phase.P1, 3), SystemState.START),
    (StateSnapshot(Phase.P1, 1), SystemState.LEADER),
    (StateSnapshot(Phase.P2, 1, j=1, p2_rounds=4), SystemState.COMMIT),
    (StateSnapshot(Phase.P2, 1, j=3, p2_rounds=4, txp_size=2), SystemState.COMMIT),
    (StateSnapshot(Phase.FINAL, 1, j=4, p2_rounds=4, accepted_by=5, honest_followers=5), SystemState.FINAL),
    (StateSnapshot(Phase.FINAL, 1, j=4, p2_rounds=4, accepted_by=0, honest_followers=5), SystemState.FINAL),
    (StateSnapshot(Phase.FINAL, 1, j=4, p2_rounds=4, accepted_by=2, honest_followers=5, jammed=True),
     SystemState.FINAL),
])
def test_classify_state(snapshot, expected):
    assert classify_state(snapshot) is expected


@pytest.mark.parametrize("snapshot", [
    StateSnapshot(Phase.P1, 0),
    StateSnapshot(Phase.P1, 1, txp_size=3),
    StateSnapshot(Phase.P2, 1, j=4, p2_rounds=4),
    StateSnapshot(Phase.FINAL, 1, accepted_by=2, honest_followers=5),
])
def test_classify_state_rejects(snapshot):
    with pytest.raises(ClassificationError):
        classify_state(snapshot)


def test_classification_error_is_an_invariant_violation():
    assert issubclass(ClassificationError, InvariantViolation)


# Single leader ---------------------------------------------------------------

def test_lone_contender_elected_in_first_round(monkeypatch):
    cfg = config(p_hat=1.0, tau=160)
    engine = SimulationEngine(cfg)
    rig_single_leader(engine, monkeypatch)
    trace = engine.run_epoch(1)

    assert trace.leader == 1 and trace.i_k == 1
    assert trace.j == cfg.c * trace.i_k
    assert trace.length == 3
    assert trace.p1_successes == 1 and trace.rounds[0].slot1 == "success"
    assert trace.symbol == "0"
    assert trace.accepted_by == cfg.N - 1
    assert [r.state for r in trace.rounds] == [SystemState.LEADER, SystemState.COMMIT, SystemState.FINAL]
    assert honest_hashes(engine) == {tuple(engine.nodes[1].chain.hashes)}


@pytest.mark.parametrize("policy, event", [("withhold", "withheld"), ("invalid", "invalid_block")])
def test_sybil_leader_produces_no_block(monkeypatch, policy, event):
    engine = SimulationEngine(config(p_hat=1.0, tau=160, sybil_policy=policy))
    rig_single_leader(engine, monkeypatch)
    make_sybil(engine, 1)
    trace = engine.run_epoch(1)

    assert trace.leader == 1 and trace.leader_is_sybil
    assert trace.symbol == "⊥" and trace.block_hash is None
    assert trace.accepted_by == 0
    assert any(e.kind == event for e in trace.events)
    assert all(len(n.chain) == 1 for n in engine.nodes if n.id in engine.honest)


def test_publishing_sybil_block_is_adversarial(monkeypatch):
    engine = SimulationEngine(config(p_hat=1.0, tau=160, sybil_policy="publish"))
    rig_single_leader(engine, monkeypatch)
    make_sybil(engine, 1)
    trace = engine.run_epoch(1)
    report = engine.report()

    assert trace.symbol == "1"
    assert trace.accepted_by == len(engine.honest)
    assert report.ledger["adversarial_block_ratio"] == 1.0
    assert report.ledger["epoch_string"] == "1"


def test_withheld_block_seeds_next_epoch_as_empty(monkeypatch):
    engine = SimulationEngine(config(p_hat=1.0, tau=160, epochs=2))
    rig_single_leader(engine, monkeypatch)
    make_sybil(engine, 1)
    first = engine.run_epoch(1)
    assert engine.seed == next_seed(first.seed, None)


def test_forced_follower_when_everyone_contends():
    cfg = config(N=4, tau=80)
    engine = SimulationEngine(cfg)
    trace = engine.run_epoch(1)
    assert any(e.kind == "forced_follower" and e.node == 0 for e in trace.events)
    assert trace.leader != 0
    assert engine.nodes[0].role is Role.FOLLOWER


# Whole runs ----------------------------------------------------------------

def test_unique_recognized_leader_every_epoch():
    engine = SimulationEngine(config(epochs=5))
    report = engine.run()
    assert len(report.epochs) == 5
    for trace in engine.traces:
        assert trace.leader is not None
        assert trace.accepted_by == len(engine.honest) - 1
        assert trace.symbol == "0"
    assert len(honest_hashes(engine)) == 1
    assert report.ledger["common_prefix_depth"] == 0


def test_runs_are_reproducible():
    cfg = config(epochs=3, rng_seed=11)
    first = run_simulation(cfg)
    second = run_simulation(cfg, backend=HmacBackend())
    assert first.model_dump_json() == second.model_dump_json()
    other = run_simulation(config(epochs=3, rng_seed=12))
    assert other.model_dump_json() != first.model_dump_json()


def test_epoch_seed_chain():
    cfg = config(epochs=3)
    engine = SimulationEngine(cfg)
    engine.run()
    traces = engine.traces
    assert traces[0].seed == initial_seed(cfg.rng_seed)
    for prev, cur in zip(traces, traces[1:]):
        assert cur.seed == next_seed(prev.seed, prev.block_hash)
    assert next_seed(b"s", None) != next_seed(b"s", b"\x00" * 32)


def test_zero_epochs_leaves_genesis_only():
    engine = SimulationEngine(config(epochs=0))
    report = engine.run()
    assert report.epochs == []
    assert all(len(hashes) == 1 for hashes in report.chains.values())
    assert report.ledger["growth_coefficient"] is None


def test_round_cap_aborts_epoch():
    with pytest.raises(RoundCapExceeded) as info:
        run_simulation(config(round_cap=1))
    assert info.value.epoch == 1


def test_replacing_nodes_moves_positions():
    engine = SimulationEngine(config(epochs=2, replace_each_epoch=True))
    before = list(engine.positions)
    engine.run()
    assert engine.positions != before
    assert len(honest_hashes(engine)) == 1


def test_jammed_run_respects_budget():
    cfg = config(N=10, epochs=3, jammer="random", epsilon=0.5, T=20, rng_seed=5)
    engine = SimulationEngine(cfg)
    report = engine.run()
    assert sum(e.jammed_rounds for e in report.epochs) > 0
    schedule = engine.jammer.schedule
    assert len(schedule.jammed) >= engine.round
    assert report.sliding_window_violations >= 0
    lengths = report.ledger["chain_lengths"].values()
    assert max(lengths) <= cfg.epochs + 1


def test_jammed_finalization_reaching_some_followers_forks_then_recovers(monkeypatch):
    cfg = config(p_hat=1.0, tau=160, epochs=2)
    engine = SimulationEngine(cfg)
    rig_single_leader(engine, monkeypatch)
    signals = sorted(engine.medium.signal(1, v) for v in range(cfg.N) if v != 1)
    # only the four strongest followers clear β·noise
    noise = (signals[2] * signals[3]) ** 0.5 / cfg.beta
    final_round = 3  # i_k = 1 and c = 2
    monkeypatch.setattr(engine.jammer, "noise", lambda r: noise if r == final_round else 0.0)

    first = engine.run_epoch(1)
    assert first.length == final_round
    assert first.accepted_by == 4 and first.symbol == "0"
    assert first.rounds[-1].state is SystemState.FINAL and first.rounds[-1].jammed
    assert [(e.kind, e.detail) for e in first.events if e.kind == "fork"] == [("fork", "4/7")]
    assert len(honest_hashes(engine)) == 2

    second = engine.run_epoch(2)
    assert second.accepted_by == cfg.N - 1
    assert sum(1 for e in second.events if e.kind == "sync") == 3
    assert honest_hashes(engine) == {tuple(engine.nodes[1].chain.hashes)}
    assert len(engine.nodes[1].chain) == 3


def test_unjammed_partial_acceptance_is_still_a_violation():
    with pytest.raises(ClassificationError, match="2 of 5"):
        classify_state(StateSnapshot(Phase.FINAL, 1, j=4, p2_rounds=4, accepted_by=2, honest_followers=5))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(4))
def test_random_jammer_at_reference_setting_completes(seed):
    cfg = SimConfig.build(N=100, density=1.0, jammer="random", epsilon=0.3, T=60, epochs=2,
                          rng_seed=seed, crypto_backend="hmac")
    report = SimulationEngine(cfg, record_rounds=False).run()

    assert len(report.epochs) == 2
    assert all(e.jammed_rounds > 0 for e in report.epochs)
    p1_rounds = sum(e.p1_rounds for e in report.epochs)
    p1_successes = sum(e.p1_successes for e in report.epochs)
    assert p1_successes / p1_rounds >= 0.05
    assert all(e.accepted_by <= e.honest_nodes - 1 for e in report.epochs)
    assert max(report.ledger["chain_lengths"].values()) <= cfg.epochs + 1


@pytest.mark.slow
def test_epoch_length_shrinks_as_jammer_budget_shrinks():
    def mean_length(epsilon):
        lengths = []
        for seed in range(8):
            cfg = SimConfig.build(N=50, density=1.0, jammer="random", epsilon=epsilon, T=60,
                                  rng_seed=seed, crypto_backend="hmac")
            lengths.append(SimulationEngine(cfg, record_rounds=False).run().epochs[0].epoch_length)
        return sum(lengths) / len(lengths)

    heavy, medium, light = (mean_length(eps) for eps in (0.1, 0.3, 0.5))
    assert heavy >= medium >= light


@pytest.mark.slow
def test_fifty_epochs_without_adversary_grow_one_block_each():
    engine = SimulationEngine(config(N=10, epochs=50))
    report = engine.run()
    assert {len(n.chain) for n in engine.nodes} == {51}
    assert len(honest_hashes(engine)) == 1
    assert report.ledger["growth_coefficient"] == 1.0
    assert report.ledger["epoch_string"] == "0" * 50
    assert report.ledger["max_divergence"] == 0
