"""Slot-synchronous simulation of the two-phase epoch protocol.

One engine owns the placement, the channel, every NodeState and the jam
schedule of a single trial.  Randomness comes from one 64-bit seed split into
independent streams (placement, node decisions, jamming, Sybil selection), so
a trial is reproducible bit for bit.
"""
from __future__ import annotations

import asyncio
import hashlib
import logging
from typing import Any, AsyncIterator, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..core.config import get_settings
from ..core.errors import ClassificationError, InvariantViolation, RoundCapExceeded
from ..models.adversary import SybilBehavior
from ..models.crypto import Role
from ..models.protocol import LISTEN, Action, Chain, NodeState, P1Outcome, transmit
from ..models.radio import BUSY, ChannelObservation, SlotAir, received
from ..models.simulation import (
    EpochSummary, EpochTrace, Phase, RoundRecord, SimConfig, SimulationReport,
    StateSnapshot, SystemState, TraceEvent,
)
from . import ledger_service, metrics_service, node_service
from .adversary_service import (
    JamPlanner, forge_block_message, select_sybils, sliding_window_violations, sybil_policy,
)
from .crypto_service import CryptoBackend, derive_keypair, get_backend
from .placement_service import place
from .sinr_service import SinrMedium
from .sortition_service import sortition

logger = logging.getLogger(__name__)

EpochCallback = Callable[[EpochSummary], None]

_NEXT_STATES = {
    None: {SystemState.START, SystemState.LEADER},
    SystemState.START: {SystemState.START, SystemState.LEADER},
    SystemState.LEADER: {SystemState.LEADER, SystemState.COMMIT, SystemState.FINAL},
    SystemState.COMMIT: {SystemState.COMMIT, SystemState.FINAL},
    SystemState.FINAL: {SystemState.START, SystemState.LEADER},
}


def classify_state(snapshot: StateSnapshot) -> SystemState:
    """Map a snapshot onto exactly one of START, LEADER, COMMIT and FINAL"""
    s = snapshot
    if s.phase is Phase.FINAL:
        if s.accepted_by in (0, s.honest_followers):
            return SystemState.FINAL
        # partial delivery is only legal when the jammer masked the block for some followers
        if s.jammed:
            return SystemState.FINAL
        raise ClassificationError(
            f"Block accepted by {s.accepted_by} of {s.honest_followers} honest followers"
        )
    if s.j == 0 and s.potential_leaders > 1:
        return SystemState.START
    if s.potential_leaders == 1:
        if s.j == 0 and s.txp_size == 0:
            return SystemState.LEADER
        if 0 < s.j < s.p2_rounds:
            return SystemState.COMMIT
    raise ClassificationError(f"Snapshot matches no system state: {s}")


def initial_seed(rng_seed: int) -> bytes:
    return hashlib.sha256(b"blown-epoch-seed" + rng_seed.to_bytes(8, "big")).digest()


def next_seed(seed: bytes, block_hash: Optional[bytes]) -> bytes:
    return hashlib.sha256(seed + (block_hash if block_hash is not None else b"empty")).digest()


class SimulationEngine:
    def __init__(self, config: SimConfig, backend: Optional[CryptoBackend] = None,
                 record_rounds: bool = True):
        self.config = config
        self.backend = backend or get_backend(config.crypto_backend)
        self.record_rounds = record_rounds
        self.round_cap = min(config.round_cap, get_settings().round_cap)

        streams = np.random.SeedSequence(config.rng_seed).spawn(4)
        self.placement_rng, self.node_rng, jam_rng, sybil_rng = (
            np.random.default_rng(s) for s in streams
        )
        self.positions = place(config.placement, config.N, config.d, self.placement_rng)
        self.medium = SinrMedium(self.positions, config.radio)
        self.sybils = select_sybils(config.N, config.sybil, sybil_rng)
        self.honest = {v for v in range(config.N) if v not in self.sybils}
        self.nodes: List[NodeState] = [
            NodeState(
                id=v,
                keys=derive_keypair(config.rng_seed, v, self.backend),
                w=config.w,
                chain=ledger_service.new_chain(),
                sybil=v in self.sybils,
                p=config.p_hat,
            )
            for v in range(config.N)
        ]
        self.public_keys = {n.id: n.keys.pk for n in self.nodes}
        self.stakes = {n.id: n.w for n in self.nodes}
        self.jammer = JamPlanner(config.jammer_config, jam_rng)
        self.store = ledger_service.BlockStore()

        self.seed = initial_seed(config.rng_seed)
        self.round = 0
        self.traces: List[EpochTrace] = []
        self.length_history: List[Dict[int, int]] = [self._honest_lengths()]
        self.generated: Dict[bytes, int] = {}
        self._epoch_round = 0
        self._last_state: Optional[SystemState] = None

    # Helpers ---------------------------------------------------------------

    def _honest_lengths(self) -> Dict[int, int]:
        return {n.id: len(n.chain) for n in self.nodes if n.id in self.honest}

    def _params(self, epoch: int) -> node_service.ProtocolParams:
        cfg = self.config
        return node_service.ProtocolParams(
            p_hat=cfg.p_hat, gamma=cfg.gamma, c=cfg.c, tau=cfg.tau, W=cfg.W,
            theta=cfg.theta, seed=self.seed, epoch=epoch, backend=self.backend,
            public_keys=self.public_keys, stakes=self.stakes,
        )

    def _tick(self, trace: EpochTrace) -> float:
        self.round += 1
        self._epoch_round += 1
        if self._epoch_round > self.round_cap:
            raise RoundCapExceeded(trace.epoch, self._epoch_round - 1)
        noise = self.jammer.noise(self.round)
        if noise > 0:
            trace.jammed_rounds += 1
        return noise

    def _resolve(self, actions: Sequence[Action], noise: float,
                 params: node_service.ProtocolParams, verify: bool) -> Dict[int, ChannelObservation]:
        air = SlotAir(
            transmitters={v: a.message for v, a in enumerate(actions) if a.transmits},
            adv_noise=noise,
        )
        obs = self.medium.resolve(air)
        # messages are signed only once someone decodes them; signatures are deterministic
        sealed = {}
        for listener, o in obs.items():
            if not o.is_received:
                continue
            msg = sealed.get(o.sender)
            if msg is None:
                msg = node_service.seal(air.transmitters[o.sender], self.nodes[o.sender].keys.sk, self.backend)
                sealed[o.sender] = msg
            o = received(msg, o.sender, o.residual)
            obs[listener] = node_service.verified(o, params) if verify else o
        return obs

    def _audit(self, snapshot: StateSnapshot) -> SystemState:
        state = classify_state(snapshot)
        if state not in _NEXT_STATES[self._last_state]:
            raise ClassificationError(f"Illegal transition {self._last_state} -> {state}")
        self._last_state = state
        return state

    def _record(self, trace: EpochTrace, phase: Phase, jammed: bool, slot: str,
                txp_size: int, potential: int, state: SystemState) -> None:
        if not self.record_rounds:
            return
        trace.rounds.append(RoundRecord(
            round=self.round,
            epoch_round=self._epoch_round,
            phase=phase,
            p_V=metrics_service.aggregated_probability(self.nodes),
            jammed=jammed,
            slot1=slot,
            txp_size=txp_size,
            potential_leaders=potential,
            state=state,
        ))

    def _replace_nodes(self) -> None:
        cfg = self.config
        self.positions = place(cfg.placement, cfg.N, cfg.d, self.placement_rng)
        self.medium = SinrMedium(self.positions, cfg.radio)

    # Epoch -----------------------------------------------------------------

    def run_epoch(self, epoch: int) -> EpochTrace:
        cfg = self.config
        if cfg.replace_each_epoch and epoch > 1:
            self._replace_nodes()
        params = self._params(epoch)
        trace = EpochTrace(epoch=epoch, seed=self.seed, honest_nodes=len(self.honest))
        self._epoch_round = 0

        for node in self.nodes:
            outcome = sortition(node.keys.sk, self.seed, Role.LEADER, cfg.tau, node.w, cfg.W,
                                backend=self.backend)
            node_service.begin_epoch(node, outcome, cfg.p_hat)

        if all(n.l > 0 for n in self.nodes):
            node_service.make_follower(self.nodes[0])
            trace.events.append(TraceEvent("forced_follower", self.round, node=0))
            logger.debug(f"Epoch {epoch}: no follower after sortition, node 0 reassigned")

        potential = sum(1 for n in self.nodes if n.l > 0)
        if potential == 0:
            trace.events.append(TraceEvent("no_contender", self.round))
            logger.warning(f"Epoch {epoch}: sortition produced no potential leader")
            return self._close_epoch(trace)

        self._audit(StateSnapshot(Phase.P1, potential))
        leader = self._phase_one(trace, params)
        self._phase_two(trace, params, leader)
        return self._close_epoch(trace)

    def _phase_one(self, trace: EpochTrace, params: node_service.ProtocolParams) -> int:
        nodes = self.nodes
        while True:
            noise = self._tick(trace)
            jammed = noise > 0
            was_potential = [n.l > 0 for n in nodes]
            u = self.node_rng.random(len(nodes))

            slot1 = [
                node_service.poc_decide(n, u[n.id], params) if was_potential[n.id] else LISTEN
                for n in nodes
            ]
            obs1 = self._resolve(slot1, noise, params, verify=True)
            for n in nodes:
                if was_potential[n.id]:
                    node_service.poc_update(n, obs1.get(n.id, BUSY), slot1[n.id].transmits, params)

            slot2 = [
                node_service.p1_slot2_action(n, was_potential[n.id], slot1[n.id], obs1.get(n.id), params)
                for n in nodes
            ]
            obs2 = self._resolve(slot2, noise, params, verify=False)
            decisions = [
                node_service.p1_slot2_transition(
                    n, was_potential[n.id], slot1[n.id], obs1.get(n.id), obs2.get(n.id), params,
                )
                for n in nodes
            ]

            success = any(o.is_received for o in obs1.values())
            if success:
                trace.p1_successes += 1
                slot = "success"
            elif not any(a.transmits for a in slot1):
                slot = "jammed" if jammed else "idle"
            else:
                slot = "jammed" if jammed else "collision"

            elected = [d.leader for d in decisions if d.outcome is P1Outcome.ELECTED]
            recognized = {n.id: d.leader for n, d in zip(nodes, decisions)
                          if d.outcome is P1Outcome.RECOGNIZED_LEADER}
            if len(elected) > 1:
                raise InvariantViolation(f"Epoch {trace.epoch}: nodes {elected} elected together")
            if recognized and (not elected or set(recognized.values()) != {elected[0]}):
                raise InvariantViolation(
                    f"Epoch {trace.epoch}: followers recognized {set(recognized.values())}, elected {elected}"
                )

            potential = sum(1 for n in nodes if n.l > 0)
            state = self._audit(StateSnapshot(Phase.P1, potential))
            self._record(trace, Phase.P1, jammed, slot, 0, potential, state)

            if elected:
                leader = elected[0]
                i_k = nodes[leader].i
                trace.i = trace.i_k = i_k
                trace.leader = leader
                trace.leader_is_sybil = nodes[leader].sybil
                missing = [v for v in self.honest if v != leader and v not in recognized]
                if missing:
                    trace.events.append(TraceEvent("unrecognized", self.round, detail=str(len(missing))))
                for n in nodes:
                    n.i_k = i_k
                logger.debug(f"Epoch {trace.epoch}: node {leader} elected at i_k={i_k}")
                return leader
            for n in nodes:
                n.i += 1

    def _phase_two(self, trace: EpochTrace, params: node_service.ProtocolParams, leader: int) -> None:
        nodes = self.nodes
        chief = nodes[leader]
        total = self.config.c * trace.i_k
        potential = sum(1 for n in nodes if n.l > 0)
        for j in range(1, total + 1):
            noise = self._tick(trace)
            jammed = noise > 0
            for n in nodes:
                n.j = j
            trace.j = j
            if j == total:
                self._finalize(trace, params, chief, noise)
                return

            u = self.node_rng.random(len(nodes))
            actions = [
                LISTEN if n.id == leader else node_service.send_transaction_decide(n, u[n.id], params)
                for n in nodes
            ]
            for v, a in enumerate(actions):
                if a.transmits and v in self.honest:
                    self.generated.setdefault(a.message.tx.id, trace.epoch)
            obs = self._resolve(actions, noise, params, verify=True)
            for n in nodes:
                if n.id != leader:
                    node_service.send_transaction_update(n, obs.get(n.id, BUSY), actions[n.id].transmits, params)
            heard = obs.get(leader, BUSY)
            node_service.p2_leader_collect(chief, heard, params)

            slot = "jammed" if jammed else heard.kind.value
            state = self._audit(StateSnapshot(Phase.P2, potential, j=j, p2_rounds=total, txp_size=len(chief.txp)))
            self._record(trace, Phase.P2, jammed, slot, len(chief.txp), potential, state)

    def _finalize(self, trace: EpochTrace, params: node_service.ProtocolParams,
                  chief: NodeState, noise: float) -> None:
        behavior = sybil_policy(chief, Phase.FINAL, self.config.sybil_policy)
        msg = None
        if behavior is SybilBehavior.HONEST:
            msg = node_service.finalize_block(chief, params)
        elif behavior is SybilBehavior.INVALID_BLOCK:
            msg = forge_block_message(chief, params)
            trace.events.append(TraceEvent("invalid_block", self.round, node=chief.id))
        else:
            trace.events.append(TraceEvent("withheld", self.round, node=chief.id))

        actions = [LISTEN] * len(self.nodes)
        if msg is not None:
            self.store.put(msg.block)
            actions[chief.id] = transmit(msg)
        obs = self._resolve(actions, noise, params, verify=False)

        accepted = 0
        honest_followers = 0
        for n in self.nodes:
            if n.id == chief.id:
                continue
            result = node_service.accept_block(
                n, obs.get(n.id, BUSY), params, self.store, allow_sync=self.config.recovery,
            )
            if result.synced:
                trace.events.append(TraceEvent("sync", self.round, node=n.id))
            if not n.sybil:
                honest_followers += 1
                accepted += int(result.accepted)

        trace.accepted_by = accepted
        trace.leader_txp_size = len(chief.txp)
        if accepted and msg is not None:
            trace.block_hash = msg.block.hash
            trace.block_tx_count = len(msg.block.txs)
            trace.symbol = "1" if chief.sybil else "0"
        if 0 < accepted < honest_followers:
            # the followers left behind catch up from the headers of a later block
            trace.events.append(TraceEvent("fork", self.round, node=chief.id,
                                           detail=f"{accepted}/{honest_followers}"))
            logger.warning(f"Epoch {trace.epoch}: jammed finalization reached "
                           f"{accepted} of {honest_followers} honest followers")

        state = self._audit(StateSnapshot(
            Phase.FINAL, 1, j=trace.j, p2_rounds=trace.j, txp_size=len(chief.txp),
            accepted_by=accepted, honest_followers=honest_followers, jammed=noise > 0,
        ))
        slot = "jammed" if noise > 0 else ("block" if msg is not None else "silent")
        self._record(trace, Phase.FINAL, noise > 0, slot, len(chief.txp), 1, state)

    def _close_epoch(self, trace: EpochTrace) -> EpochTrace:
        self.seed = next_seed(self.seed, trace.block_hash)
        self.length_history.append(self._honest_lengths())
        self.traces.append(trace)
        logger.debug(
            f"Epoch {trace.epoch} closed: leader={trace.leader} i_k={trace.i_k} "
            f"length={trace.length} symbol={trace.symbol}"
        )
        return trace

    # Run -------------------------------------------------------------------

    def summarize(self, trace: EpochTrace) -> EpochSummary:
        length = trace.length
        return EpochSummary(
            epoch=trace.epoch,
            seed=trace.seed.hex(),
            i_k=trace.i_k,
            leader=trace.leader,
            leader_is_sybil=trace.leader_is_sybil,
            block_hash=trace.block_hash.hex() if trace.block_hash else None,
            block_tx_count=trace.block_tx_count,
            leader_txp_size=trace.leader_txp_size,
            p1_rounds=trace.i,
            p2_rounds=trace.j,
            epoch_length=length,
            p1_successes=trace.p1_successes,
            p1_success_fraction=trace.p1_successes / trace.i if trace.i else 0.0,
            jammed_rounds=trace.jammed_rounds,
            throughput_tps=metrics_service.epoch_throughput(trace, self.config.slot_us),
            symbol=trace.symbol,
            accepted_by=trace.accepted_by,
            honest_nodes=trace.honest_nodes,
            sync_events=sum(1 for e in trace.events if e.kind == "sync"),
        )

    def chains(self) -> Dict[int, Chain]:
        return {n.id: n.chain for n in self.nodes}

    def report(self) -> SimulationReport:
        cfg = self.config
        ledger = metrics_service.ledger_report(
            self.chains(), self.honest, self.sybils, self.length_history, self.traces,
            self.generated,
        )
        return SimulationReport(
            config=cfg.model_dump(mode="json"),
            epochs=[self.summarize(t) for t in self.traces],
            chains={n.id: [h.hex() for h in n.chain.hashes] for n in self.nodes},
            sybil_nodes=sorted(self.sybils),
            ledger=ledger.model_dump(),
            sliding_window_violations=sliding_window_violations(
                self.jammer.schedule.jammed, cfg.T, cfg.epsilon,
            ),
        )

    def run(self, on_epoch: Optional[EpochCallback] = None) -> SimulationReport:
        cfg = self.config
        logger.info(
            f"🚀 Simulation start: N={cfg.N} d={cfg.d:.3f} epochs={cfg.epochs} "
            f"jammer={cfg.jammer.value} sybil={cfg.sybil_fraction} seed={cfg.rng_seed}"
        )
        for k in range(1, cfg.epochs + 1):
            trace = self.run_epoch(k)
            if on_epoch is not None:
                on_epoch(self.summarize(trace))
        report = self.report()
        if report.sliding_window_violations:
            logger.warning(f"Jam schedule exceeded the sliding-window budget "
                           f"{report.sliding_window_violations} times")
        logger.info(f"✅ Simulation finished: {len(self.traces)} epochs, {self.round} rounds")
        return report


def run_simulation(config: SimConfig, backend: Optional[CryptoBackend] = None,
                   on_epoch: Optional[EpochCallback] = None) -> SimulationReport:
    return SimulationEngine(config, backend=backend).run(on_epoch=on_epoch)


async def stream_simulation(config: SimConfig, backend: Optional[CryptoBackend] = None
                            ) -> AsyncIterator[Dict[str, Any]]:
    """Run epoch by epoch off the event loop, yielding one event per finished epoch"""
    engine = await asyncio.to_thread(SimulationEngine, config, backend)
    for k in range(1, config.epochs + 1):
        trace = await asyncio.to_thread(engine.run_epoch, k)
        yield {"event": "epoch_complete", "data": engine.summarize(trace).model_dump(mode="json")}
    report = await asyncio.to_thread(engine.report)
    yield {
        "event": "simulation_complete",
        "data": {
            "epochs": len(report.epochs),
            "rounds": engine.round,
            "ledger": report.ledger,
            "sliding_window_violations": report.sliding_window_violations,
        },
    }
