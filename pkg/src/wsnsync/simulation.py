"""Deterministic event-driven network simulator.

Each non-gateway node runs the same round protocol: every beacon period it
broadcasts a clock request to its one-hop neighbors, collects the clock
values carried by the acks, and after a fixed gather wait averages the
observed offsets (neighbor value minus own value at ack receipt). The
average is always applied as an offset correction; the rate update is
applied only when the average magnitude is below the guard threshold, and
consumes the node's own error (the negated average). The gateway answers
requests with exact true time and never touches its own clock.

Nodes power on with cold clocks: the logical value starts at rate times the
hardware counter, so a node that boots late (or with a nonzero counter) is
seconds-to-minutes off true time. Only nodes holding a valid time answer
clock requests: the gateway from boot, every other node after it completes
its first averaging round. The first completed round therefore adopts the
neighborhood mean outright (the guard blocks the rate update at that error
magnitude), and valid time spreads outward from the gateway hop by hop
instead of cold clocks polluting neighborhood averages.

Determinism: all randomness flows from one seed through independent
SeedSequence child streams (boot times, message delays, one stream per node
clock), and simultaneous events are ordered by a fixed priority (message
deliveries, then averaging deadlines, then beacons, then trace samples) with
insertion order inside each class. Reruns with identical inputs produce
identical traces; runs that differ only in protocol arithmetic see identical
boot times, drift trajectories and delay draws.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import IO

import numpy as np

from .clocks import HardwareClock, LogicalClock, OscillatorParams
from .metrics import SampleFrame
from .protocols import ProtocolParams, rate_update

TRACE_COLUMNS = ("sample_time", "node_id", "logical_value", "true_time", "error_seconds")


class MessageKind(enum.Enum):
    REQUEST = "request"
    ACK = "ack"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    receiver: int
    payload_s: float | None
    send_time: float
    deliver_time: float

    def __post_init__(self) -> None:
        if self.deliver_time < self.send_time:
            raise ValueError("deliver_time before send_time")


@dataclass(frozen=True)
class DelayModel:
    """Per-message delay: N(0, std^2) clamped below at floor_s."""

    std_s: float = 1e-5
    floor_s: float = 0.0

    def __post_init__(self) -> None:
        if self.std_s < 0:
            raise ValueError("std_s must be nonnegative")
        if self.floor_s < 0:
            raise ValueError("floor_s must be nonnegative")

    def sample(self, gen: np.random.Generator) -> float:
        return max(self.floor_s, float(gen.normal(0.0, self.std_s)))


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph with a designated gateway node.

    Edges are normalized to sorted unique (low, high) pairs; every node must
    reach the gateway.
    """

    node_ids: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    gateway: int

    def __post_init__(self) -> None:
        ids = tuple(sorted(self.node_ids))
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate node ids")
        if len(ids) < 2:
            raise ValueError("need at least two nodes")
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self loop on node {i}")
            if i not in set(ids) or j not in set(ids):
                raise ValueError(f"edge ({i}, {j}) references unknown node")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if self.gateway not in ids:
            raise ValueError(f"gateway {self.gateway} not among nodes")
        # connectivity: every node must reach the gateway
        seen = {self.gateway}
        frontier = [self.gateway]
        while frontier:
            cur = frontier.pop()
            for other in self.neighbors[cur]:
                if other not in seen:
                    seen.add(other)
                    frontier.append(other)
        if seen != set(ids):
            missing = sorted(set(ids) - seen)
            raise ValueError(f"nodes {missing} cannot reach the gateway")

    @cached_property
    def neighbors(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {i: [] for i in self.node_ids}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return {i: tuple(sorted(v)) for i, v in adj.items()}

    def to_config(self) -> dict:
        return {
            "nodes": list(self.node_ids),
            "edges": [list(e) for e in self.edges],
            "gateway": self.gateway,
        }


def build_line_topology(n: int, *, gateway: int | None = None) -> Topology:
    """Chain 1-2-...-n with the gateway at node 1 unless overridden."""
    if n < 2:
        raise ValueError("a line needs at least 2 nodes")
    ids = tuple(range(1, n + 1))
    edges = tuple((i, i + 1) for i in range(1, n))
    return Topology(ids, edges, gateway if gateway is not None else 1)


class EventKind(enum.IntEnum):
    """Priority classes for simultaneous events; lower runs first."""

    DELIVERY = 0
    DEADLINE = 1
    BEACON = 2
    SAMPLE = 3


class EventQueue:
    """Min-heap of (time, kind, insertion seq); FIFO within (time, kind)."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, int, object]] = []
        self._seq = itertools.count()

    def push(self, time: float, kind: EventKind, data: object = None) -> None:
        heapq.heappush(self._heap, (time, int(kind), next(self._seq), data))

    def pop(self) -> tuple[float, EventKind, object]:
        time, kind, _, data = heapq.heappop(self._heap)
        return time, EventKind(kind), data

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class NodeState:
    node_id: int
    boot_time: float
    hw: HardwareClock
    lc: LogicalClock
    is_gateway: bool = False
    err_acc: float = 0.0
    recv_count: int = 0
    # Holds a valid time and may answer requests: gateway from boot, other
    # nodes after their first completed averaging round.
    synced: bool = False


@dataclass(frozen=True)
class RoundRecord:
    """Outcome of one averaging deadline at one node.

    mean_offset_s is the averaged neighbor-minus-own offset (None when no
    acks arrived); new_rate is the rate installed by the guard-protected
    update (None when skipped or no acks).
    """

    time_s: float
    node_id: int
    mean_offset_s: float | None
    new_rate: float | None
    n_acks: int


@dataclass(frozen=True)
class SimulationTrace:
    frames: tuple[SampleFrame, ...]
    rounds: tuple[RoundRecord, ...]
    topology: Topology
    boot_times: dict[int, float]
    config: dict

    @property
    def boot_complete_time(self) -> float:
        return max(self.boot_times.values())

    def write_csv(self, out: IO[str]) -> None:
        """Trace rows with the resolved config embedded as a comment header.

        Floats are written with repr (shortest round trip), so identical
        runs serialize byte-identically.
        """
        out.write("# config = " + json.dumps(self.config, sort_keys=True) + "\n")
        out.write(",".join(TRACE_COLUMNS) + "\n")
        for fr in self.frames:
            logical = fr.logical_s or {}
            for nid in sorted(fr.errors_s):
                out.write(
                    f"{fr.time_s!r},{nid},{logical.get(nid)!r},"
                    f"{fr.time_s!r},{fr.errors_s[nid]!r}\n"
                )


class _Sim:
    def __init__(
        self,
        topology: Topology,
        params: ProtocolParams,
        osc: OscillatorParams,
        delay: DelayModel,
        duration_s: float,
        sample_interval_s: float,
        boot_window_s: float,
        seed: int,
        initial_rate: float | None,
        initial_ticks: float | None,
    ) -> None:
        self.topology = topology
        self.params = params
        self.delay = delay
        self.duration = duration_s
        self.sample_interval = sample_interval_s

        root = np.random.SeedSequence(seed)
        boot_ss, delay_ss, *node_ss = root.spawn(2 + len(topology.node_ids))
        self.delay_gen = np.random.Generator(np.random.PCG64(delay_ss))
        boot_gen = np.random.Generator(np.random.PCG64(boot_ss))
        boots = boot_gen.uniform(0.0, boot_window_s, len(topology.node_ids))

        nominal_rate = 1.0 / params.nominal_hz
        ticks_span = params.beacon_period_s * params.nominal_hz
        self.nodes: dict[int, NodeState] = {}
        for nid, ss, boot in zip(topology.node_ids, node_ss, boots):
            gen = np.random.Generator(np.random.PCG64(ss))
            t0 = (
                float(gen.uniform(0.0, ticks_span))
                if initial_ticks is None
                else float(initial_ticks)
            )
            hw = HardwareClock(osc, gen, start_time=float(boot), initial_ticks=t0)
            rate = nominal_rate if initial_rate is None else float(initial_rate)
            # Cold boot: the logical clock starts wherever the hardware
            # counter puts it, not at true time.
            lc = LogicalClock(value=rate * t0, rate=rate, anchor_ticks=t0)
            self.nodes[nid] = NodeState(
                node_id=nid,
                boot_time=float(boot),
                hw=hw,
                lc=lc,
                is_gateway=(nid == topology.gateway),
                synced=(nid == topology.gateway),
            )

        self.queue = EventQueue()
        for nid in topology.node_ids:
            node = self.nodes[nid]
            if not node.is_gateway and node.boot_time <= duration_s:
                self.queue.push(node.boot_time, EventKind.BEACON, nid)
        if sample_interval_s <= duration_s:
            self.queue.push(sample_interval_s, EventKind.SAMPLE)

        self.frames: list[SampleFrame] = []
        self.rounds: list[RoundRecord] = []

    def logical_value(self, node: NodeState, t: float) -> float:
        if node.is_gateway:
            return t
        node.hw.advance(t)
        return node.lc.read(node.hw.read_ticks())

    def run(self) -> None:
        while len(self.queue):
            t, kind, data = self.queue.pop()
            if kind is EventKind.DELIVERY:
                self._deliver(t, data)
            elif kind is EventKind.DEADLINE:
                self._deadline(t, data)
            elif kind is EventKind.BEACON:
                self._beacon(t, data)
            else:
                self._sample(t)

    def _send(
        self, t: float, kind: MessageKind, sender: int, receiver: int,
        payload: float | None,
    ) -> None:
        d = self.delay.sample(self.delay_gen)
        if t + d <= self.duration:
            msg = Message(kind, sender, receiver, payload, t, t + d)
            self.queue.push(msg.deliver_time, EventKind.DELIVERY, msg)

    def _beacon(self, t: float, nid: int) -> None:
        for j in self.topology.neighbors[nid]:
            self._send(t, MessageKind.REQUEST, nid, j, None)
        if t + self.params.gather_wait_s <= self.duration:
            self.queue.push(t + self.params.gather_wait_s, EventKind.DEADLINE, nid)
        if t + self.params.beacon_period_s <= self.duration:
            self.queue.push(t + self.params.beacon_period_s, EventKind.BEACON, nid)

    def _deliver(self, t: float, msg: Message) -> None:
        node = self.nodes[msg.receiver]
        if t < node.boot_time:
            return  # powered off; message lost
        if msg.kind is MessageKind.REQUEST:
            if node.synced:
                self._send(t, MessageKind.ACK, msg.receiver, msg.sender,
                           self.logical_value(node, t))
        else:
            own = self.logical_value(node, t)
            node.err_acc += msg.payload_s - own
            node.recv_count += 1

    def _deadline(self, t: float, nid: int) -> None:
        node = self.nodes[nid]
        if node.recv_count == 0:
            self.rounds.append(RoundRecord(t, nid, None, None, 0))
            return
        n_acks = node.recv_count
        e_new = node.err_acc / n_acks
        node.err_acc = 0.0
        node.recv_count = 0
        new_rate: float | None = None
        if abs(e_new) < self.params.max_error_s:
            # rate update consumes the node's own error, own minus neighbors
            new_rate = rate_update(node.lc.rate, -e_new, self.params)
        node.hw.advance(t)
        node.lc.apply_correction(node.hw.read_ticks(), offset_s=e_new,
                                 new_rate=new_rate)
        node.synced = True
        self.rounds.append(RoundRecord(t, nid, e_new, new_rate, n_acks))

    def _sample(self, t: float) -> None:
        errors: dict[int, float] = {}
        logical: dict[int, float] = {}
        for nid in self.topology.node_ids:
            node = self.nodes[nid]
            if t < node.boot_time:
                continue
            v = self.logical_value(node, t)
            logical[nid] = v
            errors[nid] = v - t
        self.frames.append(SampleFrame(t, errors, logical))
        if t + self.sample_interval <= self.duration:
            self.queue.push(t + self.sample_interval, EventKind.SAMPLE)


def run_simulation(
    topology: Topology,
    params: ProtocolParams,
    *,
    osc_params: OscillatorParams,
    delay_model: DelayModel = DelayModel(),
    duration_s: float = 12240.0,
    sample_interval_s: float = 10.0,
    boot_window_s: float = 300.0,
    seed: int = 0,
    initial_rate: float | None = None,
    initial_ticks: float | None = None,
) -> SimulationTrace:
    """Simulate one protocol run over the given topology.

    The trace is a pure function of the arguments: rerunning with the same
    values reproduces it exactly.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if sample_interval_s <= 0:
        raise ValueError("sample_interval_s must be positive")
    if not 0 <= boot_window_s < duration_s:
        raise ValueError("boot_window_s must satisfy 0 <= window < duration")

    sim = _Sim(
        topology, params, osc_params, delay_model, duration_s,
        sample_interval_s, boot_window_s, seed, initial_rate, initial_ticks,
    )
    sim.run()
    config = {
        "protocol": params.kind.value,
        "step_size": params.step_size,
        "beacon_period_s": params.beacon_period_s,
        "nominal_hz": params.nominal_hz,
        "max_error_s": params.max_error_s,
        "gather_wait_s": params.gather_wait_s,
        "max_drift_hz": osc_params.max_drift_hz,
        "drift_resample_interval_s": osc_params.resample_interval_s,
        "quantize_ticks": osc_params.quantize_ticks,
        "delay_std_s": delay_model.std_s,
        "delay_floor_s": delay_model.floor_s,
        "topology": topology.to_config(),
        "duration_s": duration_s,
        "sample_interval_s": sample_interval_s,
        "boot_window_s": boot_window_s,
        "seed": seed,
        "initial_rate": initial_rate,
        "initial_ticks": initial_ticks,
    }
    return SimulationTrace(
        frames=tuple(sim.frames),
        rounds=tuple(sim.rounds),
        topology=topology,
        boot_times={nid: sim.nodes[nid].boot_time for nid in topology.node_ids},
        config=config,
    )
