"""Attack archetypes: ransomware on a node, physical damage, false-data injection.

The attacker sits on PlantNet links.  It never learns a path set's real
index or noise seed, but it knows the frame layout and (for false-data
injection) the true payload of the infected source, so it can turn a
reading ``v`` into ``v + delta`` by XOR-ing a difference mask into a
frame.  On the real path that yields a well-formed forged payload; on a
decoy it only spoils the noise.
"""

from __future__ import annotations

import enum
import functools
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .monitor import (
    FORWARD,
    REVERSE,
    FrameKind,
    PathSet,
    Transmission,
    xor_bytes,
    decode_payload,
    encode_payload,
    receive_and_verify,
    transmit,
)
from .plant import Reading
from .topology import EntityKind, Network, Topology

log = logging.getLogger(__name__)

RANSOM_NOTE = b"YOUR FILES HAVE BEEN ENCRYPTED. SEND BITCOIN. "


class AttackKind(str, enum.Enum):
    Ransomware = "Ransomware"
    PhysicalDamage = "PhysicalDamage"
    FalseDataInjection = "FalseDataInjection"


class Strategy(str, enum.Enum):
    UniformSingleEvent = "UniformSingleEvent"
    CorruptKPaths = "CorruptKPaths"
    CorruptAllPaths = "CorruptAllPaths"


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackScenario:
    id: str
    kind: AttackKind
    target: str
    start_epoch: int = 0
    end_epoch: int | None = None
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        object.__setattr__(self, "parameters", dict(self.parameters))
        if self.start_epoch < 0:
            raise AttackError(f"attack {self.id!r}: start_epoch must be >= 0")
        if self.end_epoch is not None and self.end_epoch < self.start_epoch:
            raise AttackError(f"attack {self.id!r}: end_epoch before start_epoch")

    def active(self, epoch: int) -> bool:
        return epoch >= self.start_epoch and (self.end_epoch is None or epoch <= self.end_epoch)


@dataclass(frozen=True)
class AttackerCapability:
    observable: frozenset[str]
    strategy: Strategy = Strategy.UniformSingleEvent
    k: int = 1
    paths: tuple[int, ...] | None = None  # fixed path positions for CorruptKPaths
    knowledge: str = "NoSecrets"

    @classmethod
    def from_scenario(cls, scenario: AttackScenario, topology: Topology) -> "AttackerCapability":
        p = scenario.parameters
        observable = p.get("observable")
        if observable is None:
            observable = [l.id for l in topology.plant_links()]
        cap = cls(
            frozenset(observable),
            Strategy(p.get("strategy", Strategy.UniformSingleEvent)),
            int(p.get("k", 1)),
            tuple(p["paths"]) if p.get("paths") is not None else None,
        )
        cap.validate(topology)
        return cap

    def validate(self, topology: Topology) -> None:
        for lid in self.observable:
            if not topology.has_link(lid):
                raise AttackError(f"observable link {lid!r} does not exist")
            if topology.link(lid).network is Network.MonitorNet:
                raise AttackError(f"attacker cannot observe MonitorNet link {lid!r}")


def validate_scenario(scenario: AttackScenario, topology: Topology) -> None:
    if scenario.kind is AttackKind.Ransomware:
        if not topology.has_entity(scenario.target) or topology.entity(scenario.target).is_monitor:
            raise AttackError(f"attack {scenario.id!r}: unknown plant entity {scenario.target!r}")
    elif scenario.kind is AttackKind.PhysicalDamage:
        # a cut cord or a smashed box; the overseer and its MonitorNet cords
        # can break too, though they cannot be compromised
        t = scenario.target
        ok = topology.has_link(t) or (
            topology.has_entity(t) and topology.entity(t).kind is not EntityKind.VirtualMonitor
        )
        if not ok:
            raise AttackError(f"attack {scenario.id!r}: unknown link or entity {t!r}")
    else:
        try:
            topology.channel(scenario.target)
        except KeyError:
            raise AttackError(f"attack {scenario.id!r}: unknown channel {scenario.target!r}") from None
        AttackerCapability.from_scenario(scenario, topology)


# ----------------------------------------------------------------------------
# simulation state shared with the runner
# ----------------------------------------------------------------------------


@dataclass
class SimState:
    """What the attacker can act on during one epoch, plus ground-truth bookkeeping."""

    physical: Topology  # ground truth: downed links, broken entities
    path_sets: dict[str, PathSet] = field(default_factory=dict)
    wire: dict[str, list[Transmission]] = field(default_factory=dict)
    plaintext: dict[str, bytes] = field(default_factory=dict)
    infected: dict[str, str] = field(default_factory=dict)  # entity -> attack id
    downed: dict[str, str] = field(default_factory=dict)  # link/entity -> attack id
    tampered: dict[tuple[str, int, int], str] = field(default_factory=dict)  # (channel, dir, path)
    corrupted: dict[str, str] = field(default_factory=dict)  # channel -> attack id (payload forged)
    warnings: list[str] = field(default_factory=list)

    def begin_epoch(self) -> None:
        self.wire.clear()
        self.plaintext.clear()
        self.tampered.clear()
        self.corrupted.clear()


def forge(plain: bytes, delta: float, signal: str, compensate: str | None) -> bytes:
    """Re-encode ``plain`` with ``signal`` offset by ``delta`` (and ``compensate`` too)."""
    epoch, readings = decode_payload(plain)
    out = []
    for r in readings:
        if r.signal == signal or (compensate and r.signal == compensate):
            r = replace(r, value=r.value + delta)
        out.append(r)
    return encode_payload(out, epoch)


def tamper(frames: list[Transmission], picks: Iterable[tuple[int, int]], mask: bytes) -> list[Transmission]:
    """XOR ``mask`` into the frames at ``(direction, path)`` positions."""
    picks = set(picks)
    out = []
    for t in frames:
        if (t.direction, t.path) in picks:
            m = mask[: len(t.frame)].ljust(len(t.frame), b"\0")
            t = replace(t, frame=xor_bytes(t.frame, m))
        out.append(t)
    return out


def flip_byte(frames: list[Transmission], direction: int, path: int, offset: int = 0) -> list[Transmission]:
    out = []
    for t in frames:
        if (t.direction, t.path) == (direction, path):
            b = bytearray(t.frame)
            b[offset % len(b)] ^= 0xFF
            t = replace(t, frame=bytes(b))
        out.append(t)
    return out


def ransom_frame(length: int) -> bytes:
    reps = length // len(RANSOM_NOTE) + 1
    return (RANSOM_NOTE * reps)[:length]


# ----------------------------------------------------------------------------
# injection
# ----------------------------------------------------------------------------


def inject(scenario: AttackScenario, state: SimState, epoch: int, rng: random.Random) -> None:
    """Apply ``scenario`` to ``state`` for ``epoch`` (no-op before it starts)."""
    if not scenario.active(epoch):
        return
    if scenario.kind is AttackKind.Ransomware:
        _ransomware(scenario, state, epoch)
    elif scenario.kind is AttackKind.PhysicalDamage:
        _physical(scenario, state, epoch)
    else:
        _false_data(scenario, state, epoch, rng)


def _warn(state: SimState, msg: str) -> None:
    log.warning(msg)
    state.warnings.append(msg)


def _ransomware(sc: AttackScenario, state: SimState, epoch: int) -> None:
    node = sc.target
    if node not in state.infected:
        if node in state.physical.failed:
            if epoch == sc.start_epoch:
                _warn(state, f"{sc.id}: target {node} already destroyed")
            return
        state.infected[node] = sc.id
    elif state.infected[node] != sc.id:
        if epoch == sc.start_epoch:
            _warn(state, f"{sc.id}: target {node} already held by {state.infected[node]}")
        return
    # the hostage node answers everything that passes through it with ransom frames
    for cid, frames in state.wire.items():
        ps = state.path_sets[cid]
        through = {j for j, p in enumerate(ps.paths) if node in state.physical.path_nodes(ps.source, p)}
        if not through:
            continue
        out = []
        for t in frames:
            if t.path in through:
                t = replace(t, frame=ransom_frame(len(t.frame)))
                state.tampered[(cid, t.direction, t.path)] = sc.id
                if t.kind is FrameKind.Real:
                    state.corrupted[cid] = sc.id
            out.append(t)
        state.wire[cid] = out


def _physical(sc: AttackScenario, state: SimState, epoch: int) -> None:
    if state.downed.get(sc.target) == sc.id:
        return
    t = sc.target
    gone = t in state.physical.failed or (state.physical.has_link(t) and not state.physical.link(t).up)
    if gone:
        if epoch == sc.start_epoch:
            _warn(state, f"{sc.id}: target {t} already destroyed")
        return
    state.physical = state.physical.with_failures([t])
    state.downed[t] = sc.id


def _false_data(sc: AttackScenario, state: SimState, epoch: int, rng: random.Random) -> None:
    cid = sc.target
    if cid not in state.wire:
        return
    cap = AttackerCapability.from_scenario(sc, state.physical)
    ps = state.path_sets[cid]
    p = sc.parameters
    plain = state.plaintext[cid]
    forged = forge(plain, float(p.get("delta", 0.0)), p.get("signal", "generation"),
                   p.get("compensate", "net_export") if p.get("consistent") else None)
    mask = xor_bytes(plain, forged)
    visible = [
        j for j, path in enumerate(ps.paths) if set(path) & cap.observable
    ]
    if cap.strategy is Strategy.CorruptAllPaths:
        # compromise upstream of the path split: the payload itself is forged,
        # decoys are left as the sending monitor produced them
        picks = [(FORWARD, ps.real_index[FORWARD])] if visible else []
    elif cap.strategy is Strategy.CorruptKPaths:
        if cap.paths is not None:
            chosen = [j for j in cap.paths if j in visible]
        else:
            chosen = sorted(rng.sample(visible, min(cap.k, len(visible))))
        picks = [(FORWARD, j) for j in chosen]
    else:
        on_wire = {(t.direction, t.path) for t in state.wire[cid]}
        events = [(d, j) for d in (FORWARD, REVERSE) for j in visible if (d, j) in on_wire]
        picks = [events[rng.randrange(len(events))]] if events else []
    if not picks:
        return
    frames = tamper(state.wire[cid], picks, mask)
    for t in frames:
        if (t.direction, t.path) in picks:
            state.tampered[(cid, t.direction, t.path)] = sc.id
            if t.kind is FrameKind.Real:
                state.corrupted[cid] = sc.id
    state.wire[cid] = frames


# ----------------------------------------------------------------------------
# outcomes
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackOutcome:
    attack: str
    detected: bool
    detection_epoch: int | None
    payload_accepted_corrupt: bool

    def latency(self, start_epoch: int) -> int | None:
        return None if self.detection_epoch is None else self.detection_epoch - start_epoch


def attack_outcome(events: Sequence[Mapping], scenario: AttackScenario | None) -> AttackOutcome:
    """Score one attack against the structured event records of a finished run.

    Detect and delivery records carry an ``attack`` attribution set by the
    runner from ground truth.
    """
    if scenario is None:
        return AttackOutcome("", False, None, False)
    first = None
    corrupt = False
    for ev in events:
        data = ev.get("payload", {})
        if data.get("attack") != scenario.id:
            continue
        if ev["type"] == "detect" and first is None:
            first = ev["epoch"]
        if ev["type"] in ("accept", "deliver") and data.get("corrupt"):
            corrupt = True
    return AttackOutcome(scenario.id, first is not None, first, corrupt)


# ----------------------------------------------------------------------------
# single-epoch attack game (Monte-Carlo)
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GameResult:
    event: int  # index of the flow event the attacker hit, in [0, 2(n+1))
    success: bool  # forged payload accepted with no decoy alarm
    decoy_detected: bool


@functools.lru_cache(maxsize=32)
def _delta_mask(items: tuple, delta: float, signal: str) -> bytes:
    # the header (epoch) is untouched by forging, so the mask is epoch-free
    plain = encode_payload([Reading(s, g, v, 0) for s, g, v in items], 0)
    return xor_bytes(plain, forge(plain, delta, signal, None))


def play_single_event(path_set: PathSet, payload: Sequence[Reading], rng: random.Random,
                      delta: float = 1.0, signal: str = "generation") -> GameResult:
    """One epoch: payload forward, cover traffic back, attacker hits one flow event.

    Verification here stops before the invariant layer; success means the
    forged forward payload was accepted and no decoy was disturbed.
    """
    k = len(path_set.paths)
    plain = encode_payload(payload, path_set.epoch)
    fwd = transmit(plain, path_set, direction=FORWARD)
    rev = transmit(None, path_set, direction=REVERSE, frame_length=len(plain))
    mask = _delta_mask(tuple((r.source, r.signal, r.value) for r in payload), delta, signal)
    event = rng.randrange(2 * k)
    pick = (event // k, event % k)
    wire = tamper(fwd + rev, [pick], mask)
    out_f = receive_and_verify(wire, path_set, direction=FORWARD, check=False)
    out_r = receive_and_verify(wire, path_set, direction=REVERSE, cover=True, check=False)
    decoy = any(o.detected for o in (out_f, out_r))
    forged = out_f.accepted and tuple(out_f.payload) != tuple(payload)
    return GameResult(event, forged and not decoy, decoy)
