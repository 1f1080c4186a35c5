"""Hybrid monitor protocol.

Per channel and epoch the monitor issues a :class:`PathSet`: ``n + 1``
link-disjoint paths, a secret real-path index per direction and a noise
seed.  The payload travels whitened on the real path; every other path
carries keyed pseudorandom noise of the same length.  The receiving
monitor unit regenerates the noise, so any change to a decoy is caught,
and checks the decoded payload against the physical invariants.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .plant import Invariant, MissingSignalError, Reading, check_invariants
from .rng import derive_seed
from .topology import Channel, NoPathError, Path, Topology, disjoint_paths

FORWARD, REVERSE = 0, 1

CHANNEL_DOWN = "down"


@dataclass(frozen=True)
class MonitorConfig:
    enabled: bool = False
    initial_decoys: int = 0
    growth_probability: float = 0.0
    max_decoys: int = 0
    verification_cycle: int = 1
    overseer: str | None = None
    hosts: tuple[str, ...] = ()
    domain: str = "mon"

    def __post_init__(self):
        object.__setattr__(self, "hosts", tuple(self.hosts))
        if self.initial_decoys < 0 or self.max_decoys < 0:
            raise ValueError("decoy counts must be >= 0")
        if self.initial_decoys > self.max_decoys:
            raise ValueError("initial_decoys must not exceed max_decoys")
        if not 0.0 <= self.growth_probability <= 1.0:
            raise ValueError("growth_probability must lie in [0, 1]")
        if self.verification_cycle < 1:
            raise ValueError("verification_cycle must be >= 1")


# ----------------------------------------------------------------------------
# frames
# ----------------------------------------------------------------------------

class FrameError(ValueError):
    pass


_MAGIC = b"HM"
_HEAD = struct.Struct(">2sIH")
_ITEM = struct.Struct(">24s12sd")


def encode_payload(readings: Sequence[Reading], epoch: int) -> bytes:
    parts = [_HEAD.pack(_MAGIC, epoch, len(readings))]
    for r in readings:
        src, sig = r.source.encode(), r.signal.encode()
        if len(src) > 24 or len(sig) > 12:
            raise FrameError(f"identifier too long for frame: {r.source}.{r.signal}")
        parts.append(_ITEM.pack(src, sig, r.value))
    return b"".join(parts)


def decode_payload(frame: bytes) -> tuple[int, list[Reading]]:
    if len(frame) < _HEAD.size:
        raise FrameError("short frame")
    magic, epoch, count = _HEAD.unpack_from(frame)
    if magic != _MAGIC or len(frame) != _HEAD.size + count * _ITEM.size:
        raise FrameError("bad frame header")
    out = []
    for i in range(count):
        src, sig, value = _ITEM.unpack_from(frame, _HEAD.size + i * _ITEM.size)
        try:
            src_s = src.rstrip(b"\0").decode("ascii")
            sig_s = sig.rstrip(b"\0").decode("ascii")
        except UnicodeDecodeError:
            raise FrameError("non-ascii identifier") from None
        if value != value or value in (float("inf"), float("-inf")):
            raise FrameError("non-finite value")
        out.append(Reading(src_s, sig_s, value, epoch))
    return epoch, out


@functools.lru_cache(maxsize=64)
def keystream(noise_seed: int, epoch: int, direction: int, length: int) -> bytes:
    # sender and receiver derive the same stream; cache spares the rehash
    h = hashlib.shake_256(struct.pack(">QQB", noise_seed, epoch, direction))
    return h.digest(length)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


# ----------------------------------------------------------------------------
# path sets
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PathSet:
    channel: str
    source: str
    destination: str
    epoch: int
    paths: tuple[Path, ...]
    real_index: tuple[int, int]  # (forward, reverse)
    noise_seed: int

    def __post_init__(self):
        if not self.paths:
            raise ValueError("a path set needs at least one path")
        if any(not 0 <= r < len(self.paths) for r in self.real_index):
            raise ValueError("real index out of range")

    @property
    def n(self) -> int:
        """Decoy count."""
        return len(self.paths) - 1

    @property
    def flow_events(self) -> int:
        return 2 * len(self.paths)

    def endpoint(self, direction: int) -> str:
        return self.source if direction == FORWARD else self.destination

    def canonical(self) -> str:
        paths = ";".join(",".join(p) for p in self.paths)
        return f"{self.channel}|{self.epoch}|{paths}|{self.real_index[0]},{self.real_index[1]}|{self.noise_seed}"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def as_record(self) -> dict:
        return {
            "channel": self.channel,
            "source": self.source,
            "destination": self.destination,
            "epoch": self.epoch,
            "n": self.n,
            "paths": [list(p) for p in self.paths],
            "real_index": list(self.real_index),
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "PathSet":
        return cls(
            rec["channel"], rec["source"], rec["destination"], rec["epoch"],
            tuple(tuple(p) for p in rec["paths"]), tuple(rec["real_index"]), rec["noise_seed"],
        )


def issue_path_set(
    topology: Topology, channel: Channel, n: int, rng: random.Random, *, epoch: int, noise_seed: int
) -> PathSet:
    """Path set with at most ``n`` decoys (fewer if disjoint capacity is short)."""
    paths = disjoint_paths(topology, channel, n + 1)
    n = len(paths) - 1
    real = (rng.randrange(n + 1), rng.randrange(n + 1))
    return PathSet(channel.id, channel.source, channel.destination, epoch, tuple(paths), real, noise_seed)


def generate_paths(
    topology: Topology,
    channel: Channel,
    previous: PathSet | None,
    config: MonitorConfig,
    rng: random.Random,
    *,
    epoch: int = 0,
    run_seed: int = 0,
) -> PathSet:
    """Issue the next path set for ``channel``.

    The decoy count starts at ``initial_decoys`` and grows by one with
    probability ``growth_probability`` per call, capped at
    ``min(max_decoys, capacity - 1)``.  Raises :class:`NoPathError` when
    the channel is down.
    """
    cap = len(disjoint_paths(topology, channel, config.max_decoys + 1)) - 1
    grow = rng.random() < config.growth_probability
    if previous is None:
        n = config.initial_decoys
    else:
        n = previous.n + (1 if grow else 0)
    n = min(n, cap)
    seed = derive_seed(run_seed, "noise", channel.id, epoch)
    return issue_path_set(topology, channel, n, rng, epoch=epoch, noise_seed=seed)


# ----------------------------------------------------------------------------
# transmission and verification
# ----------------------------------------------------------------------------


class FrameKind(str, enum.Enum):
    Real = "Real"
    Noise = "Noise"


@dataclass(frozen=True)
class Transmission:
    path: int
    frame: bytes
    kind: FrameKind  # ground truth; not visible on the wire
    direction: int = FORWARD

    def as_record(self) -> list:
        return [self.direction, self.path, self.frame.hex()]


def transmit(
    payload: Sequence[Reading] | bytes | None,
    path_set: PathSet,
    *,
    direction: int = FORWARD,
    epoch: int | None = None,
    frame_length: int | None = None,
) -> list[Transmission]:
    """One frame per path: the whitened payload on the real path, noise elsewhere.

    ``payload=None`` sends cover traffic: noise on every path, of
    ``frame_length`` bytes.
    """
    epoch = path_set.epoch if epoch is None else epoch
    if payload is None:
        plain, real = None, -1
        length = frame_length or _HEAD.size
    else:
        plain = payload if isinstance(payload, bytes) else encode_payload(payload, epoch)
        real = path_set.real_index[direction]
        length = len(plain)
    k = len(path_set.paths)
    ks = keystream(path_set.noise_seed, epoch, direction, k * length)
    out = []
    for j in range(k):
        slot = ks[j * length : (j + 1) * length]
        if j == real:
            out.append(Transmission(j, xor_bytes(plain, slot), FrameKind.Real, direction))
        else:
            out.append(Transmission(j, slot, FrameKind.Noise, direction))
    return out


class Cause(str, enum.Enum):
    DecoyTamper = "DecoyTamper"
    InvariantViolation = "InvariantViolation"
    PathLoss = "PathLoss"
    OverseerDivergence = "OverseerDivergence"


@dataclass(frozen=True)
class VerifyOutcome:
    accepted: bool
    payload: tuple[Reading, ...] | None = None
    cause: Cause | None = None
    note: str = ""
    paths: tuple[int, ...] = ()
    subject: str = ""  # channel id, or monitor id for overseer findings
    direction: int = FORWARD

    @classmethod
    def accept(cls, payload, **kw) -> "VerifyOutcome":
        return cls(True, tuple(payload), **kw)

    @classmethod
    def detect(cls, cause: Cause, **kw) -> "VerifyOutcome":
        return cls(False, None, Cause(cause), **kw)

    @property
    def detected(self) -> bool:
        return not self.accepted

    def as_record(self) -> dict:
        rec = {"subject": self.subject, "direction": self.direction}
        if self.accepted:
            rec["result"] = "Accept"
        else:
            rec.update(result="Detect", cause=self.cause.value, note=self.note, paths=list(self.paths))
        return rec


def receive_and_verify(
    transmissions: Iterable[Transmission],
    path_set: PathSet,
    invariants: Sequence[Invariant] = (),
    plant_history: Sequence[Sequence[Reading]] = (),
    *,
    direction: int = FORWARD,
    epoch: int | None = None,
    cover: bool = False,
    check: bool = True,
) -> VerifyOutcome:
    """Verify one direction of one epoch.

    Order: decoy integrity, path loss, payload decoding, then the
    invariants covering the payload's source (when ``check``).  The last
    entry of ``plant_history`` holds the reference readings of the current
    epoch; the decoded payload replaces the matching entries before the
    invariants are evaluated.
    """
    epoch = path_set.epoch if epoch is None else epoch
    meta = {"subject": path_set.channel, "direction": direction}
    k = len(path_set.paths)
    got = {t.path: t.frame for t in transmissions if t.direction == direction and 0 <= t.path < k}
    real = -1 if cover else path_set.real_index[direction]

    if got:
        length = max(len(f) for f in got.values())
        ks = keystream(path_set.noise_seed, epoch, direction, k * length)
        bad = tuple(
            j for j in sorted(got)
            if j != real and got[j] != ks[j * length : (j + 1) * length]
        )
        if bad:
            return VerifyOutcome.detect(Cause.DecoyTamper, paths=bad, note="decoy frame altered", **meta)
    lost = tuple(j for j in range(k) if j not in got)
    if lost:
        return VerifyOutcome.detect(Cause.PathLoss, paths=lost, note="expected frame missing", **meta)
    if cover:
        return VerifyOutcome.accept((), **meta)

    frame = got[real]
    plain = xor_bytes(frame, ks[real * length : real * length + len(frame)])
    try:
        frame_epoch, payload = decode_payload(plain)
        if frame_epoch != epoch:
            raise FrameError(f"stale frame epoch {frame_epoch}")
        sender = path_set.endpoint(direction)
        if any(r.source != sender for r in payload):
            raise FrameError("payload names a foreign source")
    except FrameError as exc:
        return VerifyOutcome.detect(
            Cause.InvariantViolation, paths=(real,), note=f"decode failure: {exc}", **meta
        )
    if check:
        found = verify_payload(payload, invariants, plant_history)
        if found:
            return VerifyOutcome.detect(Cause.InvariantViolation, paths=(real,), note=found, **meta)
    return VerifyOutcome.accept(payload, **meta)


def verify_payload(
    payload: Sequence[Reading], invariants: Sequence[Invariant], plant_history: Sequence[Sequence[Reading]]
) -> str:
    """Check the invariants covering the payload; '' when all hold."""
    sources = {r.source for r in payload}
    covering = [inv for inv in invariants if inv.entities() & sources]
    if not covering:
        return ""
    reference = {r.key: r for r in (plant_history[-1] if plant_history else ())}
    for r in payload:
        reference[r.key] = r
    try:
        violations = check_invariants(list(reference.values()), covering, plant_history[:-1])
    except MissingSignalError as exc:
        return f"missing signal {exc.entity}.{exc.signal}"
    return "; ".join(f"{v.invariant} residual {v.residual:.6g}" for v in violations)


# ----------------------------------------------------------------------------
# overseer
# ----------------------------------------------------------------------------


class OverseerOffline(RuntimeError):
    pass


def monitor_digest(host: str, path_sets: Mapping[str, PathSet]) -> str:
    """Heartbeat digest of the path sets a host's monitor unit participates in."""
    h = hashlib.sha256(host.encode())
    for cid in sorted(path_sets):
        ps = path_sets[cid]
        if host in (ps.source, ps.destination):
            h.update(ps.digest().encode())
    return h.hexdigest()


@dataclass
class OverseerState:
    expected: dict[str, str]  # monitor id -> digest the overseer reconstructs
    reachable: set[str] = field(default_factory=set)

    @classmethod
    def from_topology(cls, topology: Topology, path_sets: Mapping[str, PathSet]) -> "OverseerState":
        expected, reachable = {}, set()
        for vm in topology.virtual_monitors():
            if vm.host in topology.failed:
                continue
            expected[vm.id] = monitor_digest(vm.host, path_sets)
        for l in topology.monitor_links():
            if l.up and topology.overseer in l.endpoints:
                reachable.add(l.other(topology.overseer))
        return cls(expected, reachable)


def oversee(digests: Mapping[str, str], state: OverseerState) -> list[VerifyOutcome]:
    """Compare heartbeat digests against the overseer's reconstruction."""
    if not state.reachable:
        raise OverseerOffline("overseer has no live MonitorNet link")
    out = []
    for vm in sorted(state.expected):
        got = digests.get(vm) if vm in state.reachable else None
        if got is None:
            out.append(VerifyOutcome.detect(Cause.OverseerDivergence, subject=vm, note="missed heartbeat"))
        elif got != state.expected[vm]:
            out.append(VerifyOutcome.detect(Cause.OverseerDivergence, subject=vm, note="digest mismatch"))
    return out


# ----------------------------------------------------------------------------
# rerouting
# ----------------------------------------------------------------------------


def reroute(
    topology: Topology,
    failed: Iterable[str],
    channels: Iterable[Channel],
    path_sets: Mapping[str, PathSet],
    rng: random.Random,
    *,
    epoch: int = 0,
    run_seed: int = 0,
) -> tuple[Topology, dict[str, PathSet | str]]:
    """Mark ``failed`` ids down and re-plan every channel they touch.

    Affected channels keep their decoy count where the surviving disjoint
    capacity allows; channels left with no path map to ``CHANNEL_DOWN``.
    Channels whose current paths avoid the failure are not in the result.
    """
    failed = set(failed)
    if not failed:
        raise ValueError("reroute needs a non-empty failure set")
    after = topology.with_failures(failed)
    updates: dict[str, PathSet | str] = {}
    for ch in channels:
        ps = path_sets.get(ch.id)
        if ps is not None and all(after.path_usable(ps.source, p) for p in ps.paths):
            continue
        n = ps.n if ps is not None else 0
        try:
            seed = derive_seed(run_seed, "noise", ch.id, epoch, "reroute")
            updates[ch.id] = issue_path_set(after, ch, n, rng, epoch=epoch, noise_seed=seed)
        except NoPathError:
            updates[ch.id] = CHANNEL_DOWN
    return after, updates
