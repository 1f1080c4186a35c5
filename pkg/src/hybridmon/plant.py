"""Minimal power-balancing microgrid and physical-invariant checks.

Every plant entity carries ``generation``, ``load`` and ``net_export``; the
balancing entity also reports the global ``losses``.  All values are
multiples of ``QUANTUM`` (a power of two), so sums are exact in floating
point and ground-truth conservation holds with residual exactly 0.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .topology import Topology

QUANTUM = 2.0 ** -10
SIGNALS = ("generation", "load", "net_export")
LOSSES = "losses"


def quantize(x: float) -> float:
    return round(x / QUANTUM) * QUANTUM


class MissingSignalError(KeyError):
    def __init__(self, entity: str, signal: str):
        super().__init__(f"missing signal {entity}.{signal}")
        self.entity = entity
        self.signal = signal


@dataclass(frozen=True)
class Reading:
    source: str
    signal: str
    value: float
    epoch: int

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.signal)


class InvariantKind(str, enum.Enum):
    ConservationSum = "ConservationSum"
    RangeBound = "RangeBound"
    RateLimit = "RateLimit"


@dataclass(frozen=True)
class Invariant:
    """A physical-law predicate over a signed sum of plant signals.

    ConservationSum: ``|sum| <= epsilon``.
    RangeBound: ``lower - epsilon <= sum <= upper + epsilon``.
    RateLimit: ``|sum(t) - sum(t-1)| <= rate + epsilon``.
    """

    id: str
    kind: InvariantKind
    operands: tuple[tuple[str, str, int], ...]  # (entity, signal, +1/-1)
    epsilon: float = 0.0
    lower: float | None = None
    upper: float | None = None
    rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InvariantKind(self.kind))
        object.__setattr__(self, "operands", tuple((e, s, int(c)) for e, s, c in self.operands))
        if self.epsilon < 0:
            raise ValueError(f"invariant {self.id!r}: epsilon must be >= 0")
        if not self.operands:
            raise ValueError(f"invariant {self.id!r}: operands must be non-empty")
        if any(c not in (1, -1) for _, _, c in self.operands):
            raise ValueError(f"invariant {self.id!r}: coefficients must be +1 or -1")
        if self.kind is InvariantKind.RangeBound and (self.lower is None or self.upper is None):
            raise ValueError(f"invariant {self.id!r}: RangeBound needs lower and upper")
        if self.kind is InvariantKind.RateLimit and self.rate is None:
            raise ValueError(f"invariant {self.id!r}: RateLimit needs rate")

    def entities(self) -> set[str]:
        return {e for e, _, _ in self.operands}

    def covers(self, entity: str) -> bool:
        return entity in self.entities()


@dataclass(frozen=True)
class Violation:
    invariant: str
    residual: float


def conservation_operands(entities: Iterable[str], balancing: str) -> tuple[tuple[str, str, int], ...]:
    """Operands of sum(generation) - sum(load) - losses - sum(net_export)."""
    ops = []
    for e in entities:
        ops += [(e, "generation", 1), (e, "load", -1), (e, "net_export", -1)]
    ops.append((balancing, LOSSES, -1))
    return tuple(ops)


# ----------------------------------------------------------------------------
# dynamics
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantProfile:
    """Set-points and knobs of the piecewise-constant load/generation profiles."""

    nominal: Mapping[str, tuple[float, float]]  # entity -> (generation, load)
    balancing: str
    variation: float = 0.2
    hold: int = 4
    loss_fraction: float = 1.0 / 64


@dataclass(frozen=True)
class Signals:
    generation: float = 0.0
    load: float = 0.0
    net_export: float = 0.0


@dataclass(frozen=True)
class PlantState:
    epoch: int
    signals: Mapping[str, Signals]
    losses: float
    profile: PlantProfile = field(compare=False)

    def readings(self) -> list[Reading]:
        out = []
        for eid in sorted(self.signals):
            sig = self.signals[eid]
            for name in SIGNALS:
                out.append(Reading(eid, name, getattr(sig, name), self.epoch))
            if eid == self.profile.balancing:
                out.append(Reading(eid, LOSSES, self.losses, self.epoch))
        return out

    def imbalance(self) -> float:
        s = self.signals.values()
        return (
            sum(x.generation for x in s)
            - sum(x.load for x in s)
            - self.losses
            - sum(x.net_export for x in s)
        )


def initial_state(topology: Topology, profile: PlantProfile) -> PlantState:
    gen = {e.id: quantize(profile.nominal.get(e.id, (0.0, 0.0))[0]) for e in topology.plant_entities()}
    load = {e.id: quantize(profile.nominal.get(e.id, (0.0, 0.0))[1]) for e in topology.plant_entities()}
    return _balance(0, gen, load, profile)


def _balance(epoch: int, gen: dict, load: dict, profile: PlantProfile) -> PlantState:
    losses = quantize(profile.loss_fraction * sum(load.values()))
    signals = {}
    for eid in sorted(gen):
        export = gen[eid] - load[eid]
        if eid == profile.balancing:
            export -= losses
        signals[eid] = Signals(gen[eid], load[eid], export)
    return PlantState(epoch, signals, losses, profile)


def step_plant(state: PlantState, topology: Topology, rng: random.Random) -> tuple[PlantState, list[Reading]]:
    """Advance one epoch.

    Every ``hold`` epochs each entity redraws generation and load uniformly
    within ``nominal * (1 +/- variation)``; in between, values are held.
    Each entity's surplus is exported and the balancing entity also covers
    line losses, so conservation holds exactly.
    """
    profile = state.profile
    epoch = state.epoch + 1
    gen = {eid: s.generation for eid, s in state.signals.items()}
    load = {eid: s.load for eid, s in state.signals.items()}
    if profile.hold > 0 and epoch % profile.hold == 0:
        v = profile.variation
        for e in sorted(e.id for e in topology.plant_entities()):
            g0, l0 = profile.nominal.get(e, (0.0, 0.0))
            gen[e] = quantize(g0 * rng.uniform(1 - v, 1 + v))
            load[e] = quantize(l0 * rng.uniform(1 - v, 1 + v))
    nxt = _balance(epoch, gen, load, profile)
    return nxt, nxt.readings()


# ----------------------------------------------------------------------------
# invariant checks
# ----------------------------------------------------------------------------


def _values(readings: Iterable[Reading]) -> dict[tuple[str, str], float]:
    return {r.key: r.value for r in readings}


def _signed_sum(inv: Invariant, values: Mapping[tuple[str, str], float]) -> float:
    total = 0.0
    for e, s, c in inv.operands:
        try:
            total += c * values[(e, s)]
        except KeyError:
            raise MissingSignalError(e, s) from None
    return total


def residual(inv: Invariant, current: Mapping, previous: Mapping | None = None) -> float:
    """How far an invariant is from holding (0 when satisfied exactly)."""
    total = _signed_sum(inv, current)
    if inv.kind is InvariantKind.ConservationSum:
        return abs(total)
    if inv.kind is InvariantKind.RangeBound:
        return max(inv.lower - total, total - inv.upper, 0.0)
    if previous is None:
        return 0.0
    return max(abs(total - _signed_sum(inv, previous)) - inv.rate, 0.0)


def check_invariants(
    readings: Sequence[Reading],
    invariants: Sequence[Invariant],
    history: Sequence[Sequence[Reading]] = (),
) -> list[Violation]:
    """Invariants whose residual exceeds their epsilon.

    ``history`` holds earlier epochs, oldest first; RateLimit invariants
    compare against the latest of them (and hold vacuously without one).
    """
    current = _values(readings)
    previous = _values(history[-1]) if history else None
    out = []
    for inv in invariants:
        r = residual(inv, current, previous)
        if r > inv.epsilon:
            out.append(Violation(inv.id, r))
    return out
