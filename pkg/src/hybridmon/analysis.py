"""Entropy of the attacker's choice among flow events, and MSDND deducibility.

The deducibility check is the reachability fragment of multiple security
domain nondeducibility: an observer can deduce the truth of a proposition
when it holds a valuation for it, or trusts (transitively) a domain that
does.  The proposition's own source never counts as an independent
valuator for anyone but itself.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .plant import Invariant
from .topology import Channel, Topology


# ----------------------------------------------------------------------------
# entropy
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropyResult:
    n: int
    sample_space: int
    success_probability: Fraction
    entropy_bits: float


def shannon_entropy(probabilities: Iterable[float]) -> float:
    """H = -sum p log2 p in bits; zero-probability terms contribute nothing."""
    return -math.fsum(p * math.log2(p) for p in probabilities if p > 0) + 0.0


def entropy_analytic(n: int) -> EntropyResult:
    """Uniform attacker over the 2n + 2 flow events of a channel with n decoys."""
    if n < 0:
        raise ValueError("decoy count must be >= 0")
    space = 2 * n + 2
    p = Fraction(1, space)
    return EntropyResult(n, space, p, shannon_entropy([float(p)] * space))


@dataclass(frozen=True)
class EmpiricalEntropy:
    trials: int
    successes: int
    p_hat: float
    h_hat: float
    counts: Mapping[int, int] = field(compare=False)


def entropy_empirical(trial_log: Sequence) -> EmpiricalEntropy:
    """Plug-in estimates from a Monte-Carlo trial log.

    Each entry exposes ``event`` (flow event index chosen) and ``success``;
    plain ``(event, success)`` pairs work too.
    """
    if not trial_log:
        raise ValueError("empty trial log")
    counts: Counter[int] = Counter()
    wins = 0
    for t in trial_log:
        event, success = (t.event, t.success) if hasattr(t, "event") else t
        counts[event] += 1
        wins += bool(success)
    total = len(trial_log)
    h = shannon_entropy(c / total for c in counts.values())
    return EmpiricalEntropy(total, wins, wins / total, h, dict(sorted(counts.items())))


@dataclass
class EntropyRow:
    n: int
    sample_space: int | None = None
    p: Fraction | None = None
    h: float | None = None
    p_hat: float | None = None
    h_hat: float | None = None
    trials: int = 0
    error: str = ""

    @classmethod
    def analytic(cls, n: int) -> "EntropyRow":
        r = entropy_analytic(n)
        return cls(n, r.sample_space, r.success_probability, r.entropy_bits)


TABLE_FIELDS = ("n", "sample_space", "p", "H", "p_hat", "H_hat", "trials", "error")


def entropy_table_csv(rows: Sequence[EntropyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_FIELDS)
    for r in rows:
        w.writerow([
            r.n,
            "" if r.sample_space is None else r.sample_space,
            "" if r.p is None else str(r.p),
            "" if r.h is None else f"{r.h:.6f}",
            "" if r.p_hat is None else f"{r.p_hat:.6f}",
            "" if r.h_hat is None else f"{r.h_hat:.6f}",
            r.trials,
            r.error,
        ])
    return buf.getvalue()


def entropy_table_text(rows: Sequence[EntropyRow]) -> str:
    lines = [f"{'n':>4} {'space':>6} {'p':>8} {'H bits':>8} {'p_hat':>9} {'H_hat':>8} {'trials':>8}"]
    for r in rows:
        if r.error:
            lines.append(f"{r.n:>4} error: {r.error}")
            continue
        p_hat = "" if r.p_hat is None else f"{r.p_hat:.5f}"
        h_hat = "" if r.h_hat is None else f"{r.h_hat:.4f}"
        lines.append(
            f"{r.n:>4} {r.sample_space:>6} {str(r.p):>8} {r.h:>8.4f} {p_hat:>9} {h_hat:>8} {r.trials:>8}"
        )
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# MSDND
# ----------------------------------------------------------------------------


class MsdndError(ValueError):
    pass


class Verdict(str, enum.Enum):
    MsdndSecure = "MSDND-SECURE"
    NotMsdndSecure = "NOT-MSDND-SECURE"


@dataclass(frozen=True)
class Proposition:
    source: str  # domain the information originates in
    assertion: str


@dataclass(frozen=True)
class HasValuation:
    via: str


@dataclass(frozen=True)
class MsdndModel:
    """Domains, one proposition, who can value it, and who trusts whom.

    ``capabilities`` maps a domain to its valuation for the proposition;
    absent domains have none.  ``trust`` holds (observer, reporter) pairs.
    """

    domains: frozenset[str]
    proposition: Proposition
    capabilities: Mapping[str, HasValuation] = field(default_factory=dict)
    trust: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "domains", frozenset(self.domains))
        object.__setattr__(self, "trust", frozenset(tuple(e) for e in self.trust))
        caps = dict(self.capabilities)
        src = self.proposition.source
        if src not in self.domains:
            raise MsdndError(f"proposition source {src!r} is not a domain")
        caps.setdefault(src, HasValuation("self"))
        for d in caps:
            if d not in self.domains:
                raise MsdndError(f"capability for unknown domain {d!r}")
        for a, b in self.trust:
            if a not in self.domains or b not in self.domains:
                raise MsdndError(f"trust edge ({a!r}, {b!r}) names an unknown domain")
        object.__setattr__(self, "capabilities", caps)

    def valuators(self, observer: str) -> set[str]:
        """Domains whose valuation lets ``observer`` decide the proposition."""
        src = self.proposition.source
        if observer == src:
            return {src}
        return {d for d in self.capabilities if d != src}


@dataclass(frozen=True)
class MsdndResult:
    verdict: Verdict
    observer: str
    witness: tuple[str, ...] = ()
    via: str = ""
    statement: str = ""

    def line(self) -> str:
        if self.verdict is Verdict.NotMsdndSecure:
            return f"{self.verdict.value} witness={'->'.join(self.witness)} via={self.via}"
        return f"{self.verdict.value} {self.statement}"


def msdnd_evaluate(model: MsdndModel, observer: str) -> MsdndResult:
    """Decide whether ``observer`` can deduce the proposition's validity."""
    if observer not in model.domains:
        raise MsdndError(f"unknown observer domain {observer!r}")
    targets = model.valuators(observer)
    succ: dict[str, list[str]] = {}
    for a, b in sorted(model.trust):
        succ.setdefault(a, []).append(b)
    prev = {observer: None}
    queue = deque([observer])
    while queue:
        d = queue.popleft()
        if d in targets:
            chain = [d]
            while prev[chain[-1]] is not None:
                chain.append(prev[chain[-1]])
            return MsdndResult(
                Verdict.NotMsdndSecure, observer, tuple(reversed(chain)), model.capabilities[d].via
            )
        for nxt in succ.get(d, ()):
            if nxt not in prev:
                prev[nxt] = d
                queue.append(nxt)
    src = model.proposition.source
    stmt = f"SD[{src}]phi xor SD[{src}]not-phi holds in every world; {observer} has no valuation"
    return MsdndResult(Verdict.MsdndSecure, observer, statement=stmt)


def _domain_of(topology: Topology, entity: str, avoid: str | None = None) -> str:
    doms = sorted(d.id for d in topology.domains_of(entity))
    if not doms:
        raise MsdndError(f"entity {entity!r} is in no domain")
    if avoid is not None:
        others = [d for d in doms if avoid not in topology.domain(d).members]
        if others:
            return others[0]
    return doms[0]


def observer_domain(topology: Topology, channel: Channel) -> str:
    return _domain_of(topology, channel.destination, avoid=channel.source)


def msdnd_from_simulation(
    topology: Topology,
    monitor_enabled: bool,
    channel: Channel,
    invariants: Sequence[Invariant] = (),
    monitor_domain: str = "mon",
    assertion: str = "payload valid",
) -> MsdndModel:
    """Model the receiving domain's view of the payload arriving on ``channel``.

    The receiver trusts the sender (same security level).  With the monitor
    enabled and an invariant covering the sender's signals, the monitor
    domain holds a valuation and the receiver trusts it.
    """
    src = _domain_of(topology, channel.source, avoid=channel.destination)
    obs = observer_domain(topology, channel)
    domains = {src, obs}
    caps: dict[str, HasValuation] = {}
    trust = {(obs, src)} if obs != src else set()
    covering = sorted(inv.id for inv in invariants if inv.covers(channel.source))
    if monitor_enabled and covering:
        domains.add(monitor_domain)
        caps[monitor_domain] = HasValuation(covering[0])
        trust.add((obs, monitor_domain))
    return MsdndModel(frozenset(domains), Proposition(src, assertion), caps, frozenset(trust))
