"""Static structure of the CPS: entities, links, channels and security domains.

A :class:`Topology` is immutable.  Failures (downed links, quarantined
entities) produce a new topology through :meth:`Topology.with_failures`.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

Path = tuple[str, ...]  # link ids, oriented source -> destination


class TopologyError(ValueError):
    """Invalid topology declaration (unresolved reference, duplicate id, ...)."""


class NoPathError(TopologyError):
    """The channel endpoints are disconnected over usable plant links."""


class EntityKind(str, enum.Enum):
    DgiNode = "DgiNode"
    Microcontroller = "Microcontroller"
    Sensor = "Sensor"
    Actuator = "Actuator"
    VirtualMonitor = "VirtualMonitor"
    PhysicalOverseer = "PhysicalOverseer"


MONITOR_KINDS = frozenset({EntityKind.VirtualMonitor, EntityKind.PhysicalOverseer})
# kinds that count as SCADA units and carry a virtual monitor by default
HOST_KINDS = frozenset({EntityKind.DgiNode, EntityKind.Microcontroller})


class Medium(str, enum.Enum):
    Cyber = "Cyber"
    Physical = "Physical"


class Network(str, enum.Enum):
    PlantNet = "PlantNet"
    MonitorNet = "MonitorNet"


@dataclass(frozen=True)
class Entity:
    id: str
    kind: EntityKind
    host: str | None = None

    @property
    def is_monitor(self) -> bool:
        return self.kind in MONITOR_KINDS


@dataclass(frozen=True)
class Link:
    id: str
    endpoints: tuple[str, str]
    medium: Medium = Medium.Cyber
    network: Network = Network.PlantNet
    up: bool = True

    def other(self, node: str) -> str:
        a, b = self.endpoints
        return b if node == a else a


@dataclass(frozen=True)
class Channel:
    id: str
    source: str
    destination: str

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.source, self.destination)


@dataclass(frozen=True)
class SecurityDomain:
    id: str
    members: frozenset[str]


@dataclass(frozen=True)
class Topology:
    entities: tuple[Entity, ...]
    links: tuple[Link, ...]
    channels: tuple[Channel, ...]
    domains: tuple[SecurityDomain, ...]
    failed: frozenset[str] = frozenset()
    overseer: str | None = None
    _index: dict = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        index = {
            "entity": {e.id: e for e in self.entities},
            "link": {l.id: l for l in self.links},
            "channel": {c.id: c for c in self.channels},
            "domain": {d.id: d for d in self.domains},
        }
        object.__setattr__(self, "_index", index)

    # -- lookups --------------------------------------------------------------
    def entity(self, eid: str) -> Entity:
        return self._index["entity"][eid]

    def link(self, lid: str) -> Link:
        return self._index["link"][lid]

    def channel(self, cid: str) -> Channel:
        return self._index["channel"][cid]

    def domain(self, did: str) -> SecurityDomain:
        return self._index["domain"][did]

    def has_entity(self, eid: str) -> bool:
        return eid in self._index["entity"]

    def has_link(self, lid: str) -> bool:
        return lid in self._index["link"]

    @property
    def monitor_enabled(self) -> bool:
        return self.overseer is not None

    def plant_entities(self) -> list[Entity]:
        return [e for e in self.entities if not e.is_monitor]

    def virtual_monitors(self) -> list[Entity]:
        return [e for e in self.entities if e.kind is EntityKind.VirtualMonitor]

    def monitor_of(self, host: str) -> Entity | None:
        for e in self.virtual_monitors():
            if e.host == host:
                return e
        return None

    def plant_links(self) -> list[Link]:
        return [l for l in self.links if l.network is Network.PlantNet]

    def monitor_links(self) -> list[Link]:
        return [l for l in self.links if l.network is Network.MonitorNet]

    def domains_of(self, eid: str) -> list[SecurityDomain]:
        return [d for d in self.domains if eid in d.members]

    def usable(self, link: Link) -> bool:
        """A link carries traffic if it is up and neither endpoint has failed."""
        return link.up and not (set(link.endpoints) & self.failed)

    def usable_plant_links(self) -> list[Link]:
        return [l for l in self.plant_links() if self.usable(l)]

    def path_nodes(self, source: str, path: Sequence[str]) -> list[str]:
        nodes = [source]
        for lid in path:
            nodes.append(self.link(lid).other(nodes[-1]))
        return nodes

    def path_usable(self, source: str, path: Sequence[str]) -> bool:
        return all(self.usable(self.link(lid)) for lid in path) and not (
            set(self.path_nodes(source, path)) & self.failed
        )

    def with_failures(self, failed: Iterable[str]) -> "Topology":
        """Mark link ids down and entity ids failed; unknown ids are ignored."""
        failed = set(failed)
        links = tuple(replace(l, up=False) if l.id in failed else l for l in self.links)
        ents = {eid for eid in failed if self.has_entity(eid)}
        return replace(self, links=links, failed=self.failed | ents)


# ----------------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------------


def _check_unique(kind: str, ids: Iterable[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise TopologyError(f"duplicate {kind} id {i!r}")
        seen.add(i)


def build_topology(config) -> Topology:
    """Build a validated :class:`Topology` from a parsed scenario config.

    When the monitor is enabled a VirtualMonitor is created on every host
    (default: each DgiNode and Microcontroller), each joined to the
    PhysicalOverseer by its own MonitorNet link, and the monitor entities
    form their own security domain.
    """
    entities: list[Entity] = []
    for spec in config.entities:
        kind = EntityKind(spec.kind)
        if kind in MONITOR_KINDS:
            raise TopologyError(
                f"entity {spec.id!r}: {kind.value} entities are created from the monitor section"
            )
        entities.append(Entity(spec.id, kind))
    plant_ids = {e.id for e in entities}

    links = [
        Link(s.id, (s.a, s.b), Medium(s.medium), Network(s.network), bool(s.up))
        for s in config.links
    ]

    mon = config.monitor
    overseer = None
    monitor_ids: set[str] = set()
    if mon.enabled:
        if not mon.overseer:
            raise TopologyError("monitor enabled but no PhysicalOverseer declared")
        overseer = mon.overseer
        hosts = list(mon.hosts) if mon.hosts else [e.id for e in entities if e.kind in HOST_KINDS]
        for h in hosts:
            if h not in plant_ids:
                raise TopologyError(f"unresolved reference: monitor host {h!r}")
        entities.append(Entity(overseer, EntityKind.PhysicalOverseer))
        monitor_ids.add(overseer)
        for h in hosts:
            vm = Entity(f"vm-{h}", EntityKind.VirtualMonitor, host=h)
            entities.append(vm)
            monitor_ids.add(vm.id)
            links.append(Link(f"mn-{h}", (vm.id, overseer), Medium.Cyber, Network.MonitorNet))

    _check_unique("entity", (e.id for e in entities))
    _check_unique("link", (l.id for l in links))
    clash = {e.id for e in entities} & {l.id for l in links}
    if clash:
        raise TopologyError(f"id used for both an entity and a link: {sorted(clash)[0]!r}")

    all_ids = plant_ids | monitor_ids
    for l in links:
        for end in l.endpoints:
            if end not in all_ids:
                raise TopologyError(f"unresolved reference: link {l.id!r} endpoint {end!r}")
        if l.endpoints[0] == l.endpoints[1]:
            raise TopologyError(f"link {l.id!r} has identical endpoints")
        if l.network is Network.MonitorNet and set(l.endpoints) & plant_ids:
            raise TopologyError(f"MonitorNet link {l.id!r} touches plant-only entity")
        if l.network is Network.PlantNet and set(l.endpoints) & monitor_ids:
            raise TopologyError(f"PlantNet link {l.id!r} touches a monitor entity")

    channels = []
    for c in config.channels:
        for end in (c.source, c.destination):
            if end not in plant_ids:
                raise TopologyError(f"unresolved reference: channel {c.id!r} endpoint {end!r}")
        if c.source == c.destination:
            raise TopologyError(f"channel {c.id!r} has identical endpoints")
        channels.append(Channel(c.id, c.source, c.destination))
    _check_unique("channel", (c.id for c in channels))

    domains = []
    for d in config.domains:
        for m in d.members:
            if m not in plant_ids:
                raise TopologyError(f"unresolved reference: domain {d.id!r} member {m!r}")
        domains.append(SecurityDomain(d.id, frozenset(d.members)))
    if mon.enabled:
        domains.append(SecurityDomain(mon.domain, frozenset(monitor_ids)))
    _check_unique("domain", (d.id for d in domains))
    covered = set().union(*(d.members for d in domains)) if domains else set()
    for e in entities:
        if e.id not in covered:
            raise TopologyError(f"entity {e.id!r} belongs to no security domain")

    topo = Topology(tuple(entities), tuple(links), tuple(channels), tuple(domains), overseer=overseer)
    _check_plant_connected(topo)
    return topo


def _check_plant_connected(topo: Topology) -> None:
    plant = [e.id for e in topo.plant_entities()]
    if not plant:
        raise TopologyError("topology declares no plant entities")
    adj = _adjacency(topo)
    seen = {plant[0]}
    queue = deque([plant[0]])
    while queue:
        u = queue.popleft()
        for _, v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    missing = [p for p in plant if p not in seen]
    if missing:
        raise TopologyError(f"plant network is not connected: {missing[0]!r} unreachable")


def _adjacency(topo: Topology) -> dict[str, list[tuple[str, str]]]:
    """node -> [(link id, neighbour)] over usable PlantNet links, sorted by link id."""
    adj: dict[str, list[tuple[str, str]]] = {}
    for l in sorted(topo.usable_plant_links(), key=lambda l: l.id):
        a, b = l.endpoints
        adj.setdefault(a, []).append((l.id, b))
        adj.setdefault(b, []).append((l.id, a))
    return adj


# ----------------------------------------------------------------------------
# link-disjoint paths
# ----------------------------------------------------------------------------


def disjoint_paths(topology: Topology, channel: Channel, k: int) -> list[Path]:
    """Up to ``k`` pairwise link-disjoint simple paths between the channel endpoints.

    Unit-capacity augmenting paths (BFS, ties broken by link id) over usable
    PlantNet links.  Paths are returned shortest first, then by link ids.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s, t = channel.source, channel.destination
    if s in topology.failed or t in topology.failed:
        raise NoPathError(f"channel {channel.id!r}: endpoint failed")
    adj = _adjacency(topology)
    ends = {l.id: l.endpoints for l in topology.links}
    flow: dict[str, int] = {}  # +1: a->b, -1: b->a

    def residual(lid: str, u: str) -> int:
        f = flow.get(lid, 0)
        return 1 - f if ends[lid][0] == u else 1 + f

    count = 0
    while count < k:
        pred: dict[str, tuple[str, str]] = {s: None}
        queue = deque([s])
        while queue and t not in pred:
            u = queue.popleft()
            for lid, v in adj.get(u, ()):
                if v not in pred and residual(lid, u) > 0:
                    pred[v] = (lid, u)
                    queue.append(v)
        if t not in pred:
            break
        v = t
        while pred[v] is not None:
            lid, u = pred[v]
            flow[lid] = flow.get(lid, 0) + (1 if ends[lid][0] == u else -1)
            v = u
        count += 1

    if count == 0:
        raise NoPathError(f"channel {channel.id!r}: endpoints disconnected")
    return sorted(_decompose(s, t, flow, ends), key=lambda p: (len(p), p))


def _decompose(s: str, t: str, flow: dict[str, int], ends: dict) -> list[Path]:
    out: dict[str, list[tuple[str, str]]] = {}
    for lid in sorted(flow):
        f = flow[lid]
        if f == 0:
            continue
        a, b = ends[lid]
        u, v = (a, b) if f > 0 else (b, a)
        out.setdefault(u, []).append((lid, v))
    paths = []
    while out.get(s):
        nodes, links = [s], []
        while nodes[-1] != t:
            lid, v = out[nodes[-1]].pop(0)
            if v in nodes:  # drop the cycle just closed
                i = nodes.index(v)
                del nodes[i + 1 :]
                del links[i:]
                continue
            nodes.append(v)
            links.append(lid)
        paths.append(tuple(links))
    return paths


def disjoint_capacity(topology: Topology, channel: Channel, limit: int = 64) -> int:
    """Number of link-disjoint paths (0 when disconnected), capped at ``limit``."""
    try:
        return len(disjoint_paths(topology, channel, limit))
    except NoPathError:
        return 0
