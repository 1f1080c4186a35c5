"""Scenario-configuration documents (YAML).

``parse_config`` turns a document into a :class:`ScenarioConfig`;
``dump_config`` writes it back in canonical form, so
``parse_config(dump_config(parse_config(text))) == parse_config(text)``.
The format is described in README.md.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .attacks import AttackScenario, validate_scenario
from .monitor import MonitorConfig
from .plant import LOSSES, SIGNALS, Invariant, PlantProfile, conservation_operands
from .topology import EntityKind, Medium, Network, Topology, TopologyError, build_topology


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EntitySpec:
    id: str
    kind: str


@dataclass(frozen=True)
class LinkSpec:
    id: str
    a: str
    b: str
    medium: str = "Cyber"
    network: str = "PlantNet"
    up: bool = True


@dataclass(frozen=True)
class ChannelSpec:
    id: str
    source: str
    destination: str


@dataclass(frozen=True)
class DomainSpec:
    id: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class PlantSpec:
    balancing: str | None = None
    variation: float = 0.2
    hold: int = 4
    loss_fraction: float = 1.0 / 64
    default_nominal: tuple[float, float] = (4.0, 3.0)
    nominal: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    history_window: int = 2


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    epochs: int
    entities: tuple[EntitySpec, ...]
    links: tuple[LinkSpec, ...] = ()
    channels: tuple[ChannelSpec, ...] = ()
    domains: tuple[DomainSpec, ...] = ()
    plant: PlantSpec = PlantSpec()
    invariants: tuple[Invariant, ...] = ()
    monitor: MonitorConfig = MonitorConfig()
    attacks: tuple[AttackScenario, ...] = ()
    trials: int = 0
    focus_channel: str | None = None
    name: str = ""

    def balancing(self) -> str:
        if self.plant.balancing:
            return self.plant.balancing
        return self.entities[0].id

    def profile(self, topology: Topology) -> PlantProfile:
        nominal = {
            e.id: tuple(self.plant.nominal.get(e.id, self.plant.default_nominal))
            for e in topology.plant_entities()
        }
        return PlantProfile(
            nominal, self.balancing(), self.plant.variation, self.plant.hold, self.plant.loss_fraction
        )

    def with_monitor(self, enabled: bool) -> "ScenarioConfig":
        return replace(self, monitor=replace(self.monitor, enabled=enabled))

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


# ----------------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------------


def _take(doc: Mapping, where: str, required=(), optional=()) -> dict:
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(doc) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{where}: unknown key {sorted(unknown)[0]!r}")
    for k in required:
        if k not in doc:
            raise ConfigError(f"{where}: missing required key {k!r}")
    return dict(doc)


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return v


def _num(v: Any, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _pair(v: Any, where: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{where}: expected [generation, load]")
    return (_num(v[0], where), _num(v[1], where))


def _list(doc: Mapping, key: str) -> list:
    v = doc.get(key) or []
    if not isinstance(v, list):
        raise ConfigError(f"{key}: expected a list")
    return v


def parse_config(text: str) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    doc = _take(
        doc, "document",
        required=("seed", "epochs", "entities"),
        optional=("name", "trials", "focus_channel", "links", "channels", "domains",
                  "plant", "invariants", "monitor", "attacks"),
    )
    seed = _int(doc["seed"], "seed")
    epochs = _int(doc["epochs"], "epochs")
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    trials = _int(doc.get("trials", 0), "trials")
    if trials < 0:
        raise ConfigError("trials must be >= 0")

    entities = []
    for i, e in enumerate(_list(doc, "entities")):
        e = _take(e, f"entities[{i}]", required=("id", "kind"))
        if e["kind"] not in EntityKind.__members__:
            raise ConfigError(f"entities[{i}]: unknown kind {e['kind']!r}")
        entities.append(EntitySpec(str(e["id"]), e["kind"]))
    if not entities:
        raise ConfigError("entities: at least one entity required")

    links = []
    for i, l in enumerate(_list(doc, "links")):
        l = _take(l, f"links[{i}]", required=("id", "endpoints"), optional=("medium", "network", "up"))
        ends = l["endpoints"]
        if not isinstance(ends, list) or len(ends) != 2:
            raise ConfigError(f"links[{i}]: endpoints must be a pair")
        medium = l.get("medium", "Cyber")
        network = l.get("network", "PlantNet")
        if medium not in Medium.__members__ or network not in Network.__members__:
            raise ConfigError(f"links[{i}]: bad medium or network")
        links.append(LinkSpec(str(l["id"]), str(ends[0]), str(ends[1]), medium, network, bool(l.get("up", True))))

    channels = []
    for i, c in enumerate(_list(doc, "channels")):
        c = _take(c, f"channels[{i}]", required=("id", "source", "destination"))
        channels.append(ChannelSpec(str(c["id"]), str(c["source"]), str(c["destination"])))

    domains = []
    for i, d in enumerate(_list(doc, "domains")):
        d = _take(d, f"domains[{i}]", required=("id", "members"))
        domains.append(DomainSpec(str(d["id"]), tuple(str(m) for m in d["members"])))

    plant = _parse_plant(doc.get("plant") or {})
    balancing = plant.balancing or entities[0].id
    plant_ids = [e.id for e in entities]

    invariants = []
    for i, inv in enumerate(_list(doc, "invariants")):
        inv = _take(inv, f"invariants[{i}]", required=("id", "kind", "operands"),
                    optional=("epsilon", "lower", "upper", "rate"))
        ops = inv["operands"]
        if ops == "conservation":
            ops = conservation_operands(plant_ids, balancing)
        elif isinstance(ops, list):
            ops = tuple(tuple(o) for o in ops)
            if any(len(o) != 3 for o in ops):
                raise ConfigError(f"invariants[{i}]: operands are [entity, signal, +1|-1]")
        else:
            raise ConfigError(f"invariants[{i}]: operands must be a list or 'conservation'")
        try:
            invariants.append(Invariant(
                str(inv["id"]), inv["kind"], ops,
                _num(inv.get("epsilon", 0.0), f"invariants[{i}].epsilon"),
                *(None if inv.get(k) is None else _num(inv[k], f"invariants[{i}].{k}")
                  for k in ("lower", "upper", "rate")),
            ))
        except ValueError as exc:
            raise ConfigError(f"invariants[{i}]: {exc}") from None

    monitor = _parse_monitor(doc.get("monitor") or {})

    attacks = []
    for i, a in enumerate(_list(doc, "attacks")):
        a = _take(a, f"attacks[{i}]", required=("id", "kind", "target"),
                  optional=("start_epoch", "end_epoch", "parameters"))
        try:
            attacks.append(AttackScenario(
                str(a["id"]), a["kind"], str(a["target"]),
                _int(a.get("start_epoch", 0), f"attacks[{i}].start_epoch"),
                None if a.get("end_epoch") is None else _int(a["end_epoch"], f"attacks[{i}].end_epoch"),
                dict(a.get("parameters") or {}),
            ))
        except ValueError as exc:
            raise ConfigError(f"attacks[{i}]: {exc}") from None

    return ScenarioConfig(
        seed=seed, epochs=epochs, entities=tuple(entities), links=tuple(links),
        channels=tuple(channels), domains=tuple(domains), plant=plant,
        invariants=tuple(invariants), monitor=monitor, attacks=tuple(attacks),
        trials=trials, focus_channel=doc.get("focus_channel"), name=str(doc.get("name", "")),
    )


def _parse_plant(p: Mapping) -> PlantSpec:
    p = _take(p, "plant", optional=("balancing", "variation", "hold", "loss_fraction",
                                   "default_nominal", "nominal", "history_window"))
    nominal = {}
    for eid, v in (p.get("nominal") or {}).items():
        nominal[str(eid)] = _pair(v, f"plant.nominal.{eid}")
    spec = PlantSpec(
        balancing=p.get("balancing"),
        variation=_num(p.get("variation", 0.2), "plant.variation"),
        hold=_int(p.get("hold", 4), "plant.hold"),
        loss_fraction=_num(p.get("loss_fraction", 1.0 / 64), "plant.loss_fraction"),
        default_nominal=_pair(p.get("default_nominal", [4.0, 3.0]), "plant.default_nominal"),
        nominal=nominal,
        history_window=_int(p.get("history_window", 2), "plant.history_window"),
    )
    if not 0 <= spec.variation <= 1:
        raise ConfigError("plant.variation must lie in [0, 1]")
    if spec.loss_fraction < 0:
        raise ConfigError("plant.loss_fraction must be >= 0")
    if spec.history_window < 1:
        raise ConfigError("plant.history_window must be >= 1")
    return spec


def _parse_monitor(m: Mapping) -> MonitorConfig:
    m = _take(m, "monitor", optional=("enabled", "initial_decoys", "growth_probability", "max_decoys",
                                     "verification_cycle", "overseer", "hosts", "domain"))
    try:
        return MonitorConfig(
            enabled=bool(m.get("enabled", False)),
            initial_decoys=_int(m.get("initial_decoys", 0), "monitor.initial_decoys"),
            growth_probability=_num(m.get("growth_probability", 0.0), "monitor.growth_probability"),
            max_decoys=_int(m.get("max_decoys", 0), "monitor.max_decoys"),
            verification_cycle=_int(m.get("verification_cycle", 1), "monitor.verification_cycle"),
            overseer=m.get("overseer"),
            hosts=tuple(str(h) for h in m.get("hosts") or ()),
            domain=str(m.get("domain", "mon")),
        )
    except ValueError as exc:
        raise ConfigError(f"monitor: {exc}") from None


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


# ----------------------------------------------------------------------------
# validation and serialization
# ----------------------------------------------------------------------------


def validate_config(cfg: ScenarioConfig) -> Topology:
    """Resolve every reference; returns the built topology."""
    try:
        topo = build_topology(cfg)
    except TopologyError as exc:
        raise ConfigError(str(exc)) from None
    plant_ids = {e.id for e in topo.plant_entities()}
    bal = cfg.balancing()
    if bal not in plant_ids:
        raise ConfigError(f"unresolved reference: plant.balancing {bal!r}")
    for eid in cfg.plant.nominal:
        if eid not in plant_ids:
            raise ConfigError(f"unresolved reference: plant.nominal {eid!r}")
    for inv in cfg.invariants:
        for e, s, _ in inv.operands:
            if e not in plant_ids:
                raise ConfigError(f"invariant {inv.id!r}: unresolved entity {e!r}")
            if s not in SIGNALS and not (s == LOSSES and e == bal):
                raise ConfigError(f"invariant {inv.id!r}: {e}.{s} is never emitted")
    ids = [a.id for a in cfg.attacks]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate attack id")
    for a in cfg.attacks:
        try:
            validate_scenario(a, topo)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.focus_channel is not None and cfg.focus_channel not in {c.id for c in topo.channels}:
        raise ConfigError(f"unresolved reference: focus_channel {cfg.focus_channel!r}")
    return topo


def to_document(cfg: ScenarioConfig) -> dict:
    doc: dict[str, Any] = {}
    if cfg.name:
        doc["name"] = cfg.name
    doc["seed"] = cfg.seed
    doc["epochs"] = cfg.epochs
    doc["trials"] = cfg.trials
    if cfg.focus_channel is not None:
        doc["focus_channel"] = cfg.focus_channel
    doc["entities"] = [{"id": e.id, "kind": e.kind} for e in cfg.entities]
    doc["links"] = [
        {"id": l.id, "endpoints": [l.a, l.b], "medium": l.medium, "network": l.network, "up": l.up}
        for l in cfg.links
    ]
    doc["channels"] = [{"id": c.id, "source": c.source, "destination": c.destination} for c in cfg.channels]
    doc["domains"] = [{"id": d.id, "members": list(d.members)} for d in cfg.domains]
    p = cfg.plant
    plant: dict[str, Any] = {}
    if p.balancing is not None:
        plant["balancing"] = p.balancing
    plant.update(
        variation=p.variation, hold=p.hold, loss_fraction=p.loss_fraction,
        default_nominal=list(p.default_nominal),
        nominal={k: list(v) for k, v in p.nominal.items()},
        history_window=p.history_window,
    )
    doc["plant"] = plant
    invs = []
    for inv in cfg.invariants:
        d = {"id": inv.id, "kind": inv.kind.value, "epsilon": inv.epsilon,
             "operands": [list(o) for o in inv.operands]}
        for k in ("lower", "upper", "rate"):
            if getattr(inv, k) is not None:
                d[k] = getattr(inv, k)
        invs.append(d)
    doc["invariants"] = invs
    m = cfg.monitor
    mon: dict[str, Any] = {
        "enabled": m.enabled, "initial_decoys": m.initial_decoys,
        "growth_probability": m.growth_probability, "max_decoys": m.max_decoys,
        "verification_cycle": m.verification_cycle,
    }
    if m.overseer is not None:
        mon["overseer"] = m.overseer
    if m.hosts:
        mon["hosts"] = list(m.hosts)
    mon["domain"] = m.domain
    doc["monitor"] = mon
    attacks = []
    for a in cfg.attacks:
        d = {"id": a.id, "kind": a.kind.value, "target": a.target, "start_epoch": a.start_epoch}
        if a.end_epoch is not None:
            d["end_epoch"] = a.end_epoch
        if a.parameters:
            d["parameters"] = dict(a.parameters)
        attacks.append(d)
    doc["attacks"] = attacks
    return doc


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_document(cfg), sort_keys=False, default_flow_style=None)
