"""Scenario runner, Monte-Carlo driver, reports and event-log replay.

One epoch of :class:`Runner`::

    step_plant -> generate_paths -> transmit -> inject -> deliver
               -> receive_and_verify -> oversee -> (on Detect) reroute

A run is single-threaded and a pure function of its config; every random
draw comes from a named stream of the run seed.
"""

from __future__ import annotations

import io
import csv
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .analysis import (
    EntropyRow,
    entropy_empirical,
    entropy_table_csv,
    entropy_table_text,
    msdnd_evaluate,
    msdnd_from_simulation,
    observer_domain,
)
from .attacks import SimState, attack_outcome, inject, play_single_event
from .config import ConfigError, ScenarioConfig, dump_config, validate_config
from .eventlog import EventLog
from .monitor import (
    CHANNEL_DOWN,
    FORWARD,
    REVERSE,
    Cause,
    FrameError,
    FrameKind,
    OverseerOffline,
    OverseerState,
    PathSet,
    Transmission,
    VerifyOutcome,
    decode_payload,
    encode_payload,
    generate_paths,
    monitor_digest,
    oversee,
    receive_and_verify,
    reroute,
    transmit,
    verify_payload,
)
from .plant import Reading, initial_state, step_plant
from .rng import Streams, stream
from .topology import NoPathError, Topology, disjoint_paths


@dataclass
class _Pending:
    epoch: int
    channel: str
    payload: tuple[Reading, ...]
    history: tuple[tuple[Reading, ...], ...]
    real: int
    attack: str | None


@dataclass
class OutcomeRow:
    attack: str
    kind: str
    target: str
    start_epoch: int
    detected: bool
    detection_epoch: int | None
    latency: int | None
    payload_accepted_corrupt: bool


OUTCOME_FIELDS = (
    "attack", "kind", "target", "start_epoch", "detected",
    "detection_epoch", "latency", "payload_accepted_corrupt",
)


@dataclass
class ScenarioReport:
    name: str
    seed: int
    config_digest: str
    epochs: int
    monitor_enabled: bool
    outcomes: list[OutcomeRow]
    entropy: list[EntropyRow]
    msdnd: list[tuple[str, bool, str]]  # (channel, monitor enabled, verdict line)
    counts: dict[str, int]
    channels_down: list[tuple[int, str]]
    warnings: list[str]
    events: EventLog = field(repr=False)
    event_log: str = "events.jsonl"

    def outcome(self, attack: str) -> OutcomeRow:
        return next(o for o in self.outcomes if o.attack == attack)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(OUTCOME_FIELDS)
        for o in self.outcomes:
            w.writerow([
                o.attack, o.kind, o.target, o.start_epoch, int(o.detected),
                "" if o.detection_epoch is None else o.detection_epoch,
                "" if o.latency is None else o.latency,
                int(o.payload_accepted_corrupt),
            ])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"scenario: {self.name or '(unnamed)'}",
            f"seed: {self.seed}",
            f"config digest: {self.config_digest}",
            f"epochs: {self.epochs}",
            f"monitor: {'enabled' if self.monitor_enabled else 'disabled'}",
            f"event log: {self.event_log}",
            "",
            "attack outcomes:",
        ]
        if not self.outcomes:
            lines.append("  (no attacks scripted)")
        for o in self.outcomes:
            det = f"detected at epoch {o.detection_epoch} (latency {o.latency})" if o.detected else "undetected"
            lines.append(
                f"  {o.attack} {o.kind} on {o.target} from epoch {o.start_epoch}: {det}; "
                f"corrupt payload accepted: {'yes' if o.payload_accepted_corrupt else 'no'}"
            )
        lines += ["", "event counts:"]
        lines += [f"  {k}: {v}" for k, v in sorted(self.counts.items())]
        if self.channels_down:
            lines += ["", "channels down:"]
            lines += [f"  epoch {e}: {c}" for e, c in self.channels_down]
        lines += ["", "entropy (uniform attacker over flow events):", entropy_table_text(self.entropy)]
        lines += ["", "MSDND verdicts:"]
        for ch, mon, verdict in self.msdnd:
            lines.append(f"  {ch} ({'with' if mon else 'without'} monitor): {verdict}")
        if self.warnings:
            lines += ["", "warnings:"] + [f"  {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"

    def write(self, outdir: str | Path) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text())
        (out / "report.csv").write_text(self.to_csv())
        (out / "entropy.csv").write_text(entropy_table_csv(self.entropy))
        self.events.write(out / self.event_log)


# ----------------------------------------------------------------------------
# scenario runner
# ----------------------------------------------------------------------------


class Runner:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.topology = validate_config(cfg)  # the monitor's planning view
        self.streams = Streams(cfg.seed)
        self.log = EventLog()
        self.state = SimState(physical=self.topology)
        self.plant = initial_state(self.topology, cfg.profile(self.topology))
        self.history: deque[tuple[Reading, ...]] = deque(maxlen=cfg.plant.history_window + 1)
        self.issued: dict[str, PathSet] = {}
        self.down: set[str] = set()
        self.pending: list[_Pending] = []
        self.monitor = cfg.monitor.enabled
        self.overseer_offline = False
        self.channels_down: list[tuple[int, str]] = []
        self.n_seen: dict[str, set[int]] = {}

    # -- main loop ------------------------------------------------------------
    def run(self) -> ScenarioReport:
        if not self.monitor:
            self._plan_static()
        for t in range(1, self.cfg.epochs + 1):
            self.step(t)
        return self._report()

    def step(self, t: int) -> None:
        st = self.state
        st.begin_epoch()
        self.plant, readings = step_plant(self.plant, st.physical, self.streams.get("plant"))
        self.history.append(tuple(readings))
        self.log.emit(t, "plant", "readings", readings=[[r.source, r.signal, r.value] for r in readings])
        if self.monitor:
            self._plan(t)
        st.path_sets = dict(self.issued)
        self._transmit(t, readings)
        for sc in self.cfg.attacks:
            inject(sc, st, t, self.streams.get("attacker", sc.id))
        self._deliver()
        if self.monitor:
            detects = self._verify(t)
            detects += self._oversee(t)
            self._react(t, detects)
        else:
            self._deliver_plain(t)

    # -- planning -------------------------------------------------------------
    def _plan_static(self) -> None:
        for ch in self.topology.channels:
            try:
                path = disjoint_paths(self.topology, ch, 1)[0]
            except NoPathError:
                self._channel_down(0, ch.id, "no path")
                continue
            ps = PathSet(ch.id, ch.source, ch.destination, 0, (path,), (0, 0), 0)
            self.issued[ch.id] = ps
            self.log.emit(0, "monitor", "pathset", **ps.as_record())

    def _secrets_reachable(self, ps_or_channel) -> bool:
        phys = self.state.physical
        if phys.overseer in phys.failed:
            return False
        for host in (ps_or_channel.source, ps_or_channel.destination):
            vm = phys.monitor_of(host)
            if vm is not None and not phys.link(f"mn-{host}").up:
                return False
        return True

    def _plan(self, t: int) -> None:
        for ch in self.topology.channels:
            if ch.id in self.down:
                continue
            prev = self.issued.get(ch.id)
            if prev is not None and not self._secrets_reachable(ch):
                self.log.emit(t, "monitor", "secrets_stale", channel=ch.id, kept_epoch=prev.epoch)
                continue
            try:
                ps = generate_paths(self.topology, ch, prev, self.cfg.monitor,
                                    self.streams.get("paths", ch.id), epoch=t, run_seed=self.cfg.seed)
            except NoPathError:
                self._channel_down(t, ch.id, "no disjoint path")
                continue
            self.issued[ch.id] = ps
            self.n_seen.setdefault(ch.id, set()).add(ps.n)
            self.log.emit(t, "monitor", "pathset", **ps.as_record())

    def _channel_down(self, t: int, cid: str, reason: str) -> None:
        self.down.add(cid)
        self.issued.pop(cid, None)
        self.channels_down.append((t, cid))
        self.log.emit(t, "monitor", "channel_down", channel=cid, reason=reason)

    # -- wire -----------------------------------------------------------------
    def _transmit(self, t: int, readings: Sequence[Reading]) -> None:
        st = self.state
        by_src: dict[str, list[Reading]] = {}
        for r in readings:
            by_src.setdefault(r.source, []).append(r)
        for cid in sorted(self.issued):
            ps = self.issued[cid]
            plain = encode_payload(by_src.get(ps.source, []), t)
            st.plaintext[cid] = plain
            if self.monitor:
                fwd = transmit(plain, ps, direction=FORWARD, epoch=t)
                rev = transmit(None, ps, direction=REVERSE, epoch=t, frame_length=len(plain))
                st.wire[cid] = fwd + rev
            else:
                st.wire[cid] = [Transmission(0, plain, FrameKind.Real, FORWARD)]

    def _deliver(self) -> None:
        """Frames on physically broken paths never arrive."""
        st = self.state
        for cid, frames in st.wire.items():
            ps = st.path_sets[cid]
            st.wire[cid] = [f for f in frames if st.physical.path_usable(ps.source, ps.paths[f.path])]

    # -- verification ---------------------------------------------------------
    def _verify(self, t: int) -> list[VerifyOutcome]:
        st = self.state
        found = []
        for cid in sorted(st.wire):
            ps = self.issued[cid]
            frames = st.wire[cid]
            for direction in (FORWARD, REVERSE):
                receiver = ps.endpoint(1 - direction)
                if receiver in st.infected or receiver in st.physical.failed:
                    continue  # a hostage or broken receiver verifies nothing
                mine = [f for f in frames if f.direction == direction]
                self.log.emit(t, "wire", "frames", channel=cid, direction=direction,
                              frames=[[f.path, f.frame.hex()] for f in mine])
                cover = direction == REVERSE
                out = receive_and_verify(mine, ps, direction=direction, epoch=t, cover=cover, check=False)
                if out.detected:
                    found.append(out)
                    self._log_detect(t, out, t, self._attribute(out))
                elif not cover:
                    self.pending.append(_Pending(
                        t, cid, out.payload, tuple(self.history), ps.real_index[FORWARD],
                        st.corrupted.get(cid),
                    ))
        if t % self.cfg.monitor.verification_cycle == 0:
            for p in self.pending:
                note = verify_payload(p.payload, self.cfg.invariants, p.history)
                if note:
                    out = VerifyOutcome.detect(Cause.InvariantViolation, subject=p.channel,
                                               paths=(p.real,), note=note)
                    found.append(out)
                    self._log_detect(t, out, p.epoch, p.attack)
                else:
                    self.log.emit(t, "monitor", "accept", channel=p.channel, direction=FORWARD,
                                  frame_epoch=p.epoch, corrupt=p.attack is not None, attack=p.attack)
            self.pending.clear()
        return found

    def _log_detect(self, t: int, out: VerifyOutcome, frame_epoch: int, attack: str | None) -> None:
        self.log.emit(t, "monitor", "detect", subject=out.subject, direction=out.direction,
                      cause=out.cause.value, paths=list(out.paths), note=out.note,
                      frame_epoch=frame_epoch, attack=attack)

    def _attribute(self, out: VerifyOutcome) -> str | None:
        """Ground-truth attack behind a detection (None would be a false alarm)."""
        st = self.state
        if out.cause is Cause.OverseerDivergence:
            host = st.physical.entity(out.subject).host
            for key in (host, f"mn-{host}", st.physical.overseer):
                if key in st.infected:
                    return st.infected[key]
                if key in st.downed:
                    return st.downed[key]
            return None
        ps = self.issued[out.subject]
        for j in out.paths:
            hit = st.tampered.get((out.subject, out.direction, j))
            if hit:
                return hit
            if out.cause is Cause.PathLoss:
                for el in (*ps.paths[j], *st.physical.path_nodes(ps.source, ps.paths[j])):
                    if el in st.downed:
                        return st.downed[el]
        return None

    def _oversee(self, t: int) -> list[VerifyOutcome]:
        topo, st = self.topology, self.state
        if not topo.monitor_enabled:
            return []
        expected = {}
        for vm in topo.virtual_monitors():
            if vm.host in topo.failed or not topo.link(f"mn-{vm.host}").up:
                continue  # already quarantined
            expected[vm.id] = monitor_digest(vm.host, self.issued)
        reachable = set()
        if st.physical.overseer not in st.physical.failed:
            reachable = {l.other(topo.overseer) for l in st.physical.monitor_links() if l.up}
        reported = {}
        for vm in topo.virtual_monitors():
            if vm.host in st.infected or vm.host in st.physical.failed:
                continue  # no heartbeat from a hostage or broken host
            reported[vm.id] = monitor_digest(vm.host, self.issued)
        self.log.emit(t, "overseer", "heartbeat", expected=expected, reported=reported,
                      reachable=sorted(reachable))
        try:
            outs = oversee(reported, OverseerState(expected, reachable))
        except OverseerOffline as exc:
            if not self.overseer_offline:
                self.log.emit(t, "overseer", "offline", error=str(exc))
            self.overseer_offline = True
            return []
        self.overseer_offline = False
        for out in outs:
            self._log_detect(t, out, t, self._attribute(out))
        return outs

    # -- response -------------------------------------------------------------
    def _react(self, t: int, detects: list[VerifyOutcome]) -> None:
        if not detects:
            return
        phys = self.state.physical
        failed: set[str] = set()
        flagged_hosts = set()
        for out in detects:
            if out.cause is Cause.OverseerDivergence:
                host = self.topology.entity(out.subject).host
                mn = f"mn-{host}"
                if not phys.link(mn).up:
                    failed.add(mn)
                else:
                    failed.add(host)
                    flagged_hosts.add(host)
        for out in detects:
            if out.cause is Cause.OverseerDivergence or out.subject not in self.issued:
                continue
            ps = self.issued[out.subject]
            for j in out.paths:
                path = ps.paths[j]
                nodes = phys.path_nodes(ps.source, path)
                if out.cause is Cause.PathLoss:
                    # probe hop by hop for the broken element
                    bad = [l for l in path if not phys.link(l).up] + [n for n in nodes if n in phys.failed]
                    failed.update(bad or path)
                elif not flagged_hosts & set(nodes):
                    failed.update(path)  # quarantine the tampered route
        failed -= set(self.topology.failed) | {l.id for l in self.topology.links if not l.up}
        if not failed:
            return
        active = [c for c in self.topology.channels if c.id in self.issued]
        self.topology, updates = reroute(
            self.topology, failed, active, self.issued, self.streams.get("reroute"),
            epoch=t, run_seed=self.cfg.seed,
        )
        records = []
        for cid in sorted(updates):
            upd = updates[cid]
            if upd == CHANNEL_DOWN:
                self._channel_down(t, cid, "no surviving path after reroute")
            else:
                self.issued[cid] = upd
                records.append(upd.as_record())
        self.log.emit(t, "monitor", "reroute", failed=sorted(failed),
                      updates={c: (u if u == CHANNEL_DOWN else u.n) for c, u in sorted(updates.items())},
                      pathsets=records)

    def _deliver_plain(self, t: int) -> None:
        st = self.state
        for cid in sorted(st.wire):
            frames = st.wire[cid]
            if not frames:
                self.log.emit(t, "plant", "lost", channel=cid)
                continue
            frame = frames[0].frame
            attack = st.tampered.get((cid, FORWARD, 0))
            try:
                decode_payload(frame)
                garbled = False
            except FrameError:
                garbled = True
            self.log.emit(t, "plant", "deliver", channel=cid, flagged=False, garbled=garbled,
                          corrupt=frame != st.plaintext[cid], attack=attack)

    # -- report ---------------------------------------------------------------
    def _report(self) -> ScenarioReport:
        cfg = self.cfg
        events = self.log.records
        outcomes = []
        for sc in cfg.attacks:
            o = attack_outcome(events, sc)
            outcomes.append(OutcomeRow(
                sc.id, sc.kind.value, sc.target, sc.start_epoch, o.detected,
                o.detection_epoch, o.latency(sc.start_epoch), o.payload_accepted_corrupt,
            ))
        counts: dict[str, int] = {}
        for ev in events:
            key = ev["type"]
            if key == "detect":
                key = f"detect:{ev['payload']['cause']}"
            if key in ("plant", "readings", "frames", "heartbeat", "pathset"):
                continue
            counts[key] = counts.get(key, 0) + 1
        focus = focus_channel(cfg, self.topology)
        ns = sorted(self.n_seen.get(focus, set())) if focus else []
        entropy = [EntropyRow.analytic(n) for n in (ns or [0])]
        msdnd = []
        if focus:
            ch = self.topology.channel(focus)
            obs = observer_domain(self.topology, ch)
            for enabled in (False, True):
                model = msdnd_from_simulation(self.topology, enabled, ch, cfg.invariants, cfg.monitor.domain)
                msdnd.append((focus, enabled, msdnd_evaluate(model, obs).line()))
        return ScenarioReport(
            cfg.name, cfg.seed, cfg.digest(), cfg.epochs, self.monitor, outcomes, entropy, msdnd,
            counts, self.channels_down, list(self.state.warnings), self.log,
        )


def focus_channel(cfg: ScenarioConfig, topology: Topology | None = None) -> str | None:
    if cfg.focus_channel:
        return cfg.focus_channel
    for a in cfg.attacks:
        if a.kind.value == "FalseDataInjection":
            return a.target
    return cfg.channels[0].id if cfg.channels else None


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Run every epoch of ``cfg`` and score the attacks."""
    return Runner(cfg).run()


# ----------------------------------------------------------------------------
# replay
# ----------------------------------------------------------------------------


def replay(events: Sequence[dict], cfg: ScenarioConfig) -> list[str]:
    """Recompute every verification outcome from the logged draws and frames.

    Returns a list of mismatches (empty when the log is consistent).
    """
    history: deque = deque(maxlen=cfg.plant.history_window + 1)
    sets: dict[str, PathSet] = {}
    expected: dict[tuple, tuple] = {}
    logged: dict[tuple, tuple] = {}
    problems = []
    for ev in events:
        kind, data, t = ev["type"], ev["payload"], ev["epoch"]
        if kind == "readings":
            history.append(tuple(Reading(s, g, v, t) for s, g, v in data["readings"]))
        elif kind == "pathset":
            ps = PathSet.from_record(data)
            sets[ps.channel] = ps
        elif kind == "reroute":
            for rec in data["pathsets"]:
                ps = PathSet.from_record(rec)
                sets[ps.channel] = ps
        elif kind == "frames":
            ps = sets[data["channel"]]
            d = data["direction"]
            frames = [Transmission(j, bytes.fromhex(h), FrameKind.Noise, d) for j, h in data["frames"]]
            out = receive_and_verify(frames, ps, direction=d, epoch=t, cover=d == REVERSE, check=False)
            key = (ps.channel, d, t)
            if out.detected:
                expected[key] = ("Detect", out.cause.value, tuple(out.paths))
            elif d == FORWARD:
                note = verify_payload(out.payload, cfg.invariants, tuple(history))
                expected[key] = (
                    ("Detect", Cause.InvariantViolation.value, (ps.real_index[FORWARD],))
                    if note else ("Accept",)
                )
        elif kind == "heartbeat":
            try:
                outs = oversee(data["reported"], OverseerState(data["expected"], set(data["reachable"])))
            except OverseerOffline:
                outs = []
            for o in outs:
                expected[(o.subject, 0, t)] = ("Detect", o.cause.value, ())
        elif kind == "detect":
            paths = () if data["cause"] == Cause.OverseerDivergence.value else tuple(data["paths"])
            logged[(data["subject"], data["direction"], data["frame_epoch"])] = ("Detect", data["cause"], paths)
        elif kind == "accept":
            logged[(data["channel"], data["direction"], data["frame_epoch"])] = ("Accept",)
    for key in sorted(set(expected) | set(logged)):
        if expected.get(key) != logged.get(key):
            problems.append(f"{key}: replayed {expected.get(key)} logged {logged.get(key)}")
    return problems


# ----------------------------------------------------------------------------
# Monte-Carlo
# ----------------------------------------------------------------------------


def _game_rows(args) -> EntropyRow:
    seed, channel, source, destination, paths, payload_spec, n, trials = args
    row = EntropyRow.analytic(n)
    if n + 1 > len(paths):
        row.error = f"n={n} exceeds disjoint capacity {len(paths)} - 1"
        return row
    rng = stream(seed, "montecarlo", n)
    chosen = tuple(paths[: n + 1])
    log = []
    for i in range(trials):
        real = (rng.randrange(n + 1), rng.randrange(n + 1))
        ps = PathSet(channel, source, destination, i, chosen, real, rng.getrandbits(64))
        payload = [Reading(source, sig, val, i) for sig, val in payload_spec]
        log.append(play_single_event(ps, payload, rng))
    est = entropy_empirical(log)
    row.p_hat, row.h_hat, row.trials = est.p_hat, est.h_hat, est.trials
    return row


def run_montecarlo(
    cfg: ScenarioConfig, n_values: Sequence[int], *, trials: int | None = None, workers: int = 1
) -> list[EntropyRow]:
    """Single-epoch attack games per decoy count, tabulated beside the closed form.

    Rows keep the order of ``n_values``; a decoy count the focus channel
    cannot support yields an error row.  Results depend only on the seed,
    not on ``workers``.
    """
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1 for Monte-Carlo runs")
    if any(n < 0 for n in n_values):
        raise ConfigError("decoy counts must be >= 0")
    topo = validate_config(cfg)
    cid = focus_channel(cfg, topo)
    if cid is None:
        raise ConfigError("no channel to attack")
    ch = topo.channel(cid)
    paths = disjoint_paths(topo, ch, max(n_values) + 1)
    plant = initial_state(topo, cfg.profile(topo))
    spec = [(r.signal, r.value) for r in plant.readings() if r.source == ch.source]
    jobs = [(cfg.seed, ch.id, ch.source, ch.destination, paths, spec, n, trials) for n in n_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_game_rows, jobs))
    return [_game_rows(j) for j in jobs]


__all__ = [
    "Runner", "ScenarioReport", "OutcomeRow", "run_scenario", "run_montecarlo", "replay",
    "focus_channel", "dump_config",
]
