from collections import Counter
from dataclasses import replace

import pytest
from scipy.stats import chi2_contingency

from conftest import make_config, star_doc
from oracles import max_disjoint_bruteforce
from hybridmon.attacks import flip_byte, forge, tamper
from hybridmon.config import validate_config
from hybridmon.monitor import (
    CHANNEL_DOWN,
    FORWARD,
    REVERSE,
    Cause,
    FrameError,
    FrameKind,
    MonitorConfig,
    OverseerOffline,
    OverseerState,
    PathSet,
    decode_payload,
    encode_payload,
    generate_paths,
    monitor_digest,
    oversee,
    receive_and_verify,
    reroute,
    transmit,
    xor_bytes,
)
from hybridmon.plant import Reading, initial_state, step_plant
from hybridmon.rng import stream


def setup(n_links=4, **mon):
    cfg = make_config(star_doc(n_links, monitor={"enabled": True, **mon}))
    topo = validate_config(cfg)
    return cfg, topo, topo.channel("c")


def payload_for(cfg, topo, epoch=1, source="mic1"):
    state = initial_state(topo, cfg.profile(topo))
    state, readings = step_plant(state, topo, stream(cfg.seed, "plant"))
    return [replace(r, epoch=epoch) for r in readings if r.source == source], [
        replace(r, epoch=epoch) for r in readings
    ]


def test_frame_roundtrip_and_errors():
    rs = [Reading("mic1", "generation", 1.5, 9), Reading("mic1", "load", -0.25, 9)]
    assert decode_payload(encode_payload(rs, 9)) == (9, rs)
    with pytest.raises(FrameError):
        decode_payload(b"xx")
    with pytest.raises(FrameError):
        decode_payload(encode_payload(rs, 9)[:-1])
    with pytest.raises(FrameError):
        encode_payload([Reading("m" * 30, "load", 0.0, 0)], 0)


def test_first_call_without_decoys():
    _, topo, ch = setup(max_decoys=3)
    ps = generate_paths(topo, ch, None, MonitorConfig(True, 0, 0.0, 3), stream(1, "p"))
    assert ps.n == 0 and ps.real_index == (0, 0) and len(ps.paths) == 1


def test_growth_at_probability_one():
    _, topo, ch = setup(n_links=4)
    cfg = MonitorConfig(True, 0, 1.0, 5)
    rng = stream(1, "p")
    ps = generate_paths(topo, ch, None, cfg, rng)
    ns = []
    for t in range(1, 5):
        ps = generate_paths(topo, ch, ps, cfg, rng, epoch=t)
        ns.append(ps.n)
    # capacity 4 caps the decoy count at 3
    assert ns == [1, 2, 3, 3]


def test_growth_sequence_nondecreasing_and_reproducible():
    _, topo, ch = setup(n_links=6)
    cfg = MonitorConfig(True, 0, 0.5, 5)

    def seq():
        rng, ps, out = stream(99, "p"), None, []
        for t in range(1000):
            ps = generate_paths(topo, ch, ps, cfg, rng, epoch=t)
            out.append(ps.n)
        return out

    a = seq()
    assert a == seq()
    assert all(x <= y for x, y in zip(a, a[1:]))
    assert a[-1] == 5


def test_transmissions_per_path():
    cfg, topo, ch = setup(n_links=4)
    pay, _ = payload_for(cfg, topo)
    one = PathSet("c", "mic1", "dgi1", 1, (("e0",),), (0, 0), 5)
    (t,) = transmit(pay, one)
    assert t.kind is FrameKind.Real
    ps = generate_paths(topo, ch, None, MonitorConfig(True, 3, 0.0, 3), stream(3, "p"), epoch=1, run_seed=3)
    out = transmit(pay, ps)
    assert len(out) == 4
    assert Counter(t.kind for t in out) == {FrameKind.Real: 1, FrameKind.Noise: 3}
    assert len({len(t.frame) for t in out}) == 1
    assert transmit(pay, ps) == out
    cover = transmit(None, ps, direction=REVERSE, frame_length=len(out[0].frame))
    assert all(t.kind is FrameKind.Noise for t in cover)


def _ps(topo, ch, n=3, seed=11, epoch=1):
    return generate_paths(topo, ch, None, MonitorConfig(True, n, 0.0, n), stream(seed, "p"),
                          epoch=epoch, run_seed=seed)


def test_clean_channel_accepts():
    cfg, topo, ch = setup()
    pay, allr = payload_for(cfg, topo)
    ps = _ps(topo, ch)
    out = receive_and_verify(transmit(pay, ps), ps, cfg.invariants, [allr])
    assert out.accepted and list(out.payload) == pay


def test_every_single_path_tamper_is_caught():
    """Exhaustive sweep at n = 3: each path and direction, one flipped byte."""
    cfg, topo, ch = setup()
    pay, allr = payload_for(cfg, topo)
    plain = encode_payload(pay, 1)
    for seed in range(20):
        ps = _ps(topo, ch, seed=seed)
        wire = transmit(pay, ps) + transmit(None, ps, direction=REVERSE, frame_length=len(plain))
        for d in (FORWARD, REVERSE):
            for j in range(4):
                bad = flip_byte(wire, d, j, offset=seed)
                out = receive_and_verify(bad, ps, cfg.invariants, [allr], direction=d, cover=d == REVERSE)
                assert out.detected
                real = d == FORWARD and j == ps.real_index[FORWARD]
                assert out.cause is (Cause.InvariantViolation if real else Cause.DecoyTamper)
                assert out.paths == (j,)


def test_forged_real_frame_violates_conservation():
    cfg, topo, ch = setup()
    pay, allr = payload_for(cfg, topo)
    ps = _ps(topo, ch)
    plain = encode_payload(pay, 1)
    mask = xor_bytes(plain, forge(plain, 5.0, "generation", None))
    bad = tamper(transmit(pay, ps), [(FORWARD, ps.real_index[FORWARD])], mask)
    eps = 0.1
    inv = [replace(cfg.invariants[0], epsilon=eps)]
    out = receive_and_verify(bad, ps, inv, [allr])
    assert out.cause is Cause.InvariantViolation
    assert "residual 5" in out.note
    # without the invariant layer the forgery is well formed and accepted
    assert receive_and_verify(bad, ps, (), [allr]).accepted


def test_consistent_forgery_passes_conservation():
    cfg, topo, ch = setup()
    pay, allr = payload_for(cfg, topo)
    ps = _ps(topo, ch)
    plain = encode_payload(pay, 1)
    mask = xor_bytes(plain, forge(plain, 5.0, "generation", "net_export"))
    bad = tamper(transmit(pay, ps), [(FORWARD, ps.real_index[FORWARD])], mask)
    out = receive_and_verify(bad, ps, cfg.invariants, [allr])
    assert out.accepted and out.payload != tuple(pay)


def test_missing_frame_is_path_loss():
    cfg, topo, ch = setup()
    pay, allr = payload_for(cfg, topo)
    ps = _ps(topo, ch)
    wire = [t for t in transmit(pay, ps) if t.path != 2]
    out = receive_and_verify(wire, ps, cfg.invariants, [allr])
    assert out.cause is Cause.PathLoss and out.paths == (2,)


def test_stale_replay_is_rejected():
    cfg, topo, ch = setup()
    pay, allr = payload_for(cfg, topo, epoch=1)
    ps1 = _ps(topo, ch, epoch=1)
    old = transmit(pay, ps1)
    # replaying epoch 1 frames under the same secrets at epoch 2
    out = receive_and_verify(old, ps1, cfg.invariants, [allr], epoch=2)
    assert out.detected


def test_real_frames_indistinguishable_from_noise():
    """Real index uniform and whitened frames byte-distributed like noise."""
    cfg, topo, ch = setup()
    pay, _ = payload_for(cfg, topo)
    mc = MonitorConfig(True, 3, 0.0, 3)
    rng = stream(2024, "p")
    index_counts = Counter()
    real_bytes, noise_bytes = Counter(), Counter()
    epochs = 10_000
    for t in range(epochs):
        ps = generate_paths(topo, ch, None, mc, rng, epoch=t, run_seed=2024)
        index_counts[ps.real_index[FORWARD]] += 1
        if t < 2000:
            frames = transmit([replace(r, epoch=t) for r in pay], ps, epoch=t)
            for f in frames:
                (real_bytes if f.kind is FrameKind.Real else noise_bytes).update(f.frame)
    for j in range(4):
        assert abs(index_counts[j] / epochs - 0.25) <= 0.02
    table = [[real_bytes[b] for b in range(256)], [noise_bytes[b] for b in range(256)]]
    _, p_value, _, _ = chi2_contingency(table)
    assert p_value > 0.001


def test_overseer_healthy_missing_and_mismatch():
    cfg, topo, ch = setup()
    ps = {"c": _ps(topo, ch)}
    state = OverseerState.from_topology(topo, ps)
    good = {vm.id: monitor_digest(vm.host, ps) for vm in topo.virtual_monitors()}
    assert oversee(good, state) == []
    missing = {k: v for k, v in good.items() if k != "vm-dgi1"}
    (out,) = oversee(missing, state)
    assert out.cause is Cause.OverseerDivergence and out.subject == "vm-dgi1"
    forged = dict(good, **{"vm-mic1": monitor_digest("mic1", {"c": _ps(topo, ch, seed=12)})})
    (out,) = oversee(forged, state)
    assert out.subject == "vm-mic1" and out.note == "digest mismatch"


def test_isolated_overseer_is_offline():
    cfg, topo, ch = setup()
    state = OverseerState.from_topology(topo.with_failures(["mn-mic1", "mn-dgi1"]), {})
    with pytest.raises(OverseerOffline):
        oversee({}, state)


def test_reroute_caps_decoys_at_surviving_capacity():
    cfg, topo, ch = setup(n_links=3)
    ps = _ps(topo, ch, n=2)
    assert ps.n == 2
    after, upd = reroute(topo, {"e1"}, [ch], {"c": ps}, stream(1, "r"), epoch=5)
    links = [(l.id, *l.endpoints) for l in after.plant_links() if l.up]
    assert upd["c"].n == max_disjoint_bruteforce(links, "mic1", "dgi1") - 1 == 1
    assert all("e1" not in p for p in upd["c"].paths)


def test_reroute_only_path_down():
    cfg, topo, ch = setup(n_links=1)
    ps = _ps(topo, ch, n=0)
    _, upd = reroute(topo, {"e0"}, [ch], {"c": ps}, stream(1, "r"))
    assert upd == {"c": CHANNEL_DOWN}


def test_reroute_leaves_unrelated_channel_alone():
    doc = star_doc(3, monitor={"enabled": True})
    doc["entities"].append({"id": "dgi2", "kind": "DgiNode"})
    doc["links"].append({"id": "f0", "endpoints": ["dgi1", "dgi2"]})
    doc["links"].append({"id": "f1", "endpoints": ["dgi1", "dgi2"]})
    doc["channels"].append({"id": "d", "source": "dgi1", "destination": "dgi2"})
    doc["domains"][1]["members"].append("dgi2")
    topo = validate_config(make_config(doc))
    sets = {"c": _ps(topo, topo.channel("c"), n=2), "d": _ps(topo, topo.channel("d"), n=1)}
    _, upd = reroute(topo, {"e0"}, topo.channels, sets, stream(1, "r"))
    assert "d" not in upd and "c" in upd


def test_reroute_rejects_empty_failure_set():
    cfg, topo, ch = setup()
    with pytest.raises(ValueError):
        reroute(topo, set(), [ch], {}, stream(1, "r"))


def test_monitor_config_validation():
    with pytest.raises(ValueError):
        MonitorConfig(True, 3, 0.0, 2)
    with pytest.raises(ValueError):
        MonitorConfig(True, 0, 1.5, 2)
    with pytest.raises(ValueError):
        MonitorConfig(True, 0, 0.0, 2, verification_cycle=0)
