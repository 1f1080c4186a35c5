import pytest

from conftest import make_config, star_doc
from hybridmon.config import ConfigError, dump_config, parse_config, validate_config
from hybridmon.scenarios import builtin_names, load_builtin


@pytest.mark.parametrize("name", builtin_names())
def test_builtins_validate_and_round_trip(name):
    cfg = load_builtin(name)
    validate_config(cfg)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)
    assert again.digest() == cfg.digest()


def test_builtin_names():
    assert {"s1_ransomware", "s2_link_cut", "s3_fdi", "entropy", "plant8"} <= set(builtin_names())


def test_conservation_shorthand_expands_over_entities():
    cfg = make_config(star_doc(2))
    (inv,) = cfg.invariants
    assert ("mic1", "generation", 1) in inv.operands
    assert ("dgi1", "losses", -1) in inv.operands
    assert len(inv.operands) == 2 * 3 + 1


@pytest.mark.parametrize(
    "text, message",
    [
        ("seed: 1\nepochs: 1\n", "missing required key 'entities'"),
        ("epochs: 1\nentities: [{id: a, kind: DgiNode}]\n", "missing required key 'seed'"),
        ("seed: 1\nepochs: 0\nentities: [{id: a, kind: DgiNode}]\n", "epochs must be >= 1"),
        ("seed: 1\nepochs: 1\nentities: [{id: a, kind: Toaster}]\n", "unknown kind"),
        ("seed: 1\nepochs: 1\ncolour: red\nentities: [{id: a, kind: DgiNode}]\n", "unknown key 'colour'"),
        ("seed: one\nepochs: 1\nentities: [{id: a, kind: DgiNode}]\n", "expected an integer"),
        ("seed: 1\nepochs: 1\ntrials: -1\nentities: [{id: a, kind: DgiNode}]\n", "trials"),
        ("seed: [1\n", "not valid YAML"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["plant"].update(balancing="ghost"), "plant.balancing"),
        (lambda d: d["plant"].update(nominal={"ghost": [1.0, 1.0]}), "plant.nominal"),
        (lambda d: d.update(invariants=[{"id": "f", "kind": "RangeBound", "lower": 0.0, "upper": 1.0,
                                          "operands": [["mic1", "freq", 1]]}]), "never emitted"),
        (lambda d: d.update(attacks=[{"id": "a", "kind": "Ransomware", "target": "ghost"}]), "ghost"),
        (lambda d: d.update(attacks=[{"id": "a", "kind": "Ransomware", "target": "mic1"}] * 2), "duplicate attack"),
        (lambda d: d.update(focus_channel="nope"), "focus_channel"),
    ],
)
def test_validation_errors(mutate, message):
    doc = star_doc(2)
    mutate(doc)
    with pytest.raises(ConfigError, match=message):
        validate_config(make_config(doc))


def test_monitor_section_errors():
    with pytest.raises(ConfigError, match="monitor"):
        make_config(star_doc(2, monitor={"enabled": True, "initial_decoys": 3, "max_decoys": 1}))


def test_with_monitor_toggle():
    cfg = make_config(star_doc(2, monitor={"enabled": True}))
    assert not cfg.with_monitor(False).monitor.enabled
    assert cfg.with_monitor(False).digest() != cfg.digest()
