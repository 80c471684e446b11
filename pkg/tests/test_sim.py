import csv
import json

import numpy as np
import pytest

from pyrkv.classify import HeadClassMap
from pyrkv.heads import HeadClass, HeadKind
from pyrkv.policy import PolicyConfig, assemble_cache
from pyrkv.sim import Mode, SimConfig, compare_outputs, default_head_map, run


def small(**kw):
    base = dict(num_frames=40, layers=2, heads=6, head_dim=8, tokens_per_frame=2)
    base.update(kw)
    return SimConfig(**base)


def test_default_head_map_covers_all_classes():
    hmap = default_head_map(3, 6)
    for row in hmap.kinds():
        assert set(row.tolist()) == {0, 1, 2}


def test_pyramid_bounds_200_frames():
    rep = run(SimConfig(num_frames=200, layers=2, heads=6, compute=False))
    kinds = default_head_map(2, 6).kinds()
    cfg = PolicyConfig()
    for t in range(15, 201):
        slots = rep.slots_at(t)
        assert np.all(slots[kinds != HeadKind.VEIL] <= 11)
        assert np.all(slots[kinds == HeadKind.VEIL] <= 8)
    assert rep.slots_at(200).max() == cfg.slot_bound(HeadKind.ANCHOR)


def test_full_history_grows_linearly():
    rep = run(small(num_frames=200, mode=Mode.FULL_HISTORY, compute=False))
    for t in (1, 50, 200):
        assert np.all(rep.slots_at(t) == t)
    assert rep.peak_slots == 200 * 2 * 2 * 6


def test_memory_slope():
    full = run(small(num_frames=1000, mode=Mode.FULL_HISTORY, compute=False, layers=1, heads=3))
    pyr = run(small(num_frames=1000, compute=False, layers=1, heads=3))
    t = np.arange(100, 1001)
    full_slope = np.polyfit(t, full.per_head_slots[99:, 0, 0], 1)[0]
    pyr_slope = np.polyfit(t, pyr.per_head_slots[99:, 0, 0], 1)[0]
    assert full_slope == pytest.approx(1.0)
    assert abs(pyr_slope) < 1e-9


def test_sink_recent_only_shape():
    rep = run(small(num_frames=30, mode=Mode.SINK_RECENT_ONLY, compute=False))
    assert np.all(rep.slots_at(30) == 7)


def test_call_accounting():
    fused = run(small(num_frames=50, layers=30, heads=3, compute=False))
    unfused = run(small(num_frames=50, layers=30, heads=3, compute=False, fused=False))
    assert set(fused.calls_per_layer_step) == {1}
    assert set(unfused.calls_per_layer_step) == {3}
    assert unfused.attention_calls == 3 * fused.attention_calls == 3 * 50 * 30


def test_call_accounting_matches_compute_path():
    a = run(small(num_frames=12, fused=False))
    b = run(small(num_frames=12, fused=False, compute=False))
    assert a.calls_per_layer_step == b.calls_per_layer_step
    assert a.scheduling_calls == b.scheduling_calls
    c = run(small(num_frames=12))
    d = run(small(num_frames=12, compute=False))
    assert (c.attention_calls, c.scheduling_calls) == (d.attention_calls, d.scheduling_calls)
    assert c.scheduling_calls < a.scheduling_calls


def test_composition_accounting_matches_policy():
    cfg = small(num_frames=30, record_views=True)
    rep = run(cfg)
    for t, layers in rep.views.items():
        for l, row in enumerate(layers):
            for h, view in enumerate(row):
                assert view == assemble_cache(cfg.class_of(l, h), t, cfg.policy, cfg.head_dim)
                assert rep.slots_at(t)[l, h] == view.num_slots


def test_deterministic():
    a = run(small(keep_outputs=True))
    b = run(small(keep_outputs=True))
    assert a.to_dict() == b.to_dict()
    for t in a.outputs:
        assert a.outputs[t].tobytes() == b.outputs[t].tobytes()
    c = run(small(keep_outputs=True, rng_seed=9))
    assert not np.array_equal(a.outputs[40], c.outputs[40])


def test_compare_outputs():
    cmp = compare_outputs(small(num_frames=50))
    assert cmp.fused_vs_unfused < 1e-12
    assert cmp.pyramid_vs_full_history[50] > 0
    assert cmp.warmup_identical
    assert cmp.compression_observable
    assert all(cmp.pyramid_vs_sink_recent[t] == 0.0 for t in range(1, 8))


def test_custom_head_map_and_mismatch():
    hmap = HeadClassMap.uniform(2, 6, HeadClass.veil())
    rep = run(small(num_frames=20, head_map=hmap, compute=False))
    assert set(rep.calls_per_layer_step) == {1}
    assert rep.slots_at(20).max() == 8
    with pytest.raises(ValueError):
        small(head_map=HeadClassMap.uniform(3, 6, HeadClass.veil()))


def test_config_validation():
    with pytest.raises(ValueError):
        small(head_dim=7)
    with pytest.raises(ValueError):
        small(num_frames=0)
    with pytest.raises(ValueError):
        small(mode="bogus")


def test_report_files(tmp_path):
    rep = run(small(num_frames=10))
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["attention_calls"] == rep.attention_calls
    assert doc["max_per_head_slots"]["anchor"] <= 11
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert rows[0].keys() == {"step", "class", "heads", "slots", "max_slots", "calls", "flop_proxy"}
    assert len(rows) == 10 * 3
    assert sum(int(r["flop_proxy"]) for r in rows) == rep.flop_proxy
