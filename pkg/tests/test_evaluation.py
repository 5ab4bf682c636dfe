import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camsim.evaluation import (
    BATCHED,
    PAIRED,
    PerformanceRecord,
    RecordError,
    contextual_difference,
    load_records,
    render_report,
)

HEADER = "image_id,batch_key,class_label,value\n"


def records(rows):
    return [PerformanceRecord(*r) for r in rows]


def sample_set(rng, n=30, classes=("car", "cone", "person"), batches=5):
    out = []
    for i in range(n):
        for c in classes:
            if rng.random() < 0.8:
                out.append(PerformanceRecord(f"img{i}", f"b{i % batches}", c, round(rng.uniform(0.1, 0.8), 6)))
    return out


def test_load_valid(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(HEADER + "i1,b1,cone,0.5\ni2,b1,cone,1\n")
    recs = load_records(p)
    assert len(recs) == 2 and recs[1].value == 1.0


def test_load_out_of_range_names_row(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(HEADER + "i1,b1,cone,0.5\ni2,b1,cone,1.2\n")
    with pytest.raises(RecordError, match="line 3"):
        load_records(p)


def test_load_duplicate(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(HEADER + "i1,b1,cone,0.5\ni1,b2,cone,0.4\n")
    with pytest.raises(RecordError, match="duplicate"):
        load_records(p)


@pytest.mark.parametrize("body", ["image,batch,class,value\n", HEADER + "i1,b1,cone\n", HEADER + "i1,b1,cone,abc\n"])
def test_load_malformed(tmp_path, body):
    p = tmp_path / "a.csv"
    p.write_text(body)
    with pytest.raises(RecordError):
        load_records(p)


@pytest.mark.parametrize("mode", [PAIRED, BATCHED])
def test_self_difference_zero(mode):
    a = sample_set(random.Random(1))
    rep = contextual_difference(a, a, mode)
    assert all(v == 0.0 for v in rep.per_class.values())


@pytest.mark.parametrize("mode", [PAIRED, BATCHED])
def test_constant_shift(mode):
    a = sample_set(random.Random(2))
    b = [PerformanceRecord(r.image_id, r.batch_key, r.class_label, r.value + 0.1) for r in a]
    rep = contextual_difference(a, b, mode)
    for v in rep.per_class.values():
        assert abs(v - 0.1) < 1e-12


def test_batched_hand_example():
    a = records([("x1", "b1", "cone", 0.5), ("x2", "b2", "cone", 0.7)])
    b = records([("y1", "b1", "cone", 0.6), ("y2", "b2", "cone", 0.7)])
    rep = contextual_difference(a, b, BATCHED)
    assert abs(rep.per_class["cone"] - 0.05) < 1e-15
    assert [t.batch_key for t in rep.batches] == ["b1", "b2"]


def test_batched_uses_batch_means():
    a = records([("x1", "b1", "cone", 0.2), ("x2", "b1", "cone", 0.6)])
    b = records([("y1", "b1", "cone", 0.4)])
    rep = contextual_difference(a, b, BATCHED)
    assert abs(rep.per_class["cone"]) < 1e-15  # means 0.4 vs 0.4


def test_paired_key_mismatch():
    a = records([("x1", "b1", "cone", 0.2)])
    b = records([("x2", "b1", "cone", 0.2)])
    with pytest.raises(RecordError):
        contextual_difference(a, b, PAIRED)


def test_batched_empty_intersection():
    a = records([("x1", "b1", "cone", 0.2)])
    b = records([("x1", "b2", "cone", 0.2)])
    with pytest.raises(RecordError):
        contextual_difference(a, b, BATCHED)


def test_symmetry_randomized():
    rng = random.Random(1234)
    for _ in range(1000):
        a = sample_set(rng, n=rng.randint(1, 8), batches=3)
        if not a:
            continue
        b = [PerformanceRecord(r.image_id, r.batch_key, r.class_label, rng.random()) for r in a]
        for mode in (PAIRED, BATCHED):
            ab = contextual_difference(a, b, mode).per_class
            ba = contextual_difference(b, a, mode).per_class
            assert ab == ba
            assert all(v >= 0 for v in ab.values())


@settings(max_examples=50, deadline=None)
@given(st.randoms(use_true_random=False))
def test_permutation_invariance(r):
    a = sample_set(r, n=10)
    b = [PerformanceRecord(x.image_id, x.batch_key, x.class_label, r.random()) for x in a]
    shuffled = a[:]
    r.shuffle(shuffled)
    for mode in (PAIRED, BATCHED):
        assert contextual_difference(a, b, mode).per_class == contextual_difference(shuffled, b, mode).per_class


def test_render_report(tmp_path):
    a = records([("x1", "b1", "zeta", 0.5), ("x1", "b1", "alpha", 0.2)])
    b = records([("x1", "b1", "zeta", 0.5), ("x1", "b1", "alpha", 0.3)])
    rep = contextual_difference(a, b, PAIRED)
    cls_path, batch_path = render_report(rep, tmp_path / "out")
    lines = open(cls_path).read().splitlines()
    assert lines[0] == "class_label,difference"
    assert [l.split(",")[0] for l in lines[1:]] == ["alpha", "zeta"]
    assert lines[2] == "zeta,0.0"
    first = (open(cls_path).read(), open(batch_path).read())
    render_report(contextual_difference(a, b, PAIRED), tmp_path / "out")
    assert (open(cls_path).read(), open(batch_path).read()) == first


def test_render_single_class(tmp_path):
    a = records([("x1", "b1", "cone", 0.5)])
    cls_path, _ = render_report(contextual_difference(a, a, BATCHED), tmp_path)
    assert open(cls_path).read().splitlines() == ["class_label,difference", "cone,0.0"]
