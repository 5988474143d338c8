import numpy as np
import pytest

from lcmvos import encoding, pgm, pipeline, synthdata
from lcmvos.errors import ObjectAbsentError, ParameterError, ShapeDriftError
from lcmvos.metrics import evaluate, jaccard
from lcmvos.pipeline import PropagationConfig, Weights, reference_weights_dir

SMALL = PropagationConfig(width=64)


def scene(name):
    frames, gts = synthdata.generate(synthdata.scenario(name))
    return [f / 255.0 for f in frames], gts


def test_config_validation():
    for bad in (dict(memory_stride=0), dict(topk=0), dict(temperature=0.0), dict(threads=0), dict(width=12),
                dict(upsample="cubic")):
        with pytest.raises(ParameterError):
            PropagationConfig(**bad)


def test_init_full_frame_object():
    frame = np.random.default_rng(0).random((16, 16, 3))
    st = pipeline.init(frame, np.ones((16, 16), int), SMALL)
    assert st.num_objects == 1
    assert st.objects[0].pool.size == 1 and len(st.objects[0].foreground) == 16


def test_init_two_objects_disjoint():
    frame = np.zeros((32, 32, 3))
    mask = np.zeros((32, 32), int)
    mask[:8, :8], mask[16:28, 16:28] = 1, 2
    st = pipeline.init(frame, mask, SMALL)
    a, b = st.objects
    assert a.pool is not b.pool
    src_a = {tuple(s) for s in a.foreground.source}
    src_b = {tuple(s) for s in b.foreground.source}
    assert src_a and src_b and not (src_a & src_b)


def test_init_label_gap_reports_label():
    mask = np.zeros((16, 16), int)
    mask[:4, :4] = 2
    with pytest.raises(ObjectAbsentError, match="1") as exc:
        pipeline.init(np.zeros((16, 16, 3)), mask, SMALL)
    assert exc.value.labels == (1,)
    with pytest.raises(ObjectAbsentError):
        pipeline.init(np.zeros((16, 16, 3)), np.zeros((16, 16), int), SMALL)


def test_static_scene_reproduces_first_mask():
    frames, gts = scene("static")
    exact = PropagationConfig(width=64, upsample="nearest")
    for pred in pipeline.run(frames, gts[0], exact)[1:]:
        assert np.array_equal(pred, gts[0])
    # bilinear decoding only rounds the four corner pixels of the cell-aligned square
    for pred in pipeline.run(frames, gts[0], SMALL)[1:]:
        assert (pred != gts[0]).sum() == 4


def test_translation_one_cell_per_frame():
    frames, gts = scene("translate")
    preds = pipeline.run(frames[:13], gts[0])
    assert min(jaccard(p, g, 1) for p, g in zip(preds[1:], gts[1:13])) >= 0.85


def test_shape_drift():
    frames, gts = scene("static")
    st = pipeline.init(frames[0], gts[0], SMALL)
    with pytest.raises(ShapeDriftError):
        pipeline.step(st, np.zeros((32, 32, 3)))
    with pytest.raises(ShapeDriftError):
        pipeline.init(frames[0], gts[0][:32], SMALL)


def test_run_basics_and_determinism():
    frames, gts = scene("twin_squares")
    assert len(pipeline.run(frames[:1], gts[0], SMALL)) == 1
    a = pipeline.run(frames, gts[0])
    b = pipeline.run(frames, gts[0])
    assert len(a) == 24 and a[0] is not gts[0] and np.array_equal(a[0], gts[0])
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
    with pytest.raises(ParameterError):
        pipeline.run([], gts[0])


def test_memory_schedule_and_state_ranges():
    frames, gts = scene("translate")
    st = pipeline.init(frames[0], gts[0], SMALL)
    for t in range(1, 13):
        st, labels, probs = pipeline.step(st, frames[t])
        assert st.frame_counter == t
        assert st.objects[0].pool.frame_indices == tuple(k for k in range(0, t + 1, 5))
        prev = st.objects[0].prev_mask
        assert np.all((prev >= 0) & (prev <= 1))
        np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-9)


def test_thread_count_invariance():
    frames, _ = scene("static")
    mask = np.zeros((64, 64), int)
    mask[24:40, 24:32], mask[24:40, 32:40] = 1, 2
    one = pipeline.run(frames[:4], mask, PropagationConfig(width=64, threads=1))
    four = pipeline.run(frames[:4], mask, PropagationConfig(width=64, threads=4))
    assert all(x.tobytes() == y.tobytes() for x, y in zip(one, four))


def test_reference_weights_file_matches_constructor():
    cfg = PropagationConfig()
    shipped = Weights.load(reference_weights_dir(), cfg)
    built = Weights.reference(cfg)
    for name in ("key_local", "fn", "key_global", "value", "backbone"):
        for x, y in zip(getattr(shipped.projections, name), getattr(built.projections, name)):
            assert np.array_equal(x, y)
    assert np.array_equal(shipped.orm.fc2_b, built.orm.fc2_b)
    assert np.all(built.orm.fc2_b == pipeline.REFERENCE_EXCITE_BIAS)


def _twin_state():
    frames, gts = scene("twin_squares")
    cfg = PropagationConfig()
    w = Weights.load(reference_weights_dir(), cfg)
    return frames, gts, cfg, w


def _cells(gts, frames, t):
    tgt = encoding.patch_mean((gts[t] == 1).astype(float), 4) > 0.99
    lit = (gts[t] == 0) & (frames[t][..., 0] > 0.5)
    return tgt, encoding.patch_mean(lit.astype(float), 4) > 0.99


def test_position_map_suppresses_distractor():
    # construction: position-only local keys, identity f_n, gate from the true previous mask
    # (the distractor lies outside its support)
    frames, gts, cfg, w = _twin_state()
    ck = cfg.encoder.key_channels
    w.projections.fn = (np.eye(ck), np.zeros(ck))
    pos = encoding.sinusoidal_pos_2d(16, 16, cfg.encoder.key_channels)
    for t in range(1, 24):
        prev = encoding.encode_query(frames[t - 1], w.projections, cfg.encoder)
        cur = encoding.encode_query(frames[t], w.projections, cfg.encoder)
        m_prev = encoding.patch_mean((gts[t - 1] == 1).astype(float), 4)
        S = pgm.position_correlation(pgm.PgmInputs(prev.local_key, cur.local_key, m_prev, cur.value),
                                     pos, w.projections.fn)
        pmap = pgm.position_map(S, (16, 16), cfg.topk)
        tgt, dis = _cells(gts, frames, t)
        assert pmap[tgt].mean() >= 2.0 * pmap[dis].mean()


def test_logit_sign_on_twins():
    frames, gts, cfg, w = _twin_state()
    st = pipeline.init(frames[0], gts[0], cfg, w)
    for t in range(1, 24):
        q = encoding.encode_query(frames[t], w.projections, cfg.encoder)
        logit = pipeline.object_logit(st, st.objects[0], q)
        tgt, dis = _cells(gts, frames, t)
        assert logit[tgt].min() > 0 > logit[dis].max()
        st, _, _ = pipeline.step(st, frames[t])


def test_position_guidance_beats_its_ablation_on_twins():
    frames, gts, cfg, w = _twin_state()
    full = evaluate(pipeline.run(frames, gts[0], cfg, w), gts)
    no_pgm = PropagationConfig(enable_pgm=False)
    ablated = evaluate(pipeline.run(frames, gts[0], no_pgm, w), gts)
    assert full.mean_J[0] > ablated.mean_J[0]
