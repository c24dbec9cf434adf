import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamwave.array import beam_pattern, make_codebook
from beamwave.engine import (RSRP_FLOOR_DB, EngineConfig, InferenceTuple, Trigger, TupleQueue, classify,
                             decide_rx_beam, infer_window, rank_beams, rsrp, run_stream, start_stream, windows)
from beamwave.nn.model import LayerSpec, Model, ModelSpec, build_model
from beamwave.nn.train import train
from beamwave.waveform import AntennaProfile, ScenarioGrid, perturb, synth_block

K = 16


def constant_model(K=K, L=1, classes=3, normalize=False):
    """Model whose logits ignore the input: zero weights, fixed biases."""
    spec = ModelSpec((LayerSpec("flatten"), LayerSpec("dense", units=classes), LayerSpec("softmax")),
                     classes, (L, K, 2), normalize=normalize)
    m = Model(spec)
    m.params[1]["W"][:] = 0
    return m


def chunked(samples, sizes):
    out, pos = [], 0
    for s in sizes:
        out.append(samples[pos:pos + s])
        pos += s
    out.append(samples[pos:])
    return out


# --- rsrp and classify ---------------------------------------------------------------

def test_rsrp_examples():
    x = np.exp(1j * np.linspace(0, 7, 64))
    assert rsrp(x) == pytest.approx(0.0)
    assert rsrp(10 * x) == pytest.approx(20.0)
    assert rsrp(np.zeros(8)) == RSRP_FLOOR_DB
    pairs = np.stack([x.real, x.imag], -1)
    assert rsrp(pairs) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        rsrp(np.zeros(0))


def test_rsrp_ranking_follows_the_beam_pattern():
    grid = ScenarioGrid(codebook="azimuth-24", block_len=512, gains=("mid",), ref_snr_db=60.0,
                        snr_max_db=60.0, multipath=False)
    cb = grid.make_codebook()
    power = [rsrp(synth_block(grid, cb, (b, 0, "mid", 0, "basic"), 0, b)) for b in range(len(cb))]
    oracle = [beam_pattern(perturb(b, AntennaProfile.from_seed(0, 12)), cb.geometry, [0.0])[0, 1] for b in cb]
    assert np.argsort(power).tolist() == np.argsort(oracle).tolist()


def test_uniform_logits_give_one_over_n_confidence():
    m = constant_model(classes=4)
    k, conf = classify(np.ones((1, K, 2)), m)
    assert k == 0 and conf == pytest.approx(0.25)


def test_classify_checks_shape():
    with pytest.raises(ValueError):
        classify(np.ones((1, K + 1, 2)), constant_model())


def test_permuting_classes_permutes_outputs():
    rng = np.random.default_rng(0)
    m = build_model("txb-tiny", 1, K, 3, seed=1)
    perm = np.array([2, 0, 1])
    p = m.copy()
    p.params[3]["W"] = m.params[3]["W"][:, perm]
    p.params[3]["b"] = m.params[3]["b"][perm]
    for _ in range(10):
        x = rng.standard_normal((1, K, 2))
        k, c = classify(x, m)
        kp, cp = classify(x, p)
        assert perm[kp] == k and cp == pytest.approx(c)


def test_normalized_model_ignores_input_scale():
    rng = np.random.default_rng(1)
    m = build_model("txb-tiny", 1, K, 3, seed=1, normalize=True)
    x = rng.standard_normal((1, K, 2))
    assert classify(x, m) == pytest.approx(classify(1e3 * x, m))


def toy_model_and_blocks():
    rng = np.random.default_rng(3)
    y = np.arange(40) % 2
    blocks = rng.standard_normal((40, K)) + 1j * rng.standard_normal((40, K))
    blocks[y == 1] += 1.5
    x = np.stack([blocks.real, blocks.imag], -1)[:, None]
    m = build_model("txb-tiny", 1, K, 2, seed=0)
    log = train(m, x, y, epochs=60, lr=1e-2, batch_size=10)
    assert log.series("train")[-1] == 1.0
    return m, blocks, y


def test_overfit_model_classifies_its_training_stream():
    m, blocks, y = toy_model_and_blocks()
    q = run_stream([blocks.ravel()], EngineConfig(m, capacity=100))
    tuples = q.drain()
    assert [t.txb for t in tuples] == y.tolist()
    assert [t.block_index for t in tuples] == list(range(40))


# --- streaming contracts ---------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(n_windows=st.integers(0, 6), L=st.integers(1, 3), extra=st.integers(0, 3 * K - 1),
       cuts=st.lists(st.integers(1, 40), max_size=12))
def test_tuple_conservation_for_any_chunking(n_windows, L, extra, cuts):
    cfg = EngineConfig(constant_model(L=L), capacity=64, policy="block")
    samples = np.arange(n_windows * L * K + extra) * (1 + 1j)
    q = run_stream(chunked(samples, cuts), cfg)
    tuples = q.drain()
    assert len(tuples) == len(samples) // (L * K)
    assert [t.block_index for t in tuples] == [i * L for i in range(len(tuples))]
    assert q.closed


def test_ten_windows_ten_tuples():
    cfg = EngineConfig(constant_model(), capacity=16)
    assert len(run_stream([np.ones(10 * K, complex)], cfg)) == 10


def test_windows_accept_iq_pairs():
    pairs = np.ones((3 * K, 2))
    got = list(windows([pairs[:5], pairs[5:]], K))
    assert len(got) == 3 and np.allclose(got[0], 1 + 1j)
    with pytest.raises(ValueError):
        list(windows([np.ones((4, 3))], K))


def test_trigger_off_produces_nothing():
    trig = Trigger(active=False)
    q = run_stream([np.ones(10 * K, complex)], EngineConfig(constant_model()), trigger=trig)
    assert len(q) == 0


def test_trigger_toggle_skips_windows_but_keeps_queued_tuples():
    trig = Trigger()
    cfg = EngineConfig(constant_model(), capacity=100)

    def source():
        for i in range(10):
            if i == 4:
                trig.deactivate()
            if i == 7:
                trig.activate()
            yield np.full(K, i, complex)

    tuples = run_stream(source(), cfg, trigger=trig).drain()
    # the window completed by chunk i is checked right after chunk i arrives
    assert [t.block_index for t in tuples] == [0, 1, 2, 3, 7, 8, 9]


def test_drop_oldest_keeps_the_most_recent():
    q = TupleQueue(capacity=2, policy="drop-oldest")
    for i in range(5):
        assert q.put(i)
    assert q.drain() == [3, 4]
    assert q.dropped == 3


def test_slow_consumer_sees_a_suffix():
    cfg = EngineConfig(constant_model(), capacity=2, policy="drop-oldest")
    gate = threading.Event()

    def source():
        for i in range(12):
            yield np.full(K, i, complex)
        gate.set()

    q = TupleQueue(2, "drop-oldest")
    seen = []
    thread, q = start_stream(source(), cfg, queue=q)
    gate.wait(5)
    thread.join(5)
    while (item := q.get(timeout=1)) is not None:
        seen.append(item.block_index)
    assert seen == [10, 11]
    assert q.dropped == 10


def test_blocking_policy_keeps_everything():
    cfg = EngineConfig(constant_model(), capacity=2, policy="block")
    thread, q = start_stream([np.ones(K, complex)] * 20, cfg)
    got = []
    while (item := q.get(timeout=5)) is not None:
        got.append(item.block_index)
        time.sleep(0.001)
    thread.join(5)
    assert got == list(range(20))
    assert q.dropped == 0


def test_closed_queue_refuses_and_wakes_waiters():
    q = TupleQueue(1, "block")
    q.put(1)
    result = []
    t = threading.Thread(target=lambda: result.append(q.put(2)))
    t.start()
    time.sleep(0.05)
    q.close()
    t.join(2)
    assert result == [False]
    assert q.get() == 1 and q.get() is None
    assert not q.put(3)


def test_blocking_put_times_out():
    q = TupleQueue(1, "block")
    q.put(1)
    assert q.put(2, timeout=0.01) is False


def test_caller_queue_is_used_even_when_empty():
    q = TupleQueue(8, "block")
    assert len(q) == 0
    out = run_stream([np.ones(3 * K, complex)], EngineConfig(constant_model()), queue=q, close=False)
    assert out is q and len(q) == 3 and not q.closed


def test_queue_and_config_validation():
    with pytest.raises(ValueError):
        TupleQueue(0)
    with pytest.raises(ValueError):
        TupleQueue(2, "drop-newest")
    with pytest.raises(ValueError):
        EngineConfig(constant_model(), capacity=0)
    with pytest.raises(ValueError):
        EngineConfig(constant_model(), aoa_model=constant_model(K=2 * K))


def test_infer_window_with_aoa_model():
    txb = constant_model(classes=3)
    aoa = constant_model(classes=3)
    aoa.params[1]["b"][:] = [0.0, 5.0, 0.0]
    t = infer_window(np.full(K, 1 + 1j), EngineConfig(txb, aoa), block_index=7)
    assert (t.txb, t.aoa_class, t.block_index) == (0, 1, 7)
    assert t.rsrp_db == pytest.approx(10 * np.log10(2))


def test_tuple_validation_and_json():
    with pytest.raises(ValueError):
        InferenceTuple(0, 0, 1.0, 0.0, 0)
    with pytest.raises(ValueError):
        InferenceTuple(0, 0, float("inf"), 0.5, 0)
    assert InferenceTuple(1, 2, 3.25, 0.5, 9).to_json() == \
        {"txb": 1, "aoa": 2, "rsrp_db": 3.25, "confidence": 0.5, "block_index": 9}


# --- ranking and receive beams ------------------------------------------------------------

def tup(txb, power, i=0, aoa=0):
    return InferenceTuple(txb, aoa, power, 0.9, i)


def test_rank_single_beam():
    r = rank_beams([tup(3, 1.0), tup(3, 2.0)])
    assert r.ranking == (3,) and r.best == 3 and r.counts == {3: 2}


def test_rank_ties_go_to_lower_id():
    r = rank_beams([tup(4, 5.0), tup(1, 5.0), tup(2, 1.0)])
    assert r.ranking == (1, 4, 2)


def test_rank_uses_mean_rsrp():
    r = rank_beams([tup(0, 10.0), tup(0, 0.0), tup(1, 6.0)])
    assert r.mean_rsrp_db == {0: 5.0, 1: 6.0}
    assert r.ranking == (1, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.floats(-50, 50)), min_size=1, max_size=40))
def test_ranking_is_a_sorted_permutation(items):
    r = rank_beams([tup(b, p) for b, p in items])
    assert sorted(r.ranking) == sorted({b for b, _ in items})
    assert sum(r.counts.values()) == len(items)
    means = [r.mean_rsrp_db[b] for b in r.ranking]
    assert all(a >= b for a, b in zip(means, means[1:]))


def test_rank_needs_tuples():
    with pytest.raises(ValueError):
        rank_beams([])


def test_decide_rx_beam():
    cb = make_codebook("digital-5")  # -45, -22.5, 0, 22.5, 45
    assert decide_rx_beam(-45.0, cb) == 0
    assert decide_rx_beam(0.0, cb) == 2
    assert decide_rx_beam(-33.75, cb) == 0  # equidistant from -45 and -22.5
    r = rank_beams([tup(1, 3.0, aoa=0), tup(1, 3.0, aoa=2)], aoa_angles=(-45.0, 0.0, 45.0), rx_codebook=cb)
    assert r.rx_beams == {0: 0, 2: 4}


def test_report_is_identical_across_interleavings():
    m = build_model("txb-tiny", 1, K, 4, seed=5)
    rng = np.random.default_rng(2)
    samples = rng.standard_normal(30 * K) + 1j * rng.standard_normal(30 * K)
    reports = []
    for sizes in ([7] * 80, [K] * 30, [1000]):
        thread, q = start_stream(chunked(samples, sizes), EngineConfig(m, capacity=4, policy="block"))
        got = []
        while (item := q.get(timeout=5)) is not None:
            got.append(item)
        thread.join(5)
        reports.append(rank_beams(got))
    assert reports[0] == reports[1] == reports[2]
