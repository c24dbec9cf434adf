import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamwave.array import ArrayGeometry, make_codebook, steering_vector
from beamwave.dataset import IQDataset
from beamwave.waveform import (AntennaProfile, ChannelConfig, ScenarioGrid, TxFrameConfig, apply_beam,
                               beam_signature, cell_snr_db, circular_fir, fractional_delay,
                               generate_tx_block, impair, measured_snr_db, room_multipath,
                               synth_block, synth_dataset)


@pytest.mark.parametrize("modulation", ["qpsk-singlecarrier", "ofdm"])
@pytest.mark.parametrize("oversampling", [1, 4])
def test_tx_block_has_unit_power(modulation, oversampling):
    x = generate_tx_block(TxFrameConfig(512, modulation, oversampling), 3)
    assert x.shape == (512,)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0)


def test_tx_block_is_seeded():
    cfg = TxFrameConfig(256, "ofdm")
    assert np.array_equal(generate_tx_block(cfg, 7), generate_tx_block(cfg, 7))
    assert not np.array_equal(generate_tx_block(cfg, 7), generate_tx_block(cfg, 8))


@settings(max_examples=40, deadline=None)
@given(snr=st.floats(-15, 30), seed=st.integers(0, 10**6))
def test_noise_is_calibrated_to_the_requested_snr(snr, seed):
    y = generate_tx_block(TxFrameConfig(1024), seed)
    out, noise = impair(y, ChannelConfig(snr_db=snr), seed + 1, return_noise=True)
    assert measured_snr_db(out - noise, out) == pytest.approx(snr, abs=1e-9)


def test_infinite_snr_adds_no_noise():
    y = generate_tx_block(TxFrameConfig(128), 0)
    assert np.allclose(impair(y, ChannelConfig(), seed=0), y)


def test_nan_snr_rejected():
    with pytest.raises(ValueError):
        ChannelConfig(snr_db=float("nan"))


def test_integer_fractional_delay_is_a_roll():
    x = np.arange(8, dtype=complex)
    assert np.allclose(fractional_delay(x, 3), np.roll(x, 3))
    assert np.allclose(fractional_delay(x, 3.0), np.roll(x, 3))


def test_half_sample_delay_twice_is_one_sample():
    x = generate_tx_block(TxFrameConfig(64, "ofdm", num_subcarriers=16), 1)
    assert np.allclose(fractional_delay(fractional_delay(x, 0.5), 0.5), np.roll(x, 1), atol=1e-9)


def test_circular_fir_matches_loop():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    taps = np.array([1.0, 0.2j, -0.1])
    expected = [sum(taps[k] * x[(n - k) % 16] for k in range(3)) for n in range(16)]
    assert np.allclose(circular_fir(x, taps), expected)


def test_signature_taps_respect_the_strength_bound():
    cb = make_codebook("azimuth-24")
    for beam in cb:
        taps = beam_signature(beam, AntennaProfile.from_seed(3, 12))
        assert taps[0] == 1.0
        assert np.all(np.abs(taps[1:]) <= 10 ** (-15 / 20) + 1e-12)
    with pytest.raises(ValueError):
        beam_signature(cb[0], strength_db=-10.0)
    with pytest.raises(ValueError):
        beam_signature(cb[0], antenna_mix=1.5)


def test_signature_depends_on_beam_and_antenna():
    cb = make_codebook("digital-5")
    a, b = AntennaProfile.from_seed(1, 12), AntennaProfile.from_seed(2, 12)
    assert not np.allclose(beam_signature(cb[0], a), beam_signature(cb[1], a))
    assert not np.allclose(beam_signature(cb[0], a), beam_signature(cb[0], b))
    assert np.allclose(beam_signature(cb[0], a, antenna_mix=0), beam_signature(cb[0], b, antenna_mix=0))


def test_apply_beam_scales_by_array_gain():
    g = ArrayGeometry(12)
    beam = steering_vector(g, 0.0)
    x = generate_tx_block(TxFrameConfig(64), 0)
    y = apply_beam(x, beam, None, g, 0.0, taps=[1.0])
    assert np.allclose(y, 12 * x)


def test_room_multipath_depends_on_angle():
    assert room_multipath("basic", 0.0) == room_multipath("basic", 0.0)
    assert room_multipath("basic", 0.0) != room_multipath("basic", 40.0)
    assert room_multipath("basic", 0.0)[0] == (0.0, 1.0 + 0j)
    with pytest.raises(ValueError):
        room_multipath("kitchen", 0.0)


def test_cell_snr_is_clipped():
    grid = ScenarioGrid(ref_snr_db=60.0)
    cb = grid.make_codebook()
    snr = cell_snr_db(grid, cb[2], AntennaProfile.ideal(12), 0.0, "high")
    assert snr == grid.snr_max_db
    grid = ScenarioGrid(ref_snr_db=-60.0)
    assert cell_snr_db(grid, cb[2], AntennaProfile.ideal(12), 0.0, "low") == grid.snr_min_db


def test_synth_block_is_deterministic():
    grid = ScenarioGrid(block_len=256)
    cb = grid.make_codebook()
    cell = next(iter(grid.cells()))
    a = synth_block(grid, cb, cell, 4, 0)
    assert np.array_equal(a, synth_block(grid, cb, cell, 4, 0))
    assert not np.array_equal(a, synth_block(grid, cb, cell, 5, 0))


def test_synth_block_noise_floor_is_unit_power():
    grid = ScenarioGrid(block_len=1024)
    cb = grid.make_codebook()
    cell = next(iter(grid.cells()))
    out, clean, snr = synth_block(grid, cb, cell, 0, 0, return_clean=True)
    assert np.mean(np.abs(out - clean) ** 2) == pytest.approx(1.0)
    assert measured_snr_db(clean, out) == pytest.approx(snr, abs=1e-9)


def test_synth_dataset_is_reproducible(tmp_path):
    grid = ScenarioGrid(block_len=128, blocks_per_cell=3, gains=("mid",), aoas=(0.0, 30.0))
    m1 = synth_dataset(grid, tmp_path / "a")
    synth_dataset(grid, tmp_path / "b")
    assert m1.num_blocks == 5 * 2 * 3
    a = (tmp_path / "a" / "blocks.iqb").read_bytes()
    assert a == (tmp_path / "b" / "blocks.iqb").read_bytes()
    ds = IQDataset(tmp_path / "a")
    assert ds.manifest.aoas == (0.0, 30.0)
    assert sorted(set(ds.labels("aoa_class"))) == [0, 1]


def test_grid_from_file(tmp_path):
    p = tmp_path / "g.cfg"
    p.write_text("codebook = azimuth-elevation-12  # twelve beams\naoas = -30, 0, 30\n"
                 "antenna_seeds = 1,2\nmultipath = false\nref_snr_db = 12.5\n")
    g = ScenarioGrid.from_file(p)
    assert g.codebook == "azimuth-elevation-12"
    assert g.aoas == (-30.0, 0.0, 30.0)
    assert g.antenna_seeds == (1, 2)
    assert g.multipath is False
    assert g.ref_snr_db == 12.5
    assert g.num_cells() == 12 * 3 * 3 * 2


def test_grid_rejects_unknown_keys_and_values():
    with pytest.raises(ValueError, match="unknown scenario key"):
        ScenarioGrid.from_mapping({"colour": "red"})
    with pytest.raises(ValueError):
        ScenarioGrid(gains=("loud",))
    with pytest.raises(ValueError):
        ScenarioGrid(blocks_per_cell=0)
