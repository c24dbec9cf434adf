from fractions import Fraction

import pytest

from beamwave import latency as lat


def test_exact_reads_floats_as_decimals():
    assert lat.exact(8.91875e-06) == Fraction(891875, 10**11)
    assert lat.exact("0.492e-3") == Fraction(492, 10**6)


def test_slot_must_be_about_fourteen_symbols():
    with pytest.raises(ValueError):
        lat.NrConfig(t_slot=Fraction("250e-6"))


def test_bursts_and_residual():
    assert lat.bursts_and_residual(144, 64) == (2, 16)
    assert lat.bursts_and_residual(64, 64) == (0, 64)
    assert lat.bursts_and_residual(65, 64) == (1, 1)


def test_partial_burst_even_and_odd():
    cfg = lat.NrConfig()
    assert lat.t_hat_ebs(16, cfg) == 8 * cfg.t_slot - 2 * cfg.t_sym
    assert lat.t_hat_ebs(5, cfg) == 2 * cfg.t_slot + 6 * cfg.t_sym
    with pytest.raises(ValueError):
        lat.t_hat_ebs(0, cfg)


def test_ebs_grows_by_one_period_per_doubling():
    values = [lat.t_ebs(lat.SweepScenario(), lat.NrConfig().with_period(Fraction(p, 1000)))
              for p in lat.SS_PERIODS_MS]
    diffs = [b - a for a, b in zip(values, values[1:])]
    assert diffs == [Fraction(10, 1000), Fraction(20, 1000), Fraction(40, 1000)]


def test_eavesdrop_symbols():
    assert lat.symbols_to_eavesdrop(512, 3300) == 1
    assert lat.symbols_to_eavesdrop(3301, 3300) == 2
    with pytest.raises(ValueError):
        lat.symbols_to_eavesdrop(0, 10)


def test_passive_latency_is_stage_bound_for_small_j():
    timing = lat.figure_timing(j=1)
    got = lat.t_db(1, 1, 12, timing)
    assert got == 11 * timing.stage_delay + lat.NrConfig().t_sym + timing.final_delay


def test_passive_latency_is_collection_bound_for_large_j():
    timing = lat.ClassifierTiming(Fraction(0), Fraction(0), 100)
    cfg = lat.NrConfig()
    assert lat.t_db(100, 1, 12, timing, cfg) == lat.t_db_data(100, 1, 12, cfg)


def test_text_labels_swap_the_constants():
    t = lat.ClassifierTiming.from_labels(t_c_e2e="0.492e-3", t_c_max="0.34e-3")
    assert t.stage_delay == Fraction("0.34e-3")
    assert t.final_delay == Fraction("0.492e-3")
    with pytest.raises(ValueError):
        lat.ClassifierTiming.from_labels(t_c_e2e="0.1e-3", t_c_max="0.2e-3")


def test_samples_in_interval_floors():
    assert lat.samples_in_interval(10, Fraction(1, 3)) == 3
    with pytest.raises(ValueError):
        lat.samples_in_interval(0, 1)


def test_latency_table_shape():
    rows = lat.latency_table()
    assert len(rows) == 16
    assert {r[1] for r in rows} == {"nr-ebs", "passive-j1", "passive-j4", "passive-j14"}
