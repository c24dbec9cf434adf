"""Beam-sweep latency: NR exhaustive SSB sweep versus passive classification.

All arithmetic is done on exact rationals (seconds), so tabulated values
can be compared at microsecond tolerance without float drift. Inputs may
be floats, ints, strings or Fractions; floats are read through their
shortest decimal representation (8.91875e-06 becomes exactly 891875/1e11).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

SS_PERIODS_MS = (5, 10, 20, 40)
FIG_J_VALUES = (1, 4, 14)


def exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class NrConfig:
    """Numerology-3 frame constants; times in seconds."""

    t_sym: Fraction = Fraction("8.91875e-6")
    t_slot: Fraction = Fraction("125e-6")
    n_ss: int = 64
    t_ss: Fraction = Fraction("20e-3")
    subcarriers: int = 3300

    def __post_init__(self):
        for name in ("t_sym", "t_slot", "t_ss"):
            object.__setattr__(self, name, exact(getattr(self, name)))
        if min(self.t_sym, self.t_slot, self.t_ss) <= 0 or self.n_ss < 1 or self.subcarriers < 1:
            raise ValueError("NR constants must be positive")
        if abs(self.t_slot - 14 * self.t_sym) > Fraction(2, 100) * self.t_slot:
            raise ValueError(f"t_slot {float(self.t_slot)} is not ~14 symbols of {float(self.t_sym)}")

    def with_period(self, t_ss) -> "NrConfig":
        return NrConfig(self.t_sym, self.t_slot, self.n_ss, exact(t_ss), self.subcarriers)


@dataclass(frozen=True)
class ClassifierTiming:
    """Classifier pipeline timing in seconds.

    ``stage_delay`` is paid once per additional beam (it multiplies
    N_tx - 1 inside the outer max) and ``final_delay`` once at the end.
    The published latency bars are reproduced with stage_delay = 0.492 ms
    and final_delay = 0.34 ms (see ``figure_timing``); reading the text's
    labels literally gives the opposite assignment (``from_labels``).
    """

    stage_delay: Fraction = Fraction("0.492e-3")
    final_delay: Fraction = Fraction("0.34e-3")
    symbols_per_user: int = 1  # J
    xi: int = 512  # I/Q samples per inference, K * L

    def __post_init__(self):
        for name in ("stage_delay", "final_delay"):
            object.__setattr__(self, name, exact(getattr(self, name)))
        if self.stage_delay < 0 or self.final_delay < 0:
            raise ValueError("delays must be non-negative")
        if self.symbols_per_user < 1 or self.xi < 1:
            raise ValueError("J and xi must be >= 1")

    @classmethod
    def from_labels(cls, t_c_e2e, t_c_max, symbols_per_user: int = 1, xi: int = 512) -> "ClassifierTiming":
        """Map end-to-end / slowest-stage latencies as the text names them."""
        e2e, mx = exact(t_c_e2e), exact(t_c_max)
        if mx > e2e:
            raise ValueError("slowest-stage latency cannot exceed the end-to-end latency")
        return cls(stage_delay=mx, final_delay=e2e, symbols_per_user=symbols_per_user, xi=xi)


def figure_timing(j: int = 1, xi: int = 512) -> ClassifierTiming:
    return ClassifierTiming(Fraction("0.492e-3"), Fraction("0.34e-3"), j, xi)


@dataclass(frozen=True)
class SweepScenario:
    n_tx: int = 12
    m_rx: int = 12

    def __post_init__(self):
        if self.n_tx < 1 or self.m_rx < 1:
            raise ValueError("beam counts must be >= 1")


def t_hat_ebs(n_hat: int, cfg: NrConfig = NrConfig()) -> Fraction:
    """Time taken by the last, partially filled SSB burst."""
    if n_hat < 1:
        raise ValueError("residual SSB count must be >= 1")
    if n_hat % 2 == 0:
        return Fraction(n_hat, 2) * cfg.t_slot - 2 * cfg.t_sym
    return (n_hat // 2) * cfg.t_slot + 6 * cfg.t_sym


def bursts_and_residual(n_beams: int, n_ss: int) -> tuple[int, int]:
    full = -(-n_beams // n_ss) - 1
    return full, n_beams - full * n_ss


def t_ebs(scenario: SweepScenario, cfg: NrConfig = NrConfig()) -> Fraction:
    """Exhaustive sweep time over all N_tx * M_rx beam pairs."""
    full, n_hat = bursts_and_residual(scenario.n_tx * scenario.m_rx, cfg.n_ss)
    return cfg.t_ss * full + t_hat_ebs(n_hat, cfg)


def symbols_to_eavesdrop(xi: int, subcarriers: int) -> int:
    if xi < 1 or subcarriers < 1:
        raise ValueError("xi and subcarriers must be positive")
    return -(-xi // subcarriers)


def t_db_data(j: int, e: int, n_tx: int, cfg: NrConfig = NrConfig()) -> Fraction:
    """Passive data collection time over N_tx transmit beams."""
    if min(j, e, n_tx) < 1:
        raise ValueError("J, E and N_tx must be >= 1")
    return max(j, e) * n_tx * cfg.t_sym


def t_db(j: int, e: int, n_tx: int, timing: ClassifierTiming = ClassifierTiming(),
         cfg: NrConfig = NrConfig()) -> Fraction:
    """Collection plus pipelined classification time."""
    if min(j, e, n_tx) < 1:
        raise ValueError("J, E and N_tx must be >= 1")
    per_beam = max(j, e) * cfg.t_sym
    return max(per_beam, timing.stage_delay) * (n_tx - 1) + per_beam + timing.final_delay


def t_db_for(scenario: SweepScenario, timing: ClassifierTiming, cfg: NrConfig = NrConfig()) -> Fraction:
    e = symbols_to_eavesdrop(timing.xi, cfg.subcarriers)
    return t_db(timing.symbols_per_user, e, scenario.n_tx, timing, cfg)


def speedup(scenario: SweepScenario = SweepScenario(), cfg: NrConfig = NrConfig(),
            timing: ClassifierTiming = ClassifierTiming()) -> Fraction:
    db = t_db_for(scenario, timing, cfg)
    if db <= 0:
        raise ValueError("classification latency must be positive")
    return t_ebs(scenario, cfg) / db


def samples_in_interval(sample_rate, duration) -> int:
    rate, dur = exact(sample_rate), exact(duration)
    if rate <= 0 or dur < 0:
        raise ValueError("sample rate must be positive and duration non-negative")
    return math.floor(rate * dur)


def latency_table(cfg: NrConfig = NrConfig(), scenario: SweepScenario = SweepScenario(),
                  periods_ms=SS_PERIODS_MS, j_values=FIG_J_VALUES, xi: int = 512,
                  stage_delay=Fraction("0.492e-3"), final_delay=Fraction("0.34e-3")) -> list:
    """Rows (T_SS ms, series, milliseconds) for the sweep-latency bar chart."""
    rows = []
    for p in periods_ms:
        c = cfg.with_period(exact(p) / 1000)
        rows.append((p, "nr-ebs", t_ebs(scenario, c) * 1000))
        for j in j_values:
            timing = ClassifierTiming(stage_delay, final_delay, j, xi)
            rows.append((p, f"passive-j{j}", t_db_for(scenario, timing, c) * 1000))
    return rows


def speedup_table(cfg: NrConfig = NrConfig(), scenario: SweepScenario = SweepScenario(),
                  periods_ms=SS_PERIODS_MS, j_values=FIG_J_VALUES, xi: int = 512,
                  stage_delay=Fraction("0.492e-3"), final_delay=Fraction("0.34e-3")) -> list:
    rows = []
    for p in periods_ms:
        c = cfg.with_period(exact(p) / 1000)
        for j in j_values:
            rows.append((p, j, speedup(scenario, c, ClassifierTiming(stage_delay, final_delay, j, xi))))
    return rows
