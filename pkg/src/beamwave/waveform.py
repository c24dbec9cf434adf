"""Synthetic received I/Q blocks for a chosen transmit beam and channel.

The received block is built in three stages:

1. ``generate_tx_block`` draws a unit-power payload (QPSK single carrier
   or OFDM).
2. ``apply_beam`` multiplies by the complex array gain of the beam, after
   per-element antenna errors, and convolves with a short per-beam FIR
   signature so each beam leaves a small, repeatable mark on the
   constellation.
3. ``impair`` adds multipath, carrier phase and frequency offset, a
   fractional timing shift, receiver gain and calibrated AWGN.

``synth_dataset`` sweeps a grid of beams, angles, gains, antennas and
scenarios and streams the blocks into a ``DatasetWriter``.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .array import CODEBOOK_KINDS, ArrayGeometry, BeamWeights, Codebook, array_factor, make_codebook
from .dataset import SCENARIOS, DatasetManifest, DatasetWriter, Label

MODULATIONS = ("qpsk-singlecarrier", "ofdm")
RX_GAIN_DB = {"low": -10.0, "mid": 0.0, "high": 10.0}
RX_GAIN_NAMES = tuple(RX_GAIN_DB)


@dataclass(frozen=True)
class TxFrameConfig:
    block_len: int = 2048
    modulation: str = "qpsk-singlecarrier"
    oversampling: int = 1
    rolloff: float = 0.25
    sample_rate: float = 3.072e9
    num_subcarriers: int = 256

    def __post_init__(self):
        if self.block_len < 1:
            raise ValueError("block_len must be positive")
        if self.modulation not in MODULATIONS:
            raise ValueError(f"modulation must be one of {MODULATIONS}, got {self.modulation!r}")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if not 0 <= self.rolloff <= 1:
            raise ValueError("rolloff must lie in [0, 1]")

    @property
    def ofdm_symbol_len(self) -> int:
        return self.num_subcarriers * self.oversampling


def rrc_taps(rolloff: float, sps: int, span: int = 8) -> np.ndarray:
    """Root-raised-cosine pulse normalized to unit energy."""
    t = np.arange(-span * sps, span * sps + 1) / sps
    h = np.empty_like(t)
    b = rolloff
    for i, ti in enumerate(t):
        if ti == 0:
            h[i] = 1 - b + 4 * b / np.pi
        elif b > 0 and np.isclose(abs(ti), 1 / (4 * b)):
            h[i] = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                     + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
        else:
            h[i] = (np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))) / (
                np.pi * ti * (1 - (4 * b * ti) ** 2))
    return h / np.sqrt(np.sum(h ** 2))


def _qpsk(rng: np.random.Generator, n: int) -> np.ndarray:
    bits = rng.integers(0, 4, n)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))


def generate_tx_block(cfg: TxFrameConfig, seed) -> np.ndarray:
    """Random payload of ``cfg.block_len`` samples with unit mean power."""
    rng = np.random.default_rng(seed)
    k = cfg.block_len
    if cfg.modulation == "ofdm":
        n = cfg.ofdm_symbol_len
        nsym = -(-k // n)
        half = cfg.num_subcarriers // 2
        bins = np.zeros((nsym, n), dtype=np.complex128)
        active = np.r_[np.arange(0, half), np.arange(n - half, n)]
        bins[:, active] = _qpsk(rng, nsym * active.size).reshape(nsym, -1)
        x = np.fft.ifft(bins, axis=1).ravel()[:k]
    elif cfg.oversampling == 1:
        x = _qpsk(rng, k)
    else:
        sps = cfg.oversampling
        h = rrc_taps(cfg.rolloff, sps)
        nsym = -(-k // sps) + 2 * len(h) // sps + 2
        up = np.zeros(nsym * sps, dtype=np.complex128)
        up[::sps] = _qpsk(rng, nsym)
        x = np.convolve(up, h)[len(h):len(h) + k]
    return x / np.sqrt(np.mean(np.abs(x) ** 2))


@dataclass(frozen=True, eq=False)
class AntennaProfile:
    """Per-element phase (degrees) and gain (dB) errors of one front end."""

    phase_error_deg: np.ndarray
    gain_error_db: np.ndarray
    seed: int | None = None

    @classmethod
    def from_seed(cls, seed: int, num_elements: int, max_phase_deg: float = 10.0,
                  max_gain_db: float = 1.0) -> "AntennaProfile":
        rng = np.random.default_rng(np.random.SeedSequence([0xA47E, int(seed)]))
        return cls(rng.uniform(-max_phase_deg, max_phase_deg, num_elements),
                   rng.uniform(-max_gain_db, max_gain_db, num_elements), int(seed))

    @classmethod
    def ideal(cls, num_elements: int) -> "AntennaProfile":
        return cls(np.zeros(num_elements), np.zeros(num_elements), None)

    @property
    def element_response(self) -> np.ndarray:
        return 10 ** (np.asarray(self.gain_error_db) / 20) * np.exp(1j * np.radians(self.phase_error_deg))


def perturb(beam: BeamWeights, profile: AntennaProfile) -> BeamWeights:
    """Weights as radiated by a real front end with element errors."""
    resp = profile.element_response
    if resp.size != beam.num_elements:
        raise ValueError(f"profile has {resp.size} elements, beam has {beam.num_elements}")
    return BeamWeights(beam.weights * resp, beam.beam_id, beam.design_angle, beam.gain)


def _digest_rng(*parts: bytes) -> np.random.Generator:
    h = hashlib.sha256(b"".join(parts)).digest()
    return np.random.default_rng(int.from_bytes(h[:16], "little"))


def beam_signature(beam: BeamWeights, profile: AntennaProfile | None = None,
                   strength_db: float = -15.0, antenna_mix: float = 0.25) -> np.ndarray:
    """Three-tap FIR [1, a1, a2] derived from a hash of the beam weights.

    Side-tap magnitudes lie in [0.85, 1] x ``strength_db`` (never above
    -15 dB relative to the main tap) and their phases come from the beam
    hash. With a seeded profile, each phase is additionally rotated by
    ``antenna_mix`` x a (beam, antenna) hash in [-pi, pi), so the same beam
    looks slightly different through different front ends.
    """
    if strength_db > -15.0 + 1e-12:
        raise ValueError("signature taps must stay at or below -15 dB")
    if not 0 <= antenna_mix <= 1:
        raise ValueError("antenna_mix must lie in [0, 1]")
    amp = 10 ** (strength_db / 20)
    rng = _digest_rng(b"beam", beam.fingerprint())
    mag = rng.uniform(0.85, 1.0, 2)
    phase = rng.uniform(0, 2 * np.pi, 2)
    if profile is not None and profile.seed is not None:
        rng_a = _digest_rng(b"antenna", beam.fingerprint(), int(profile.seed).to_bytes(8, "little", signed=True))
        phase = phase + antenna_mix * rng_a.uniform(-np.pi, np.pi, 2)
    return np.r_[1.0 + 0j, amp * mag * np.exp(1j * phase)]


def circular_fir(x: np.ndarray, taps) -> np.ndarray:
    """y[n] = sum_k taps[k] x[n - k], indices modulo len(x)."""
    taps = np.asarray(taps, dtype=np.complex128)
    y = np.zeros(len(x), dtype=np.complex128)
    for k, t in enumerate(taps):
        if t != 0:
            y += t * np.roll(x, k)
    return y


def apply_beam(x, beam: BeamWeights, profile: AntennaProfile | None, geometry: ArrayGeometry,
               angle: float, taps=None, strength_db: float = -15.0, antenna_mix: float = 0.25) -> np.ndarray:
    """Received baseband through ``beam`` seen from ``angle`` off the TX boresight.

    The output is ``AF(beam * profile, angle) * (taps (*) x)``; pass
    ``taps=[1]`` to disable the FIR signature.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.size == 0:
        raise ValueError("apply_beam needs a non-empty input")
    if beam.num_elements != geometry.num_elements:
        raise ValueError(f"beam has {beam.num_elements} weights, geometry has {geometry.num_elements} elements")
    profile = profile or AntennaProfile.ideal(geometry.num_elements)
    gain = array_factor(perturb(beam, profile), geometry, angle)
    if taps is None:
        taps = beam_signature(beam, profile, strength_db, antenna_mix)
    return gain * circular_fir(x, taps)


@dataclass(frozen=True)
class ChannelConfig:
    aoa: float = 0.0
    snr_db: float = float("inf")
    cfo_hz: float = 0.0
    timing_offset: float = 0.0
    rx_gain_index: str = "mid"
    antenna_profile_seed: int = 0
    multipath: tuple = ()  # (delay in samples, complex gain) pairs
    phase: float = 0.0  # carrier phase, radians
    sample_rate: float = 3.072e9

    def __post_init__(self):
        if np.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")
        if self.rx_gain_index not in RX_GAIN_DB:
            raise ValueError(f"rx_gain_index must be one of {RX_GAIN_NAMES}")
        for d, _ in self.multipath:
            if d < 0:
                raise ValueError(f"multipath delays must be >= 0, got {d}")


def fractional_delay(x: np.ndarray, delay: float) -> np.ndarray:
    """Circular delay by a possibly fractional number of samples."""
    if delay == 0:
        return np.array(x, dtype=np.complex128)
    if float(delay).is_integer():
        return np.roll(np.asarray(x, dtype=np.complex128), int(delay))
    n = len(x)
    f = np.fft.fftfreq(n)
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * f * delay))


def impair(y, ch: ChannelConfig, seed, return_noise: bool = False):
    """Channel and receiver impairments, ending with calibrated AWGN.

    The noise is rescaled so that its power over the block is exactly
    ``signal_power / 10**(snr_db/10)``; ``snr_db=inf`` skips the noise.
    """
    y = np.asarray(y, dtype=np.complex128)
    if ch.multipath:
        y = sum(g * fractional_delay(y, d) for d, g in ch.multipath)
    n = np.arange(len(y))
    y = y * np.exp(1j * (2 * np.pi * ch.cfo_hz * n / ch.sample_rate + ch.phase))
    if ch.timing_offset:
        y = fractional_delay(y, ch.timing_offset)
    y = y * 10 ** (RX_GAIN_DB[ch.rx_gain_index] / 20)
    noise = np.zeros_like(y)
    if np.isfinite(ch.snr_db):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y))
        p_sig = np.mean(np.abs(y) ** 2)
        noise = w * np.sqrt(p_sig / 10 ** (ch.snr_db / 10) / np.mean(np.abs(w) ** 2))
    out = y + noise
    return (out, noise) if return_noise else out


def measured_snr_db(clean, noisy) -> float:
    clean = np.asarray(clean)
    noise = np.asarray(noisy) - clean
    return float(10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2)))


def room_multipath(scenario: str, aoa: float, num_paths: int = 2) -> tuple:
    """Deterministic LOS plus reflections for a scenario and RX rotation.

    Reflections arrive from fixed room angles; rotating the receiver by
    ``aoa`` changes how strongly (and with what phase) each one is picked
    up, which is what makes the angle of arrival learnable.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    rng = _digest_rng(b"room", scenario.encode())
    angles = rng.uniform(-150, 150, num_paths)
    delays = rng.integers(1, 6, num_paths).astype(float)
    strength = 10 ** (rng.uniform(-9, -4, num_paths) / 20)
    paths = [(0.0, 1.0 + 0j)]
    for ang, d, s in zip(angles, delays, strength):
        rel = np.radians(ang - aoa)
        pickup = 0.55 + 0.45 * np.cos(rel)
        phase = np.pi * np.sin(rel) + 2 * np.pi * d / 7
        paths.append((float(d), complex(s * pickup * np.exp(1j * phase))))
    return tuple(paths)


def rx_rotation_gain_db(aoa: float) -> float:
    """Receive gain loss when the boresight RX beam is rotated by ``aoa``."""
    return float(20 * np.log10(max(np.cos(np.radians(aoa)), 1e-6)))


@dataclass
class ScenarioGrid:
    """Everything ``synth_dataset`` sweeps, loadable from a key = value file.

    ``ref_snr_db`` is the SNR of an on-axis beam with ideal antenna, mid RX
    gain and no RX rotation; other cells scale by the beam's pattern loss
    at ``departure_angle``, the RX gain and the rotation loss, then clip
    to [snr_min_db, snr_max_db]. Blocks are scaled so the noise floor has
    unit power.
    """

    codebook: str = "digital-5"
    num_elements: int = 12
    aoas: tuple = (0.0,)
    gains: tuple = RX_GAIN_NAMES
    antenna_seeds: tuple = (0,)
    scenarios: tuple = ("basic",)
    blocks_per_cell: int = 200
    master_seed: int = 0
    block_len: int = 2048
    modulation: str = "ofdm"
    oversampling: int = 1
    rolloff: float = 0.25
    num_subcarriers: int = 256
    sample_rate: float = 3.072e9
    ref_snr_db: float = 10.0
    snr_min_db: float = -15.0
    snr_max_db: float = 20.0
    departure_angle: float = 0.0
    cfo_hz: float = 0.0
    timing_offset: float = 0.0
    random_phase: bool = True
    multipath: bool = True
    signature_db: float = -15.0
    antenna_mix: float = 0.25

    def __post_init__(self):
        if self.codebook not in CODEBOOK_KINDS:
            raise ValueError(f"unknown codebook {self.codebook!r}; expected {CODEBOOK_KINDS}")
        if self.blocks_per_cell < 1:
            raise ValueError("blocks_per_cell must be >= 1")
        for g in self.gains:
            if g not in RX_GAIN_DB:
                raise ValueError(f"unknown rx gain {g!r}; expected {RX_GAIN_NAMES}")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValueError(f"unknown scenario {s!r}; expected {SCENARIOS}")

    @property
    def tx_config(self) -> TxFrameConfig:
        return TxFrameConfig(self.block_len, self.modulation, self.oversampling, self.rolloff,
                             self.sample_rate, self.num_subcarriers)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_elements)

    def make_codebook(self) -> Codebook:
        return make_codebook(self.codebook, self.geometry)

    def cells(self):
        """Cartesian grid in storage order: (txb, aoa_class, gain, seed, scenario)."""
        for txb in range(len(self.make_codebook())):
            for ai in range(len(self.aoas)):
                for gain in self.gains:
                    for seed in self.antenna_seeds:
                        for sc in self.scenarios:
                            yield txb, ai, gain, seed, sc

    def num_cells(self) -> int:
        return len(self.make_codebook()) * len(self.aoas) * len(self.gains) * len(self.antenna_seeds) * len(self.scenarios)

    def to_meta(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_file(cls, path) -> "ScenarioGrid":
        text = Path(path).read_text()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        parser.read_string("[grid]\n" + text)
        return cls.from_mapping(dict(parser["grid"]))

    @classmethod
    def from_mapping(cls, raw: dict) -> "ScenarioGrid":
        kinds = {f.name: f for f in fields(cls)}
        kw = {}
        for key, value in raw.items():
            if key not in kinds:
                raise ValueError(f"unknown scenario key {key!r}")
            default = kinds[key].default
            value = str(value).strip()
            if isinstance(default, bool):
                kw[key] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, tuple):
                items = [v.strip() for v in value.split(",") if v.strip()]
                if key in ("aoas",):
                    kw[key] = tuple(float(v) for v in items)
                elif key == "antenna_seeds":
                    kw[key] = tuple(int(v) for v in items)
                else:
                    kw[key] = tuple(items)
            elif isinstance(default, int):
                kw[key] = int(value)
            elif isinstance(default, float):
                kw[key] = float(value)
            else:
                kw[key] = value
        return cls(**kw)


def cell_snr_db(grid: ScenarioGrid, beam: BeamWeights, profile: AntennaProfile, aoa: float, gain: str) -> float:
    af = abs(array_factor(perturb(beam, profile), grid.geometry, grid.departure_angle))
    pattern_db = 20 * np.log10(max(af, 1e-12) / grid.num_elements)
    snr = grid.ref_snr_db + pattern_db + RX_GAIN_DB[gain] + rx_rotation_gain_db(aoa)
    return float(np.clip(snr, grid.snr_min_db, grid.snr_max_db))


def synth_block(grid: ScenarioGrid, codebook: Codebook, cell: tuple, block_index: int,
                cell_index: int, return_clean: bool = False):
    """One received block (complex, unit noise floor) for a grid cell."""
    txb, ai, gain, seed, scenario = cell
    beam = codebook[txb]
    aoa = grid.aoas[ai]
    profile = AntennaProfile.from_seed(seed, grid.num_elements)
    ss = np.random.SeedSequence([grid.master_seed, cell_index, block_index])
    payload_seed, noise_seed, phase_seed = ss.spawn(3)
    x = generate_tx_block(grid.tx_config, payload_seed)
    y = apply_beam(x, beam, profile, grid.geometry, grid.departure_angle,
                   strength_db=grid.signature_db, antenna_mix=grid.antenna_mix)
    snr = cell_snr_db(grid, beam, profile, aoa, gain)
    phase = float(np.random.default_rng(phase_seed).uniform(0, 2 * np.pi)) if grid.random_phase else 0.0
    ch = ChannelConfig(
        aoa=aoa, snr_db=snr, cfo_hz=grid.cfo_hz, timing_offset=grid.timing_offset,
        rx_gain_index=gain, antenna_profile_seed=seed,
        multipath=room_multipath(scenario, aoa) if grid.multipath else (),
        phase=phase, sample_rate=grid.sample_rate,
    )
    out, noise = impair(y, ch, noise_seed, return_noise=True)
    scale = 1.0 / np.sqrt(np.mean(np.abs(noise) ** 2))
    if return_clean:
        return out * scale, (out - noise) * scale, snr
    return out * scale


def synth_dataset(grid: ScenarioGrid, out) -> DatasetManifest:
    """Generate every cell of ``grid`` into the dataset directory ``out``."""
    codebook = grid.make_codebook()
    with DatasetWriter(out, grid.block_len, codebook=grid.codebook, aoas=grid.aoas,
                       master_seed=grid.master_seed, meta=grid.to_meta()) as w:
        for ci, cell in enumerate(grid.cells()):
            txb, ai, gain, seed, scenario = cell
            profile = AntennaProfile.from_seed(seed, grid.num_elements)
            label = Label(txb=txb, aoa_class=ai, gain_index=RX_GAIN_NAMES.index(gain),
                          antenna_seed=seed, scenario=scenario,
                          snr_db=round(cell_snr_db(grid, codebook[txb], profile, grid.aoas[ai], gain), 6))
            for bi in range(grid.blocks_per_cell):
                w.write(synth_block(grid, codebook, cell, bi, ci), label)
    return w.manifest
