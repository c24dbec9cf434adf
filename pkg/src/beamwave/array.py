"""Uniform linear phased array with quantized phase shifters.

Angles are in degrees throughout; element spacing is in wavelengths.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CODEBOOK_KINDS = ("azimuth-24", "azimuth-elevation-12", "digital-5")

# dB floor used when |AF| is exactly zero
PATTERN_FLOOR_DB = -120.0

# relative amplitude of the upper elevation row in the 12-beam codebook
ELEVATION_ROW_GAINS = (1.0, 10 ** (-3.0 / 20))


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int = 12
    element_spacing: float = 0.5
    carrier_freq: float = 60.48e9

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if not self.element_spacing > 0:
            raise ValueError(f"element_spacing must be > 0, got {self.element_spacing}")
        if not self.carrier_freq > 0:
            raise ValueError(f"carrier_freq must be > 0, got {self.carrier_freq}")

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.num_elements) * self.element_spacing


@dataclass(frozen=True)
class PhaseQuantizer:
    """Uniform phase shifter with ``num_levels`` settings on [0, 360)."""

    num_levels: int = 4

    def __post_init__(self):
        if self.num_levels < 1:
            raise ValueError(f"num_levels must be >= 1, got {self.num_levels}")

    @property
    def step_deg(self) -> float:
        return 360.0 / self.num_levels

    @property
    def levels_deg(self) -> np.ndarray:
        return np.arange(self.num_levels) * self.step_deg


@dataclass(frozen=True, eq=False)
class BeamWeights:
    """Per-element complex weights of one transmit beam.

    ``gain`` is a scalar amplitude applied on top of the unit-magnitude
    weights; it stands in for the elevation row of the 12-beam codebook.
    """

    weights: np.ndarray
    beam_id: int = 0
    design_angle: float = 0.0
    gain: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.complex128)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D vector")
        object.__setattr__(self, "weights", w)

    @property
    def num_elements(self) -> int:
        return self.weights.size

    @property
    def phases_deg(self) -> np.ndarray:
        return np.mod(np.degrees(np.angle(self.weights)), 360.0)

    def fingerprint(self) -> bytes:
        """Stable digest of the weight vector, robust to float noise."""
        ph = np.round(self.phases_deg, 6) % 360.0
        mag = np.round(np.abs(self.weights), 9)
        payload = np.concatenate([ph, mag, [round(self.gain, 9)]]).astype("<f8")
        return hashlib.sha256(payload.tobytes()).digest()


@dataclass(frozen=True)
class Codebook:
    beams: tuple
    kind: str
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)

    def __post_init__(self):
        ids = [b.beam_id for b in self.beams]
        if ids != list(range(len(ids))):
            raise ValueError(f"beam ids must be 0..N-1 in order, got {ids}")
        for b in self.beams:
            if b.num_elements != self.geometry.num_elements:
                raise ValueError(
                    f"beam {b.beam_id} has {b.num_elements} weights, "
                    f"geometry has {self.geometry.num_elements} elements"
                )

    def __len__(self) -> int:
        return len(self.beams)

    def __getitem__(self, i: int) -> BeamWeights:
        return self.beams[i]

    def __iter__(self):
        return iter(self.beams)

    @property
    def design_angles(self) -> np.ndarray:
        return np.array([b.design_angle for b in self.beams])


def _check_angle(angle) -> np.ndarray:
    a = np.asarray(angle, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < -90) or np.any(a > 90):
        raise ValueError(f"angle must lie in [-90, 90] degrees, got {angle}")
    return a


def steering_vector(geometry: ArrayGeometry, angle: float, beam_id: int = 0) -> BeamWeights:
    """Unquantized weights that point the main lobe at ``angle``."""
    a = float(_check_angle(angle))
    phase = -2 * np.pi * geometry.positions * np.sin(np.radians(a))
    return BeamWeights(np.exp(1j * phase), beam_id=beam_id, design_angle=a)


def quantize(weights: BeamWeights, q: PhaseQuantizer = PhaseQuantizer()) -> BeamWeights:
    """Snap each element phase to the nearest quantizer level.

    Exact midpoints go to the lower level. Magnitudes are reset to one.
    """
    step = q.step_deg
    x = np.round(weights.phases_deg / step, 9)
    idx = np.mod(np.ceil(x - 0.5), q.num_levels)
    w = np.exp(1j * np.radians(idx * step))
    # cos(pi/2) leaves ~1e-16 residue; zero it so quadrant levels are exact
    w = np.where(np.abs(w.real) < 1e-15, 0.0, w.real) + 1j * np.where(np.abs(w.imag) < 1e-15, 0.0, w.imag)
    return BeamWeights(w, beam_id=weights.beam_id, design_angle=weights.design_angle, gain=weights.gain)


def array_factor(weights: BeamWeights, geometry: ArrayGeometry, angle):
    """Complex far-field gain; scalar in, scalar out, array in, array out."""
    if weights.num_elements != geometry.num_elements:
        raise ValueError(
            f"weight length {weights.num_elements} != num_elements {geometry.num_elements}"
        )
    a = np.asarray(angle, dtype=float)
    steer = np.exp(1j * 2 * np.pi * np.multiply.outer(np.sin(np.radians(a)), geometry.positions))
    af = weights.gain * (steer @ weights.weights)
    return complex(af) if af.ndim == 0 else af


def beam_pattern(weights: BeamWeights, geometry: ArrayGeometry, grid: Sequence[float]) -> np.ndarray:
    """Return an (n, 2) array of (angle, power dB) over ``grid``."""
    g = np.asarray(grid, dtype=float).ravel()
    if g.size == 0:
        raise ValueError("beam_pattern needs a non-empty angle grid")
    mag = np.abs(array_factor(weights, geometry, g))
    with np.errstate(divide="ignore"):
        db = np.where(mag > 0, 20 * np.log10(np.where(mag > 0, mag, 1.0)), PATTERN_FLOOR_DB)
    return np.column_stack([g, db])


def make_codebook(
    kind: str,
    geometry: ArrayGeometry | None = None,
    quantizer: PhaseQuantizer | None = None,
) -> Codebook:
    """Build one of the supported transmit codebooks.

    azimuth-24 fans 24 quantized beams over [-60, 60]; digital-5 fans 5
    unquantized beams over [-45, 45]; azimuth-elevation-12 is two rows of
    six quantized azimuth beams, the rows distinguished by a scalar gain.
    """
    geometry = geometry or ArrayGeometry()
    quantizer = quantizer or PhaseQuantizer()
    if kind == "azimuth-24":
        angles = np.linspace(-60.0, 60.0, 24)
        beams = [quantize(steering_vector(geometry, a, i), quantizer) for i, a in enumerate(angles)]
    elif kind == "digital-5":
        angles = np.linspace(-45.0, 45.0, 5)
        beams = [steering_vector(geometry, a, i) for i, a in enumerate(angles)]
    elif kind == "azimuth-elevation-12":
        cols = np.linspace(-60.0, 60.0, 6)
        beams = []
        for row, g in enumerate(ELEVATION_ROW_GAINS):
            for c, a in enumerate(cols):
                w = quantize(steering_vector(geometry, a), quantizer)
                beams.append(BeamWeights(w.weights, beam_id=row * len(cols) + c, design_angle=float(a), gain=g))
    else:
        raise ValueError(f"unsupported codebook kind {kind!r}; expected one of {CODEBOOK_KINDS}")
    return Codebook(tuple(beams), kind, geometry)


def save_codebook(codebook: Codebook, path) -> None:
    """Write the text codebook format (see docs/formats.md)."""
    g = codebook.geometry
    lines = [
        f"# kind = {codebook.kind}",
        f"# num_elements = {g.num_elements}",
        f"# element_spacing = {g.element_spacing!r}",
        f"# carrier_freq = {g.carrier_freq!r}",
    ]
    gains = [b.gain for b in codebook]
    if any(x != 1.0 for x in gains):
        lines.append("# gains = " + ", ".join(repr(float(x)) for x in gains))
    for b in codebook:
        fields = [str(b.beam_id), repr(float(b.design_angle))]
        for ph, mag in zip(np.degrees(np.angle(b.weights)), np.abs(b.weights)):
            fields += [repr(float(ph)), repr(float(mag))]
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def load_codebook(path) -> Codebook:
    header = {}
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                header[key.strip()] = value.strip()
            continue
        rows.append(line.split())
    if not rows:
        raise ValueError(f"{path}: no beams found")
    n = (len(rows[0]) - 2) // 2
    geometry = ArrayGeometry(
        num_elements=int(header.get("num_elements", n)),
        element_spacing=float(header.get("element_spacing", 0.5)),
        carrier_freq=float(header.get("carrier_freq", 60.48e9)),
    )
    gains = [float(x) for x in header["gains"].split(",")] if "gains" in header else [1.0] * len(rows)
    beams = []
    for lineno, fields in enumerate(rows):
        if len(fields) != 2 + 2 * geometry.num_elements:
            raise ValueError(f"{path}: beam line {lineno} has {len(fields)} fields")
        vals = np.array([float(x) for x in fields[2:]]).reshape(-1, 2)
        w = vals[:, 1] * np.exp(1j * np.radians(vals[:, 0]))
        beams.append(BeamWeights(w, beam_id=int(fields[0]), design_angle=float(fields[1]), gain=gains[lineno]))
    return Codebook(tuple(beams), header.get("kind", "custom"), geometry)


def peak_angle(weights: BeamWeights, geometry: ArrayGeometry, grid: Iterable[float]) -> float:
    pat = beam_pattern(weights, geometry, list(grid))
    return float(pat[np.argmax(pat[:, 1]), 0])
