"""Transmit-beam and angle-of-arrival inference from raw I/Q samples.

Subpackages and modules:

- ``array``: uniform linear arrays, quantized codebooks, beam patterns
- ``waveform``: synthetic received I/Q blocks and scenario grids
- ``dataset``: binary block storage, manifests, splits and batching
- ``nn``: the convolutional classifiers, trained with NumPy only
- ``latency``: beam-sweep latency of exhaustive search vs. classification
- ``engine``: streaming inference, tuple queue and beam ranking
- ``evaluation``: confusion matrices and stratified accuracy
"""

from .array import ArrayGeometry, BeamWeights, Codebook, PhaseQuantizer, make_codebook
from .dataset import IQDataset, Label, SplitSpec
from .engine import EngineConfig, InferenceTuple, Trigger, TupleQueue, rank_beams, rsrp, run_stream
from .waveform import ScenarioGrid, synth_dataset

__version__ = "0.1.0"
