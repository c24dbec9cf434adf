import time

import numpy as np
import pytest

from beamwave.dataset import IQDataset, SplitSpec
from beamwave.waveform import ScenarioGrid, synth_dataset
from beamwave.workflow import fit

# Filled by tests/test_acceptance.py and printed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


# Five-beam proxy used by the learning criteria: OFDM payload, random carrier
# phase, room multipath, three receive gains. ref_snr_db = 25 places the
# cells between about -9 and +20 dB.
DIGITAL5 = dict(codebook="digital-5", num_elements=12, block_len=512, gains=("low", "mid", "high"),
                blocks_per_cell=1000, ref_snr_db=25.0, master_seed=1)
DIGITAL5_TRAIN = dict(variant="txb-small-512", epochs=20, lr=1e-3, normalize=True, seed=0)


@pytest.fixture(scope="session")
def digital5(tmp_path_factory):
    """(dataset, model, log, test examples, seconds) for the five-beam proxy, trained once per run."""
    path = tmp_path_factory.mktemp("digital5") / "ds"
    start = time.perf_counter()
    synth_dataset(ScenarioGrid(**DIGITAL5), path)
    ds = IQDataset(path)
    model, log, _, test_set = fit(ds, spec=SplitSpec(0.6, 0), **DIGITAL5_TRAIN)
    return ds, model, log, test_set, time.perf_counter() - start


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
