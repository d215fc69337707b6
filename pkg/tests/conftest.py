import sys

import numpy as np
import pytest

from fforge.synthdata import SynthConfig, build_synth_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """4 videos per class, 6 frames each, 32x32."""
    out = tmp_path_factory.mktemp("synth_small")
    return build_synth_dataset(SynthConfig(n_videos_per_class=4, frames_per_video=6, image_size=32, seed=5), out)



def pytest_terminal_summary(terminalreporter):
    """Print one pass/fail line per acceptance criterion that ran."""
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
