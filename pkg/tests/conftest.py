import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from videoqg.config import ModelSettings  # noqa: E402
from videoqg.data import SyntheticTaskSpec, generate_synthetic  # noqa: E402
from videoqg.decoder import DecoderConfig  # noqa: E402
from videoqg.encoder import EncoderConfig  # noqa: E402
from videoqg.models import BaselineConfig, build_model  # noqa: E402


def tiny_settings(kind="srcmsa", seed=0, **encoder):
    enc = dict(d_model=16, n_heads=2, n_layers=1, ffn_dim=24)
    enc.update(encoder)
    return ModelSettings(
        kind=kind,
        d_embed=8,
        init_seed=seed,
        encoder=EncoderConfig(**enc),
        decoder=DecoderConfig(d_word=8, d_dec=16, n_layers=1),
        baseline=BaselineConfig(d_hidden=16, n_layers=1),
    )


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(SyntheticTaskSpec(n_examples=40, frame_dim=12, rng_seed=3))


@pytest.fixture
def make_model(tiny_dataset):
    def make(kind="srcmsa", seed=0, **encoder):
        return build_model(tiny_settings(kind, seed, **encoder).spec_for(tiny_dataset))
    return make


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
