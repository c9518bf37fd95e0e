import numpy as np
import pytest

from campnet import (
    FeatureSequence,
    ModelConfig,
    SyntheticCorpusSpec,
    build_model,
    generate_synthetic,
)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(rep, "when", "call") == "call":
                rows.append((nodeid.split("::")[-1], status.upper()))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in rows:
            terminalreporter.write_line(f"{name}: {status}")

TINY_MODEL = dict(hidden_dim=32, ffn_dim=64, heads=4, conv_channels=32,
                  phoneme_embed_dim=32)


@pytest.fixture(scope="session")
def small_corpus():
    spec = SyntheticCorpusSpec(
        vocab_size=8,
        utterance_count=24,
        phonemes_per_utt=(5, 8),
        frames_per_phoneme=(5, 9),
        seed=3,
        speakers=2,
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def tiny_model(small_corpus):
    config = ModelConfig(vocab_size=8, **TINY_MODEL)
    return build_model(config, seed=1)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


def random_features(rng, T=12):
    values = rng.normal(size=(T, 32)).astype(np.float32)
    values[:, 30] = rng.uniform(90.0, 250.0, size=T)
    values[:, 31] = rng.uniform(0.0, 1.0, size=T)
    return FeatureSequence(values)
