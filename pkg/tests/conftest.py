import numpy as np
import pytest

from rnnt_stream.toy import ToyModelSpec, build_toy_model, golden_2x3, random_table_model


def table_embeddings(model):
    """All frame embeddings of a table model, in order."""
    return model.encode_chunk(np.zeros((model.n_frames, model.feature_dim)), 0, (0, model.n_frames))


def random_instance(seed, max_T=20, max_V=8):
    """A small linear-recurrent model plus the embeddings of one random utterance."""
    rng = np.random.default_rng(seed)
    V = int(rng.integers(2, max_V + 1))
    T = int(rng.integers(0, max_T + 1))
    spec = ToyModelSpec(
        feature_dim=3, encoder_dim=4, predictor_dim=4, vocab_size=V, seed=int(seed),
        logit_scale=float(rng.uniform(1.0, 6.0)), blank_bias=float(rng.uniform(0.0, 4.0)),
    )
    model = build_toy_model(spec)
    feats = rng.standard_normal((T, spec.feature_dim))
    return model, model.encode_chunk(feats, 0, (0, T)) if T else []


def tiny_table_instance(seed, max_T=4, max_V=3, max_total=2):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, max_T + 1))
    V = int(rng.integers(2, max_V + 1))
    model = random_table_model(T, V, max_total, seed)
    return model, table_embeddings(model)


@pytest.fixture(scope="session")
def golden():
    return golden_2x3()


@pytest.fixture(scope="session")
def golden_embs(golden):
    return table_embeddings(golden)


# -- acceptance summary -----------------------------------------------------

ACCEPTANCE_RESULTS = {}


def record_acceptance(number, ok, detail):
    ACCEPTANCE_RESULTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
