"""Regenerate the committed golden fixtures under src/rnnt_stream/fixtures.

Run from the repository root after an intentional change to the golden table:

    python3 tools/make_fixtures.py
"""

import numpy as np

from rnnt_stream.features import write_features
from rnnt_stream.oracle import OracleLimit, dumps_posteriors, enumerate_alignments, lattice_posteriors
from rnnt_stream.toy import fixture_path, golden_2x3, save_model


def main() -> None:
    model = golden_2x3()
    save_model(model, fixture_path("golden-2x3.model.json"))
    feats = np.zeros((model.n_frames, model.feature_dim))
    write_features(fixture_path("golden-2x3.features"), feats)

    embs = model.encode_chunk(feats, 0, (0, model.n_frames))
    limit = OracleLimit(max_total_symbols=3)
    post, residual = enumerate_alignments(embs, model, limit)
    dp = lattice_posteriors(embs, model, limit)
    assert set(post) == set(dp), "oracles disagree on support"
    assert all(abs(post[k] - dp[k]) <= 1e-12 for k in post), "oracles disagree on mass"
    assert residual == 0.0
    with open(fixture_path("golden-2x3.posteriors.json"), "w", encoding="utf-8") as f:
        f.write(dumps_posteriors(post))


if __name__ == "__main__":
    main()
