"""Joiner calls and accuracy as the expansion and state beams tighten.

Runs the pruned search and the unpruned reference over part of the
standard toy workload and tabulates total joiner calls for a grid of beams.
"""

import numpy as np

from rnnt_stream import BeamConfig, build_toy_model, decode_pruned, decode_reference
from rnnt_stream.bench import STANDARD_MODEL, standard_workload
from rnnt_stream.chunking import encode_offline
from rnnt_stream.features import synthetic_features

INF = float("inf")
model = build_toy_model(STANDARD_MODEL)
workload = standard_workload(40)
utterances = [
    encode_offline(synthetic_features(n, model.feature_dim, seed), model, workload.chunk_config)
    for n, seed in workload.utterances
]

reference = [decode_reference(e, model, BeamConfig(5)) for e in utterances]
ref_calls = sum(r.stats.joiner_calls for r in reference)
print(f"reference: {ref_calls} joiner calls over {len(utterances)} utterances\n")

expand_beams = (1.0, 1.5, 2.3, INF)
state_beams = (2.3, 4.6, INF)
print("expand\\state" + "".join(f"{s:>16}" for s in state_beams))
for eb in expand_beams:
    cells = []
    for sb in state_beams:
        results = [decode_pruned(e, model, BeamConfig(5, eb, sb)) for e in utterances]
        calls = sum(r.stats.joiner_calls for r in results)
        same = sum(r.labels == ref.labels for r, ref in zip(results, reference))
        cells.append(f"{calls:>8} {same:>3}/{len(results)}")
    print(f"{eb:>12}" + "".join(f"{c:>16}" for c in cells))

print("\ncells: total joiner calls, then utterances whose output matches the reference")
# Totals shrink as beams tighten, but a single utterance can cost more at a
# tighter beam: pruning changes which hypotheses survive into the next frame.
