"""Walk the pruned search through the two-frame golden table model.

The golden model has a three-symbol vocabulary (blank, a, b) and fixed
probabilities per (frame, prefix), so every number printed below can be
checked by hand.
"""

import numpy as np

from rnnt_stream import BeamConfig, decode_pruned, decode_reference
from rnnt_stream.toy import load_fixture

model = load_fixture("golden-2x3")
embeddings = model.encode_chunk(np.zeros((model.n_frames, model.feature_dim)), 0, (0, model.n_frames))


def show(hyps):
    return ", ".join(f"{model.vocab.detokenize(k) or '<empty>'}:{v:.4f}" for k, v in sorted(hyps.items()))


# W=2, expand beam 2.3, state beam 4.6, at most two labels per frame
trace = []
result = decode_pruned(embeddings, model, BeamConfig(2, 2.3, 4.6, 2), trace=trace)
for step in trace:
    line = f"t={step['t']} {step['event']:<8}"
    if "y" in step:
        line += f" popped {model.vocab.detokenize(step['y']) or '<empty>'}"
    if "reason" in step:
        line += f" ({step['reason']})"
    if "A" in step:
        line += f"  A[{show(step['A'])}]"
    if "B" in step:
        line += f"  B[{show(step['B'])}]"
    print(line)

print()
print("best:", model.vocab.detokenize(result.labels), f"log p = {result.score:.6f}")
print("stats:", result.stats.to_dict())

# The unpruned search lands on the same answer with more joiner work.
ref = decode_reference(embeddings, model, BeamConfig(2, max_symbols_per_frame=2))
print("reference best:", model.vocab.detokenize(ref.labels), f"joiner calls = {ref.stats.joiner_calls}")
