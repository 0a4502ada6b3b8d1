"""Chunk windows, right-context recomputation and the decoding threshold.

A window covers cs raw frames and emits all but its last rc of them; the next
window starts where emission stopped. Shrinking DT at fixed right context
means more windows and more recomputed frames.
"""

from rnnt_stream import ChunkConfig, encoder_frame_count, plan_chunks, recompute_ratio
from rnnt_stream.chunking import max_latency_ms

cfg = ChunkConfig.from_ms(dt_ms=800, rc_ms=200)
print(f"DT 800 ms, rc 200 ms -> cs={cfg.cs_frames} frames, rc={cfg.rc_frames}, stride={cfg.stride}")
for w in plan_chunks(250, cfg):
    print(f"  encode [{w.chunk_start:>3}, {w.chunk_end:>3})  emit [{w.emit_start:>3}, {w.emit_end:>3})")

print(f"\n{'DT ms':>6}{'cs':>5}{'frames/utt':>12}{'ratio':>8}{'latency ms':>12}")
T = 1000
for dt in (2000, 1500, 800, 400, 300):
    c = ChunkConfig.from_ms(dt, 200)
    print(f"{dt:>6}{c.cs_frames:>5}{encoder_frame_count(T, c):>12}{recompute_ratio(c):>8.3f}"
          f"{max_latency_ms(plan_chunks(T, c), c.frame_shift_ms):>12}")
print(f"\nframes/utt is for a {T}-frame utterance; the encoder sees each frame 'ratio' times")
