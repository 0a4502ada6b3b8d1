"""Streaming transducer decoding with pruned beam search and chunked encoding."""

from .core import BeamConfig, ConfigError, Hypothesis, logsumexp, normalized_score
from .model import (
    AudioEmbedding,
    AudioFrame,
    JoinerCache,
    PredictorCache,
    TextEmbedding,
    TransducerModel,
    Vocabulary,
)
from .beam_search import (
    DecodeResult,
    DecodeSession,
    HypothesisSet,
    ProtocolError,
    decode_pruned,
    decode_reference,
    step_streaming,
)
from .chunking import (
    ChunkConfig,
    StreamEncoder,
    Window,
    dt_to_frames,
    encoder_frame_count,
    plan_chunks,
    recompute_ratio,
    stream_encode,
)
from .toy import (
    ModelLoadError,
    ToyModelSpec,
    build_toy_model,
    golden_2x3,
    load_model,
    save_model,
)

__version__ = "0.1.0"
