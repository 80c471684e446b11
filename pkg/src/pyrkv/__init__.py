"""Head-aware pyramidal KV cache toolkit.

Offline attention-head classification from logit traces, per-class cache
index policies, ragged attention and an autoregressive cache simulator.
"""

from .attention import (
    InvocationCounter,
    RaggedBatch,
    dense_attention,
    fused_ragged_call,
    pack_ragged,
    ragged_attention,
    unfused_ragged_call,
)
from .classify import (
    ClassifyConfig,
    HeadClassMap,
    PeriodEstimate,
    classify_head,
    classify_model,
    estimate_period,
    mean_logit,
    sign_rates,
)
from .heads import HeadClass, HeadKind
from .policy import (
    PolicyConfig,
    anchor_indices,
    assemble_cache,
    dynamic_rope_positions,
    veil_merge_plan,
    wave_indices,
)
from .rope import apply_rope, dominant_rope_period, rope_frequencies
from .sim import Mode, SimConfig, SimReport, compare_outputs, run
from .trace import (
    LogitSequence,
    LogitTrace,
    PatternSpec,
    extract_history_sequence,
    read_trace,
    synth_trace,
    synthesize_sequence,
    write_trace,
)

__version__ = "0.1.0"
