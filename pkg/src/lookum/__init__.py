"""Lookahead-unmasking decoding engine for masked diffusion sequence models."""

from .core import (
    PredictiveField,
    ScoreKind,
    SequenceState,
    Vocabulary,
    entropy,
    masked_indices,
    rank_masked,
    score,
)
from .decoding import ARGMAX, DecodeResult, StepRecord, TokenRule
from .errors import (
    ConfigError,
    InvalidDistributionError,
    LookumError,
    OracleError,
    ProtocolError,
    TransportError,
)
from .lookahead import (
    Particle,
    PathProposal,
    PoolPolicy,
    SelectionScheme,
    VerifierKind,
    build_pool,
    decode_lookum,
    nis_select,
    nis_weights,
    propose_paths,
    smc_step,
    systematic_resample,
    verify,
    verify_state,
)
from .models import (
    ModelBackend,
    OracleBackend,
    OracleSupport,
    RemoteBackend,
    RemoteModelConfig,
    noise_wrap,
    oracle_predict,
    remote_predict,
    temperature_wrap,
)
from .rewards import CallableReward, brute_force_target, verifier_as_reward
from .strategies import BudgetSchedule, decode_baseline, greedy_unmask_set
from .tasks import TaskInstance, TaskSpec, generate_task

__version__ = "0.1.0"
