"""Grey Wolf Optimizer search over LLM agent configurations (prompt + decoding)."""

from .config import RunConfig, load_config
from .data import QAItem, SplitSpec, emit_report, load_dataset, make_split
from .estimator import AgentGWO
from .exceptions import (
    AgentGWOError,
    ConfigurationError,
    DatasetError,
    EvaluationError,
    LeakageError,
    ProtocolError,
    ProviderError,
    RunAborted,
    ScheduleError,
    ShapeError,
    TransientProviderError,
)
from .fitness import (
    FitnessReport,
    JudgeScores,
    JudgeWeights,
    exact_match_fitness,
    judge_averaged,
    judge_composite,
    rank_population,
)
from .gwo import GreyWolfOptimizer, GwoSchedule, SearchSpace, gwo_minimize
from .orchestrator import RunState, evaluate_champion, initialize_population, run, run_iteration
from .prompts import AdaptationInstruction, adapt_prompt, init_prompt_pool
from .providers import GenerationRequest, GenerationResponse, LLMClient, UsageLedger
from .space import (
    AgentConfig,
    DecodingConfig,
    LeaderWeights,
    PromptTemplate,
    SamplingPolicy,
    sample_decoding,
    single_leader_update,
    weighted_leader_update,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptationInstruction",
    "AgentConfig",
    "AgentGWO",
    "AgentGWOError",
    "ConfigurationError",
    "DatasetError",
    "DecodingConfig",
    "EvaluationError",
    "FitnessReport",
    "GenerationRequest",
    "GenerationResponse",
    "GreyWolfOptimizer",
    "GwoSchedule",
    "JudgeScores",
    "JudgeWeights",
    "LLMClient",
    "LeaderWeights",
    "LeakageError",
    "PromptTemplate",
    "ProtocolError",
    "ProviderError",
    "QAItem",
    "RunAborted",
    "RunConfig",
    "RunState",
    "SamplingPolicy",
    "ScheduleError",
    "SearchSpace",
    "ShapeError",
    "SplitSpec",
    "TransientProviderError",
    "UsageLedger",
    "adapt_prompt",
    "emit_report",
    "evaluate_champion",
    "exact_match_fitness",
    "gwo_minimize",
    "init_prompt_pool",
    "initialize_population",
    "judge_averaged",
    "judge_composite",
    "load_config",
    "load_dataset",
    "make_split",
    "rank_population",
    "run",
    "run_iteration",
    "sample_decoding",
    "single_leader_update",
    "weighted_leader_update",
]
