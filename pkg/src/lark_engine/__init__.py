"""Compute-aware evolutionary search over natural-language strategy
populations, with multi-stakeholder ranked-choice selection and a full
evaluation harness (blinded judging, paired statistics, reports)."""

from .aggregation import BordaResult, average_scores, borda_scores, consensus_cv, repair_ranking
from .core import (
    GenerationRecord,
    Population,
    RankingProfile,
    Scenario,
    Stakeholder,
    Strategy,
    Tokenizer,
    load_scenario,
    make_scenario,
    save_scenario,
    tokenize_count,
)
from .errors import LarkError, ProviderError, ScenarioFormatError, TraceError, ValidationError
from .evolution import (
    EvolutionConfig,
    RunTrace,
    VARIANTS,
    read_trace,
    replay,
    run,
    run_ablation_suite,
    select_survivors,
    variant_config,
    write_trace,
)
from .fitness import FitnessRecord, compute_adjusted, duplication_probability, efficiency
from .judging import EvaluationRecord, JudgeConfig, JudgeSpec, judge_outputs
from .providers import (
    GenerationRequest,
    MockProvider,
    OpenAICompatProvider,
    PriceTable,
    ProviderUsage,
)
from .stakeholder_sim import (
    SyntheticUtility,
    make_benchmark_scenarios,
    rank_by_utility,
    utility,
)
from .stats import cohens_dz, holm_adjust, mean_ci, per_round_ranks, wilcoxon_signed_rank

__version__ = "0.1.0"

__all__ = [
    "BordaResult",
    "EvaluationRecord",
    "EvolutionConfig",
    "FitnessRecord",
    "GenerationRecord",
    "GenerationRequest",
    "JudgeConfig",
    "JudgeSpec",
    "LarkError",
    "MockProvider",
    "OpenAICompatProvider",
    "Population",
    "PriceTable",
    "ProviderError",
    "ProviderUsage",
    "RankingProfile",
    "RunTrace",
    "Scenario",
    "ScenarioFormatError",
    "Stakeholder",
    "Strategy",
    "SyntheticUtility",
    "Tokenizer",
    "TraceError",
    "VARIANTS",
    "ValidationError",
    "average_scores",
    "borda_scores",
    "cohens_dz",
    "compute_adjusted",
    "consensus_cv",
    "duplication_probability",
    "efficiency",
    "holm_adjust",
    "judge_outputs",
    "load_scenario",
    "make_benchmark_scenarios",
    "make_scenario",
    "mean_ci",
    "per_round_ranks",
    "rank_by_utility",
    "read_trace",
    "repair_ranking",
    "replay",
    "run",
    "run_ablation_suite",
    "save_scenario",
    "select_survivors",
    "tokenize_count",
    "utility",
    "variant_config",
    "wilcoxon_signed_rank",
    "write_trace",
]
