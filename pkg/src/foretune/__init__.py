"""foretune: outcome-ranked preference pipelines for forecasting questions.

Turns resolved binary questions into chosen/rejected preference datasets via
model self-play, proves the DPO optimization math on a desk-scale policy,
and scores forecasts with Brier summaries, Welch t-tests, and
Benjamini-Hochberg adjustment.
"""

from .dpo import (
    DpoConfig,
    PolicyLogProbs,
    ToyPolicy,
    dpo_grad,
    dpo_loss,
    featurize,
    train_toy,
)
from .errors import ForetuneError
from .parsing import ParsedForecast, canonical_probability, parse, render_probability
from .questions import Question, ingest, partition
from .rerank import DpoExample, PreferencePair, build_pairs, emit_dataset, rank_pair
from .selfplay import PromptBundle, ReasoningTrace, generate_pair, render_prompt
from .stats import (
    BrierSummary,
    ForecastRecord,
    PairwiseTest,
    bh_adjust,
    brier,
    descriptive,
    t_test,
)

__version__ = "0.1.0"

__all__ = [
    "BrierSummary",
    "DpoConfig",
    "DpoExample",
    "ForecastRecord",
    "ForetuneError",
    "PairwiseTest",
    "ParsedForecast",
    "PolicyLogProbs",
    "PreferencePair",
    "PromptBundle",
    "Question",
    "ReasoningTrace",
    "ToyPolicy",
    "bh_adjust",
    "brier",
    "build_pairs",
    "canonical_probability",
    "descriptive",
    "dpo_grad",
    "dpo_loss",
    "emit_dataset",
    "featurize",
    "generate_pair",
    "ingest",
    "parse",
    "partition",
    "rank_pair",
    "render_probability",
    "render_prompt",
    "t_test",
    "train_toy",
    "__version__",
]
