from .adam import AdamState, adam_step
from .policy import (
    PolicyParams,
    PolicyShape,
    init_policy,
    policy_logits,
    policy_loss,
    sample_batch,
    sample_sequence,
)
from .search import (
    RankEvaluator,
    RoundRecord,
    SearchConfig,
    SearchResult,
    SearchState,
    prefix_rewards,
    random_search,
    run_search,
    train_round,
)
