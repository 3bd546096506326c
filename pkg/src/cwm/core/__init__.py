from cwm.core.dists import CategoricalDist, kl_categorical, sample_onehot_st
from cwm.core.rssm import (
    ActionConditionedRSSM,
    ActionFreeRSSM,
    LatentState,
    init_state,
    rollout_action_free,
    rollout_posterior,
)

__all__ = [
    "ActionConditionedRSSM",
    "ActionFreeRSSM",
    "CategoricalDist",
    "LatentState",
    "init_state",
    "kl_categorical",
    "rollout_action_free",
    "rollout_posterior",
    "sample_onehot_st",
]
