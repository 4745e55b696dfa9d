from .chain import ChainInstance, chain_sample, chain_samples, chain_trajectory
from .mrp import MrpInstance, MrpSettings, mrp_default_config, mrp_sample_episode
from .portal import (
    ACTIONS,
    N_ACTIONS,
    PortalBatch,
    PortalLayout,
    PortalState,
    load_layout,
    parity_map,
    portal_reset,
    portal_step,
    random_portal_policy_returns,
)

__all__ = [
    "ACTIONS", "N_ACTIONS", "ChainInstance", "MrpInstance", "MrpSettings", "PortalBatch",
    "PortalLayout", "PortalState", "chain_sample", "chain_samples", "chain_trajectory",
    "load_layout", "mrp_default_config", "mrp_sample_episode", "parity_map", "portal_reset",
    "portal_step", "random_portal_policy_returns",
]
