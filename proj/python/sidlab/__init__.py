"""Iterative denoising samplers (SID, CID) and baselines for categorical graphs."""

from ._sidlab import (
    BayesOracle,
    Family,
    Graph,
    SidlabError,
    ablate,
    canonical_form,
    cosine_alpha,
    dfm_rate,
    evaluate,
    noise_graph,
    optimal_critic,
    parse_config,
    verify,
)

__all__ = [
    "BayesOracle",
    "Family",
    "Graph",
    "SidlabError",
    "ablate",
    "canonical_form",
    "cosine_alpha",
    "dfm_rate",
    "evaluate",
    "noise_graph",
    "optimal_critic",
    "parse_config",
    "verify",
]
