"""memmamba: selective state-space sequence model with a bounded note pool,
cross-token/cross-layer attention, memory-fidelity metrics, and numerical
verification of the architecture's decay/stability bounds."""

import json as _json

from ._core import (  # noqa: F401
    DimensionError,
    InputError,
    Model as _Model,
    ParameterError,
    SingularityError,
    bibo_bound,
    block_max_pool,
    contribution_bound,
    cosine_similarity,
    empirical_contribution,
    equal_budget_lengths,
    fit_scaling_exponent,
    gen_passkey,
    layered_decay,
    make_stable_A,
    make_synthetic_corpus,
    matmul,
    operator_norm,
    pooling_error_check,
    recall_bounds,
    reconstruct_broadcast,
    ridge_fit,
    softmax,
    ssm_scan,
)

__version__ = "0.1.0"


def Model(config=None, **kwargs):
    """Build a model from a config mapping (or keyword arguments)."""
    cfg = dict(config or {})
    cfg.update(kwargs)
    return _Model(_json.dumps(cfg))
