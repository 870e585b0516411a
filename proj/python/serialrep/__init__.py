"""Python bindings for the serial-reproduction core library."""

from ._core import (  # noqa: F401
    Error,
    Grid,
    CtmTable,
    AbstractionModel,
    parse_grid,
    serialize_grid,
    hamming,
    random_grid,
    checkerboard,
    render_png,
    shannon_entropy,
    local_spatial_complexity,
    bdm,
    surrogate_ctm_table,
    load_ctm_table,
    coarse_language_model,
    random_model,
    stationary_distribution,
    prior_predictive,
    tv_distance,
    simulate_batch,
    mean_board_complexity,
    pooled_t_test,
    two_way_anova,
)
