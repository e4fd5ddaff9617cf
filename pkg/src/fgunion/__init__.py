"""Foreground-union detection from cached ViT patch features.

An ensemble of per-patch min-cut weak classifiers votes on every patch of a
feature grid; the aggregated, inverted vote map is thresholded by 1-D mean
shift and a corner prior to produce the union of all foreground objects.
A per-patch logistic head can then be distilled from those masks.
"""

from fgunion.tensor_io import (
    FeatureGrid,
    FormatError,
    ManifestEntry,
    load_manifest,
    read_feature_grid,
    read_heatmap,
    read_mask,
    write_feature_grid,
    write_heatmap,
    write_mask,
    write_manifest,
)
from fgunion.maxflow import FlowNetwork, MinCutResult, solve_min_cut
from fgunion.unit_voter import (
    SeedContext,
    VoterContext,
    big_weight,
    build_seed_context,
    compute_beta,
    nlink_weight,
    run_unit_voter,
    seed_network,
    tlink_weights,
)
from fgunion.ensemble import (
    UnionCutOutput,
    aggregate_votes,
    apply_corner_prior,
    invert_heatmap,
    meanshift_clusters,
    meanshift_threshold,
    union_cut,
)
from fgunion.distill import (
    LogisticHead,
    TrainConfig,
    loss_and_gradient,
    predict,
    read_head,
    select_label,
    train,
    write_head,
)
from fgunion.analysis import (
    IneqSolution,
    MceEstimate,
    MetricsReport,
    corloc,
    corner_prior_success_rate,
    corunion,
    downsample_gt,
    estimate_mce,
    judge_foreground,
    mask_metrics,
    mask_to_box,
    should_stop,
    solve_inequality,
)

__version__ = "0.1.0"
