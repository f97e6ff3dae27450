"""Optimal completion distillation for sequence models."""

from ocdkit.edit_q import EOS, QRow, QTable, edit_distance, prefix_distance_table, q_values, q_values_batch
from ocdkit.losses import LossReport, hamming_accuracy, mle_loss, ocd_loss, ss_loss
from ocdkit.policy_targets import PolicyTargets, hard_targets, oct_select, policy_targets, soft_policy

__all__ = [
    "EOS",
    "LossReport",
    "PolicyTargets",
    "QRow",
    "QTable",
    "edit_distance",
    "hamming_accuracy",
    "hard_targets",
    "mle_loss",
    "oct_select",
    "ocd_loss",
    "policy_targets",
    "prefix_distance_table",
    "q_values",
    "q_values_batch",
    "soft_policy",
    "ss_loss",
]
