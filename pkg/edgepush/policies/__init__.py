from edgepush.policies.base import PolicyRule, StationaryPolicy, load_policy, save_policy
from edgepush.policies.dp import policy_evaluation, policy_improvement, policy_iteration
from edgepush.policies.threshold import ThresholdPolicySpec, build_policy, make_spec

__all__ = [
    "PolicyRule", "StationaryPolicy", "ThresholdPolicySpec", "build_policy", "load_policy",
    "make_spec", "policy_evaluation", "policy_improvement", "policy_iteration", "save_policy",
]
