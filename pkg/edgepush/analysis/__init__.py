from edgepush.analysis.markov import analyze_policy, policy_stationary_distribution, stationary_distribution

__all__ = ["analyze_policy", "policy_stationary_distribution", "stationary_distribution"]
