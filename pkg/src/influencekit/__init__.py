"""Influence scoring from retweet cascades, plus tools to rank users empirically.

Two halves:

* scoring: model a cascade as a self-exciting process, infer parent
  probabilities (optionally damped by pairwise conductance), and distribute
  each event's unit of capital over the plausible diffusion paths; row sums
  of the accumulation matrix are tweet influence and users average their
  tweets.
* ranking: collect pairwise human (or synthetic) judgments chosen by
  quicksort, fit a noisy Bradley-Terry model, and evaluate rankings; a small
  HTTP service runs the live annotation loop.
"""

__version__ = "0.1.0"

from .cascades import Cascade, Event, MarkConfig, MemoryKernel, branching_matrix, kernel_eval
from .engine import CapitalPolicy, accumulate, brute_force_influence, tweet_influence, user_influence

__all__ = [
    "Cascade",
    "Event",
    "MarkConfig",
    "MemoryKernel",
    "branching_matrix",
    "kernel_eval",
    "CapitalPolicy",
    "accumulate",
    "brute_force_influence",
    "tweet_influence",
    "user_influence",
    "__version__",
]
