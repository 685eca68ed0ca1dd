"""netradar: a workbench for decentralized multi-radar multi-target allocation.

Subpackages and modules:
  geometry  uncertainty ellipses, intersection areas, global utility
  tracking  per radar-target linear Kalman filtering
  world     budgeted multi-radar simulation with a random-order scheduler
  policy    allocation-policy interface and the greedy-closest baseline
  esto      linear preference scoring trained with CMA-ES
  cmaes     covariance matrix adaptation evolution strategy optimizer
  seqdec    finite Dec-POMDPs, the sequential-choice lift, and policy
            transposition with executable equivalence checks
  neural    dense nets with manual reverse-mode gradients, the symmetric
            per-target actor, centralized critic, and PPO training
  cli       command-line front end (simulate / train / eval / verify / bench)
"""

__version__ = "0.1.0"
