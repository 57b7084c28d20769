"""Quality-diversity over a grid archive, driven by actor-critic gradients.

A MAP-Elites style loop populates a descriptor-indexed archive of policies
through genetic and policy-gradient variations, backed by swappable TD3 /
SAC / DroQ trainers and deterministic desk-scale environments.
"""

from .backend import name as backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
