"""Knowledge-augmented task-aware meta-learning on synthetic few-shot distributions.

All differentiable computation runs in double precision; x64 mode must be
enabled before any jax array is created, which is why it happens here.
"""

from jax import config as _jax_config

_jax_config.update("jax_enable_x64", True)

from . import analysis, encoding, episodes, graphs, meta, modulation, nets  # noqa: E402
from . import evaluation  # noqa: E402

__all__ = [
    "analysis",
    "encoding",
    "episodes",
    "evaluation",
    "graphs",
    "meta",
    "modulation",
    "nets",
]
