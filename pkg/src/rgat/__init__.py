"""Relational graph attention over typed dependency trees for targeted sentiment."""
__version__ = "0.1.0"

from .config import ConfigError, ModelConfig  # noqa: E402
from .depgraph import DepGraph, Instance, RelationVocab  # noqa: E402
from .estimator import RGATClassifier  # noqa: E402

__all__ = ["ConfigError", "DepGraph", "Instance", "ModelConfig", "RGATClassifier", "RelationVocab",
           "__version__"]
