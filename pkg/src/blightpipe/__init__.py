"""Potato late-blight image classification pipeline.

Stages: image preprocessing (resize + histogram equalization), deep-feature
storage and concatenation, equilibrium-optimizer wrapper feature selection,
and cross-validated evaluation of six kernel SVM variants.
"""

__version__ = "0.1.0"

from .errors import PipelineError

__all__ = ["PipelineError", "__version__"]
