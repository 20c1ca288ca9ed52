"""posekit: desk-scale 2D pose estimation transformers.

Two encoder families (joint-token patch selection on a plain ViT, and a
hierarchical local-global encoder), heat-map and regression decoders,
unified-skeleton multi-style training, synthetic stick-figure data, OKS/AP
and PCKh metrics, and static cost accounting, all on a small numpy autodiff
engine.
"""

from .tensor import Tensor, Parameter, no_grad, DimensionError

__version__ = "0.1.0"

__all__ = ["Tensor", "Parameter", "no_grad", "DimensionError", "__version__"]
