"""Fully convolutional depth regression from a single RGB image, in numpy.

Subpackages and modules:

- ``tensor``: conv, pooling, batch norm, dropout, dense and bilinear kernels with backward passes
- ``upsample``: unpooling, up-convolution (naive and 4-filter fast form), up-projection blocks
- ``loss``: berHu and L2 regression losses
- ``metrics``: pixel-pooled depth error measures
- ``archgraph``: layer graphs, parameter / receptive-field / memory analysis, executable networks
- ``data``, ``train``, ``bench``, ``cli``: synthetic scenes, training loop, timing and the ``fcrn`` tool
"""

from .loss import batch_loss, berhu_cutoff, berhu_grad, berhu_value
from .metrics import MetricsAccumulator, MetricsReport, evaluate
from .tensor import ConvParams, count_multiplies
from .upsample import (FilterDecomposition, UpProjParams, decompose_filter, recompose_filter, unpool,
                       upconv_fast, upconv_naive, upproject, upproject_fast)

__version__ = "0.1.0"
