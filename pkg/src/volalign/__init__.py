"""volalign: rigid alignment of 3D density maps.

Minimizes a wavelet-approximated 1-Wasserstein distance over SO(3) with
Gaussian-process Bayesian optimization, recovers translations from centers
of mass, and polishes the rotation with Nelder-Mead in the L2 loss.
"""

from .gp import KernelParams, SurrogateModel
from .optimizer import BoConfig, BoTrace, bo_align, nelder_mead_refine
from .pipeline import (
    AlignmentReport,
    AlignOptions,
    align_volumes,
    make_loss,
    make_test_pair,
    recover_translation,
    reference_spec,
)
from .so3 import geodesic_angle, random_rotation
from .volume import (
    SynthSpec,
    Volume,
    load_mrc,
    save_mrc,
    synth_volume,
)
from .wemd import wemd_distance, wemd_embed

__version__ = "0.1.0"

__all__ = [
    "AlignOptions",
    "AlignmentReport",
    "BoConfig",
    "BoTrace",
    "KernelParams",
    "SurrogateModel",
    "SynthSpec",
    "Volume",
    "align_volumes",
    "bo_align",
    "geodesic_angle",
    "load_mrc",
    "make_loss",
    "make_test_pair",
    "nelder_mead_refine",
    "random_rotation",
    "recover_translation",
    "reference_spec",
    "save_mrc",
    "synth_volume",
    "wemd_distance",
    "wemd_embed",
]
