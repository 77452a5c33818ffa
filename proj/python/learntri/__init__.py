"""Multi-view triangulation of 3D human pose.

Arrays follow numpy conventions: projections are (C, 3, 4), keypoints
(F, C, J, 2) in full-image pixels, poses (F, J, 3) in meters with NaN for
joints that could not be estimated.
"""

from ._learntri import (
    Error,
    fit_weights,
    gradcheck,
    make_ring_rig,
    mpjpe,
    project,
    render_gaussian,
    simulate,
    soft_argmax_2d,
    soft_mse_loss,
    spatial_softmax,
    triangulate,
    triangulate_backward,
    triangulate_frames,
    triangulate_volumetric_frames,
)

__version__ = "0.3.0"

__all__ = [
    "Error",
    "fit_weights",
    "gradcheck",
    "make_ring_rig",
    "mpjpe",
    "project",
    "render_gaussian",
    "simulate",
    "soft_argmax_2d",
    "soft_mse_loss",
    "spatial_softmax",
    "triangulate",
    "triangulate_backward",
    "triangulate_frames",
    "triangulate_volumetric_frames",
]
