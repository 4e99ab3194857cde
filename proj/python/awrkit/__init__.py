"""Adaptive weighting regression for dense hand-pose representations."""

from ._core import (
    CameraIntrinsics,
    Crop,
    DenseGrid,
    EmptyCropError,
    Error,
    InvalidDepthError,
    ShapeError,
    UndecodableJointError,
    UsageError,
    awr_aggregate,
    awr_decode,
    awr_gradients,
    backproject,
    crop_hand,
    dense_grid,
    detection_decode,
    encode,
    good_frame_curve,
    gradcheck,
    mean_joint_error,
    project,
    rep_channels,
    softmax_weights,
    synth_frame,
)

__all__ = [
    "CameraIntrinsics",
    "Crop",
    "DenseGrid",
    "EmptyCropError",
    "Error",
    "InvalidDepthError",
    "ShapeError",
    "UndecodableJointError",
    "UsageError",
    "awr_aggregate",
    "awr_decode",
    "awr_gradients",
    "backproject",
    "crop_hand",
    "dense_grid",
    "detection_decode",
    "encode",
    "good_frame_curve",
    "gradcheck",
    "mean_joint_error",
    "project",
    "rep_channels",
    "softmax_weights",
    "synth_frame",
]

__version__ = "0.1.0"
