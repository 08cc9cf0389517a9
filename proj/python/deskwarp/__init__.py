"""Desk-scale warp-and-denoise novel view generation."""

import json

from ._deskwarp import (
    Scene,
    apply_noise,
    build_sigma_map,
    build_start_map,
    composite,
    decode,
    encode,
    extrapolate,
    generate_scene,
    kabsch,
    plucker,
    psnr,
    r_dist,
    recover_pose,
    render,
    sample_trajectory,
    schedule_csv,
    ssim,
    version,
)
from . import _deskwarp


def train(config=None, checkpoint="", progress=None):
    """Train a denoiser. `config` is a dict in the train config layout."""
    return _deskwarp.train(json.dumps(config or {}), checkpoint, progress)


def generate(scene, checkpoint="", session=None, **kwargs):
    """Generate frames for `scene`; `session` is a dict in the session config layout."""
    return _deskwarp.generate(scene, checkpoint, json.dumps(session or {}), **kwargs)


__all__ = [
    "Scene",
    "apply_noise",
    "build_sigma_map",
    "build_start_map",
    "composite",
    "decode",
    "encode",
    "extrapolate",
    "generate",
    "generate_scene",
    "kabsch",
    "plucker",
    "psnr",
    "r_dist",
    "recover_pose",
    "render",
    "sample_trajectory",
    "schedule_csv",
    "ssim",
    "train",
    "version",
]
