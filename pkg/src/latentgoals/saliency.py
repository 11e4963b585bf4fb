"""Difference-of-gaussians saliency reward over 48x48 grayscale images.

The reward is the peak of the saliency map after smoothing with a wide
Gaussian that models the agent's visual field: it is highest when several
salient structures fall into one field, e.g. hand and object close
together.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, FormatError

IMAGE_SIZE = 48
# 5-tap binomial approximation of a Gaussian, the classic pyramid kernel
_PYRAMID_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# Fixed by the calibration sweep in tools/calibrate_saliency.py: the 99th
# percentile of raw field peaks over 10^4 random arm/object scenes maps to 1.0.
CALIBRATED_NORM_SCALE = 1.2118836492304252


@dataclass(frozen=True)
class SaliencyConfig:
    kernel_size: int = 5
    pyramid_levels: int = 5
    field_sigma: float = 10.0
    norm_scale: float = CALIBRATED_NORM_SCALE


def _check_image(img):
    img = np.asarray(img, dtype=float)
    if img.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise DomainError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image")
    return img


def _smooth5(img):
    out = ndimage.correlate1d(img, _PYRAMID_KERNEL, axis=0, mode="nearest")
    return ndimage.correlate1d(out, _PYRAMID_KERNEL, axis=1, mode="nearest")


def gaussian_pyramid(img, levels=5):
    """Level 0 is the input; each further level is 5-tap smoothed and
    decimated by 2 (sizes 48, 24, 12, 6, 3)."""
    img = _check_image(img)
    pyramid = [img]
    for _ in range(levels - 1):
        pyramid.append(_smooth5(pyramid[-1])[::2, ::2])
    return pyramid


def saliency_map(img):
    """Sum of absolute differences between all pyramid level pairs, each
    level replicated back to full resolution first."""
    pyramid = gaussian_pyramid(img)
    full = []
    for level in pyramid:
        f = IMAGE_SIZE // level.shape[0]
        full.append(np.repeat(np.repeat(level, f, axis=0), f, axis=1))
    out = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
    for i in range(len(full)):
        for j in range(i + 1, len(full)):
            out += np.abs(full[i] - full[j])
    return out


def field_peak(img, cfg=SaliencyConfig()):
    """Maximum of the saliency map smoothed with the visual-field Gaussian
    (unnormalized)."""
    smap = saliency_map(img)
    field = ndimage.gaussian_filter(smap, cfg.field_sigma, mode="nearest")
    return float(field.max())


def reward_from_image(img, cfg=SaliencyConfig()):
    """Scalar saliency reward, scaled to lie roughly in [0, 1]."""
    return field_peak(img, cfg) * cfg.norm_scale


def write_gray(path, img):
    """Portable grayscale dump: two little-endian uint32 (width, height)
    followed by one byte per pixel, row-major."""
    img = _check_image(img)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", img.shape[1], img.shape[0]))
        fh.write(data.tobytes())


def read_gray(path):
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated header")
        width, height = struct.unpack("<II", header)
        body = fh.read(width * height)
        if len(body) != width * height:
            raise FormatError(f"{path}: expected {width * height} pixel bytes")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return arr.astype(float) / 255.0
