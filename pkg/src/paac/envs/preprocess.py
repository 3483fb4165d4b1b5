"""Atari-style frame preprocessing: two-frame max, luma, 84x84 box downscale, 4-frame stack.

All arithmetic is integer so the result is independent of summation order:
luma uses weights (299, 587, 114)/1000 and the area average divides an exact
integer overlap-weighted sum, both rounded half-up.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ConfigError

RAW_SHAPE = (210, 160, 3)
OUT_SIZE = 84
STACK_DEPTH = 4

_LUMA = np.array([299, 587, 114], dtype=np.int64)


def _check_frame(f: np.ndarray, name: str) -> None:
    if not isinstance(f, np.ndarray) or f.shape != RAW_SHAPE:
        raise ConfigError(f"{name} must be a {RAW_SHAPE} array, got {getattr(f, 'shape', type(f))}")
    if f.dtype != np.uint8:
        raise ConfigError(f"{name} must be uint8, got {f.dtype}")


def luma(frame: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (H, W) int64 gray, Rec.601 weights, rounded half-up."""
    return (frame.astype(np.int64) @ _LUMA + 500) // 1000


@lru_cache(maxsize=8)
def overlap_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) integer overlaps measured in units of 1/(src*dst) of the source axis.

    Destination cell i spans [i*src, (i+1)*src) and source cell j spans
    [j*dst, (j+1)*dst); each row therefore sums to ``src``.
    """
    i = np.arange(dst)[:, None]
    j = np.arange(src)[None, :]
    lo = np.maximum(i * src, j * dst)
    hi = np.minimum((i + 1) * src, (j + 1) * dst)
    w = np.clip(hi - lo, 0, None).astype(np.int64)
    w.setflags(write=False)
    return w


def area_downscale(gray: np.ndarray, out_h: int = OUT_SIZE, out_w: int = OUT_SIZE) -> np.ndarray:
    h, w = gray.shape
    wy = overlap_weights(h, out_h)
    wx = overlap_weights(w, out_w)
    total = wy @ gray.astype(np.int64) @ wx.T
    denom = h * w
    return ((2 * total + denom) // (2 * denom)).astype(np.uint8)


def preprocess_frame_pair(f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    """Max-pool two raw 210x160x3 frames and reduce to one 84x84x1 intensity frame."""
    _check_frame(f1, "f1")
    _check_frame(f2, "f2")
    gray = luma(np.maximum(f1, f2))
    return area_downscale(gray)[:, :, None]


def frame_stack_reset(frame: np.ndarray) -> tuple:
    return (frame,) * STACK_DEPTH


def frame_stack_push(stack: tuple, frame: np.ndarray) -> tuple:
    if len(stack) != STACK_DEPTH:
        raise ConfigError(f"frame stack must hold {STACK_DEPTH} frames, has {len(stack)}")
    return tuple(stack[1:]) + (frame,)


def stack_to_observation(stack: tuple) -> np.ndarray:
    """Flatten a stack of (84, 84, 1) frames to a float vector in [0, 1]."""
    return np.concatenate([f.reshape(-1) for f in stack]).astype(np.float64) / 255.0
