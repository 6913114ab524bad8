import numpy as np
import pytest
from PIL import Image


def write_png(path, array):
    """Write a (h, w) or (h, w, 3) uint8 array as PNG."""
    arr = np.asarray(array, dtype=np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")
    return path


def write_jpeg(path, array, quality=92):
    arr = np.asarray(array, dtype=np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="JPEG", quality=quality)
    return path


def solid_rgb(shape, rgb):
    h, w = shape
    out = np.zeros((h, w, 3), dtype=np.uint8)
    out[:, :] = rgb
    return out


def smooth_test_image(rng, height=96, width=128):
    """Deterministic natural-ish luma plane in [0, 1]: smoothed noise plus a ramp."""
    noise = rng.random((height, width))
    kernel = np.ones(7) / 7.0
    for _ in range(2):
        noise = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="same"), 1, noise)
        noise = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="same"), 0, noise)
    ramp = np.linspace(0.1, 0.9, width)[np.newaxis, :]
    plane = 0.55 * noise + 0.45 * ramp
    return np.clip(plane, 0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
