"""Pure-NumPy implementations of the hot frame kernels.

Same contracts as the compiled module in ``_native.pyx``; used when the
extension is not built or when ``CAVFORGE_KERNELS=python`` forces it.
"""

import math

import numpy as np


def hg_profile(u, order):
    """Intensity profile of a Hermite-Gaussian mode along one axis.

    Parameters
    ----------
    u : ndarray
        Transverse offsets in units of the beam waist.
    order : int
        Mode index n >= 0.

    Returns
    -------
    ndarray
        ``H_n(sqrt(2) u)^2 exp(-2 u^2) / (2^n n!)``. The ``2^n n!`` factor
        keeps the integrated power equal to the fundamental at the same
        amplitude, so amplitude always means power-equivalent peak scale.
    """
    u = np.asarray(u, dtype=np.float64)
    xi = math.sqrt(2.0) * u
    h_prev = np.ones_like(xi)
    if order == 0:
        h = h_prev
    else:
        h = 2.0 * xi
        for k in range(1, order):
            h, h_prev = 2.0 * xi * h - 2.0 * k * h_prev, h
    norm = float(2**order) * math.factorial(order)
    return h * h * np.exp(-2.0 * u * u) / norm


def render_spot(img, cx, cy, waist_px, amp, order):
    """Add one beam spot to ``img`` in place (no clipping here).

    The mode axis is the pixel x axis: the profile along columns is a
    Hermite-Gaussian of ``order``, the profile along rows is the fundamental.
    """
    if waist_px <= 0.0:
        raise ValueError("waist_px must be positive")
    height, width = img.shape
    ux = (np.arange(width, dtype=np.float64) - cx) / waist_px
    uy = (np.arange(height, dtype=np.float64) - cy) / waist_px
    col = hg_profile(ux, order)
    row = np.exp(-2.0 * uy * uy)
    img += amp * np.outer(row, col)
    return img


def frame_moments(img, floor):
    """First and second intensity moments over above-floor pixels.

    Returns
    -------
    tuple
        ``(total, cx, cy, var_x, var_y, vmax, count)`` where centroid and
        variances are in pixel-index coordinates, ``vmax`` is the global
        maximum, and ``count`` the number of pixels above ``floor``.
    """
    img = np.asarray(img, dtype=np.float64)
    vmax = float(img.max()) if img.size else 0.0
    mask = img > floor
    count = int(mask.sum())
    if count == 0:
        return (0.0, 0.0, 0.0, 0.0, 0.0, vmax, 0)
    rows, cols = np.nonzero(mask)
    w = img[rows, cols]
    total = float(w.sum())
    cx = float((w * cols).sum() / total)
    cy = float((w * rows).sum() / total)
    var_x = float((w * (cols - cx) ** 2).sum() / total)
    var_y = float((w * (rows - cy) ** 2).sum() / total)
    return (total, cx, cy, var_x, var_y, vmax, count)
