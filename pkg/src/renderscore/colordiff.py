"""Perceptual color difference: sRGB to CIELAB, and the CIEDE2000 formula.

CIEDE2000 is implemented in full (G compensation, hue rotation term,
weighting functions) with parametric factors kL = kC = kH = 1.  Lab uses
the D65 white point and the 2-degree observer.
"""

from __future__ import annotations

import math

__all__ = ["ciede2000", "color_distance", "srgb_to_lab"]

_D65 = (0.95047, 1.0, 1.08883)
_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

_M = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)


def _linearize(channel: float) -> float:
    c = channel / 255.0
    return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4


def _f(t: float) -> float:
    return t ** (1.0 / 3.0) if t > _EPS else (_KAPPA * t + 16.0) / 116.0


def srgb_to_lab(rgb: tuple[float, float, float]) -> tuple[float, float, float]:
    """Convert 8-bit sRGB to CIELAB (D65 / 2 degrees)."""
    r, g, b = (_linearize(c) for c in rgb)
    x = _M[0][0] * r + _M[0][1] * g + _M[0][2] * b
    y = _M[1][0] * r + _M[1][1] * g + _M[1][2] * b
    z = _M[2][0] * r + _M[2][1] * g + _M[2][2] * b
    fx = _f(x / _D65[0])
    fy = _f(y / _D65[1])
    fz = _f(z / _D65[2])
    return (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))


def ciede2000(lab1: tuple[float, float, float], lab2: tuple[float, float, float]) -> float:
    """CIEDE2000 color difference between two Lab colors (kL=kC=kH=1)."""
    l1, a1, b1 = lab1
    l2, a2, b2 = lab2

    c1 = math.hypot(a1, b1)
    c2 = math.hypot(a2, b2)
    c_bar = (c1 + c2) / 2.0
    c_bar7 = c_bar**7
    g = 0.5 * (1.0 - math.sqrt(c_bar7 / (c_bar7 + 25.0**7)))

    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = math.hypot(a1p, b1)
    c2p = math.hypot(a2p, b2)

    h1p = math.degrees(math.atan2(b1, a1p)) % 360.0 if (a1p or b1) else 0.0
    h2p = math.degrees(math.atan2(b2, a2p)) % 360.0 if (a2p or b2) else 0.0

    dl = l2 - l1
    dc = c2p - c1p

    if c1p * c2p == 0.0:
        dh = 0.0
    else:
        dh = h2p - h1p
        if dh > 180.0:
            dh -= 360.0
        elif dh < -180.0:
            dh += 360.0
    dh_big = 2.0 * math.sqrt(c1p * c2p) * math.sin(math.radians(dh) / 2.0)

    l_bar = (l1 + l2) / 2.0
    c_bar_p = (c1p + c2p) / 2.0

    if c1p * c2p == 0.0:
        h_bar = h1p + h2p
    else:
        h_sum = h1p + h2p
        if abs(h1p - h2p) <= 180.0:
            h_bar = h_sum / 2.0
        elif h_sum < 360.0:
            h_bar = (h_sum + 360.0) / 2.0
        else:
            h_bar = (h_sum - 360.0) / 2.0

    t = (
        1.0
        - 0.17 * math.cos(math.radians(h_bar - 30.0))
        + 0.24 * math.cos(math.radians(2.0 * h_bar))
        + 0.32 * math.cos(math.radians(3.0 * h_bar + 6.0))
        - 0.20 * math.cos(math.radians(4.0 * h_bar - 63.0))
    )

    d_theta = 30.0 * math.exp(-(((h_bar - 275.0) / 25.0) ** 2))
    c_bar_p7 = c_bar_p**7
    r_c = 2.0 * math.sqrt(c_bar_p7 / (c_bar_p7 + 25.0**7))
    r_t = -math.sin(math.radians(2.0 * d_theta)) * r_c

    l_off = (l_bar - 50.0) ** 2
    s_l = 1.0 + 0.015 * l_off / math.sqrt(20.0 + l_off)
    s_c = 1.0 + 0.045 * c_bar_p
    s_h = 1.0 + 0.015 * c_bar_p * t

    return math.sqrt(
        (dl / s_l) ** 2
        + (dc / s_c) ** 2
        + (dh_big / s_h) ** 2
        + r_t * (dc / s_c) * (dh_big / s_h)
    )


def color_distance(rgb1: tuple[float, float, float], rgb2: tuple[float, float, float]) -> float:
    """CIEDE2000 between two 8-bit sRGB colors."""
    return ciede2000(srgb_to_lab(rgb1), srgb_to_lab(rgb2))
