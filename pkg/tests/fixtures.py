"""Shared synthetic fixtures for the wrinkle and acceptance tests."""

import numpy as np

from vtonsize import measure, synthetic

SHAPE = (600, 700)
CENTRES = {"A": (170, 350), "B": (430, 350), "C": (300, 95)}


def zone_regions(shape=SHAPE):
    """Body block (zones A/B) with one sleeve to its image-left (zone C)."""
    body = np.zeros(shape, bool)
    body[40:560, 180:520] = True
    sleeve = np.zeros(shape, bool)
    sleeve[40:560, 20:170] = True
    return measure.GarmentRegions(body, np.zeros(shape, bool), sleeve)


def ridge_image(segments, shape=SHAPE, base=0.4, amplitude=0.3):
    """Flat gray canvas plus Gaussian-profile ridges ``(row, col, angle, length)``."""
    return base + amplitude * synthetic.ridge_layer(shape, segments)


def single_ridge(angle, zone, length=None):
    """One ridge centred in ``zone``; returns ``(gray, regions, length)``."""
    if length is None:
        length = 120 if zone == "C" else 160
    r, c = CENTRES[zone]
    return ridge_image([(r, c, angle, length)]), zone_regions(), length


# canvas roomy enough for ~7500 px of ridges per dimension
WIDE_LAYOUT = synthetic.Layout(height=1400, width=1400, top=100, torso_half=330, gap=24, sleeve_width=240)
WIDE_BASE = {"cl": 130, "sl": 120, "sw": 70, "ww": 76}


def tube(shape=(96, 96), sigma=2.5, row=48):
    """Horizontal Gaussian-profile bright tube."""
    yy = np.arange(shape[0])[:, None]
    return np.broadcast_to(np.exp(-((yy - row) ** 2) / (2 * sigma ** 2)), shape).copy()


def grating(n=96, wavelength=8.0):
    """Sinusoid varying along rows, i.e. horizontal stripes."""
    yy = np.arange(n)[:, None] * np.ones((1, n))
    return 0.5 + 0.5 * np.sin(2 * np.pi * yy / wavelength)
