"""Canonical 68-point face layout and the alignment template built from it.

The layout follows the usual 68-point ordering: jaw 0-16, brows 17-26, nose
bridge 27-30, nose base 31-35, eyes 36-47, outer lip 48-59, inner lip 60-67.
Coordinates live in the unit square (x right, y down) and describe the
synthetic generator's neutral face; the alignment template is this layout at
the requested crop size.
"""

import numpy as np

from deid.geometry import FaceTemplate

FACE_CENTER = (0.5, 0.48)
JAW_RX = 0.30
JAW_RY = 0.38
EYE_Y = 0.42
EYE_DX = 0.15
EYE_RX = 0.05
EYE_RY = 0.02
BROW_Y = 0.35
BROW_SPAN = (0.27, 0.43)
NOSE_TOP = 0.40
NOSE_BOTTOM = 0.55
NOSE_BASE_Y = 0.585
MOUTH_CENTER = (0.5, 0.70)
MOUTH_RX = 0.09
MOUTH_RY = 0.035
INNER_RX = 0.06
INNER_RY = 0.015


def _ellipse_arc(cx, cy, rx, ry, angles_deg, flip_y=True):
    th = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    sign = -1.0 if flip_y else 1.0
    return np.stack([cx + rx * np.cos(th), cy + sign * ry * np.sin(th)], axis=1)


def base_landmarks():
    """The neutral layout as a (68, 2) array in the unit square."""
    cx, cy = FACE_CENTER
    pts = np.zeros((68, 2), dtype=np.float64)

    # jaw: lower half of the face ellipse, left temple to right temple
    phi = np.pi * (1.0 - np.arange(17) / 16.0)
    pts[0:17, 0] = cx + JAW_RX * np.cos(phi)
    pts[0:17, 1] = cy + JAW_RY * np.sin(phi)

    # brows: gentle arches
    t = np.linspace(0.0, 1.0, 5)
    lx0, lx1 = BROW_SPAN
    arch = 0.02 * np.sin(np.pi * t)
    pts[17:22, 0] = lx0 + (lx1 - lx0) * t
    pts[17:22, 1] = BROW_Y - arch
    pts[22:27, 0] = (1.0 - lx1) + (lx1 - lx0) * t
    pts[22:27, 1] = BROW_Y - arch

    # nose bridge and base
    pts[27:31, 0] = 0.5
    pts[27:31, 1] = np.linspace(NOSE_TOP, NOSE_BOTTOM, 4)
    pts[31:36, 0] = np.array([0.44, 0.47, 0.50, 0.53, 0.56])
    pts[31:36, 1] = NOSE_BASE_Y - np.array([0.010, 0.0, -0.005, 0.0, 0.010])

    # eyes: 6 points each, corners at 0/180 degrees
    eye_angles = [180, 120, 60, 0, 300, 240]
    pts[36:42] = _ellipse_arc(cx - EYE_DX, EYE_Y, EYE_RX, EYE_RY, eye_angles)
    pts[42:48] = _ellipse_arc(cx + EYE_DX, EYE_Y, EYE_RX, EYE_RY, eye_angles)

    # lips: outer 12, inner 8
    mx, my = MOUTH_CENTER
    outer_angles = np.arange(180, -180, -30)
    pts[48:60] = _ellipse_arc(mx, my, MOUTH_RX, MOUTH_RY, outer_angles)
    inner_angles = np.arange(180, -180, -45)
    pts[60:68] = _ellipse_arc(mx, my, INNER_RX, INNER_RY, inner_angles)
    return pts


def default_template(crop_size):
    """FaceTemplate at the given crop resolution."""
    return FaceTemplate(points=base_landmarks(), crop_size=crop_size)
