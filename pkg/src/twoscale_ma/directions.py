"""Direction nets on the unit circle and the orthogonal frames built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class DirectionNet:
    """Equispaced unit vectors v_k = (cos 2pi k/M, sin 2pi k/M).

    M is a multiple of 4, so the net is closed under quarter turns and
    under v -> -v.
    """

    theta: float
    directions: np.ndarray

    @property
    def count(self):
        return len(self.directions)


@dataclass(frozen=True, eq=False)
class FrameSet:
    """Frames (v_k, v_{k+M/4}) for k < M/4, as direction-index pairs."""

    frames: np.ndarray
    net: DirectionNet

    def __len__(self):
        return len(self.frames)

    def frame_vectors(self, k):
        i, j = self.frames[k]
        return self.net.directions[i], self.net.directions[j]

    @property
    def half_directions(self):
        """The M/2 directions used by some frame, in frame-column order."""
        return self.net.directions[: self.net.count // 2]


def net_size(theta):
    return 4 * math.ceil(math.pi / (2.0 * theta))


def build_direction_net(theta):
    if not (0.0 < theta <= math.pi / 2):
        raise InvalidArgumentError(f"theta must lie in (0, pi/2], got {theta}")
    m = net_size(theta)
    k = np.arange(m)
    phi = 2.0 * math.pi * k / m
    dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    # snap the quarter-turn members so e1, e2, -e1, -e2 and all partners are exact
    q = m // 4
    base = dirs[:q]
    dirs[q:2 * q] = np.column_stack([-base[:, 1], base[:, 0]])
    dirs[2 * q:3 * q] = -base
    dirs[3 * q:] = np.column_stack([base[:, 1], -base[:, 0]])
    dirs.setflags(write=False)
    return DirectionNet(float(theta), dirs)


def nearest_direction(net, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (2,) or abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise InvalidArgumentError(f"expected a unit 2-vector, got {v.tolist()}")
    d = np.linalg.norm(net.directions - v, axis=1)
    return net.directions[int(np.argmin(d))]


def build_frame_set(net):
    q = net.count // 4
    k = np.arange(q)
    frames = np.column_stack([k, k + q])
    frames.setflags(write=False)
    return FrameSet(frames, net)
