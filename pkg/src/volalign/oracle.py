"""Independent verification machinery.

Everything here deliberately avoids the code paths it is used to check:
the rotation grid and grid search stand in for exhaustive alignment, the
finite-difference gradient validates the analytic GP gradient, the
rejection sampler cross-checks the QR-based Haar sampler, and the plain
per-line DWT re-derives the separable 3D transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EvaluationError

__all__ = [
    "RotationGrid",
    "build_grid",
    "grid_search_align",
    "finite_diff_gradient",
    "haar_rotation_rejection",
    "reference_dwt3",
]


@dataclass
class RotationGrid:
    rotations: np.ndarray  # (n, 3, 3)
    covering_deg: float

    def __len__(self) -> int:
        return len(self.rotations)

    def quaternions(self) -> np.ndarray:
        return np.array([_quat_from_matrix(R) for R in self.rotations])


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
        axis=1,
    )


def _axis_angle_matrix(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    k = axis
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1 - np.cos(angle_rad)) * (K @ K)


def _quat_from_matrix(R: np.ndarray) -> np.ndarray:
    # w >= 0 convention; numerically safe for all rotations
    t = np.trace(R)
    if t > 0:
        w = np.sqrt(1.0 + t) / 2.0
        q = np.array(
            [w, (R[2, 1] - R[1, 2]) / (4 * w), (R[0, 2] - R[2, 0]) / (4 * w),
             (R[1, 0] - R[0, 1]) / (4 * w)]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.zeros(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = s / 4.0
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def build_grid(covering_deg: float) -> RotationGrid:
    """Deterministic axis-angle lattice with empirical covering radius <= delta.

    Fibonacci-sphere axes crossed with uniformly spaced angles; the axis
    count per angle shell grows with sin(angle/2) so that shells stay
    uniformly dense in the rotation metric. Refuses delta < 5 degrees
    (the lattice size explodes).
    """
    if covering_deg < 5:
        raise ValueError("covering radius below 5 degrees is not supported")
    # build against a shrunk radius so the empirical covering holds with margin
    delta = np.radians(covering_deg) * 0.8
    n_shells = int(np.ceil(np.pi / (0.75 * delta)))
    angle_step = np.pi / n_shells
    rotations = [np.eye(3)]
    for k in range(1, n_shells + 1):
        angle = k * angle_step
        # axis spacing psi such that 2 asin(sin(angle/2) sin(psi/2)) <~ delta
        target = np.sin(delta / 2.0) / np.sin(angle / 2.0)
        if target >= 1.0:
            n_axes = 6
        else:
            psi = 2.0 * np.arcsin(target)
            n_axes = max(6, int(np.ceil(20.0 / psi**2)))
        for axis in _fibonacci_sphere(n_axes):
            rotations.append(_axis_angle_matrix(axis, angle))
    return RotationGrid(np.array(rotations), covering_deg)


def min_angle_to_grid(grid: RotationGrid, rotations: np.ndarray) -> np.ndarray:
    """Geodesic angle (degrees) from each probe rotation to its nearest grid point."""
    gq = grid.quaternions()
    pq = np.array([_quat_from_matrix(R) for R in np.asarray(rotations).reshape(-1, 3, 3)])
    dots = np.clip(np.abs(pq @ gq.T), -1.0, 1.0)
    return np.degrees(2.0 * np.arccos(dots.max(axis=1)))


def grid_search_align(loss, grid: RotationGrid):
    """Exact argmin of ``loss`` over the grid; earliest index on ties."""
    best_val = np.inf
    best_rot = None
    for R in grid.rotations:
        v = loss(R)
        if not np.isfinite(v):
            raise EvaluationError(f"loss returned {v!r}", rotation=R)
        if v < best_val:
            best_val, best_rot = float(v), R
    return best_rot, best_val


def finite_diff_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences in the 9 ambient matrix coordinates."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("step size out of the supported range")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            e = np.zeros((3, 3))
            e[i, j] = h
            grad[i, j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


def haar_rotation_rejection(rng) -> np.ndarray:
    """Haar rotation via axis-angle rejection: angle density (1-cos)/pi on [0, pi]."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    while True:
        angle = rng.uniform(0.0, np.pi)
        if rng.uniform(0.0, 2.0) <= 1.0 - np.cos(angle):
            break
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return _axis_angle_matrix(axis, angle)


def _reference_dwt1d(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Single 1D analysis step, written with explicit padding and convolve."""
    taps = len(filt)
    left = x[:taps - 1][::-1]
    right = x[-(taps - 1):][::-1]
    ext = np.concatenate([left, x, right])
    full = np.correlate(ext, filt, mode="valid")
    return full[1::2]


def reference_dwt3(data: np.ndarray, levels: int, lowpass, highpass):
    """3D DWT as a literal composition of 1D transforms, axis by axis.

    Returns (details, approx) in the same layout as wemd.dwt3 but computed
    with np.apply_along_axis over every grid line.
    """
    lowpass = np.asarray(lowpass, dtype=np.float64)
    highpass = np.asarray(highpass, dtype=np.float64)
    details = []
    approx = np.asarray(data, dtype=np.float64)
    for _ in range(levels):
        bands = {"": approx}
        for axis in range(3):
            nxt = {}
            for key, block in bands.items():
                nxt[key + "l"] = np.apply_along_axis(
                    _reference_dwt1d, axis, block, lowpass
                )
                nxt[key + "h"] = np.apply_along_axis(
                    _reference_dwt1d, axis, block, highpass
                )
            bands = nxt
        details.append({k: v for k, v in bands.items() if k != "lll"})
        approx = bands["lll"]
    return details, approx
