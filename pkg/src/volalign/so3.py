"""Rotation-group utilities: sampling, metrics, exp/log maps, projection."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_rotation",
    "is_rotation",
    "random_rotation",
    "geodesic_angle",
    "frobenius_distance",
    "exp_map",
    "log_map",
    "project_to_rotation",
    "rotz",
]

_ORTHO_TOL = 1e-10


def is_rotation(R: np.ndarray, tol: float = 1e-8) -> bool:
    R = np.asarray(R)
    return (
        R.shape == (3, 3)
        and np.linalg.norm(R.T @ R - np.eye(3)) < tol
        and abs(np.linalg.det(R) - 1.0) < tol
    )


def check_rotation(R: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if not is_rotation(R, tol):
        raise ValueError("matrix is not a rotation (orthogonality/det check failed)")
    return R


def random_rotation(seed=None) -> np.ndarray:
    """Haar-uniform rotation via QR of a Gaussian matrix with sign correction."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    Q, R = np.linalg.qr(A)
    # make the decomposition unique (positive diagonal of R) so Q is Haar
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, [0, 1]] = Q[:, [1, 0]]
    return Q


def geodesic_angle(R: np.ndarray, S: np.ndarray) -> float:
    """Relative rotation angle arccos((tr(R S^T) - 1) / 2), in degrees."""
    c = (np.trace(np.asarray(R) @ np.asarray(S).T) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def frobenius_distance(R: np.ndarray, S: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(R) - np.asarray(S)))


def exp_map(omega) -> np.ndarray:
    """Rodrigues exponential of an axis-angle vector."""
    w = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3)
    k = w / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def log_map(R: np.ndarray) -> np.ndarray:
    """Inverse of exp_map on the injectivity domain (angle < 180 degrees)."""
    R = np.asarray(R, dtype=np.float64)
    angle = np.radians(geodesic_angle(R, np.eye(3)))
    if angle > np.pi - 1e-6:
        raise ValueError("log_map undefined near 180 degrees")
    if angle < 1e-12:
        return np.zeros(3)
    axis = (
        np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        / (2.0 * np.sin(angle))
    )
    return angle * axis


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (polar factor with det fix)."""
    M = np.asarray(M, dtype=np.float64)
    U, s, Vt = np.linalg.svd(M)
    if s[-1] <= 0 and s[0] <= 0:
        raise np.linalg.LinAlgError("cannot project a singular matrix")
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotz(degrees: float) -> np.ndarray:
    """Rotation about the z axis, mostly for tests and landscape scans."""
    a = np.radians(degrees)
    return np.array(
        [[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]]
    )
