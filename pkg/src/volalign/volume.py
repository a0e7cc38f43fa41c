"""Cubic density volumes: representation, MRC I/O and spatial operators.

A volume is an ``L x L x L`` grid of real densities. Arrays are indexed
``[x, y, z]`` so that the flattened Fortran order matches the x-fastest
layout of MRC files. Voxel ``(i, j, k)`` sits at the physical point
``(i, j, k) - (L - 1) / 2`` in voxel units; the grid center is the origin
for rotations, shifts and centers of mass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import DegenerateVolumeError, DimensionError, MrcFormatError

__all__ = [
    "Volume",
    "GaussianBlob",
    "SynthSpec",
    "load_mrc",
    "save_mrc",
    "downsample",
    "rotate",
    "shift",
    "center_of_mass",
    "add_noise",
    "synth_volume",
    "l2_distance",
    "reflect",
]


@dataclass
class Volume:
    """Cubic voxel grid of density values.

    data: float array of shape (L, L, L), indexed [x, y, z].
    voxel_size: optional Angstrom-per-voxel metadata; never affects math.
    """

    data: np.ndarray
    voxel_size: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or len(set(self.data.shape)) != 1:
            raise DimensionError(f"volume must be cubic, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume contains non-finite values")
        if self.voxel_size is not None and self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")

    @property
    def side_length(self) -> int:
        return self.data.shape[0]

    def center(self) -> np.ndarray:
        """Grid center (L-1)/2 in voxel units, one value per axis."""
        c = (self.side_length - 1) / 2.0
        return np.array([c, c, c])

    def copy(self) -> "Volume":
        return Volume(self.data.copy(), self.voxel_size)


@dataclass
class GaussianBlob:
    """One anisotropic Gaussian component of a synthetic volume."""

    center: np.ndarray  # voxel units, relative to the grid center
    covariance: np.ndarray  # 3x3 SPD, voxel units squared
    weight: float = 1.0


@dataclass
class SynthSpec:
    """Recipe for a synthetic Gaussian-mixture volume."""

    side_length: int
    blobs: list[GaussianBlob] = field(default_factory=list)
    seed: int = 0
    asymmetric: bool = False

    def __post_init__(self):
        if self.side_length < 2:
            raise ValueError("side_length must be at least 2")
        if self.asymmetric:
            centers = np.array([b.center for b in self.blobs], dtype=float)
            if len(centers) < 3 or _collinear(centers):
                raise ValueError(
                    "asymmetric volumes need at least 3 non-collinear blob centers"
                )


def _collinear(centers: np.ndarray) -> bool:
    d = centers - centers[0]
    return np.linalg.matrix_rank(d, tol=1e-8) < 2


# ---------------------------------------------------------------------------
# MRC 2014 I/O (mode 2, cubic only)

_HEADER_SIZE = 1024
_MODE_FLOAT32 = 2


def load_mrc(path) -> Volume:
    """Read a cubic mode-2 MRC2014 file."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_SIZE)
        if len(header) < _HEADER_SIZE:
            raise IOError(f"{path}: truncated header")
        nx, ny, nz, mode = struct.unpack_from("<4i", header, 0)
        if mode != _MODE_FLOAT32:
            raise MrcFormatError(f"{path}: unsupported MRC mode {mode}, need 2")
        if not (nx == ny == nz) or nx <= 0:
            raise DimensionError(f"{path}: non-cubic map {nx}x{ny}x{nz}")
        mx = struct.unpack_from("<i", header, 28)[0]
        cella_x = struct.unpack_from("<f", header, 40)[0]
        raw = fh.read(4 * nx * ny * nz)
    if len(raw) < 4 * nx * ny * nz:
        raise IOError(f"{path}: truncated data section")
    flat = np.frombuffer(raw, dtype="<f4")
    # file order is x fastest -> Fortran order for an [x, y, z] array
    data = flat.reshape((nx, ny, nz), order="F").astype(np.float64)
    voxel_size = None
    if mx > 0 and cella_x > 0:
        voxel_size = float(cella_x) / mx
    return Volume(data, voxel_size)


def save_mrc(vol: Volume, path) -> None:
    """Write a mode-2 MRC2014 file; round-trips bit-exactly at float32."""
    data32 = vol.data.astype("<f4")
    L = vol.side_length
    vs = vol.voxel_size if vol.voxel_size is not None else 1.0
    header = bytearray(_HEADER_SIZE)
    struct.pack_into("<4i", header, 0, L, L, L, _MODE_FLOAT32)  # NX NY NZ MODE
    struct.pack_into("<3i", header, 16, 0, 0, 0)  # NXSTART..
    struct.pack_into("<3i", header, 28, L, L, L)  # MX MY MZ
    struct.pack_into("<3f", header, 40, L * vs, L * vs, L * vs)  # CELLA
    struct.pack_into("<3f", header, 52, 90.0, 90.0, 90.0)  # CELLB
    struct.pack_into("<3i", header, 64, 1, 2, 3)  # MAPC MAPR MAPS
    struct.pack_into(
        "<3f", header, 76, float(data32.min()), float(data32.max()), float(data32.mean())
    )
    struct.pack_into("<i", header, 88, 1)  # ISPG
    header[208:212] = b"MAP "
    header[212:216] = bytes([0x44, 0x44, 0x00, 0x00])  # little-endian stamp
    struct.pack_into("<f", header, 216, float(data32.std()))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data32.tobytes(order="F"))


# ---------------------------------------------------------------------------
# Spatial operators


def downsample(vol: Volume, new_side: int) -> Volume:
    """Fourier-crop to ``new_side`` voxels per axis, preserving the mean value."""
    L = vol.side_length
    if new_side > L:
        raise ValueError(f"cannot downsample {L} to larger size {new_side}")
    if new_side < 4:
        raise ValueError("downsampled side must be at least 4")
    if (L - new_side) % 2 != 0:
        raise ValueError(f"sides {L} and {new_side} must have equal parity")
    if new_side == L:
        return vol.copy()
    spec = np.fft.fftn(vol.data)
    # keep the output lattice centered on the input grid center: new voxel k
    # must sample the input at (k - (L0-1)/2) * L/L0 + (L-1)/2, which is the
    # plain crop lattice advanced by (L/L0 - 1)/2 input voxels per axis
    delta = (L / new_side - 1.0) / 2.0
    freqs = np.fft.fftfreq(L)
    phase = np.exp(2j * np.pi * freqs * delta)
    spec *= phase[:, None, None]
    spec *= phase[None, :, None]
    spec *= phase[None, None, :]
    spec = np.fft.fftshift(spec)
    lo = (L - new_side) // 2
    hi = lo + new_side
    cropped = spec[lo:hi, lo:hi, lo:hi]
    out = np.real(np.fft.ifftn(np.fft.ifftshift(cropped)))
    out *= (new_side / L) ** 3
    vs = None if vol.voxel_size is None else vol.voxel_size * L / new_side
    return Volume(out, vs)


def rotate(vol: Volume, rotation: np.ndarray) -> Volume:
    """Resample so the output voxel at x takes the value of the input at R.x.

    Trilinear interpolation about the grid center; samples falling outside
    the grid read as zero.
    """
    R = np.asarray(rotation, dtype=np.float64)
    if np.allclose(R, np.eye(3), atol=0.0):
        return vol.copy()
    ctr = vol.center()
    out = ndimage.affine_transform(
        vol.data,
        matrix=R,
        offset=ctr - R @ ctr,
        order=1,
        mode="constant",
        cval=0.0,
        prefilter=False,
    )
    return Volume(out, vol.voxel_size)


def shift(vol: Volume, t) -> Volume:
    """Translate by t voxels (COM moves by +t); zero fill outside the grid."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3,):
        raise ValueError("shift vector must have 3 components")
    if np.max(np.abs(t)) >= vol.side_length / 2:
        raise ValueError("shift magnitude must stay below half the box")
    if np.all(t == 0):
        return vol.copy()
    out = ndimage.shift(
        vol.data, t, order=1, mode="constant", cval=0.0, prefilter=False
    )
    return Volume(out, vol.voxel_size)


def center_of_mass(vol: Volume, threshold: float = 0.0) -> np.ndarray:
    """Mass-weighted mean coordinate (origin at the grid center).

    Values below ``threshold`` are clamped to zero first, which also discards
    the negative densities common in experimental maps.
    """
    w = np.where(vol.data >= threshold, vol.data, 0.0)
    total = w.sum()
    if total <= 0:
        raise DegenerateVolumeError("no mass above threshold")
    L = vol.side_length
    coords = np.arange(L, dtype=np.float64) - (L - 1) / 2.0
    com = np.array(
        [
            (w.sum(axis=(1, 2)) * coords).sum(),
            (w.sum(axis=(0, 2)) * coords).sum(),
            (w.sum(axis=(0, 1)) * coords).sum(),
        ]
    )
    return com / total


def add_noise(vol: Volume, snr: float, seed: int = 0) -> Volume:
    """Add i.i.d. Gaussian noise at the given signal-to-noise ratio.

    The noise variance is ||v||_2^2 / (L^3 * snr); ``snr=inf`` returns the
    volume unchanged.
    """
    if not snr > 0:
        raise ValueError("snr must be positive")
    if np.isinf(snr):
        return vol.copy()
    L = vol.side_length
    sigma2 = float(np.sum(vol.data**2)) / (L**3 * snr)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, np.sqrt(sigma2), size=vol.data.shape)
    return Volume(vol.data + noise, vol.voxel_size)


def synth_volume(spec: SynthSpec) -> Volume:
    """Evaluate a weighted sum of anisotropic Gaussians on the grid."""
    L = spec.side_length
    coords = np.arange(L, dtype=np.float64) - (L - 1) / 2.0
    gx, gy, gz = np.meshgrid(coords, coords, coords, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)  # (L, L, L, 3)
    out = np.zeros((L, L, L))
    for blob in spec.blobs:
        cov = np.asarray(blob.covariance, dtype=np.float64)
        try:
            prec = np.linalg.inv(cov)
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("blob covariance must be symmetric positive definite")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("blob covariance must be symmetric positive definite")
        d = pts - np.asarray(blob.center, dtype=np.float64)
        quad = np.einsum("...i,ij,...j->...", d, prec, d)
        out += blob.weight * np.exp(-0.5 * quad)
    return Volume(out)


def l2_distance(a: Volume, b: Volume) -> float:
    """Euclidean norm of the voxelwise difference."""
    if a.side_length != b.side_length:
        raise DimensionError(
            f"size mismatch: {a.side_length} vs {b.side_length}"
        )
    return float(np.linalg.norm(a.data - b.data))


def reflect(vol: Volume) -> Volume:
    """Flip the x axis about the grid center."""
    return Volume(vol.data[::-1, :, :].copy(), vol.voxel_size)
