"""
Field I/O Module
Binary snapshot format for spectral fields

Layout (little-endian):
    32-byte header: magic b"FNSF", version u32, dim u32, n u32,
    components u32, reserved u32 (0), alpha f64
    then physical-space samples as f64, component-major, row-major per component.

The header carries no box length; readers get it from the run manifest.
"""
import os
import struct
import tempfile
from typing import Tuple

import numpy as np

from .spectral_core import DEFAULT_BOX_LENGTH, GridSpec, SpectralField


MAGIC = b"FNSF"
VERSION = 1
HEADER = struct.Struct('<4sIIIIId')


def encode_field(field: SpectralField, alpha: float) -> bytes:
    """Serialize a field to the snapshot byte layout"""
    grid = field.grid
    header = HEADER.pack(MAGIC, VERSION, grid.dim, grid.n, field.components, 0, float(alpha))
    samples = np.ascontiguousarray(field.to_physical(), dtype='<f8')
    return header + samples.tobytes(order='C')


def decode_field(data: bytes, box_length: float = DEFAULT_BOX_LENGTH) -> Tuple[SpectralField, float]:
    """
    Parse snapshot bytes

    Args:
        data: Raw file contents
        box_length: Period of the box the samples were taken on

    Returns:
        Tuple of (field, alpha)
    """
    if len(data) < HEADER.size:
        raise ValueError("truncated field file: header incomplete")
    magic, version, dim, n, components, _, alpha = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"not a field file (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"unsupported field file version {version}")
    grid = GridSpec(dim=dim, n=n, box_length=box_length)
    expected = components * n ** dim * 8
    payload = data[HEADER.size:]
    if len(payload) != expected:
        raise ValueError(f"field payload has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype='<f8').reshape((components,) + grid.shape)
    field = SpectralField.from_physical(grid, samples)
    field.solenoidal = field.is_vector and field.divergence_residual() <= 1e-8
    return field, alpha


def write_field(path: str, field: SpectralField, alpha: float) -> str:
    """Write a snapshot atomically (temp file + rename); returns the absolute path"""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(prefix='.fnsf-', dir=directory)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(encode_field(field, alpha))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return os.path.abspath(path)


def read_field(path: str, box_length: float = DEFAULT_BOX_LENGTH) -> Tuple[SpectralField, float]:
    with open(path, 'rb') as f:
        return decode_field(f.read(), box_length)
