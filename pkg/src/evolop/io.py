"""Versioned binary container for fitted operators.

Layout (little-endian)::

    b"EVOLOPMF"                magic, 8 bytes
    u32                        schema version
    u64                        header length H
    H bytes                    UTF-8 JSON header
    sections                   raw arrays, in header order
    32 bytes                   SHA-256 of everything above

The header lists each section's name, dtype and shape, plus the kernel,
estimator config, lag and free-form provenance.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from evolop.estimators import EstimatorConfig, FittedOperator
from evolop.exceptions import ConfigError, CorruptArtifactError
from evolop.kernels import KernelSpec

MAGIC = b"EVOLOPMF"
SCHEMA_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_SECTIONS = ("X_train", "Y_train", "U", "V", "singular_values", "centers")


def save_model(model: FittedOperator, path, provenance=None):
    sections = []
    for name in _SECTIONS:
        arr = getattr(model, name)
        if arr is None:
            continue
        dtype = "<i8" if name == "centers" else "<f8"
        sections.append((name, np.ascontiguousarray(arr, dtype=dtype)))
    header = {
        "schema_version": SCHEMA_VERSION,
        "kernel": model.kernel.to_dict(),
        "config": model.config.to_dict(),
        "lag": model.lag,
        "sections": [{"name": n, "dtype": a.dtype.str, "shape": list(a.shape)} for n, a in sections],
        "provenance": provenance or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = _PREFIX.pack(MAGIC, SCHEMA_VERSION, len(head)) + head + b"".join(a.tobytes() for _, a in sections)
    with open(path, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())


def read_header(path):
    return _parse(path)[0]


def load_model(path) -> FittedOperator:
    header, arrays = _parse(path)
    try:
        kernel = KernelSpec.from_dict(header["kernel"])
        config = EstimatorConfig.from_dict(header["config"])
        return FittedOperator(
            kernel,
            config,
            arrays["X_train"],
            arrays["Y_train"],
            arrays["U"],
            arrays["V"],
            arrays.get("singular_values"),
            arrays.get("centers"),
            int(header["lag"]),
        )
    except (KeyError, ConfigError) as exc:
        raise CorruptArtifactError(f"{path}: invalid model header: {exc}") from exc


def _parse(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise ConfigError(f"model file not found: {path}") from exc
    if len(raw) < _PREFIX.size + 32:
        raise CorruptArtifactError(f"{path}: file too short")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptArtifactError(f"{path}: checksum mismatch")
    magic, version, hlen = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CorruptArtifactError(f"{path}: not a model file")
    if version != SCHEMA_VERSION:
        raise CorruptArtifactError(f"{path}: unsupported schema version {version}")
    try:
        header = json.loads(body[_PREFIX.size : _PREFIX.size + hlen])
    except ValueError as exc:
        raise CorruptArtifactError(f"{path}: unreadable header") from exc
    offset = _PREFIX.size + hlen
    arrays = {}
    for sec in header.get("sections", []):
        dtype = np.dtype(sec["dtype"])
        count = int(np.prod(sec["shape"], dtype=np.int64))
        size = count * dtype.itemsize
        if offset + size > len(body):
            raise CorruptArtifactError(f"{path}: section {sec['name']} truncated")
        arrays[sec["name"]] = np.frombuffer(body, dtype, count, offset).reshape(sec["shape"]).copy()
        offset += size
    if offset != len(body):
        raise CorruptArtifactError(f"{path}: trailing bytes after sections")
    return header, arrays
