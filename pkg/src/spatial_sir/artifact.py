"""Binary emulator artifact.

Layout (all little-endian)::

    b"MCEM" | u32 version | u64 header length | header JSON (utf-8)
    then for each of gamma, delta, m, Gamma, Delta, M, design:
        u32 ndim | ndim x u64 dims | float64 data, first index fastest

Loading is all-or-nothing: any truncation or mismatch raises
:class:`UnsupportedFormatError` before an emulator is constructed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .emulator import CovEmulator, DesignSpace, MeanEmulator
from .exceptions import UnsupportedFormatError

MAGIC = b"MCEM"
VERSION = 1
_ARRAYS = ("gamma", "delta", "m", "Gamma", "Delta", "M", "design")


def _pack_array(a):
    a = np.asarray(a, dtype="<f8")
    head = struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes(order="F")


def _krige_cfg(em):
    return {"zeta": em.length_scale_, "kappa": em.smoothness, "n_neighbors": em.n_neighbors}


def save_artifact(path, mean: MeanEmulator, cov: CovEmulator, extra=None):
    """Write both emulators (built on the same design) to ``path``."""
    if not np.array_equal(mean.design_, cov.design_):
        raise ValueError("mean and covariance emulators were built on different designs")
    n_s, j_s = mean.gamma_.shape
    n_t, j_t = mean.delta_.shape
    header = {
        "dims": {"n_s": n_s, "n_t": n_t, "K": len(mean.design_), "J_s": j_s, "J_t": j_t,
                 "L_s": cov.Gamma_.shape[1], "L_t": cov.Delta_.shape[1]},
        "krige_mean": _krige_cfg(mean),
        "krige_cov": _krige_cfg(cov),
        "design_space": mean.space_.to_dict(),
        "times": None if mean.times_ is None else [float(t) for t in mean.times_],
        "variance_explained": {"mean": mean.variance_explained_, "cov": cov.variance_explained_},
        "jitter_events": cov.jitter_events_,
        "excluded": mean.excluded_.tolist(),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(blob)), blob]
    for a in (mean.gamma_, mean.delta_, mean.weights_, cov.Gamma_, cov.Delta_, cov.weights_,
              mean.design_):
        parts.append(_pack_array(a))
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if n < 0 or self.pos + n > len(self.buf):
            raise UnsupportedFormatError("artifact is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_artifact(path):
    """Parse ``path`` into ``(header, arrays)`` without building emulators."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise UnsupportedFormatError(f"cannot read artifact: {exc}") from None
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise UnsupportedFormatError("not an emulator artifact (bad magic)")
    version, hlen = r.unpack("<IQ")
    if version != VERSION:
        raise UnsupportedFormatError(f"unsupported artifact version {version}")
    try:
        header = json.loads(r.take(hlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise UnsupportedFormatError("corrupt artifact header") from None
    arrays = {}
    for name in _ARRAYS:
        (ndim,) = r.unpack("<I")
        if ndim > 8:
            raise UnsupportedFormatError(f"implausible rank {ndim} for array {name}")
        shape = r.unpack(f"<{ndim}Q")
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8")
        # C layout, as after a fresh build, so predictions match bit for bit
        arrays[name] = np.ascontiguousarray(data.reshape(shape, order="F"), dtype=np.float64)
    if r.pos != len(buf):
        raise UnsupportedFormatError("trailing bytes after artifact arrays")
    return header, arrays


def load_artifact(path):
    """Rebuild ``(MeanEmulator, CovEmulator)`` from an artifact file."""
    header, arr = read_artifact(path)
    try:
        dims = header["dims"]
        space = DesignSpace.from_dict(header["design_space"])
        km, kc = header["krige_mean"], header["krige_cov"]
        times = None if header["times"] is None else np.asarray(header["times"], dtype=float)
        excluded = np.asarray(header["excluded"], dtype=float).reshape(-1, space.dim + 1)
        ve = header["variance_explained"]
    except (KeyError, TypeError, ValueError) as exc:
        raise UnsupportedFormatError(f"artifact header incomplete: {exc}") from None
    expect = {
        "gamma": (dims["n_s"], dims["J_s"]), "delta": (dims["n_t"], dims["J_t"]),
        "m": (dims["J_s"], dims["J_t"], dims["K"]), "Gamma": (dims["n_s"], dims["L_s"]),
        "Delta": (dims["n_t"], dims["L_t"]),
        "M": (dims["L_s"], dims["L_s"], dims["L_t"], dims["K"]),
        "design": (dims["K"], space.dim + 1),
    }
    for name, shape in expect.items():
        if arr[name].shape != tuple(shape):
            raise UnsupportedFormatError(f"array {name} has shape {arr[name].shape}, expected {shape}")

    mean = MeanEmulator(dims["J_s"], dims["J_t"], km["n_neighbors"], km["zeta"], km["kappa"], space)
    mean.gamma_, mean.delta_, mean.weights_ = arr["gamma"], arr["delta"], arr["m"]
    mean.variance_explained_ = ve["mean"]
    cov = CovEmulator(dims["L_s"], dims["L_t"], kc["n_neighbors"], kc["zeta"], kc["kappa"], space)
    cov.Gamma_, cov.Delta_, cov.weights_ = arr["Gamma"], arr["Delta"], arr["M"]
    cov.variance_explained_ = ve["cov"]
    cov.jitter_events_ = [tuple(e) for e in header.get("jitter_events", [])]
    for em in (mean, cov):
        em._fit_design(arr["design"])
        em.times_ = times
        em.excluded_ = excluded
    return mean, cov
