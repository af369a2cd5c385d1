"""Binary snapshots of a ``SimState`` for restarts.

Layout::

    b"MHDSNAP1\\n"
    one line of UTF-8 JSON terminated by b"\\n" (the header)
    raw coefficients

The header holds ``n``, ``N``, ``t``, ``case``, ``b_tilde``, ``r``,
``c_hat``, ``K_cert``, ``argmin`` and ``dtype``.  Floats that must round-trip exactly
(``t``, ``b_tilde``, ``r``, ``c_hat``) are stored with ``float.hex``.
The payload is little-endian complex128 (``<c16``) in C order with shape
``(2, n) + (N,) * n``: velocity components first, then magnetic ones, each
over the full FFT index set in numpy frequency order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diophantine import BackgroundField
from .errors import ConfigurationError
from .solver import SimState
from .spectral import SpectralField, TorusGrid

MAGIC = b"MHDSNAP1\n"
DTYPE = "<c16"


def write_snapshot(path, state: SimState) -> None:
    g = state.grid
    bg = state.bg
    header = {
        "n": g.n,
        "N": g.N,
        "t": float(state.t).hex(),
        "case": list(state.case),
        "b_tilde": [float(v).hex() for v in bg.b_tilde],
        "r": float(bg.r).hex(),
        "c_hat": float(bg.c_hat).hex(),
        "K_cert": bg.K_cert,
        "argmin": None if bg.argmin is None else list(bg.argmin),
        "dtype": DTYPE,
    }
    data = np.stack([state.u.coeffs, state.b.coeffs]).astype(DTYPE)
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(data).tobytes())


def read_snapshot(path) -> SimState:
    with open(Path(path), "rb") as fh:
        if fh.readline() != MAGIC:
            raise ConfigurationError(f"{path} is not a snapshot file")
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode())
        g = TorusGrid(int(header["n"]), int(header["N"]))
        dtype = np.dtype(header["dtype"])
        t = float.fromhex(header["t"])
        bg = BackgroundField(tuple(float.fromhex(v) for v in header["b_tilde"]),
                             float.fromhex(header["r"]), float.fromhex(header["c_hat"]),
                             int(header["K_cert"]),
                             None if header.get("argmin") is None else tuple(header["argmin"]))
        case = tuple(header["case"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"{path}: malformed snapshot header ({exc})") from None
    shape = (2, g.n) + g.shape
    if len(payload) != int(np.prod(shape)) * dtype.itemsize:
        raise ConfigurationError(f"{path}: payload size does not match header")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(complex)
    return SimState(t, SpectralField(g, data[0]), SpectralField(g, data[1]), case, bg)
