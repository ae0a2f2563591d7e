"""Binary CSI dump: one JSON header line, then little-endian float64 (re, im) pairs.

The header holds ``format``, ``shape`` (antennas, subcarriers, packets), the OFDM
numerology and the BS array geometry.  The payload is the tensor in C order with
real and imaginary parts interleaved, i.e. ``numpy.complex128`` with ``<`` byte order.
"""
from __future__ import annotations

import json

import numpy as np

from .channel import CsiTensor, OfdmConfig
from .geometry import UpaGeometry

FORMAT = "csi-dump-v1"


def write_csi(csi: CsiTensor, path, extra: dict | None = None) -> None:
    o, g = csi.ofdm, csi.geometry
    header = {
        "format": FORMAT,
        "shape": list(csi.data.shape),
        "dtype": "<f8 interleaved re,im",
        "ofdm": {
            "subcarriers": o.subcarriers,
            "subcarrier_spacing": o.subcarrier_spacing,
            "packets": o.packets,
            "symbols_per_packet": o.symbols_per_packet,
            "tx_power": o.tx_power,
        },
        "geometry": {"rows": g.rows, "cols": g.cols, "spacing": g.spacing, "carrier_frequency": g.carrier_frequency},
        "meta": extra or {},
    }
    payload = np.ascontiguousarray(csi.data, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)


def read_csi(path) -> tuple[CsiTensor, dict]:
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError("not a CSI dump: bad header") from exc
    if header.get("format") != FORMAT:
        raise ValueError(f"unsupported dump format {header.get('format')!r}")
    shape = tuple(header["shape"])
    if len(payload) != 16 * int(np.prod(shape)):
        raise ValueError("payload size does not match header shape")
    data = np.frombuffer(payload, dtype="<c16").reshape(shape).astype(complex)
    ofdm = OfdmConfig(**header["ofdm"])
    geom = UpaGeometry(**header["geometry"])
    return CsiTensor(data, ofdm, geom), header.get("meta", {})
