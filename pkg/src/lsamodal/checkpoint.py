"""Binary checkpoint container for the two conv nets.

Layout (all integers little-endian):

    bytes 0..7    magic "LSFEVO01" (version tag lives in the magic)
    bytes 8..15   uint64 header length H
    bytes 16..16+H-1   UTF-8 JSON header
    remainder     payload: float64 little-endian tensors, concatenated

The header lists sections (one per net: "velocity", "initializer"), each
with its architecture hyperparameters and its tensors in registration order
with byte offsets into the payload, so the file can be parsed without this
package.  docs/checkpoint_format.md restates the layout with a worked
example.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .network import ConvNet

MAGIC = b"LSFEVO01"


def save_checkpoint(path, sections: dict) -> None:
    """Write nets keyed by section name; payload follows header order."""
    if not sections:
        raise CheckpointError("no sections to save")
    header_sections = []
    chunks = []
    offset = 0
    for sec_name in sorted(sections):
        net = sections[sec_name]
        tensors = []
        for name in net.param_names:
            arr = np.ascontiguousarray(net.params[name], dtype="<f8")
            tensors.append(
                {
                    "name": name,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": arr.nbytes,
                }
            )
            chunks.append(arr.tobytes())
            offset += arr.nbytes
        header_sections.append(
            {
                "name": sec_name,
                "arch": {
                    "in_channels": net.in_channels,
                    "base": net.base,
                    "bottleneck": net.bottleneck,
                },
                "tensors": tensors,
            }
        )
    header = json.dumps(
        {"dtype": "float64-le", "sections": header_sections}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint64(len(header)).tobytes())
        f.write(header)
        for c in chunks:
            f.write(c)


def load_checkpoint(path) -> dict:
    """Read a container back into {section name: ConvNet}."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise CheckpointError(f"not a checkpoint file (bad magic): {path.name}")
    hlen = int(np.frombuffer(blob[8:16], dtype="<u8")[0])
    if len(blob) < 16 + hlen:
        raise CheckpointError(f"truncated header in {path.name}")
    try:
        header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header in {path.name}: {exc}") from exc
    if header.get("dtype") != "float64-le":
        raise CheckpointError(f"unsupported dtype {header.get('dtype')!r}")
    payload = blob[16 + hlen :]
    out = {}
    for sec in header["sections"]:
        arch = sec["arch"]
        net = ConvNet(
            in_channels=int(arch["in_channels"]),
            base=int(arch["base"]),
            bottleneck=int(arch["bottleneck"]),
        )
        params = {}
        for t in sec["tensors"]:
            start, nbytes = int(t["offset"]), int(t["nbytes"])
            if start + nbytes > len(payload):
                raise CheckpointError(f"tensor {t['name']} overruns payload in {path.name}")
            arr = np.frombuffer(payload[start : start + nbytes], dtype="<f8")
            params[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
        net.set_params(params)  # validates names and shapes against the arch
        out[sec["name"]] = net
    return out
