"""The ``.ukadf`` pre-trained artifact: the shared LSTM and nothing else.

Layout (UTF-8, ``\\n`` line endings)::

    UKADF
    format_version: 1
    embed_dim: K
    hidden_dim: m
    meta.<key>: <value>          # sorted by key
    weights:
    W_i m n                      # block name and shape
    <row 0 values> ...           # one matrix row per line, 17 significant digits
    ...                          # W_f W_o W_theta U_i ... b_theta
    sha256: <hex digest of every preceding byte>

Only the twelve LSTM gate blocks are written; encoder, predictor and decoder
weights never leave the source side, and neither does any demand value.
"""
from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (CorruptionError, IncompatibleArtifactError, MalformedArtifactError,
                     RefuseToSaveError, VersionError)
from .nn import BLOCK_NAMES, LstmCellParams

MAGIC = "UKADF"
FORMAT_VERSION = 1
SUFFIX = ".ukadf"


@dataclass
class PretrainedArtifact:
    lstm: LstmCellParams
    metadata: dict[str, str] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    checksum: str = ""

    @property
    def embed_dim(self) -> int:
        return self.lstm.n

    @property
    def hidden_dim(self) -> int:
        return self.lstm.m

    def check_compatible(self, embed_dim: int, hidden_dim: int):
        if (self.embed_dim, self.hidden_dim) != (embed_dim, hidden_dim):
            raise IncompatibleArtifactError(
                f"artifact has K={self.embed_dim}, m={self.hidden_dim}; "
                f"run configured with K={embed_dim}, m={hidden_dim}")

    def to_bytes(self) -> bytes:
        body = _encode_body(self.lstm, self.metadata, self.format_version)
        return body + f"sha256: {hashlib.sha256(body).hexdigest()}\n".encode()

    def save(self, path) -> str:
        data = self.to_bytes()
        _atomic_write(Path(path), data)
        self.checksum = data.rsplit(b"sha256: ", 1)[1].strip().decode()
        return self.checksum


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _check_meta(key: str, value: str):
    if not key or any(c in key for c in ":\n\r ") or "\n" in value or "\r" in value:
        raise RefuseToSaveError(f"metadata entry {key!r} must be a single line without ':'")


def _encode_body(lstm: LstmCellParams, metadata: dict, version: int) -> bytes:
    lines = [MAGIC, f"format_version: {version}", f"embed_dim: {lstm.n}",
             f"hidden_dim: {lstm.m}"]
    for key in sorted(metadata):
        value = str(metadata[key])
        _check_meta(key, value)
        lines.append(f"meta.{key}: {value}")
    lines.append("weights:")
    for name, block in lstm.blocks().items():
        if not np.all(np.isfinite(block)):
            raise RefuseToSaveError(f"non-finite value in {name}")
        arr = np.atleast_2d(block) if block.ndim == 1 else block
        shape = " ".join(str(s) for s in block.shape)
        lines.append(f"{name} {shape}")
        for row in arr:
            lines.append(" ".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def artifact_from_net(net, metadata: dict | None = None) -> PretrainedArtifact:
    """Wrap a pre-training network's LSTM (copied, frozen) as an artifact."""
    meta = {k: str(v) for k, v in (metadata or {}).items()}
    lstm = net if isinstance(net, LstmCellParams) else net.lstm
    for p in lstm.params:
        if not np.all(np.isfinite(p.value)):
            raise RefuseToSaveError(f"non-finite value in {p.name}")
    return PretrainedArtifact(lstm.copy(prefix="lstm_A", frozen=True), meta)


def save_artifact(net, metadata: dict | None, path) -> str:
    """Write the network's shared LSTM to ``path``; returns the checksum."""
    return artifact_from_net(net, metadata).save(path)


def parse_artifact(data: bytes) -> PretrainedArtifact:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptionError("artifact is not valid UTF-8") from None
    lines = text.split("\n")
    if not lines or lines[0] != MAGIC:
        raise MalformedArtifactError("missing UKADF header")
    if len(lines) < 2 or not lines[1].startswith("format_version: "):
        raise MalformedArtifactError("missing format_version")
    try:
        version = int(lines[1].split(": ", 1)[1])
    except ValueError:
        raise MalformedArtifactError("format_version is not an integer") from None
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported artifact format_version {version}")

    marker = data.rfind(b"sha256: ")
    if marker < 0 or not data.endswith(b"\n"):
        raise CorruptionError("checksum line missing")
    body = data[:marker]
    stated = data[marker + len(b"sha256: "):].strip().decode("ascii", "replace")
    actual = hashlib.sha256(body).hexdigest()
    if stated != actual:
        raise CorruptionError("checksum mismatch: artifact is corrupted")

    body_lines = body.decode("utf-8").split("\n")[:-1]
    pos = 2
    header = {}
    metadata = {}
    while pos < len(body_lines) and body_lines[pos] != "weights:":
        key, sep, value = body_lines[pos].partition(": ")
        if not sep:
            raise MalformedArtifactError(f"bad header line {body_lines[pos]!r}")
        if key.startswith("meta."):
            metadata[key[5:]] = value
        else:
            header[key] = value
        pos += 1
    try:
        K = int(header["embed_dim"])
        m = int(header["hidden_dim"])
    except (KeyError, ValueError):
        raise MalformedArtifactError("embed_dim / hidden_dim missing or invalid") from None
    if K < 1 or m < 1:
        raise MalformedArtifactError("dimensions must be positive")
    pos += 1
    expected = {}
    for g in ("i", "f", "o", "theta"):
        expected[f"W_{g}"] = (m, K)
        expected[f"U_{g}"] = (m, m)
        expected[f"b_{g}"] = (m,)
    blocks = {}
    for name in BLOCK_NAMES:
        if pos >= len(body_lines):
            raise MalformedArtifactError(f"block {name} missing")
        parts = body_lines[pos].split()
        try:
            shape = tuple(int(s) for s in parts[1:])
        except ValueError:
            raise MalformedArtifactError(f"bad block header {body_lines[pos]!r}") from None
        if not parts or parts[0] != name or shape != expected[name]:
            raise MalformedArtifactError(
                f"expected block {name} {expected[name]}, found {body_lines[pos]!r}")
        pos += 1
        n_rows = shape[0] if len(shape) == 2 else 1
        rows = []
        for _ in range(n_rows):
            if pos >= len(body_lines):
                raise MalformedArtifactError(f"block {name} truncated")
            try:
                rows.append([float(v) for v in body_lines[pos].split()])
            except ValueError:
                raise MalformedArtifactError(f"non-numeric value in block {name}") from None
            pos += 1
        arr = np.array(rows, dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise MalformedArtifactError(f"block {name} has the wrong number of values")
        blocks[name] = arr.reshape(shape)
    if pos != len(body_lines):
        raise MalformedArtifactError("unexpected content after weight blocks")
    lstm = LstmCellParams.from_blocks(blocks, prefix="lstm_A", frozen=True)
    return PretrainedArtifact(lstm, metadata, version, actual)


def load_artifact(path) -> PretrainedArtifact:
    """Read and verify an artifact; its weights come back frozen."""
    return parse_artifact(Path(path).read_bytes())
