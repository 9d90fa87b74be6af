"""Synthetic embedding datasets and their on-disk formats.

Binary layout (``.pseb``), all integers little-endian::

    b"PSEB" | version u8 | flags u8 | S u32 | count u32
    per record: id_len u32 | id utf-8 | identity u32 | attribute u8 | S x f32

Flag bit 0 marks unit-normalised embeddings, bit 1 marks a dataset without
attribute labels (the attribute byte is then written as 0 and ignored).

The CSV form has the header ``id,identity,attribute,v0..v{S-1}``; floats are
written with the shortest decimal that round-trips to the same binary32.
Both forms keep the manifest in a JSON sidecar ``<name>.manifest.json``.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import __version__
from .core import DEFAULT_DIM
from .errors import (DimensionMismatch, DuplicateRecordId, InvalidSpec,
                     MalformedFile, UnknownRecord)
from .pemiu import PRNG_ALGORITHM

MAGIC = b"PSEB"
FORMAT_VERSION = 1
FLAG_UNIT_NORM = 0x01
FLAG_NO_ATTRIBUTE = 0x02

_HEADER = struct.Struct("<4sBBII")
_U32 = struct.Struct("<I")
_LABELS = struct.Struct("<IB")


@dataclass
class Dataset:
    ids: list
    embeddings: np.ndarray
    identities: np.ndarray
    attributes: Optional[np.ndarray]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        self.identities = np.asarray(self.identities, dtype=np.int64)
        if self.attributes is not None:
            self.attributes = np.asarray(self.attributes, dtype=np.uint8)
        n = len(self.ids)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != n:
            raise DimensionMismatch(f"expected {n} embeddings, got shape {self.embeddings.shape}")
        if self.identities.shape != (n,):
            raise DimensionMismatch("identity labels do not match record count")
        if self.attributes is not None and self.attributes.shape != (n,):
            raise DimensionMismatch("attribute labels do not match record count")
        if len(set(self.ids)) != n:
            dup = next(i for i, c in _counts(self.ids) if c > 1)
            raise DuplicateRecordId(f"duplicate record id {dup!r}")
        self._index = {rid: k for k, rid in enumerate(self.ids)}
        self.manifest = dict(self.manifest)
        self.manifest.setdefault("S", self.S)
        self.manifest.setdefault("unit_norm", False)
        if self.manifest["S"] != self.S:
            raise DimensionMismatch(f"manifest S={self.manifest['S']} but embeddings have {self.S}")

    @property
    def S(self) -> int:
        return int(self.embeddings.shape[1])

    @property
    def unit_norm(self) -> bool:
        return bool(self.manifest.get("unit_norm", False))

    @property
    def index(self) -> dict:
        return self._index

    def __len__(self):
        return len(self.ids)

    def get(self, record_id) -> np.ndarray:
        try:
            return self.embeddings[self._index[record_id]]
        except KeyError:
            raise UnknownRecord(record_id) from None

    def with_embeddings(self, embeddings, **manifest_updates) -> "Dataset":
        m = dict(self.manifest)
        m.update(manifest_updates)
        return Dataset(list(self.ids), embeddings, self.identities.copy(),
                       None if self.attributes is None else self.attributes.copy(), m)

    def equals(self, other: "Dataset") -> bool:
        """Bitwise equality of records and manifest."""
        if self.ids != other.ids or self.manifest != other.manifest:
            return False
        if (self.attributes is None) != (other.attributes is None):
            return False
        if self.attributes is not None and not np.array_equal(self.attributes, other.attributes):
            return False
        return (self.embeddings.shape == other.embeddings.shape
                and np.array_equal(self.identities, other.identities)
                and self.embeddings.tobytes() == other.embeddings.tobytes())


def _counts(items):
    seen = {}
    for x in items:
        seen[x] = seen.get(x, 0) + 1
    return seen.items()


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic generator.

    ``intra_sigma`` is the expected Euclidean norm of the per-sample noise,
    i.e. each coordinate gets ``N(0, (intra_sigma / sqrt(S))**2)``. This keeps
    the noise on the same scale as the unit-norm identity centroids.
    """

    S: int = DEFAULT_DIM
    n_identities: int = 500
    samples_per_identity: int = 2
    intra_sigma: float = 0.1
    attribute_offset: float = 0.1
    unit_norm: bool = True
    seed: int = 7

    def validate(self):
        if self.S <= 0:
            raise InvalidSpec(f"S must be positive, got {self.S}")
        if self.n_identities < 2:
            raise InvalidSpec(f"need at least 2 identities, got {self.n_identities}")
        if self.samples_per_identity < 1:
            raise InvalidSpec(f"need at least 1 sample per identity, got {self.samples_per_identity}")
        if not self.intra_sigma >= 0 or not math.isfinite(self.intra_sigma):
            raise InvalidSpec(f"intra_sigma must be >= 0, got {self.intra_sigma}")
        if not math.isfinite(self.attribute_offset):
            raise InvalidSpec("attribute_offset must be finite")
        if self.seed is None or int(self.seed) < 0:
            raise InvalidSpec("seed must be a non-negative integer")


# The dataset used throughout the acceptance suite and the demos.
REFERENCE_SPEC = SynthSpec()


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def attribute_direction(S: int, seed: int) -> np.ndarray:
    u = _stream(seed, 1).standard_normal(S)
    return u / np.linalg.norm(u)


def generate(spec: SynthSpec = REFERENCE_SPEC) -> Dataset:
    """Generate identity clusters on the unit hypersphere.

    Identity ``i`` gets a uniform random unit centroid and attribute
    ``i % 2``. Each sample is ``centroid +/- attribute_offset * u_attr`` plus
    Gaussian noise, then renormalised if ``spec.unit_norm``. Every identity
    draws from its own stream keyed by ``(seed, index)``.
    """
    spec.validate()
    S = spec.S
    u = attribute_direction(S, spec.seed)
    noise_sd = spec.intra_sigma / math.sqrt(S)
    n, m = spec.n_identities, spec.samples_per_identity
    x = np.empty((n * m, S), dtype=np.float32)
    ids, idents, attrs = [], [], []
    width = len(str(n - 1))
    for i in range(n):
        c = _stream(spec.seed, 0, i).standard_normal(S)
        c /= np.linalg.norm(c)
        a = i % 2
        shifted = c + spec.attribute_offset * (1.0 if a else -1.0) * u
        noise = _stream(spec.seed, 2, i).standard_normal((m, S)) * noise_sd
        samples = shifted[None, :] + noise
        if spec.unit_norm:
            samples /= np.linalg.norm(samples, axis=1, keepdims=True)
        x[i * m:(i + 1) * m] = samples
        for j in range(m):
            ids.append(f"id{i:0{width}d}_s{j}")
            idents.append(i)
            attrs.append(a)
    manifest = {
        "S": S,
        "unit_norm": bool(spec.unit_norm),
        "provenance": {"synthetic": asdict(spec)},
        "seed": int(spec.seed),
        "prng": PRNG_ALGORITHM,
        "version": __version__,
    }
    return Dataset(ids, x, np.asarray(idents), np.asarray(attrs), manifest)


# --- file I/O ----------------------------------------------------------------

def _stem(path: Path) -> Path:
    return path.with_suffix("") if path.suffix else path


def manifest_path(path) -> Path:
    path = Path(path)
    return _stem(path).with_name(_stem(path).name + ".manifest.json")


def _infer_format(path: Path, fmt):
    if fmt:
        fmt = fmt.lower()
        if fmt not in ("binary", "csv"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "binary"


def to_bytes(ds: Dataset) -> bytes:
    flags = (FLAG_UNIT_NORM if ds.unit_norm else 0) | (FLAG_NO_ATTRIBUTE if ds.attributes is None else 0)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, flags, ds.S, len(ds))]
    vecs = ds.embeddings.astype("<f4", copy=False)
    attrs = ds.attributes if ds.attributes is not None else np.zeros(len(ds), np.uint8)
    for k, rid in enumerate(ds.ids):
        b = rid.encode("utf-8")
        parts.append(_U32.pack(len(b)))
        parts.append(b)
        parts.append(_LABELS.pack(int(ds.identities[k]), int(attrs[k])))
        parts.append(vecs[k].tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes, manifest: Optional[dict] = None) -> Dataset:
    """Parse the binary format; errors carry the offset of the unreadable field."""
    mv = memoryview(buf)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(mv):
            raise MalformedFile(f"truncated {what} (need {n} bytes, {len(mv) - pos} left)", offset=pos)
        out = mv[pos:pos + n]
        pos += n
        return out

    magic, version, flags, S, count = _HEADER.unpack(take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise MalformedFile(f"bad magic {bytes(magic)!r}", offset=0)
    if version != FORMAT_VERSION:
        raise MalformedFile(f"unsupported version {version}", offset=4)
    if S == 0:
        raise MalformedFile("dimension is zero", offset=6)
    x = np.empty((count, S), dtype=np.float32)
    ids, idents, attrs = [], [], []
    for k in range(count):
        (n,) = _U32.unpack(take(4, "id length"))
        start = pos
        raw = take(n, "record id")
        try:
            ids.append(bytes(raw).decode("utf-8"))
        except UnicodeDecodeError:
            raise MalformedFile("record id is not valid UTF-8", offset=start) from None
        ident, attr = _LABELS.unpack(take(_LABELS.size, "labels"))
        idents.append(ident)
        attrs.append(attr)
        x[k] = np.frombuffer(take(4 * S, "embedding"), dtype="<f4")
    if pos != len(mv):
        raise MalformedFile(f"{len(mv) - pos} trailing bytes", offset=pos)
    unit = bool(flags & FLAG_UNIT_NORM)
    if manifest is None:
        manifest = {"S": int(S), "unit_norm": unit}
    elif manifest.get("S") != S or bool(manifest.get("unit_norm")) != unit:
        raise MalformedFile("manifest disagrees with file header", offset=0)
    has_attr = not flags & FLAG_NO_ATTRIBUTE
    return Dataset(ids, x, np.asarray(idents, dtype=np.int64),
                   np.asarray(attrs, dtype=np.uint8) if has_attr else None, manifest)


def to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["id", "identity"] + (["attribute"] if ds.attributes is not None else [])
    w.writerow(head + [f"v{i}" for i in range(ds.S)])
    for k, rid in enumerate(ds.ids):
        row = [rid, int(ds.identities[k])]
        if ds.attributes is not None:
            row.append(int(ds.attributes[k]))
        # str(np.float32) is numpy's shortest round-trip repr for binary32
        row.extend(str(v) for v in ds.embeddings[k])
        w.writerow(row)
    return buf.getvalue()


def from_csv(text: str, manifest: Optional[dict] = None) -> Dataset:
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise MalformedFile("empty CSV file", line=1) from None
    if header[:2] != ["id", "identity"]:
        raise MalformedFile("header must start with id,identity", line=1)
    has_attr = len(header) > 2 and header[2] == "attribute"
    first = 3 if has_attr else 2
    S = len(header) - first
    if S <= 0 or header[first:] != [f"v{i}" for i in range(S)]:
        raise MalformedFile("value columns must be v0..v{S-1}", line=1)
    ids, idents, attrs, vecs = [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DimensionMismatch(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(row[0])
            idents.append(int(row[1]))
            if has_attr:
                attrs.append(int(row[2]))
            vecs.append(np.array(row[first:], dtype=np.float32))
        except ValueError as e:
            raise MalformedFile(str(e), line=lineno) from None
    x = np.vstack(vecs) if vecs else np.empty((0, S), np.float32)
    if manifest is None:
        manifest = {"S": S, "unit_norm": False}
    return Dataset(ids, x, np.asarray(idents, dtype=np.int64),
                   np.asarray(attrs, dtype=np.uint8) if has_attr else None, manifest)


def write_dataset(ds: Dataset, path, fmt: Optional[str] = None) -> Path:
    """Write ``ds`` plus its manifest sidecar; returns the data file path."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "binary":
        path.write_bytes(to_bytes(ds))
    else:
        path.write_text(to_csv(ds), encoding="utf-8", newline="")
    manifest_path(path).write_text(json.dumps(ds.manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_dataset(path, fmt: Optional[str] = None) -> Dataset:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text()) if mpath.exists() else None
    if fmt == "binary":
        ds = from_bytes(path.read_bytes(), manifest)
    else:
        ds = from_csv(path.read_text(encoding="utf-8"), manifest)
    if manifest is None:
        ds.manifest["provenance"] = {"import": os.fspath(path)}
    return ds


# --- pairings ------------------------------------------------------------------

class Pair(NamedTuple):
    id_a: str
    id_b: str
    mated: bool


def all_pairs(ds: Dataset) -> list:
    """Every unordered record pair, flagged mated when identities agree."""
    out = []
    for a, b in itertools.combinations(range(len(ds)), 2):
        out.append(Pair(ds.ids[a], ds.ids[b], bool(ds.identities[a] == ds.identities[b])))
    return out


def write_pairing(pairs, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id_a", "id_b", "mated"])
        for a, b, m in pairs:
            w.writerow([a, b, int(bool(m))])
    return path


def load_pairing(path, dataset: Optional[Dataset] = None) -> list:
    """Read a ``id_a,id_b,mated`` pairing file.

    When ``dataset`` is given every id must resolve, else
    :class:`UnknownRecord` is raised naming the first unresolved id.
    """
    text = Path(path).read_text(encoding="utf-8")
    pairs = []
    rows = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(rows, start=1):
        if not row or (lineno == 1 and row == ["id_a", "id_b", "mated"]):
            continue
        if len(row) != 3 or row[2].strip() not in ("0", "1"):
            raise MalformedFile(f"expected id_a,id_b,mated with mated in {{0,1}}, got {row}", line=lineno)
        pairs.append(Pair(row[0], row[1], row[2].strip() == "1"))
    if dataset is not None:
        for p in pairs:
            for rid in (p.id_a, p.id_b):
                if rid not in dataset.index:
                    raise UnknownRecord(rid)
    return pairs
