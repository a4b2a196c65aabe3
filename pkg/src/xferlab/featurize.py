"""Text featurization: tokenizing, hashed bag-of-n-grams, frozen embeddings.

Two encoders share one interface. The built-in encoder hashes word
n-grams into a fixed-width L2-normalized count vector with no vocabulary
to fit, so feature spaces are reproducible across machines. The frozen
encoder looks up pre-computed sentence vectors (produced out of process
by e.g. the embed-export tool) keyed by review id.

The hash is FNV-1a (64-bit) over the UTF-8 bytes of the n-gram with
tokens joined by single spaces; the index is the hash masked down to the
table width. It is fixed and version-tagged (HASH_TAG) so that any two
builds of this package place the same n-gram in the same slot.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Example
from .errors import FormatError, ValidationError

TokenSeq = list[str]

HASH_TAG = "fnv1a64/1"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def preprocess(text: str) -> TokenSeq:
    """Lowercase, replace everything but letters/digits/apostrophes with
    whitespace, and split. Empty tokens are dropped.

    Characters that stay uppercase after lower() (e.g. the mathematical
    alphanumeric symbols, which have no case mapping) count as special
    characters and are filtered, keeping tokens uppercase-free.
    """
    out = []
    word: list[str] = []
    for ch in text.lower():
        if (ch.isalnum() and not ch.isupper()) or ch == "'":
            word.append(ch)
        elif word:
            out.append("".join(word))
            word.clear()
    if word:
        out.append("".join(word))
    return out


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64_MASK
    return h


@dataclass(frozen=True)
class SparseVec:
    """Sorted sparse vector; `indices` strictly increasing within [0, dim)."""

    dim: int
    indices: np.ndarray  # int64
    values: np.ndarray  # float64

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


def encode_hashed(tokens: TokenSeq, dim: int, ngram_max: int) -> SparseVec:
    """Hash every n-gram (n <= ngram_max) to a slot, count, L2-normalize.

    dim must be a power of two (index = hash & (dim - 1)); the zero
    vector stays zero.
    """
    if dim <= 0 or dim & (dim - 1) != 0:
        raise ValidationError(f"hashed encoder dim {dim} is not a power of two")
    if ngram_max not in (1, 2, 3):
        raise ValidationError(f"ngram_max {ngram_max} not in {{1, 2, 3}}")
    mask = dim - 1
    counts: dict[int, float] = {}
    for n in range(1, ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            gram = " ".join(tokens[i : i + n])
            idx = fnv1a64(gram.encode("utf-8")) & mask
            counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return SparseVec(dim, np.empty(0, dtype=np.int64), np.empty(0))
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices])
    norm = math.sqrt(float(values @ values))
    return SparseVec(dim, indices, values / norm)


@dataclass(frozen=True)
class EmbeddingTable:
    """Frozen sentence vectors keyed by review id.

    Rows are stored as float32, the precision of the on-disk format, so a
    write/load round trip is bit-exact.
    """

    dim: int
    rows: dict[int, np.ndarray]
    source_tag: str = ""

    def __post_init__(self):
        for rid, vec in list(self.rows.items()):
            vec = np.ascontiguousarray(vec, dtype=np.float32)
            if vec.shape != (self.dim,):
                raise ValidationError(
                    f"embedding row {rid}: shape {vec.shape} != ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"embedding row {rid}: non-finite component")
            self.rows[rid] = vec


@dataclass(frozen=True)
class HashedNgramEncoder:
    """Trainable-free text encoder; the default at desk scale."""

    dim: int = 2**18
    ngram_max: int = 2

    def encode_text(self, text: str) -> SparseVec:
        return encode_hashed(preprocess(text), self.dim, self.ngram_max)

    def encode(self, example: Example) -> SparseVec:
        return self.encode_text(example.text)

    def describe(self) -> dict:
        return {
            "kind": "hashed",
            "dim": self.dim,
            "ngram_max": self.ngram_max,
            "hash": HASH_TAG,
        }


@dataclass(frozen=True)
class FrozenEmbeddingEncoder:
    """Looks up pre-computed vectors; the import boundary for external encoders."""

    table: EmbeddingTable

    @property
    def dim(self) -> int:
        return self.table.dim

    def encode(self, example: Example) -> np.ndarray:
        try:
            row = self.table.rows[example.review_id]
        except KeyError:
            raise ValidationError(
                f"no embedding row for review {example.review_id} "
                f"(table {self.table.source_tag!r})"
            ) from None
        return row.astype(np.float64)

    def describe(self) -> dict:
        return {"kind": "frozen", "dim": self.dim, "source_tag": self.table.source_tag}


Encoder = HashedNgramEncoder | FrozenEmbeddingEncoder


def encode(example: Example, spec: Encoder) -> SparseVec | np.ndarray:
    """Encode one example with either encoder kind."""
    return spec.encode(example)


# --- WSEB embedding files ----------------------------------------------------
#
# Little-endian binary: magic "WSEB", u32 version=1, u32 dim, u64 count,
# then count records of [u64 review_id, dim x f32]. A JSON sidecar
# (<file>.json) records {source_tag, dim, count, corpus_checksum}.

WSEB_MAGIC = b"WSEB"
WSEB_VERSION = 1
_HDR = struct.Struct("<4sIIQ")


def embedding_sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_embedding_file(
    table: EmbeddingTable, path: str | Path, corpus_checksum: str = ""
) -> None:
    """Write a WSEB file plus its JSON sidecar. Row order = ascending id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = sorted(table.rows)
    with open(path, "wb") as fh:
        fh.write(_HDR.pack(WSEB_MAGIC, WSEB_VERSION, table.dim, len(ids)))
        for rid in ids:
            fh.write(struct.pack("<Q", rid))
            fh.write(table.rows[rid].astype("<f4").tobytes())
    sidecar = {
        "source_tag": table.source_tag,
        "dim": table.dim,
        "count": len(ids),
        "corpus_checksum": corpus_checksum,
    }
    with open(embedding_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_embedding_file(path: str | Path) -> EmbeddingTable:
    """Read and fully validate a WSEB file: magic, version, count, finiteness."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise ValidationError(f"cannot read embedding file {path}: {err}") from None
    if len(data) < _HDR.size:
        raise FormatError(f"{path}: too short for a WSEB header")
    magic, version, dim, count = _HDR.unpack_from(data)
    if magic != WSEB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != WSEB_VERSION:
        raise FormatError(f"{path}: unsupported WSEB version {version}")
    if dim <= 0:
        raise FormatError(f"{path}: non-positive dim {dim}")
    record = 8 + 4 * dim
    expected = _HDR.size + count * record
    if len(data) != expected:
        raise FormatError(
            f"{path}: declared {count} records ({expected} bytes), file has "
            f"{len(data)} bytes"
        )
    rows: dict[int, np.ndarray] = {}
    off = _HDR.size
    for i in range(count):
        (rid,) = struct.unpack_from("<Q", data, off)
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off + 8).copy()
        if rid in rows:
            raise FormatError(f"{path}: duplicate review id {rid} at record {i}")
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"{path}: non-finite value in record {i} (id {rid})")
        rows[rid] = vec
        off += record

    source_tag = ""
    sidecar = embedding_sidecar_path(path)
    if sidecar.exists():
        with open(sidecar, encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("dim") != dim or meta.get("count") != count:
            raise FormatError(
                f"{sidecar}: sidecar dim/count {meta.get('dim')}/{meta.get('count')} "
                f"disagree with file {dim}/{count}"
            )
        source_tag = str(meta.get("source_tag", ""))
    return EmbeddingTable(dim, rows, source_tag)
