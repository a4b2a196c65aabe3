"""Run a pretrained sentence encoder over a dataset manifest and write the
vectors as a WSEB file.

This tool sits on the far side of two file-format boundaries and imports
nothing from the training toolkit:

- input: a dataset manifest, JSON-lines with `review_id` and `text`;
- output: WSEB v1 (little-endian: magic "WSEB", u32 version, u32 dim,
  u64 count, then count records of [u64 review_id, dim x f32]) plus a JSON
  sidecar {source_tag, dim, count, corpus_checksum}.

Rows are written in manifest order, one per example. The pooling choice is
recorded verbatim in source_tag ("<encoder>|<pooling>|last_hidden") so a
downstream consumer can tell exactly how the vectors were produced. The
file is written atomically: a failed export leaves nothing behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WSEB_MAGIC = b"WSEB"
WSEB_VERSION = 1

POOLINGS = ("cls_token", "mean_tokens")


class ExportError(Exception):
    """Base class for exporter failures."""


class SetupError(ExportError):
    """The encoder could not be loaded."""


class ManifestError(ExportError):
    """The input manifest is malformed."""


class DataError(ExportError):
    """The encoder produced unusable output (e.g. width drift)."""


@dataclass(frozen=True)
class ExportJob:
    manifest_path: Path
    encoder_name: str
    out_path: Path
    pooling: str = "mean_tokens"
    batch_size: int = 32

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ExportError(f"pooling {self.pooling!r} not one of {POOLINGS}")
        if self.batch_size < 1:
            raise ExportError(f"batch_size {self.batch_size} must be >= 1")

    @property
    def source_tag(self) -> str:
        return f"{self.encoder_name}|{self.pooling}|last_hidden"


def read_manifest(path: str | Path) -> list[tuple[int, str]]:
    """(review_id, text) pairs in file order; ids must be unique."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise ManifestError(f"cannot read manifest {path}: {err}") from None
    rows: list[tuple[int, str]] = []
    seen: set[int] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rid = int(obj["review_id"])
            text = str(obj["text"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise ManifestError(f"{path}:{lineno}: bad manifest row ({err})") from None
        if rid in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate review id {rid}")
        seen.add(rid)
        rows.append((rid, text))
    if not rows:
        raise ManifestError(f"{path}: manifest holds no examples")
    return rows


class TransformerEncoder:
    """Frozen Hugging Face encoder producing one vector per input text."""

    def __init__(self, name_or_path: str, pooling: str):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
            self.model = AutoModel.from_pretrained(name_or_path)
        except (OSError, ValueError) as err:
            raise SetupError(f"cannot load encoder {name_or_path!r}: {err}") from None
        self.model.eval()
        self.pooling = pooling
        self.max_length = min(
            int(getattr(self.model.config, "max_position_embeddings", 512)), 512
        )

    def embed(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        enc = self.tokenizer(
            texts,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_length,
        )
        with torch.no_grad():
            hidden = self.model(**enc).last_hidden_state  # (n, tokens, dim)
        if self.pooling == "cls_token":
            pooled = hidden[:, 0, :]
        else:
            mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return pooled.cpu().numpy().astype(np.float32, copy=False)


def export(job: ExportJob) -> Path:
    """Embed every manifest example and write the WSEB file + sidecar."""
    encoder = TransformerEncoder(job.encoder_name, job.pooling)
    return export_with_encoder(job, encoder)


def export_with_encoder(job: ExportJob, encoder) -> Path:
    rows = read_manifest(job.manifest_path)
    dim: int | None = None
    vectors: list[np.ndarray] = []
    for start in range(0, len(rows), job.batch_size):
        batch = rows[start : start + job.batch_size]
        out = np.asarray(encoder.embed([text for _, text in batch]), dtype=np.float32)
        if out.ndim != 2 or out.shape[0] != len(batch):
            raise DataError(f"encoder returned shape {out.shape} for {len(batch)} texts")
        if dim is None:
            dim = int(out.shape[1])
        elif out.shape[1] != dim:
            raise DataError(
                f"encoder width drifted mid-run: {out.shape[1]} after {dim}"
            )
        if not np.all(np.isfinite(out)):
            raise DataError(f"non-finite embedding in batch starting at row {start}")
        vectors.extend(out)

    checksum = hashlib.sha256(Path(job.manifest_path).read_bytes()).hexdigest()
    _write_wseb(job.out_path, [rid for rid, _ in rows], vectors, dim, job.source_tag, checksum)
    return Path(job.out_path)


def _write_wseb(
    out_path: str | Path,
    ids: list[int],
    vectors: list[np.ndarray],
    dim: int,
    source_tag: str,
    corpus_checksum: str,
) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=out_path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(struct.pack("<4sIIQ", WSEB_MAGIC, WSEB_VERSION, dim, len(ids)))
            for rid, vec in zip(ids, vectors):
                fh.write(struct.pack("<Q", rid))
                fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())
        os.replace(tmp_name, out_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    sidecar = {
        "source_tag": source_tag,
        "dim": dim,
        "count": len(ids),
        "corpus_checksum": corpus_checksum,
    }
    sidecar_path = out_path.with_name(out_path.name + ".json")
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
