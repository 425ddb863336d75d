"""Embed a sentence list with a pretrained hub encoder and write an
SNLS-EMB v1 table.

The model is resolved through the transformers hub loader, so both hub
names and local model directories work. Embeddings are produced in eval
mode with fixed seeds, making re-exports byte-identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

EMB_MAGIC = "SNLS-EMB"
EMB_VERSION = "v1"
POOLINGS = ("cls_token", "mean")

_WS = re.compile(r"\s+")


def canon_sentence(text: str) -> str:
    """Trim and collapse internal whitespace (the table-key canonical form)."""
    return _WS.sub(" ", text).strip()


@dataclass
class ExportJob:
    model_name: str
    sentences_file: str
    output_file: str
    pooling: str = "cls_token"
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")


def read_sentences(path: str) -> list[str]:
    """One sentence per line; blank lines are skipped; duplicates (after
    canonicalization) are a validation error listing the collisions."""
    with open(path, encoding="utf-8") as fh:
        raw = [line.rstrip("\n") for line in fh]
    sentences = [canon_sentence(line) for line in raw if canon_sentence(line)]
    if not sentences:
        raise ValueError(f"{path}: no sentences found")
    seen: dict[str, int] = {}
    collisions = []
    for s in sentences:
        seen[s] = seen.get(s, 0) + 1
        if seen[s] == 2:
            collisions.append(s)
    if collisions:
        raise ValueError(f"duplicate canonical sentences: {collisions}")
    return sentences


def embed_sentences(
    model_name: str,
    sentences: list[str],
    pooling: str = "cls_token",
    batch_size: int = 16,
) -> np.ndarray:
    """[N, hidden] float32 embeddings under the chosen pooling."""
    torch.manual_seed(0)
    tokenizer = AutoTokenizer.from_pretrained(model_name)
    model = AutoModel.from_pretrained(model_name)
    model.eval()
    rows: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            encoded = tokenizer(chunk, padding=True, truncation=True, return_tensors="pt")
            hidden = model(**encoded).last_hidden_state  # [B, T, H]
            if pooling == "cls_token":
                pooled = hidden[:, 0, :]
            else:
                mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
            rows.append(pooled.to(torch.float32).cpu().numpy())
    return np.concatenate(rows, axis=0)


def write_table(path: str, sentences: list[str], vectors: np.ndarray, provenance: str) -> None:
    if vectors.ndim != 2 or vectors.shape[0] != len(sentences):
        raise ValueError("vectors must be [N, dim] aligned with sentences")
    dim = vectors.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{EMB_MAGIC} {EMB_VERSION} {dim} {len(sentences)} {provenance}\n")
        for sentence, vec in zip(sentences, vectors.astype(np.float32)):
            fh.write(sentence + "\n")
            fh.write(" ".join(repr(float(v)) for v in vec) + "\n")


def export_table(job: ExportJob) -> dict:
    """Run the whole export; returns a summary dict."""
    sentences = read_sentences(job.sentences_file)
    vectors = embed_sentences(job.model_name, sentences, job.pooling, job.batch_size)
    write_table(job.output_file, sentences, vectors, provenance=job.model_name)
    return {
        "sentences": len(sentences),
        "dim": int(vectors.shape[1]),
        "pooling": job.pooling,
        "output_file": job.output_file,
    }


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------

@dataclass
class VerifyReport:
    ok: bool
    dim: int = 0
    count: int = 0
    errors: list[str] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.errors is None:
            self.errors = []


def verify_table(path: str) -> VerifyReport:
    """Check header, entry count, per-entry dim, and value finiteness."""
    errors: list[str] = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        return VerifyReport(ok=False, errors=["line 1: empty file"])
    fields = lines[0].split(" ", 4)
    if len(fields) < 4 or fields[0] != EMB_MAGIC or fields[1] != EMB_VERSION:
        return VerifyReport(ok=False, errors=[f"line 1: bad header {lines[0]!r}"])
    try:
        dim, count = int(fields[2]), int(fields[3])
    except ValueError:
        return VerifyReport(ok=False, errors=["line 1: dim/count not integers"])
    expected_lines = 1 + 2 * count
    if len(lines) != expected_lines:
        errors.append(
            f"line {len(lines)}: expected {expected_lines} lines for {count} entries, "
            f"got {len(lines)}"
        )
        return VerifyReport(ok=False, dim=dim, count=count, errors=errors)
    for i in range(count):
        sentence_line = 2 + 2 * i
        value_line = sentence_line + 1
        sentence = lines[sentence_line - 1]
        values = lines[value_line - 1].split()
        if len(values) != dim:
            errors.append(f"line {value_line}: {len(values)} values, expected {dim}")
            break
        try:
            arr = np.array([float(v) for v in values])
        except ValueError:
            errors.append(f"line {value_line}: unparsable float")
            break
        if not np.all(np.isfinite(arr)):
            errors.append(f"line {value_line}: non-finite value for sentence {sentence!r}")
            break
    return VerifyReport(ok=not errors, dim=dim, count=count, errors=errors)
