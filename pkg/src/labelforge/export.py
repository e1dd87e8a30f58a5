"""Labeled-data and model-bundle exports.

Archives are byte-deterministic for identical project state: entries carry a
fixed timestamp and CSV rows are fully ordered. The model ships as documented
JSON rather than any language-specific serialization so the classifier and
vectorizer stay reusable outside this service.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from datetime import datetime, timezone
from typing import Optional

from .classifier import ModelSnapshot
from .coordinator import ProjectState
from .domain import ALMethod, RecordStatus
from .errors import ModelUnavailable
from .vectorizer import TOKENIZER_NAME

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)

DATA_CSV_NAME = "labeled_data.csv"
MODEL_JSON_NAME = "model.json"
VECTORIZER_JSON_NAME = "vectorizer.json"
README_NAME = "README.md"


def _zip_bytes(entries: list[tuple[str, bytes]]) -> bytes:
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_DEFLATED, compresslevel=9) as zf:
        for name, payload in entries:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)
    return buffer.getvalue()


def export_labeled_zip(state: ProjectState) -> bytes:
    """Zip holding labeled_data.csv: every labeled record as (ID, Text,
    Label), sorted by label name then upload order. Zero labeled records
    still produce a header-only CSV."""
    rows = []
    for record in state.records.values():
        if record.status is not RecordStatus.LABELED or record.final_label_id is None:
            continue
        label = state.labels[record.final_label_id].name
        rows.append((label, record.upload_order, record.external_id or record.id, record.text))
    rows.sort(key=lambda r: (r[0], r[1]))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["ID", "Text", "Label"])
    for label, _, row_id, text in rows:
        writer.writerow([row_id, text, label])
    return _zip_bytes([(DATA_CSV_NAME, out.getvalue().encode("utf-8"))])


def latest_snapshot(state: ProjectState) -> Optional[ModelSnapshot]:
    return state.snapshots[-1] if state.snapshots else None


def _isoformat(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat()


def build_model_bundle(state: ProjectState) -> dict:
    """ModelBundle contents for model.json."""
    snapshot = latest_snapshot(state)
    if snapshot is None or state.vocabulary is None:
        raise ModelUnavailable("model unavailable")
    model = snapshot.model
    class_names = [state.labels[label_id].name for label_id in model.classes]
    return {
        "classes": class_names,
        "vocabulary": list(state.vocabulary.tokens),
        "idf": list(state.vocabulary.idf),
        "coefficients": [[float(v) for v in row] for row in model.coefficients],
        "intercepts": [float(v) for v in model.intercepts],
        "metadata": {
            "project_name": state.project.name,
            "batch_index": snapshot.batch_index,
            "created_at": _isoformat(snapshot.trained_at),
        },
    }


def build_vectorizer_bundle(state: ProjectState) -> dict:
    if state.vocabulary is None:
        raise ModelUnavailable("model unavailable")
    return {
        "tokenizer": TOKENIZER_NAME,
        "tokens": list(state.vocabulary.tokens),
        "idf": list(state.vocabulary.idf),
    }


def export_model_bundle(state: ProjectState) -> bytes:
    """Zip holding model.json, vectorizer.json and a README describing how to
    score new text with them."""
    if state.project.settings.al_method is ALMethod.RANDOM:
        raise ModelUnavailable("model unavailable: active learning is disabled for this project")
    model_json = json.dumps(build_model_bundle(state), indent=2)
    vectorizer_json = json.dumps(build_vectorizer_bundle(state), indent=2)
    readme = generate_readme(state)
    return _zip_bytes(
        [
            (MODEL_JSON_NAME, model_json.encode("utf-8")),
            (VECTORIZER_JSON_NAME, vectorizer_json.encode("utf-8")),
            (README_NAME, readme.encode("utf-8")),
        ]
    )


def parse_model_bundle(zip_bytes: bytes) -> dict:
    """Load model.json back out of an exported bundle."""
    with zipfile.ZipFile(io.BytesIO(zip_bytes)) as zf:
        return json.loads(zf.read(MODEL_JSON_NAME).decode("utf-8"))


def generate_readme(state: ProjectState) -> str:
    """Markdown description of the bundle plus language-neutral scoring
    pseudocode that reproduces the server's probabilities."""
    name = state.project.name
    return f"""# Model bundle for project "{name}"

This archive contains the text classifier trained on the labeled records of
"{name}", in a portable JSON format.

## Files

- `model.json` - ordered class names, the feature vocabulary, per-token idf
  weights, the coefficient matrix (one row per class, one column per
  vocabulary token) and per-class intercepts, plus metadata about when the
  model was trained.
- `vectorizer.json` - the tokenizer name (`{TOKENIZER_NAME}`), the vocabulary
  tokens in feature order, and the idf weight for each token.

## Scoring procedure

To score a new document, reproduce the server pipeline exactly:

```text
1. tokenize:
     lowercase the text
     tokens = maximal runs of Unicode letters/digits (underscore splits)
     keep only tokens of length >= 2
2. term frequencies:
     count[i] = occurrences of vocabulary[i] among the tokens
     (tokens outside the vocabulary are ignored)
3. tf-idf:
     weight[i] = count[i] * idf[i]
     norm = sqrt(sum_i weight[i]^2)
     x[i] = weight[i] / norm        (if norm is 0, x stays all-zero)
4. linear scores:
     score[c] = intercepts[c] + sum_i coefficients[c][i] * x[i]
5. probabilities (softmax):
     m = max_c score[c]
     p[c] = exp(score[c] - m) / sum_k exp(score[k] - m)
```

`p` lists one probability per entry of `classes`, in order. The predicted
class is the argmax.
"""
