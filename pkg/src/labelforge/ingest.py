"""CSV corpus ingestion with per-row validation and deduplication."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import UploadError

ID_COLUMN = "ID"
TEXT_COLUMN = "Text"
LABEL_COLUMN = "Label"


@dataclass(frozen=True)
class UploadRow:
    text: str
    upload_order: int
    external_id: Optional[str] = None
    pre_label: Optional[str] = None


@dataclass
class RowIssue:
    row_number: int  # 1-based data row position (header excluded)
    code: str
    message: str


@dataclass
class IngestReport:
    total_rows: int = 0
    accepted: int = 0
    duplicates: int = 0
    issues: list[RowIssue] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "accepted": self.accepted,
            "duplicates": self.duplicates,
            "issues": [
                {"row": i.row_number, "code": i.code, "message": i.message} for i in self.issues
            ],
        }


def parse_upload(csv_bytes: bytes, declared_labels: Sequence[str]) -> tuple[list[UploadRow], IngestReport]:
    """Parse a UTF-8 CSV with header columns from {ID, Text, Label}.

    Text is mandatory (missing column or undecodable bytes raise UploadError).
    Per-row problems (empty text, unknown pre-label, duplicate text or
    external id) drop the row and land in the report instead.
    """
    try:
        content = csv_bytes.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise UploadError(f"upload is not valid UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(content))
    try:
        header = next(reader)
    except StopIteration:
        raise UploadError("upload is empty (no header row)") from None
    columns = {name.strip(): i for i, name in enumerate(header)}
    if TEXT_COLUMN not in columns:
        raise UploadError("missing Text column")
    text_col = columns[TEXT_COLUMN]
    id_col = columns.get(ID_COLUMN)
    label_col = columns.get(LABEL_COLUMN)

    labels = set(declared_labels)
    report = IngestReport()
    rows: list[UploadRow] = []
    seen_texts: set[str] = set()
    seen_external: set[str] = set()
    for row_number, raw in enumerate(reader, start=1):
        report.total_rows += 1
        text = raw[text_col].strip() if text_col < len(raw) else ""
        if not text:
            report.issues.append(RowIssue(row_number, "empty_text", "row has empty text"))
            continue
        pre_label = None
        if label_col is not None and label_col < len(raw):
            value = raw[label_col].strip()
            if value:
                if value not in labels:
                    report.issues.append(
                        RowIssue(row_number, "unknown_label", f"unknown label: {value!r}")
                    )
                    continue
                pre_label = value
        external_id = None
        if id_col is not None and id_col < len(raw):
            value = raw[id_col].strip()
            if value:
                if value in seen_external:
                    report.issues.append(
                        RowIssue(row_number, "duplicate_id", f"duplicate external id: {value!r}")
                    )
                    continue
                external_id = value
        if text in seen_texts:
            report.duplicates += 1
            report.issues.append(RowIssue(row_number, "duplicate_text", "duplicate text dropped"))
            continue
        seen_texts.add(text)
        if external_id is not None:
            seen_external.add(external_id)
        rows.append(
            UploadRow(
                text=text,
                upload_order=len(rows),
                external_id=external_id,
                pre_label=pre_label,
            )
        )
    report.accepted = len(rows)
    return rows, report
