"""Combined disclosure file: parsing, writing, CSV export and stats.

Record layout (UTF-8)::

    #HCCORPUS|1
    #DOC|<cik>|<company_name>|<filing_date>|<fiscal_period>
    <body lines; a line starting with backslashes then "#DOC|" or "#END"
     gets one extra leading backslash>
    #END

Pipes and backslashes inside the company name are backslash-escaped.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import re
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .text import tokenize

logger = logging.getLogger(__name__)

FILE_MAGIC = "#HCCORPUS|1"
CSV_COLUMNS = ("cik", "company_name", "filing_date", "fiscal_period", "text")

_SENTINEL_RE = re.compile(r"^(\\*)(#DOC\||#END)")
_UNESCAPE_RE = re.compile(r"^\\(\\*)(#DOC\||#END)")


class CorpusParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _check_date(value: str, name: str) -> str:
    try:
        dt.date.fromisoformat(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} is not a YYYY-MM-DD date: {value!r}") from None
    return value


@dataclass(frozen=True)
class DocumentHeader:
    cik: str
    company_name: str
    filing_date: str
    fiscal_period: str

    def __post_init__(self):
        if not self.cik or not self.cik.isdigit():
            raise ValueError(f"cik must be a nonempty digit string, got {self.cik!r}")
        if "\n" in self.company_name or "\r" in self.company_name:
            raise ValueError("company_name may not contain line breaks")
        _check_date(self.filing_date, "filing_date")
        _check_date(self.fiscal_period, "fiscal_period")

    @property
    def filing(self) -> dt.date:
        return dt.date.fromisoformat(self.filing_date)


@dataclass(frozen=True)
class Document:
    header: DocumentHeader
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"document {self.header.cik} has an empty body")

    @property
    def doc_id(self) -> str:
        return self.header.cik


@dataclass
class ParseReport:
    duplicates: list[tuple[int, str]] = field(default_factory=list)
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def duplicate_count(self) -> int:
        return len(self.duplicates)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()
    report: ParseReport = field(default_factory=ParseReport, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        seen = set()
        for doc in self.documents:
            if doc.header.cik in seen:
                raise ValueError(f"duplicate cik {doc.header.cik}")
            seen.add(doc.header.cik)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __len__(self) -> int:
        return len(self.documents)

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}


def _escape_field(value: str) -> str:
    return value.replace("\\", "\\\\").replace("|", "\\|")


def _split_header(line: str) -> list[str]:
    fields, cur, i = [], [], 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            cur.append(line[i + 1])
            i += 2
            continue
        if ch == "|":
            fields.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
        i += 1
    fields.append("".join(cur))
    return fields


def _iter_lines(stream) -> Iterator[str]:
    # Only "\n" separates lines; a "\r" inside a body is preserved.
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw[:-1] if raw.endswith("\n") else raw


def parse_combined(stream: BinaryIO | Iterable[bytes] | bytes) -> Corpus:
    """Parse a combined file, keeping the first record for each CIK."""
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    report = ParseReport()
    docs: list[Document] = []
    seen: set[str] = set()
    header: DocumentHeader | None = None
    header_line = 0
    body: list[str] = []
    for lineno, line in enumerate(_iter_lines(stream), 1):
        if header is None:
            if lineno == 1 and line == FILE_MAGIC:
                continue
            if not line.strip():
                continue
            if not line.startswith("#DOC|"):
                raise CorpusParseError(lineno, f"expected '#DOC|' header, got {line[:40]!r}")
            fields = _split_header(line[len("#DOC|"):])
            if len(fields) != 4:
                raise CorpusParseError(lineno, f"header has {len(fields)} fields, expected 4")
            try:
                header = DocumentHeader(*fields)
            except ValueError as exc:
                raise CorpusParseError(lineno, str(exc)) from None
            header_line = lineno
            body = []
            continue
        if line == "#END":
            text = "\n".join(body)
            if header.cik in seen:
                report.duplicates.append((header_line, header.cik))
            elif not text.strip():
                report.rejected.append((header_line, f"cik {header.cik}: empty body"))
            else:
                seen.add(header.cik)
                docs.append(Document(header, text))
            header = None
            continue
        if line.startswith("#DOC|"):
            raise CorpusParseError(lineno, "unterminated record (missing '#END')")
        body.append(_UNESCAPE_RE.sub(r"\1\2", line))
    if header is not None:
        raise CorpusParseError(header_line, "unterminated record at end of file")
    if report.duplicates:
        logger.warning("dropped %d duplicate-cik record(s)", len(report.duplicates))
    if report.rejected:
        logger.warning("rejected %d record(s) with empty bodies", len(report.rejected))
    return Corpus(tuple(docs), report)


def iter_combined_records(corpus: Iterable[Document]) -> Iterator[str]:
    yield FILE_MAGIC + "\n"
    for doc in corpus:
        h = doc.header
        yield "#DOC|" + "|".join(
            _escape_field(v) for v in (h.cik, h.company_name, h.filing_date, h.fiscal_period)
        ) + "\n"
        for line in doc.text.split("\n"):
            yield _SENTINEL_RE.sub(r"\\\1\2", line) + "\n"
        yield "#END\n"


def write_combined(corpus: Iterable[Document]) -> bytes:
    return "".join(iter_combined_records(corpus)).encode("utf-8")


def read_combined(path) -> Corpus:
    with open(path, "rb") as fh:
        return parse_combined(fh)


def save_combined(corpus: Iterable[Document], path) -> None:
    with open(path, "wb") as fh:
        for chunk in iter_combined_records(corpus):
            fh.write(chunk.encode("utf-8"))


def write_csv(corpus: Iterable[Document]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for doc in corpus:
        h = doc.header
        if "\x00" in doc.text or "\x00" in h.company_name:
            raise ValueError(f"cik {h.cik}: NUL characters cannot be written to CSV")
        writer.writerow((h.cik, h.company_name, h.filing_date, h.fiscal_period, doc.text))
    return buf.getvalue().encode("utf-8")


def read_csv(data: bytes) -> Corpus:
    reader = csv.DictReader(io.StringIO(data.decode("utf-8"), newline=""))
    docs = []
    for row in reader:
        header = DocumentHeader(row["cik"], row["company_name"], row["filing_date"], row["fiscal_period"])
        docs.append(Document(header, row["text"]))
    return Corpus(tuple(docs))


@dataclass(frozen=True)
class CorpusStats:
    document_count: int
    total_tokens: int


def corpus_stats(corpus: Iterable[Document]) -> CorpusStats:
    n_docs = n_tokens = 0
    for doc in corpus:
        n_docs += 1
        n_tokens += len(tokenize(doc.text))
    return CorpusStats(n_docs, n_tokens)


# Sample-selection steps as tabulated for the first year of the 2020 HC rule.
TABLE1_START = ("All 10-K forms filed Nov 9, 2020 - Nov 8, 2021", 7185)
TABLE1_STAGES = (
    (
        (("Filings from filers not covered by Compustat and CRSP", 3219),),
        "Number of 10-Ks in the intersection of EDGAR, Compustat, and CRSP",
        3966,
    ),
    (
        (
            ("Filings for fiscal year 2019", 5),
            ("Filings from firms having no employees", 3),
            ("Filings that do not contain HC disclosures", 2),
            ("Duplicate filings from the same filer (with the first one kept)", 3),
        ),
        "Number of HC disclosures from the same number of unique firms",
        3953,
    ),
)


@dataclass(frozen=True)
class SelectionRow:
    label: str
    change: int
    remaining: int
    is_subtotal: bool = False


def reconcile_sample_selection(start=TABLE1_START, stages=TABLE1_STAGES) -> list[SelectionRow]:
    """Recompute each subtotal from the exclusions and check it against the stated value."""
    label, remaining = start
    rows = [SelectionRow(label, 0, remaining, True)]
    for exclusions, subtotal_label, stated in stages:
        for excl_label, n in exclusions:
            remaining -= n
            rows.append(SelectionRow(excl_label, -n, remaining))
        if remaining != stated:
            raise ValueError(f"{subtotal_label}: computed {remaining}, stated {stated}")
        rows.append(SelectionRow(subtotal_label, 0, remaining, True))
    return rows
