"""Data model and XML I/O for edit-annotated revision corpora.

A corpus file is one ``<doc>`` element per file. The root carries the
``id``, ``editor``, ``format``, ``position`` and ``region`` attributes;
its children are section elements (``abstract``, ``introduction``, ...)
whose children are ``<text>`` runs and ``<edit>`` elements. An edit's
element content is the source phrase, the ``crr`` attribute holds the
replacement, ``type`` holds one or more comma-separated labels, and
``comments`` is an optional rationale.

All character data inside a section counts as document text, including
whitespace between child elements. Edit spans are half-open character
intervals into the document-wide source text, which is the plain
concatenation of every text run and edit source phrase in order.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr


class CorpusError(Exception):
    """Base class for corpus reading failures."""


class CorpusParseError(CorpusError):
    """Malformed XML. Carries the offending file and line."""

    def __init__(self, message, file=None, line=None):
        super().__init__(message)
        self.file = file
        self.line = line


class CorpusSchemaError(CorpusError):
    """Structurally valid XML that violates the corpus schema."""

    def __init__(self, message, attribute=None, file=None):
        super().__init__(message)
        self.attribute = attribute
        self.file = file


class CorpusValidationError(CorpusError):
    """Schema-conformant document with inconsistent content."""

    def __init__(self, message, doc_id=None, offset=None):
        super().__init__(message)
        self.doc_id = doc_id
        self.offset = offset


class Aspect(Enum):
    GRAMMATICALITY = "Grammaticality"
    FLUENCY = "Fluency"
    CLARITY = "Clarity"
    STYLE = "Style"
    READABILITY = "Readability"
    REDUNDANCY = "Redundancy"
    CONSISTENCY = "Consistency"
    OTHER = "Other"


# Grouping of raw edit-type labels into aspects. Raw labels are matched
# case-insensitively after stripping surrounding whitespace.
BASE_LABEL_MAP = {
    "grammar": Aspect.GRAMMATICALITY,
    "capitalization": Aspect.GRAMMATICALITY,
    "word choice": Aspect.FLUENCY,
    "word order": Aspect.FLUENCY,
    "clarity": Aspect.CLARITY,
    "style": Aspect.STYLE,
    "tone": Aspect.STYLE,
    "readability": Aspect.READABILITY,
    "redundancy": Aspect.REDUNDANCY,
    "conciseness": Aspect.REDUNDANCY,
    "consistency": Aspect.CONSISTENCY,
    "flow": Aspect.CONSISTENCY,
}

# Labels that occur in released corpora without appearing in the core
# taxonomy. Callers may extend or override via ``label_overrides``.
DEFAULT_LABEL_OVERRIDES = {
    "punctuation": Aspect.GRAMMATICALITY,
}

GEC_ASPECTS = frozenset({Aspect.GRAMMATICALITY, Aspect.FLUENCY})


@dataclass(frozen=True)
class EditAspect:
    """An aspect assignment together with the raw label that produced it."""

    name: Aspect
    raw_label: str


def classify_label(raw_label: str, label_overrides=None) -> EditAspect:
    """Map one raw edit-type label to its aspect (``Other`` if unknown)."""
    key = raw_label.strip().casefold()
    overrides = DEFAULT_LABEL_OVERRIDES if label_overrides is None else label_overrides
    aspect = overrides.get(key) or BASE_LABEL_MAP.get(key, Aspect.OTHER)
    return EditAspect(aspect, raw_label.strip())


@dataclass(frozen=True)
class Span:
    """Half-open character interval in document source coordinates."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        """Interval intersection; zero-length spans count as points.

        An insertion point overlaps any span that contains it, boundary
        positions included. Two insertion points overlap only when equal.
        """
        if self.length == 0 and other.length == 0:
            return self.start == other.start
        if self.length == 0:
            return other.start <= self.start <= other.end
        if other.length == 0:
            return self.start <= other.start <= self.end
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class TextNode:
    text: str


@dataclass(frozen=True)
class Edit:
    """A single annotated edit anchored to the source text.

    ``src`` empty means insertion, ``tgt`` empty means deletion; they are
    never both empty. ``span`` covers ``src`` in document-wide source
    coordinates, so insertions are zero-length points.
    """

    src: str
    tgt: str
    labels: tuple[EditAspect, ...]
    comment: str | None
    span: Span
    extra: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.src and not self.tgt:
            raise ValueError("edit with empty src and empty tgt")
        if self.span.length != len(self.src):
            raise ValueError("edit span length does not match src length")
        if not self.labels:
            raise ValueError("edit carries no labels")

    @property
    def kind(self) -> str:
        if not self.src:
            return "insertion"
        if not self.tgt:
            return "deletion"
        return "substitution"


Node = TextNode | Edit


@dataclass(frozen=True)
class DocMeta:
    format: str
    position: str
    region: str


@dataclass(frozen=True)
class Section:
    name: str
    nodes: tuple[Node, ...]


@dataclass(frozen=True)
class Document:
    id: str
    editor: str
    meta: DocMeta
    sections: tuple[Section, ...]
    extra: tuple[tuple[str, str], ...] = ()

    @property
    def edits(self) -> tuple[Edit, ...]:
        return tuple(
            node for sec in self.sections for node in sec.nodes if isinstance(node, Edit)
        )

    def section_names(self) -> tuple[str, ...]:
        return tuple(sec.name for sec in self.sections)


REQUIRED_DOC_ATTRS = ("id", "editor", "format", "position", "region")
REQUIRED_EDIT_ATTRS = ("type", "crr")


def parse_corpus(path, label_overrides=None) -> list[Document]:
    """Parse one XML file or every ``*.xml`` file under a directory
    (recursively).

    Documents come back in sorted-path order, spans computed.
    """
    root = Path(path)
    if root.is_dir():
        files = sorted(root.rglob("*.xml"))
        if not files:
            raise CorpusParseError(f"no .xml files under {root}", file=str(root))
    else:
        files = [root]
    return [parse_document_file(f, label_overrides) for f in files]


def parse_document_file(path, label_overrides=None) -> Document:
    path = Path(path)
    try:
        tree = ET.parse(str(path))
    except ET.ParseError as exc:
        line, col = exc.position
        raise CorpusParseError(
            f"{path}: malformed XML at line {line}, column {col}: {exc}",
            file=str(path),
            line=line,
        ) from exc
    except OSError as exc:
        raise CorpusParseError(f"{path}: {exc}", file=str(path)) from exc
    try:
        return document_from_element(tree.getroot(), label_overrides)
    except CorpusSchemaError as exc:
        exc.file = str(path)
        raise


def parse_document_string(text: str, label_overrides=None) -> Document:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise CorpusParseError(
            f"malformed XML at line {line}, column {col}: {exc}", line=line
        ) from exc
    return document_from_element(root, label_overrides)


def document_from_element(root: ET.Element, label_overrides=None) -> Document:
    if root.tag != "doc":
        raise CorpusSchemaError(f"expected root element 'doc', found {root.tag!r}")
    attrs = dict(root.attrib)
    for name in REQUIRED_DOC_ATTRS:
        if name not in attrs:
            raise CorpusSchemaError(
                f"doc element is missing required attribute {name!r}", attribute=name
            )
    doc_id = attrs.pop("id")
    editor = attrs.pop("editor")
    meta = DocMeta(attrs.pop("format"), attrs.pop("position"), attrs.pop("region"))
    extra = tuple(attrs.items())

    if root.text and root.text.strip():
        raise CorpusSchemaError(f"doc {doc_id!r}: stray text outside sections")
    sections = []
    offset = 0
    for child in root:
        section, offset = _parse_section(child, offset, doc_id, label_overrides)
        sections.append(section)
        if child.tail and child.tail.strip():
            raise CorpusSchemaError(f"doc {doc_id!r}: stray text outside sections")
    return Document(doc_id, editor, meta, tuple(sections), extra)


def _parse_section(elem, offset, doc_id, label_overrides):
    nodes: list[Node] = []

    def add_text(chunk):
        nonlocal offset
        if not chunk:
            return
        if nodes and isinstance(nodes[-1], TextNode):
            nodes[-1] = TextNode(nodes[-1].text + chunk)
        else:
            nodes.append(TextNode(chunk))
        offset += len(chunk)

    add_text(elem.text or "")
    for child in elem:
        if child.tag == "text":
            if len(child):
                raise CorpusSchemaError(
                    f"doc {doc_id!r}: text element must not contain child elements"
                )
            add_text(child.text or "")
        elif child.tag == "edit":
            if len(child):
                raise CorpusSchemaError(
                    f"doc {doc_id!r}: edit element must not contain child elements"
                )
            edit = _parse_edit(child, offset, doc_id, label_overrides)
            nodes.append(edit)
            offset = edit.span.end
        else:
            raise CorpusSchemaError(
                f"doc {doc_id!r}: unexpected element {child.tag!r} in section"
                f" {elem.tag!r}"
            )
        add_text(child.tail or "")
    return Section(elem.tag, tuple(nodes)), offset


def _parse_edit(elem, offset, doc_id, label_overrides):
    attrs = dict(elem.attrib)
    for name in REQUIRED_EDIT_ATTRS:
        if name not in attrs:
            raise CorpusSchemaError(
                f"doc {doc_id!r}: edit element is missing required attribute"
                f" {name!r}",
                attribute=name,
            )
    raw_type = attrs.pop("type")
    tgt = attrs.pop("crr")
    comment = attrs.pop("comments", None)
    src = elem.text or ""
    if not src and not tgt:
        raise CorpusValidationError(
            f"doc {doc_id!r}: edit at offset {offset} has empty source and empty"
            " correction",
            doc_id=doc_id,
            offset=offset,
        )
    labels = tuple(
        classify_label(part, label_overrides)
        for part in raw_type.split(",")
        if part.strip()
    )
    if not labels:
        raise CorpusSchemaError(
            f"doc {doc_id!r}: edit 'type' attribute is empty", attribute="type"
        )
    return Edit(
        src=src,
        tgt=tgt,
        labels=labels,
        comment=comment,
        span=Span(offset, offset + len(src)),
        extra=tuple(attrs.items()),
    )


def document_to_xml(doc: Document) -> str:
    """Serialize back to the corpus XML schema.

    Attributes are written in the canonical order with unknown attributes
    appended; nodes are written back-to-back so no whitespace is invented.
    Re-parsing the result reproduces an equal Document.
    """
    parts = ["<doc"]
    attrs = [
        ("id", doc.id),
        ("editor", doc.editor),
        ("format", doc.meta.format),
        ("position", doc.meta.position),
        ("region", doc.meta.region),
        *doc.extra,
    ]
    for name, value in attrs:
        parts.append(f" {name}={quoteattr(value)}")
    parts.append(">")
    for section in doc.sections:
        parts.append(f"<{section.name}>")
        for node in section.nodes:
            if isinstance(node, TextNode):
                parts.append(f"<text>{escape(node.text)}</text>")
            else:
                parts.append(_edit_to_xml(node))
        parts.append(f"</{section.name}>")
    parts.append("</doc>")
    return "".join(parts)


def _edit_to_xml(edit: Edit) -> str:
    raw_type = ", ".join(label.raw_label for label in edit.labels)
    attrs = [("type", raw_type), ("crr", edit.tgt)]
    if edit.comment is not None:
        attrs.append(("comments", edit.comment))
    attrs.extend(edit.extra)
    rendered = " ".join(f"{name}={quoteattr(value)}" for name, value in attrs)
    return f"<edit {rendered}>{escape(edit.src)}</edit>"


def write_corpus(docs, directory) -> list[Path]:
    """Write one ``<id>_<editor>.xml`` file per document."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for doc in docs:
        path = directory / f"{doc.id}_{doc.editor}.xml"
        path.write_text(document_to_xml(doc), encoding="utf-8")
        written.append(path)
    return written


def _select_sections(doc: Document, section):
    if section is None:
        return doc.sections
    matches = [sec for sec in doc.sections if sec.name == section]
    if not matches:
        known = ", ".join(doc.section_names()) or "none"
        raise ValueError(
            f"doc {doc.id!r} has no section {section!r} (sections: {known})"
        )
    return matches


def source_text(doc: Document, section=None) -> str:
    """Document text before revision: text runs plus edit source phrases."""
    parts = []
    for sec in _select_sections(doc, section):
        for node in sec.nodes:
            parts.append(node.text if isinstance(node, TextNode) else node.src)
    return "".join(parts)


def revised_text(doc: Document, section=None) -> str:
    """Document text with every edit applied."""
    parts = []
    for sec in _select_sections(doc, section):
        for node in sec.nodes:
            parts.append(node.text if isinstance(node, TextNode) else node.tgt)
    return "".join(parts)


@dataclass(frozen=True)
class ParagraphSpan:
    """A paragraph of the source text, located by global char offsets."""

    section_index: int
    index: int
    start: int
    end: int


_PARA_BREAK = re.compile(r"\n{2,}")


def paragraph_spans(doc: Document) -> list[ParagraphSpan]:
    """Paragraphs per section, split on blank lines in source coordinates.

    Section boundaries always start a new paragraph; whitespace-only
    segments are not paragraphs.
    """
    spans = []
    offset = 0
    index = 0
    for si, sec in enumerate(doc.sections):
        sec_text = _section_source(sec)
        cursor = 0
        for match in list(_PARA_BREAK.finditer(sec_text)) + [None]:
            seg_end = match.start() if match is not None else len(sec_text)
            segment = sec_text[cursor:seg_end]
            if segment.strip():
                spans.append(ParagraphSpan(si, index, offset + cursor, offset + seg_end))
                index += 1
            cursor = match.end() if match is not None else seg_end
        offset += len(sec_text)
    return spans


def _section_source(sec: Section) -> str:
    return "".join(
        node.text if isinstance(node, TextNode) else node.src for node in sec.nodes
    )


def locate_paragraph(spans, position: int) -> ParagraphSpan | None:
    """Paragraph containing ``position``; falls back to the nearest one
    before it when the position sits inside a paragraph break."""
    previous = None
    for span in spans:
        if span.start <= position < span.end:
            return span
        if span.end <= position:
            previous = span
    return previous


def apply_single_edit(doc: Document, edit_index: int) -> tuple[str, str]:
    """Snippet pair for one edit: the enclosing source paragraph and the
    same paragraph with only that edit applied.

    An edit reaching past the paragraph end widens the window to cover it.
    """
    edits = doc.edits
    if not 0 <= edit_index < len(edits):
        raise IndexError(
            f"edit index {edit_index} out of range for doc {doc.id!r}"
            f" ({len(edits)} edits)"
        )
    edit = edits[edit_index]
    full = source_text(doc)
    paragraph = locate_paragraph(paragraph_spans(doc), edit.span.start)
    if paragraph is None:
        raise CorpusValidationError(
            f"doc {doc.id!r}: no paragraph contains offset {edit.span.start}",
            doc_id=doc.id,
            offset=edit.span.start,
        )
    lo = paragraph.start
    hi = max(paragraph.end, edit.span.end)
    snippet_src = full[lo:hi]
    snippet_rev = full[lo : edit.span.start] + edit.tgt + full[edit.span.end : hi]
    return snippet_src, snippet_rev


@dataclass
class CorpusStats:
    """Aspect distribution over every (edit, label) occurrence."""

    total_labels: int
    total_edits: int
    counts: dict[Aspect, int]
    percentages: dict[Aspect, float]
    beyond_gec_ratio: float
    by_meta: dict[str, dict[str, dict[Aspect, int]]]


def corpus_stats(docs) -> CorpusStats:
    """Count each (edit, label) occurrence once per label, per aspect."""
    if not docs:
        raise ValueError("corpus_stats needs at least one document")
    counts: Counter = Counter()
    by_meta: dict[str, dict[str, Counter]] = {
        "format": {},
        "position": {},
        "region": {},
    }
    total_edits = 0
    for doc in docs:
        meta_values = {
            "format": doc.meta.format,
            "position": doc.meta.position,
            "region": doc.meta.region,
        }
        for edit in doc.edits:
            total_edits += 1
            for label in edit.labels:
                counts[label.name] += 1
                for attr, value in meta_values.items():
                    by_meta[attr].setdefault(value, Counter())[label.name] += 1
    total = sum(counts.values())
    percentages = {
        aspect: (100.0 * counts.get(aspect, 0) / total if total else 0.0)
        for aspect in Aspect
    }
    beyond = sum(n for aspect, n in counts.items() if aspect not in GEC_ASPECTS)
    return CorpusStats(
        total_labels=total,
        total_edits=total_edits,
        counts={aspect: counts.get(aspect, 0) for aspect in Aspect},
        percentages=percentages,
        beyond_gec_ratio=(beyond / total if total else 0.0),
        by_meta={
            attr: {value: dict(c) for value, c in values.items()}
            for attr, values in by_meta.items()
        },
    )
