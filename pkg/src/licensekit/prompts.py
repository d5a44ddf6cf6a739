"""Versioned system/user prompt templates and rendering.

Templates use single-brace named placeholders ({license_text},
{license_kind}); literal braces are escaped by doubling. System templates
carry no placeholders at all; user templates embed the license text exactly
once and may additionally name the kind of document under review.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Category, LicenseRecord


class TemplateKind(Enum):
    SYSTEM = "system"
    USER = "user"


class TemplateOrigin(Enum):
    CUSTOM = "custom"
    MODEL_GENERATED = "model_generated"
    TOOL_GENERATED = "tool_generated"


class TemplateError(ValueError):
    """Raised for malformed template packs or bad render requests."""


_USER_PLACEHOLDERS = {"license_text", "license_kind"}

#: Phrase substituted for {license_kind}, keyed by record category.
KIND_PHRASES: Mapping[Category, str] = {
    Category.GENERAL: "dataset license",
    Category.CUSTOMIZED: "dataset license",
    Category.OFFICIAL_TERMS: "website usage agreement",
}


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    kind: TemplateKind
    origin: TemplateOrigin
    body: str

    def placeholders(self) -> list[str]:
        try:
            return [name for _, name, _, _ in string.Formatter().parse(self.body) if name is not None]
        except ValueError as exc:
            raise TemplateError(f"template {self.id!r}: malformed placeholder syntax: {exc}")


@dataclass(frozen=True)
class TemplatePack:
    templates: Mapping[str, PromptTemplate]
    digest: str

    def get(self, template_id: str, kind: TemplateKind) -> PromptTemplate:
        tpl = self.templates.get(template_id)
        if tpl is None:
            raise TemplateError(f"unknown template id {template_id!r}")
        if tpl.kind is not kind:
            raise TemplateError(
                f"template {template_id!r} is a {tpl.kind.value} template, expected {kind.value}"
            )
        return tpl

    def ids(self, kind: TemplateKind | None = None) -> list[str]:
        return [t.id for t in self.templates.values() if kind is None or t.kind is kind]


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str
    system_id: str
    user_id: str
    license_id: str


def _validate(tpl: PromptTemplate) -> None:
    names = tpl.placeholders()
    if tpl.kind is TemplateKind.SYSTEM:
        if names:
            raise TemplateError(
                f"system template {tpl.id!r} must not contain placeholders, found: {sorted(set(names))}"
            )
        return
    unknown = set(names) - _USER_PLACEHOLDERS
    if unknown:
        raise TemplateError(f"user template {tpl.id!r} has unknown placeholders: {sorted(unknown)}")
    if names.count("license_text") != 1:
        raise TemplateError(
            f"user template {tpl.id!r} must contain {{license_text}} exactly once, "
            f"found {names.count('license_text')}"
        )


def load_template_pack(path: str | Path) -> TemplatePack:
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TemplateError(f"{path.name}: not valid JSON: {exc}")
    entries = doc.get("templates")
    if not isinstance(entries, list):
        raise TemplateError(f"{path.name}: expected a top-level 'templates' array")

    templates: dict[str, PromptTemplate] = {}
    for entry in entries:
        try:
            tpl = PromptTemplate(
                id=str(entry["id"]),
                kind=TemplateKind(entry["kind"]),
                origin=TemplateOrigin(entry.get("origin", "custom")),
                body=str(entry["body"]),
            )
        except (KeyError, ValueError) as exc:
            raise TemplateError(f"{path.name}: bad template entry {entry.get('id')!r}: {exc}")
        if tpl.id in templates:
            raise TemplateError(f"duplicate template id {tpl.id!r}")
        _validate(tpl)
        templates[tpl.id] = tpl
    return TemplatePack(templates=templates, digest=hashlib.sha256(raw).hexdigest())


def render(pack: TemplatePack, system_id: str, user_id: str, record: LicenseRecord) -> RenderedPrompt:
    """Instantiate a system/user pair against one license record.

    Substitution is total: the rendered user text embeds the license text
    verbatim and resolves {license_kind} to a human phrase for the record's
    category.
    """
    system = pack.get(system_id, TemplateKind.SYSTEM)
    user = pack.get(user_id, TemplateKind.USER)
    user_text = user.body.format(
        license_text=record.text,
        license_kind=KIND_PHRASES[record.category],
    )
    return RenderedPrompt(
        system_text=system.body.replace("{{", "{").replace("}}", "}"),
        user_text=user_text,
        system_id=system_id,
        user_id=user_id,
        license_id=record.id,
    )


def grid(pack: TemplatePack, system_ids: Sequence[str], user_ids: Sequence[str]) -> list[tuple[str, str]]:
    """Cartesian product of prompt pairs, in the given order."""
    for sid in system_ids:
        pack.get(sid, TemplateKind.SYSTEM)
    for uid in user_ids:
        pack.get(uid, TemplateKind.USER)
    return [(sid, uid) for sid in system_ids for uid in user_ids]
