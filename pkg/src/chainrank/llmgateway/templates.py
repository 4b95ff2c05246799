"""Versioned prompt templates with ``{{variable}}`` placeholders.

A template file is named ``<id>.v<version>.txt`` and holds a ``[system]``
section followed by a ``[user]`` section.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import ConfigurationError

PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")
FILENAME_RE = re.compile(r"^(?P<id>[A-Za-z0-9_]+)\.v(?P<version>\d+)\.txt$")

BUILTIN_DIR = Path(__file__).with_name("templates")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    version: int
    system: str
    user: str

    @property
    def variables(self):
        return frozenset(PLACEHOLDER_RE.findall(self.system) + PLACEHOLDER_RE.findall(self.user))

    def render(self, bindings):
        """Return ``(system, user)`` with every placeholder substituted."""
        missing = sorted(self.variables - set(bindings))
        if missing:
            raise ConfigurationError(f"template {self.id}.v{self.version}: unbound variables {missing}")

        def sub(text):
            return PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), text)

        return sub(self.system), sub(self.user)


def parse_template(text, template_id, version):
    sections = {}
    current = None
    for line in text.splitlines(keepends=True):
        tag = line.strip()
        if tag in ("[system]", "[user]"):
            current = tag[1:-1]
            sections[current] = []
            continue
        if current is None:
            if tag:
                raise ConfigurationError(f"template {template_id}: text before the first section")
            continue
        sections[current].append(line)
    if "user" not in sections:
        raise ConfigurationError(f"template {template_id}: missing [user] section")
    return PromptTemplate(
        template_id,
        int(version),
        "".join(sections.get("system", [])).strip(),
        "".join(sections["user"]).strip(),
    )


class TemplateStore:
    """Looks up templates by ``id`` (latest version) or ``id@version``.

    Directories given later override earlier ones, so a user template
    directory can shadow the built-in reconstructions.
    """

    def __init__(self, *directories):
        self._templates = {}
        for directory in (BUILTIN_DIR, *directories):
            if directory is not None:
                self.load_dir(directory)

    def load_dir(self, directory):
        directory = Path(directory)
        if not directory.is_dir():
            raise ConfigurationError(f"template directory {directory} does not exist")
        for path in sorted(directory.iterdir()):
            m = FILENAME_RE.match(path.name)
            if m:
                tpl = parse_template(path.read_text(encoding="utf-8"), m["id"], m["version"])
                self._templates[(tpl.id, tpl.version)] = tpl

    def add(self, template):
        self._templates[(template.id, template.version)] = template

    def get(self, ref):
        if "@" in ref:
            tid, version = ref.split("@", 1)
            key = (tid, int(version))
            if key not in self._templates:
                raise ConfigurationError(f"unknown template {ref!r}")
            return self._templates[key]
        versions = [v for (tid, v) in self._templates if tid == ref]
        if not versions:
            raise ConfigurationError(f"unknown template {ref!r}")
        return self._templates[(ref, max(versions))]

    def ids(self):
        return sorted({tid for tid, _ in self._templates})
