"""YAML loading that remembers source lines, so errors can cite them."""

from __future__ import annotations

import os
from typing import Any, Optional

import yaml


class FormatError(ValueError):
    """A structured-text input is malformed; the message carries file:line."""


class LocDict(dict):
    line: Optional[int] = None
    source: Optional[str] = None

    def line_of(self, key) -> Optional[int]:
        return getattr(self, "key_lines", {}).get(key, self.line)


class LocList(list):
    line: Optional[int] = None
    source: Optional[str] = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = LocDict()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        out[key] = loader.construct_object(vnode, deep=True)
        out.key_lines[key] = knode.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = LocList(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


def load_yaml(path_or_text, source: Optional[str] = None) -> Any:
    """Load YAML from a file path or a text blob, keeping line numbers."""
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(str(path_or_text)):
        source = source or str(path_or_text)
        with open(path_or_text) as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
        source = source or "<text>"
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise FormatError(f"{where}: {exc}") from None
    _stamp(data, source)
    return data


def _stamp(obj, source):
    if isinstance(obj, (LocDict, LocList)):
        obj.source = source
        for v in obj.values() if isinstance(obj, dict) else obj:
            _stamp(v, source)


def where(obj, key=None, path: str = "") -> str:
    """Human-readable locus: ``file:line: field 'a.b'``."""
    parts = []
    src = getattr(obj, "source", None)
    line = None
    if isinstance(obj, LocDict) and key is not None:
        line = obj.line_of(key)
    elif obj is not None:
        line = getattr(obj, "line", None)
    if src:
        parts.append(f"{src}:{line}" if line else src)
    field = ".".join(p for p in (path, str(key) if key is not None else "") if p)
    if field:
        parts.append(f"field '{field}'")
    return ": ".join(parts) if parts else "<input>"


class _Dumper(yaml.SafeDumper):
    pass


# loaded documents can be written back unchanged
_Dumper.add_representer(LocDict, yaml.representer.SafeRepresenter.represent_dict)
_Dumper.add_representer(LocList, yaml.representer.SafeRepresenter.represent_list)


def dump_yaml(data) -> str:
    return yaml.dump(data, Dumper=_Dumper, sort_keys=False, default_flow_style=None)
