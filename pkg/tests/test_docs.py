"""Docs and presets stay in sync with the code they describe."""

import os
import re

import pytest

from deid import cli, config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _read(relpath):
    with open(os.path.join(ROOT, relpath), encoding="utf-8") as f:
        return f.read()


def _cli_verbs():
    parser = cli.build_parser()
    subparsers = next(
        a for a in parser._subparsers._group_actions  # noqa: SLF001 - argparse has no public accessor
        if hasattr(a, "choices")
    )
    return sorted(subparsers.choices)


def test_method_map_paths_exist():
    text = _read(os.path.join("docs", "method_map.md"))
    paths = set(re.findall(r"`((?:src|tests)/[\w/]+\.py)`", text))
    assert len(paths) > 15
    missing = [p for p in paths if not os.path.exists(os.path.join(ROOT, p))]
    assert not missing, f"method map references missing files: {missing}"


def test_readme_covers_every_cli_verb():
    readme = _read("README.md")
    missing = [verb for verb in _cli_verbs() if verb not in readme]
    assert not missing, f"README does not mention: {missing}"


def test_formats_doc_matches_writers():
    text = _read(os.path.join("docs", "formats.md"))
    assert "deidckpt 1" in text
    assert "frame,identity,split" in text
    for key in ("frames", "passthrough", "mean_ms", "p95_ms", "fps"):
        assert key in text


@pytest.mark.parametrize("name", ["desk.cfg", "full128.cfg", "full256.cfg"])
def test_config_presets_parse_against_schema(name):
    cfg = config.load_config(os.path.join(ROOT, "configs", name))
    assert cfg["train.resolution"] in (64, 128, 256)
    assert cfg["descriptor.resolution"] == cfg["train.resolution"]
