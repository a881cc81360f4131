import os
from pathlib import Path

import numpy as np
import pytest
import torch

from seqforge.models import CascadePlan
from seqforge.render import Corpus, FontCatalogue

CORPUS_TEXT = """\
The quick brown fox jumps over the lazy dog.
Pack my box with five dozen liquor jugs!

Sphinx of black quartz, judge my vow.
How vexingly quick daft zebras jump

Newsgroups carry long threads about hardware, baseball and space.
Reply quoted text follows below the signature.
A third line that should never be rendered.
"""

torch.set_num_threads(1)


def _font_dir() -> Path | None:
    candidates = [os.environ.get("SEQFORGE_FONT_DIR"), "/usr/share/fonts/truetype/dejavu"]
    try:
        import matplotlib

        candidates.append(os.path.join(matplotlib.get_data_path(), "fonts", "ttf"))
    except ImportError:
        pass
    for c in candidates:
        if c and Path(c).is_dir() and any(Path(c).glob("*.ttf")):
            return Path(c)
    return None


@pytest.fixture(scope="session")
def font_dir() -> Path:
    d = _font_dir()
    if d is None:
        pytest.skip("no TrueType fonts available")
    return d


@pytest.fixture(scope="session")
def fonts(font_dir) -> FontCatalogue:
    return FontCatalogue.from_dir(font_dir)


@pytest.fixture(scope="session")
def corpus() -> Corpus:
    return Corpus(CORPUS_TEXT)


@pytest.fixture
def corpus_file(tmp_path) -> Path:
    p = tmp_path / "corpus.txt"
    p.write_text(CORPUS_TEXT, encoding="utf-8")
    return p


@pytest.fixture(scope="session")
def tiny_plan() -> CascadePlan:
    """Same topology as the default plan with narrow layers, for fast tests."""
    return CascadePlan(widths=(8, 16, 16, 16, 16, 16), disc_widths=(8, 16, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") not in ("call", "setup"):
                continue
            props = dict(getattr(report, "user_properties", []))
            if "criterion" in props and (report.when == "call" or outcome == "error"):
                extra = {k: v for k, v in props.items() if k != "criterion"}
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((report.location[1], f"{status}  {props['criterion']}" + (f"  {extra}" if extra else "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.line(line)
