"""共通フィクスチャ: コーパスのプログラムと合成スケッチ"""

from pathlib import Path

import pytest

import lang
from los_compiler import assemble
from synthesis import load_sketch

ROOT = Path(__file__).resolve().parent.parent
PROGRAMS = ROOT / "programs"

MONTY_DECLS = [("d", [0, 1, 2]), ("g", [0, 1, 2]), ("o", [0, 1, 2])]
WIN_ABSTRACTION = "d,g=classes:[d==g, d!=g]; o=forget; label=forget"


@pytest.fixture(scope="session")
def programs_dir() -> Path:
    return PROGRAMS


@pytest.fixture(scope="session")
def corpus_files():
    return sorted(PROGRAMS.glob("*.pw"))


@pytest.fixture(scope="session")
def monty_ht():
    return lang.parse_file(PROGRAMS / "monty_ht.pw")


@pytest.fixture(scope="session")
def monty_hw():
    return lang.parse_file(PROGRAMS / "monty_hw.pw")


@pytest.fixture(scope="session")
def monty_hp():
    return lang.parse_file(PROGRAMS / "monty_hp.pw")


@pytest.fixture(scope="session")
def ht_operator(monty_ht):
    return assemble(monty_ht)


@pytest.fixture(scope="session")
def hw_operator(monty_hw):
    return assemble(monty_hw)


@pytest.fixture
def swap_sketch():
    return load_sketch(PROGRAMS / "swap_sketch.yaml")


@pytest.fixture
def monty_sketch():
    return load_sketch(PROGRAMS / "monty_sketch.yaml")
