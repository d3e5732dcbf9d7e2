"""Fixture checks shared by the ``verify`` command and the test suite."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .interp import run_program
from .parser import parse_source
from .preprocess import preprocess

FIXTURE_DIR = Path(__file__).parent / "fixtures"


def fixture_paths() -> list[Path]:
    return sorted(FIXTURE_DIR.glob("*.kz"))


def golden_path(path: Path) -> Path:
    return path.with_suffix(".golden")


def run_text(text: str, threads: int, *, openmp: bool = True, mode: str = "debug"):
    ast = parse_source(text, openmp=openmp, internal=openmp)
    return run_program(ast, threads=threads, mode=mode)


@dataclass
class FixtureCheck:
    name: str
    golden: bool
    fixpoint: bool
    serial_equal: bool
    team_ok: bool
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.golden and self.fixpoint and self.serial_equal and self.team_ok


def check_fixture(path: Path, team: int = 4) -> FixtureCheck:
    src = path.read_text()
    out = preprocess(src)
    golden_file = golden_path(path)
    golden = golden_file.exists() and golden_file.read_text() == out
    fixpoint = preprocess(out) == out
    serial = run_text(src, 1, openmp=False)
    one = run_text(out, 1)
    many = run_text(out, team)
    detail = ""
    if serial.output != one.output:
        detail = f"serial {serial.output!r} != T=1 {one.output!r}"
    for r in (serial, one, many):
        if r.error is not None:
            detail += f" error: {r.error}"
    return FixtureCheck(path.stem, golden, fixpoint,
                        serial.status == 0 and one.status == 0 and serial.output == one.output,
                        many.status == 0, detail.strip())
