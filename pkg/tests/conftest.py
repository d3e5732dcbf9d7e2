import pytest

from zomp import runtime
from zomp.interp import Program
from zomp.parser import parse_source
from zomp.preprocess import preprocess


def compile_omp(src: str, mode: str = "debug") -> Program:
    return Program(parse_source(preprocess(src), internal=True), mode)


def compile_serial(src: str, mode: str = "debug") -> Program:
    return Program(parse_source(src, openmp=False), mode)


def run_omp(src: str, threads: int = 4, args=(), mode: str = "debug"):
    return compile_omp(src, mode).run("main", args, threads=threads)


@pytest.fixture(autouse=True)
def _clean_icvs(monkeypatch):
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    monkeypatch.delenv("OMP_SCHEDULE", raising=False)
    runtime.reset_num_threads()
    yield
    runtime.reset_num_threads()
