import pytest

from zomp.errors import CheckError
from zomp.interp import Program, run_program
from zomp.parser import parse_source

from conftest import compile_omp, run_omp


def run(src, mode="debug", args=()):
    return run_program(parse_source(src), "main", args, mode=mode)


def out(src, **kw):
    result = run(src, **kw)
    assert result.error is None, str(result.error)
    return result.output


def test_arithmetic_semantics():
    assert out("""fn main() void {
    print(7 / 2, -7 / 2, 7 % 3, -7 % 3, 1 << 4, -16 >> 2, 5 & 3, 5 | 3, 5 ^ 3, ~0);
}""") == "3 -3 1 -1 16 -4 1 7 6 -1\n"


def test_float_and_mixed_formatting():
    assert out("""fn main() void {
    const x: f64 = 1.5;
    print(x * 2.0, sqrt(16.0), floor(2.7), abs(-3), float(3), int(2.9), min(4, 2), max(1.0, 2.5));
}""") == "3.0 4.0 2.0 3 3.0 2 2 2.5\n"


def test_structs_arrays_and_pointers():
    assert out("""const Pair = struct { a: i64, b: f64 };
fn bump(p: *i64) void {
    p.* += 1;
}
fn main() void {
    var v: [3]i64 = [3]i64{ 1, 2, 3 };
    var pr: Pair = Pair{ .a = 4, .b = 0.5 };
    var s: []i64 = alloc(i64, 2);
    bump(&v[1]);
    bump(&pr.a);
    s[1] = v[1] + pr.a;
    print(v, pr.a, pr.b, s, len(s));
}""") == "[1, 3, 3] 5 0.5 [0, 8] 2\n"


def test_control_flow_and_recursion():
    assert out("""fn fib(n: i64) i64 {
    if (n < 2) {
        return n;
    }
    return fib(n - 1) + fib(n - 2);
}
fn main() void {
    var i: i64 = 0;
    var acc: i64 = 0;
    while (i < 10) : (i += 1) {
        if (i == 2) {
            continue;
        }
        if (i == 7) {
            break;
        }
        acc += i;
    }
    print(fib(15), acc, true and false, true or false, !true);
}""") == "610 19 false true false\n"


def test_wrapping_operators_in_both_modes():
    src = """fn main() void {
    const big: i64 = i64_max;
    print(big +% 1 == i64_min, i64_min -% 1 == big, big *% 2);
}"""
    for mode in ("debug", "release"):
        assert out(src, mode=mode) == "true true -2\n"


OVERFLOW = """fn main() void {
    var x: i64 = i64_max;
    x += 1;
    print(x == i64_min);
}"""


def test_overflow_checked_in_debug_wraps_in_release():
    result = run(OVERFLOW, mode="debug")
    assert result.status == 1 and "overflow" in str(result.error)
    assert out(OVERFLOW, mode="release") == "true\n"


def test_bounds_error_is_located():
    result = run("""fn main() void {
    var a: [2]i64 = [2]i64{ 0, 0 };
    const k: i64 = 2;
    a[k] = 1;
}""")
    assert result.status == 1
    assert "out of bounds" in str(result.error)
    assert result.error.line == 4


def test_undefined_read_detected_in_debug():
    result = run("""fn main() void {
    var x: i64 = undefined;
    print(x + 1);
}""")
    assert result.status == 1 and "undefined" in str(result.error)


def test_division_by_zero():
    result = run("fn main() void {\n    const z: i64 = 0;\n    print(1 / z);\n}")
    assert result.status == 1 and "division by zero" in str(result.error)


def test_runtime_error_carries_call_trace():
    result = run("""fn inner(a: []i64) i64 {
    return a[5];
}
fn main() void {
    const a: []i64 = alloc(i64, 1);
    print(inner(a));
}""")
    assert result.status == 1
    text = str(result.error)
    assert "inner" in text and "main" in text


@pytest.mark.parametrize("src, msg", [
    ("fn main() void {\n    var x: i64 = 1;\n}", "unused"),
    ("fn main() void {\n    print(nothing);\n}", "nothing"),
    ("fn main() void {\n    var x: i64 = true;\n    print(x);\n}", "type"),
    ("fn f(a: i64) i64 {\n    return a;\n}\nfn main() void {\n    print(f(1, 2));\n}", "argument"),
])
def test_check_errors(src, msg):
    with pytest.raises(CheckError) as info:
        Program(parse_source(src), "debug")
    assert msg in str(info.value)


def test_missing_entry_point():
    with pytest.raises(CheckError):
        run_program(parse_source("fn helper() void {}"), "main")


def test_entry_arguments_and_result():
    prog = Program(parse_source("fn main(a: []i64, k: i64) i64 {\n    a[0] = k;\n    return k * 2;\n}"), "debug")
    data = [0, 0]
    result = prog.run("main", (data, 21))
    assert result.value == 42 and data == [21, 0]


def test_fork_assigns_distinct_thread_ids():
    src = """fn main() void {
    const ids: []i64 = alloc(i64, 4);
    const sizes: []i64 = alloc(i64, 4);
    //$omp parallel
    {
        const t: i64 = omp.get_thread_num();
        ids[t] = t + 1;
        sizes[t] = omp.get_num_threads();
    }
    print(ids, sizes, omp.get_thread_num(), omp.get_num_threads());
}"""
    assert run_omp(src, threads=2).output == "[1, 2, 0, 0] [2, 2, 0, 0] 0 1\n"
    assert run_omp(src, threads=4).output == "[1, 2, 3, 4] [4, 4, 4, 4] 0 1\n"


def test_set_num_threads_inside_program():
    src = """fn main() void {
    omp.set_num_threads(3);
    var n: i64 = 0;
    //$omp parallel reduction(+: n)
    {
        n += 1;
    }
    print(n, omp.get_max_threads());
}"""
    assert run_omp(src, threads=8).output == "3 3\n"


def test_error_in_one_thread_does_not_hang_team():
    src = """fn main() void {
    const a: []i64 = alloc(i64, 2);
    //$omp parallel
    {
        var i: i64 = 0;
        //$omp while schedule(static, 1)
        while (i < 8) : (i += 1) {
            a[i] = 1;
        }
    }
}"""
    for threads in (1, 2, 4):
        result = run_omp(src, threads=threads)
        assert result.status == 1 and "out of bounds" in str(result.error)


def test_shared_private_firstprivate_semantics():
    src = """fn main() void {
    var shared_sum: i64 = 0;
    var seed: i64 = 5;
    var scratch: i64 = 0;
    //$omp parallel firstprivate(seed) private(scratch) reduction(+: shared_sum)
    {
        scratch = seed * 2;
        seed += 1;
        shared_sum += scratch + seed;
    }
    print(shared_sum, seed, scratch);
}"""
    assert run_omp(src, threads=4).output == "64 5 0\n"


def test_nested_parallel_runs_serialized():
    src = """fn main() void {
    var inner: i64 = 0;
    //$omp parallel reduction(+: inner)
    {
        //$omp parallel reduction(+: inner)
        {
            inner += omp.get_num_threads();
        }
    }
    print(inner);
}"""
    assert run_omp(src, threads=3).output == "3\n"


def test_program_is_reusable_across_team_sizes():
    prog = compile_omp("""fn main(out: []i64) void {
    var n: i64 = 0;
    //$omp parallel reduction(+: n)
    {
        n += 1;
    }
    out[0] = n;
}""", mode="release")
    for t in (1, 2, 5, 1):
        box = [0]
        assert prog.run("main", (box,), threads=t).status == 0
        assert box == [t]


def test_debug_and_release_agree_on_fixtures():
    from zomp.preprocess import preprocess
    from zomp.verify import fixture_paths

    for path in fixture_paths():
        text = preprocess(path.read_text())
        runs = [Program(parse_source(text, internal=True), mode).run("main", threads=1) for mode in ("debug", "release")]
        assert runs[0].status == runs[1].status == 0
        assert runs[0].output == runs[1].output, path.stem


def test_serial_programs_are_deterministic():
    src = "fn main() void {\n    var x: f64 = 0.1;\n    var i: i64 = 0;\n    while (i < 50) : (i += 1) {\n" \
          "        x = x * 3.7 * (1.0 - x);\n    }\n    print(x);\n}"
    assert len({out(src) for _ in range(3)}) == 1


def test_parallel_reduction_adds_team_size():
    src = """fn main() void {
    var sum: i64 = 10;
    //$omp parallel reduction(+: sum)
    {
        sum += 1;
    }
    print(sum);
}"""
    assert run_omp(src, threads=4).output == "14\n"
