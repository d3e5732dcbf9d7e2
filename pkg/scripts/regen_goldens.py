"""Rewrite fixtures/*.golden from the current preprocessor output.

Run after an intentional change to the generated code; review the diff.
"""

from zomp.preprocess import preprocess
from zomp.verify import fixture_paths, golden_path


def main() -> None:
    for path in fixture_paths():
        out = preprocess(path.read_text())
        golden = golden_path(path)
        old = golden.read_text() if golden.exists() else None
        golden.write_text(out)
        print(f"{'unchanged' if old == out else 'wrote':>9}  {golden.name}")


if __name__ == "__main__":
    main()
