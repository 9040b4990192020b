"""Acceptance suite: one printed PASS/FAIL line per criterion at its stated tolerance."""

import pytest

from robinlab import acceptance, cli


def report(capsys, line):
    with capsys.disabled():
        print("\n" + line)


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    result = acceptance.run_criterion(number)
    report(capsys, result.line())
    assert result.passed, result.detail


@pytest.mark.slow
def test_criterion_10_validate_is_deterministic(tmp_path, capsys):
    codes, reports = [], []
    for name in ("first", "second"):
        out = tmp_path / name
        codes.append(cli.main(["validate", "--out", str(out)]))
        reports.append((out / "acceptance.csv").read_bytes())
    same = reports[0] == reports[1]
    report(capsys, f"[{'PASS' if same and codes == [0, 0] else 'FAIL'}] 10 determinism: validate exit codes "
                   f"{codes}, acceptance.csv byte-identical across runs: {same}")
    assert codes == [0, 0]
    assert same
