import math

import numpy as np
import pytest

from errors import IoFailure
from reports import (
    CHECK_COLUMNS,
    CheckResult,
    RunReport,
    SuiteResult,
    atomic_write,
    canonical,
    checks_table,
    dump_field,
    dumps_canonical,
    load_field,
    load_report,
    write_report,
)


@pytest.fixture
def report():
    identities = SuiteResult("identities", checks=[
        CheckResult("g_identity", "single-modes-000", value=0.125, ratio=1.0001),
        CheckResult("area_identity", "single-modes-000", value=math.inf, status="flag"),
    ])
    inequalities = SuiteResult("inequality_suite", checks=[
        CheckResult("pointwise_chain", "constant|p=2", value=1.0, status="fail"),
    ])
    return RunReport(
        config={"seed": 5},
        seed=5,
        suites={"identities": identities, "inequality_suite": inequalities},
        plot_data={"ratios": (("entry", "ratio"), [("a", 1.5), ("b", np.float64(2.0))])},
        timing={"total": 0.25},
    )


class TestSuiteStatus:
    def test_worst_status_wins(self, report):
        assert report.suites["identities"].status == "flag"
        assert report.suites["inequality_suite"].status == "fail"
        assert report.hard_failures == ["inequality_suite"]

    def test_errors_and_skips(self):
        assert SuiteResult("decay", error="RuntimeError: boom").status == "error"
        assert SuiteResult("decay", error="RuntimeError: boom").hard_failure
        assert SuiteResult("decay", skipped="no line axes").status == "skip"
        assert SuiteResult("decay", checks=[CheckResult("x", "y", status="skip")]).status == "skip"
        assert SuiteResult("decay").status == "pass"


class TestCanonicalJson:
    def test_sanitizes_values(self):
        payload = {"a": np.float64(1.5), "b": np.int64(3), "c": math.nan, "d": np.array([1.0, math.inf]),
                   "e": (1, 2), "f": np.bool_(True), 2: "int key"}
        assert canonical(payload) == {"a": 1.5, "b": 3, "c": None, "d": [1.0, None], "e": [1, 2], "f": True,
                                      "2": "int key"}

    def test_sorted_and_terminated(self):
        text = dumps_canonical({"b": 1, "a": {"z": 1, "y": 2}, "c": "λ"})
        assert text.endswith("}\n")
        assert text.index('"a"') < text.index('"b"')
        assert text.index('"y"') < text.index('"z"')
        assert "λ" in text

    def test_body_excludes_timing(self, report):
        body = report.body()
        assert "timing" not in body
        assert body["meta"]["seed"] == 5
        assert body["summary"]["hard_failures"] == ["inequality_suite"]
        assert report.to_dict()["timing"] == {"total": 0.25}


class TestWriteReport:
    def test_all_formats(self, report, tmp_path):
        paths = write_report(report, tmp_path / "out", ("json", "csv", "plot"))
        assert [p.name for p in paths] == ["report.json", "checks.csv", "plot_ratios.csv"]
        loaded = load_report(paths[0])
        assert loaded["suites"]["identities"]["checks"][1]["value"] is None

        lines = paths[1].read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(CHECK_COLUMNS)
        # suites in name order
        assert lines[1].startswith("g_identity,single-modes-000,0.125,1.0001,,pass")
        assert lines[3].startswith("pointwise_chain,")

        assert paths[2].read_text(encoding="utf-8") == "entry,ratio\na,1.5\nb,2.0\n"

    def test_deterministic_bytes(self, report, tmp_path):
        a = write_report(report, tmp_path / "a", ("json",))[0].read_bytes()
        b = write_report(report, tmp_path / "b", ("json",))[0].read_bytes()
        assert a == b
        assert b"NaN" not in a and b"Infinity" not in a

    def test_unknown_format(self, report, tmp_path):
        with pytest.raises(ValueError):
            write_report(report, tmp_path, ("json", "xml"))

    def test_checks_table_has_every_check(self, report):
        assert len(checks_table(report).splitlines()) == 1 + 3

    def test_unwritable_directory(self, report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(IoFailure):
            write_report(report, blocker / "out", ("json",))


class TestAtomicWrite:
    def test_failed_write_leaves_nothing(self, tmp_path):
        target = tmp_path / "partial.txt"
        with pytest.raises(RuntimeError):
            with atomic_write(target) as handle:
                handle.write("half")
                raise RuntimeError("interrupted")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_load_missing_report(self, tmp_path):
        with pytest.raises(IoFailure):
            load_report(tmp_path / "none.json")


class TestFieldDumps:
    def test_real_field(self, tmp_path):
        values = np.arange(12.0).reshape(3, 4)
        path = dump_field(tmp_path / "f.bin", values)
        raw = path.read_bytes()
        assert raw[:4] == b"LPF1"
        assert len(raw) == 4 + 4 + 2 * 8 + 12 * 8
        np.testing.assert_array_equal(load_field(path), values)

    def test_complex_field(self, tmp_path):
        values = np.array([[1 + 2j, 3 - 1j]])
        path = dump_field(tmp_path / "c.bin", values)
        assert load_field(path).shape == (1, 2, 2)
        np.testing.assert_array_equal(load_field(path, as_complex=True), values)

    def test_corrupt_files(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(IoFailure):
            load_field(bad)
        path = dump_field(tmp_path / "r.bin", np.ones(3))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(IoFailure):
            load_field(path)
        with pytest.raises(IoFailure):
            load_field(dump_field(tmp_path / "s.bin", np.ones(3)), as_complex=True)
