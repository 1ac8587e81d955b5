import csv
import json

import pytest
import torch

from gsba.attack import AttackOutcome
from gsba.harness import ExperimentReport
from gsba.report import (
    rerender,
    summary_table,
    write_comparison,
    write_report,
    write_sweep,
)


def _report(n=6, verified=4, steps=1, max_steps=1):
    outcomes = []
    for i in range(n):
        ok = i < verified
        img = torch.rand(1, 4, 4)
        outcomes.append(
            AttackOutcome(
                original=img,
                original_label=0,
                setting="untargeted",
                success=ok,
                adversarial=img.clone() if ok else None,
                linf_perturbation=0.05,
                reported_steps=steps,
                adversarial_class=1,
                sample_id=i,
                verified=ok,
            )
        )
    counts = [verified] + [0] * 9
    return ExperimentReport(
        config={"dataset": "digits", "delta": 0.1},
        outcomes=outcomes,
        asr=verified / n,
        avg_steps=float(steps) if verified else None,
        step_histogram=counts,
        histogram_edges=[1.0] * 11,
        ledger={"used": 100, "budget": 1000},
        verification_queries=verified,
        wall_time=1.5,
    )


def test_write_report_files(tmp_path):
    out = write_report(tmp_path / "run", _report(), name="gsba")
    for fname in (
        "config.json",
        "summary.json",
        "summary.txt",
        "outcomes.ndjson",
        "histogram.csv",
        "adversarial.npz",
        "histogram.png",
        "examples.png",
    ):
        assert (out / fname).exists(), fname
    summary = json.loads((out / "summary.json").read_text())
    assert summary["asr"] == pytest.approx(4 / 6)
    lines = (out / "outcomes.ndjson").read_text().splitlines()
    assert len(lines) == 6
    assert json.loads(lines[0])["sample_id"] == 0


def test_histogram_csv_contents(tmp_path):
    out = write_report(tmp_path / "run", _report(), name="gsba")
    rows = list(csv.DictReader(open(out / "histogram.csv")))
    assert len(rows) == 10
    assert int(rows[0]["count"]) == 4


def test_no_success_report_skips_npz(tmp_path):
    rep = _report(n=3, verified=0)
    out = write_report(tmp_path / "run", rep, name="gsba")
    assert not (out / "adversarial.npz").exists()
    assert not (out / "examples.png").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["avg_steps"] is None


def test_summary_table_format():
    table = summary_table({"gsba": _report(), "pgd": _report(verified=2)})
    assert "attack" in table and "ASR" in table and "AVG steps" in table
    assert "gsba" in table and "pgd" in table
    assert "66.7%" in table


def test_summary_table_marks_missing_avg():
    table = summary_table({"gsba": _report(n=2, verified=0)})
    assert "n/a" in table


def test_write_comparison(tmp_path):
    out = write_comparison(tmp_path / "cmp", {"base": _report(verified=1), "+div": _report()})
    assert (out / "summary.txt").exists()
    assert (out / "base" / "summary.json").exists()
    assert (out / "plus_div" / "summary.json").exists()


def test_write_sweep_and_rerender(tmp_path):
    sweep = [(0.1, _report(verified=1)), (1.0, _report(verified=5))]
    out = write_sweep(tmp_path / "sweep", sweep)
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [float(r["budget_fraction"]) for r in rows] == [0.1, 1.0]
    assert (out / "sweep.png").exists()
    write_report(out / "fraction_1", _report(), name="x1")
    (out / "fraction_1" / "histogram.png").unlink()
    rendered = rerender(out)
    assert any(p.name == "histogram.png" for p in rendered)
    assert (out / "fraction_1" / "histogram.png").exists()
    assert any(p.name == "sweep.png" for p in rendered)


def test_multistep_histogram_render(tmp_path):
    rep = _report(steps=7, max_steps=40)
    rep.step_histogram = [1, 2, 0, 0, 1, 0, 0, 0, 0, 0]
    rep.histogram_edges = [1 + i * 3.9 for i in range(11)]
    out = write_report(tmp_path / "multi", rep, name="pgd")
    assert (out / "histogram.png").exists()
