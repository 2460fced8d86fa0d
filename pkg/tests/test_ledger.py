import pytest

from gradesim.cohort import sample_cohort
from gradesim.ledger import LEDGER_HEADER, LedgerError, ledger_rows, read_ledger, unit_records, write_ledger
from gradesim.readers import AIModelSpec, HumanReaderParams
from gradesim.rng import RngStream
from gradesim.workflow import FrameworkKind, WorkflowConfig, run_trial


@pytest.fixture
def outcomes(measure):
    cohort = sample_cohort(measure.with_size(20), RngStream(1))
    cfg = WorkflowConfig(FrameworkKind.AI_IR, ai=AIModelSpec.trained(), humans=(HumanReaderParams(0.0172),))
    return run_trial(cohort, cfg, RngStream(2)), cfg


def test_rows_per_read_plus_consensus(outcomes):
    outs, cfg = outcomes
    rows = ledger_rows(outs, 0, cfg.ai)
    assert len(rows) == sum(len(o.reads_taken) + 1 for o in outs)
    ai_rows = [r for r in rows if r.reader_role == "ai"]
    assert all(r.reader_kind == "ai_trained" for r in ai_rows)
    assert {r.missing for r in ai_rows if r.total_score == ""} <= {"1"}


def test_round_trip(tmp_path, outcomes):
    outs, cfg = outcomes
    rows = ledger_rows(outs, 3, cfg.ai)
    path = write_ledger(rows, tmp_path / "ledger.csv")
    text = path.read_bytes()
    assert text.startswith((",".join(LEDGER_HEADER) + "\n").encode()) and b"\r" not in text
    assert read_ledger(path) == rows
    recs = unit_records(rows)
    assert len(recs) == len(outs)
    for rec, o in zip(recs, outs):
        assert rec.consensus == o.consensus and rec.run_id == 3
        assert rec.ai_missing == o.ai_missing and rec.first_disagreement == o.first_disagreement


def test_bad_ledgers(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(LedgerError):
        read_ledger(bad)
    bad.write_text(",".join(LEDGER_HEADER) + "\n1,2\n")
    with pytest.raises(LedgerError, match=":2:"):
        read_ledger(bad)
