import json
from dataclasses import asdict, replace
from pathlib import Path

import pandas as pd
import pytest

from app import build_parser, main
from utils.analytics import reports_to_frame, save_results
from utils.config import DEFAULT_CONFIG_PATH, LedgerSettings
from utils.harness import TestCase, TestCaseReport
from utils.ledger import SUBMITTER, Ledger, export_chain, generate_identities
from utils.model import HistoryRecord, Outcome, RequestKind


@pytest.fixture
def chain_file(clock, tmp_path):
    settings = LedgerSettings()
    ledger = Ledger(settings, generate_identities(settings.submitter, settings.peers), clock)
    cred = ledger.credential_for(settings.submitter, SUBMITTER)
    for i in range(4):
        ledger.submit_log(HistoryRecord(f"r{i}", "a1", RequestKind.READ, "temperature", Outcome.GRANT, float(i)), cred)
    blocks = ledger.peers["peer1"].blocks()
    ledger.close()
    path = tmp_path / "chain.jsonl"
    export_chain(blocks, path)
    return path, blocks


def test_verify_chain_command(chain_file, capsys):
    path, _ = chain_file
    assert main(["verify-chain", str(path)]) == 0
    assert "chain OK (5 blocks)" in capsys.readouterr().out


def test_verify_chain_reports_first_bad_block(chain_file, capsys, tmp_path):
    _, blocks = chain_file
    blocks = list(blocks)
    blocks[2] = replace(blocks[2], timestamp=blocks[2].timestamp + 1)
    path = tmp_path / "tampered.jsonl"
    export_chain(blocks, path)
    assert main(["verify-chain", str(path)]) == 1
    assert "chain broken at block 2" in capsys.readouterr().out


def test_report_command_writes_outputs(tmp_path, capsys):
    reports = [
        TestCaseReport("NO_BC", TestCase.TC4, (1.0,)),
        TestCaseReport("ZTA_BC", TestCase.TC4, (1.1,)),
    ]
    results = tmp_path / "results.csv"
    save_results(reports_to_frame(reports), results)
    out = tmp_path / "report"
    assert main(["report", "--results", str(results), "--out", str(out), "--pdf"]) == 0
    assert (tmp_path / "report.ratios.csv").exists()
    assert list(pd.read_csv(tmp_path / "report.csv")["variant"]) == ["NO_BC", "ZTA_BC"]
    assert (tmp_path / "report.txt").read_text().startswith("Average execution time")
    assert (tmp_path / "report.pdf").read_bytes().startswith(b"%PDF")
    assert "Ledger overhead" in capsys.readouterr().out


def test_report_reads_the_default_results_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_results(reports_to_frame([TestCaseReport("NO_BC", TestCase.TC1, (2.0,))]), "results.csv")
    assert main(["report", "--out", "summary"]) == 0
    assert (tmp_path / "summary.txt").exists()
    assert (tmp_path / "summary.csv").exists()


def test_report_needs_an_output_path():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["report"])


def test_fault_needs_an_engine():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["fault"])
    args = build_parser().parse_args(["fault", "--engine", "pe1", "--compromise"])
    assert args.engine == ["pe1"] and args.compromise and not args.process


@pytest.fixture
def small_config(tmp_path, settings):
    data = json.loads(Path(DEFAULT_CONFIG_PATH).read_text(encoding="utf-8"))
    data["harness"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(settings.harness).items()}
    path = tmp_path / "zta.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_fault_command_compromises_only_on_request(small_config, capsys):
    base = ["--config", small_config, "fault", "--variant", "ZTA_BC", "--engine", "pe1", "--engine", "pe2", "--requests", "8"]
    assert main(base) == 0
    assert "'GRANT': 8" in capsys.readouterr().out
    assert main(base + ["--compromise"]) == 0
    assert "'REJECT': 8" in capsys.readouterr().out


def test_fault_command_unknown_engine(small_config):
    assert main(["--config", small_config, "fault", "--engine", "pe9"]) == 2


def test_export_then_verify_chain(small_config, tmp_path, capsys):
    out = tmp_path / "exported.jsonl"
    assert main(["--config", small_config, "export-chain", str(out), "--tc", "TC1"]) == 0
    assert "written to" in capsys.readouterr().out
    assert main(["--config", small_config, "verify-chain", str(out)]) == 0
    assert "chain OK" in capsys.readouterr().out


def test_export_chain_needs_a_ledger_variant(tmp_path):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["export-chain", str(tmp_path / "x.jsonl"), "--variant", "NO_BC"])


def test_verify_chain_reports_an_unreadable_line(chain_file, capsys, tmp_path):
    path, _ = chain_file
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[2] = lines[2][:20]
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["verify-chain", str(broken)]) == 1
    assert "chain broken at block 2" in capsys.readouterr().out


def test_missing_chain_file_exits_with_code_2(tmp_path):
    assert main(["verify-chain", str(tmp_path / "absent.jsonl")]) == 2


def test_config_errors_exit_with_code_2(tmp_path):
    bad = tmp_path / "zta.json"
    bad.write_text('{"tokens": {"ttl": 1}}', encoding="utf-8")
    assert main(["--config", str(bad), "verify-chain", "missing.jsonl"]) == 2
