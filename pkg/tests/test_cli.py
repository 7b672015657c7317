"""Tests for the pofl-sim command line."""

import csv
import io
from pathlib import Path

import orjson
import pytest

from pofl_sim.cli import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_STAGE,
    EXIT_USAGE,
    main,
)
from pofl_sim.config import Environment, Settings

SCENARIO = Path(__file__).parent / "fixtures" / "scenario.toml"


@pytest.fixture
def settings() -> Settings:
    return Settings(
        app_env=Environment.TESTING,
        log_level="warning",
        db_path="",
        grid_step=1e-3,
    )


@pytest.fixture
def run_dir(tmp_path: Path, settings: Settings) -> Path:
    """Output directory of a full fixture run, persisted to a database."""
    out = tmp_path / "run"
    code = main(
        [
            "run",
            "--config",
            str(SCENARIO),
            "--out",
            str(out),
            "--db",
            str(tmp_path / "reports.db"),
        ],
        settings,
    )
    assert code == EXIT_OK
    return out


class TestRun:
    """Tests for `pofl-sim run`."""

    def test_writes_outputs(
        self, run_dir: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        assert capsys.readouterr().out.strip() == f"rounds=2 height=1 out={run_dir}"
        assert (run_dir / "chain.bin").is_file()
        assert (run_dir / "reports" / "round-0001.json").is_file()

    def test_round_limit(
        self,
        tmp_path: Path,
        settings: Settings,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        out = tmp_path / "one"
        argv = ["run", "--config", str(SCENARIO), "--out", str(out)]
        code = main([*argv, "--rounds", "1", "--no-store"], settings)
        assert code == EXIT_OK
        assert "rounds=1 height=0" in capsys.readouterr().out

    def test_stage_failure(
        self,
        tmp_path: Path,
        settings: Settings,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        """A round that cannot train exits 3 and names the stage."""
        text = SCENARIO.read_text(encoding="utf-8")
        broken = tmp_path / "broken.toml"
        broken.write_text(
            text.replace("records = 60", "records = 2"), encoding="utf-8"
        )
        out = tmp_path / "out"
        argv = ["run", "--config", str(broken), "--out", str(out), "--no-store"]
        assert main(argv, settings) == EXIT_STAGE
        diagnostic = orjson.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert diagnostic["stage"] == "training"
        assert diagnostic["error"] == "EmptyShardError"
        assert (out / "chain.bin").read_bytes() == b""

    def test_negative_seed(self, tmp_path: Path, settings: Settings) -> None:
        argv = ["run", "--seed", "-1", "--out", str(tmp_path), "--no-store"]
        assert main([*argv, "--config", str(SCENARIO)], settings) == EXIT_USAGE

    def test_missing_arguments(self, settings: Settings) -> None:
        with pytest.raises(SystemExit) as info:
            main(["run"], settings)
        assert info.value.code == EXIT_USAGE


class TestVerifyChain:
    """Tests for `pofl-sim verify-chain`."""

    def test_valid(
        self, run_dir: Path, settings: Settings, capsys: pytest.CaptureFixture[str]
    ) -> None:
        capsys.readouterr()
        code = main(["verify-chain", "--file", str(run_dir / "chain.bin")], settings)
        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith("valid chain: height=1 blocks=2")

    def test_json(
        self, run_dir: Path, settings: Settings, capsys: pytest.CaptureFixture[str]
    ) -> None:
        capsys.readouterr()
        argv = ["verify-chain", "--file", str(run_dir / "chain.bin"), "--json"]
        assert main(argv, settings) == EXIT_OK
        data = orjson.loads(capsys.readouterr().out)
        assert data["height"] == 1
        assert [b["height"] for b in data["blocks"]] == [0, 1]

    def test_tampered(
        self, run_dir: Path, settings: Settings, capsys: pytest.CaptureFixture[str]
    ) -> None:
        path = run_dir / "chain.bin"
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
        capsys.readouterr()
        assert main(["verify-chain", "--file", str(path)], settings) == (
            EXIT_CHECK_FAILED
        )
        assert capsys.readouterr().out.startswith("invalid chain")

    def test_missing_file(self, tmp_path: Path, settings: Settings) -> None:
        argv = ["verify-chain", "--file", str(tmp_path / "absent.bin")]
        assert main(argv, settings) == EXIT_USAGE


class TestReport:
    """Tests for `pofl-sim report`."""

    def test_stored_round(
        self,
        run_dir: Path,
        tmp_path: Path,
        settings: Settings,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        capsys.readouterr()
        argv = ["report", "--round", "1", "--db", str(tmp_path / "reports.db")]
        assert main(argv, settings) == EXIT_OK
        report = orjson.loads(capsys.readouterr().out)
        assert report["task_id"] == "task-2"
        stored = orjson.loads((run_dir / "reports" / "round-0001.json").read_bytes())
        assert report == stored

    def test_unknown_round(
        self, run_dir: Path, tmp_path: Path, settings: Settings
    ) -> None:
        argv = ["report", "--round", "9", "--db", str(tmp_path / "reports.db")]
        assert main(argv, settings) == EXIT_USAGE

    def test_nothing_stored(self, settings: Settings) -> None:
        assert main(["report", "--round", "0"], settings) == EXIT_USAGE


class TestSweepAndAudit:
    """Tests for `pofl-sim sweep` and `pofl-sim audit`."""

    def test_sweep_to_stdout(
        self, settings: Settings, capsys: pytest.CaptureFixture[str]
    ) -> None:
        argv = ["sweep", "--axis", "I", "--values", "8,16", "--config", str(SCENARIO)]
        assert main(argv, settings) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [row["I"] for row in rows] == ["8", "16"]
        assert rows[0]["table_nonfree"] == "20.0"

    def test_sweep_to_file(self, tmp_path: Path, settings: Settings) -> None:
        out = tmp_path / "sweeps" / "r.csv"
        argv = ["sweep", "--axis", "r", "--values", "0.2,0.4", "--out", str(out)]
        assert main([*argv, "--config", str(SCENARIO)], settings) == EXIT_OK
        assert out.read_text(encoding="utf-8").startswith("r,m_star,ds_star,p")

    def test_bad_values(self, settings: Settings) -> None:
        argv = ["sweep", "--axis", "r", "--values", "low,high"]
        assert main([*argv, "--config", str(SCENARIO)], settings) == EXIT_USAGE

    def test_audit(
        self, settings: Settings, capsys: pytest.CaptureFixture[str]
    ) -> None:
        argv = ["audit", "--draws", "3", "--seed", "5", "--fake-steps", "5"]
        assert main(argv, settings) == EXIT_OK
        result = orjson.loads(capsys.readouterr().out)
        assert result["draws"] == 3
        assert result["passed"] is True
        assert sorted(result) == [
            "bid_mismatches",
            "draws",
            "ic_violations",
            "markup_mismatches",
            "passed",
        ]
