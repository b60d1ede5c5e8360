"""Command-line client: flag surface, exit codes, run directories, and
the in-process/remote service paths."""

import json
import socket
import threading
import time

import numpy as np
import pytest

from gmixlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, default_out_dir, main
from gmixlab.data import dump_json
from gmixlab.training import report_determinism_key

TOY_TRAIN_FLAGS = [
    "--bias", "nodes", "--cmp", "lt", "--threshold", "100",
    "--train-count", "8", "--val-count", "2",
    "--epochs", "50", "--patience", "50", "--lr", "0.01",
    "--batch", "8", "--hidden", "8", "--embed-dim", "4", "--tail", "10",
    "--seed", "0",
]


def run_cli(args):
    return main(list(args))


class TestSplitStats:
    def test_writes_manifest_and_prints_table(self, synb_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            [
                "split-stats", "--dataset-dir", str(synb_dir),
                "--bias", "nodes", "--cmp", "lt", "--threshold", "12",
                "--train-count", "30", "--val-count", "8", "--seed", "0",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        stdout = capsys.readouterr().out
        assert "partition" in stdout and "train" in stdout
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["counts"] == {"train": 30, "val": 8, "test": 26}
        echo = json.loads((out / "config.json").read_text())
        assert echo["command"] == "split-stats"
        assert echo["request"]["threshold"] == 12.0

    def test_manifest_round_trips_byte_identically(self, synb_dir, tmp_path):
        out = tmp_path / "run"
        run_cli(
            [
                "split-stats", "--dataset-dir", str(synb_dir), "--threshold", "12",
                "--train-count", "30", "--val-count", "8", "--out", str(out),
            ]
        )
        raw = (out / "manifest.json").read_text()
        assert dump_json(json.loads(raw)) == raw

    def test_unknown_flag_named_in_error(self, capsys):
        code = run_cli(["split-stats", "--foo"])
        assert code == EXIT_CONFIG
        assert "--foo" in capsys.readouterr().err

    def test_missing_dataset_dir_flag_named(self, capsys):
        code = run_cli(["split-stats", "--threshold", "5", "--train-count", "2", "--val-count", "1"])
        assert code == EXIT_CONFIG
        assert "--dataset-dir" in capsys.readouterr().err

    def test_nonexistent_dataset_dir_named(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            [
                "split-stats", "--dataset-dir", "/no/such/place", "--threshold", "5",
                "--train-count", "2", "--val-count", "1", "--out", str(out),
            ]
        )
        assert code == EXIT_CONFIG
        assert "--dataset-dir" in capsys.readouterr().err
        # the config echo is written before any work happens
        assert (out / "config.json").is_file()
        assert not (out / "manifest.json").exists()

    def test_selector_required(self, synb_dir, capsys):
        code = run_cli(
            ["split-stats", "--dataset-dir", str(synb_dir), "--train-count", "2", "--val-count", "1"]
        )
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "--threshold" in err and "--qualify-count" in err

    def test_both_selectors_rejected(self, synb_dir, capsys):
        code = run_cli(
            [
                "split-stats", "--dataset-dir", str(synb_dir), "--threshold", "5",
                "--qualify-count", "4", "--train-count", "2", "--val-count", "1",
            ]
        )
        assert code == EXIT_CONFIG

    def test_invalid_choice_names_flag(self, capsys):
        code = run_cli(["split-stats", "--bias", "bogus"])
        assert code == EXIT_CONFIG
        assert "--bias" in capsys.readouterr().err

    def test_invalid_number_names_flag(self, capsys):
        code = run_cli(["split-stats", "--threshold", "banana"])
        assert code == EXIT_CONFIG
        assert "--threshold" in capsys.readouterr().err

    def test_bare_name_resolved_via_data_root(self, synb_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("GMIXLAB_DATA_ROOT", str(synb_dir.parent))
        out = tmp_path / "run"
        code = run_cli(
            [
                "split-stats", "--dataset-dir", synb_dir.name, "--threshold", "12",
                "--train-count", "30", "--val-count", "8", "--out", str(out),
            ]
        )
        assert code == EXIT_OK


class TestConfigFile:
    def test_config_supplies_fields_and_flags_win(self, synb_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "dataset_dir": str(synb_dir),
                    "threshold": 12,
                    "train_count": 30,
                    "val_count": 8,
                    "seed": 5,
                }
            )
        )
        out = tmp_path / "run"
        code = run_cli(
            ["split-stats", "--config", str(cfg), "--seed", "9", "--out", str(out)]
        )
        assert code == EXIT_OK
        echo = json.loads((out / "config.json").read_text())
        assert echo["request"]["seed"] == 9  # flag beats config file
        assert echo["request"]["train_count"] == 30  # config fills the rest

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nonsense": 1}))
        code = run_cli(["split-stats", "--config", str(cfg)])
        assert code == EXIT_CONFIG
        assert "nonsense" in capsys.readouterr().err

    def test_missing_config_file_named(self, capsys):
        code = run_cli(["split-stats", "--config", "/no/cfg.json"])
        assert code == EXIT_CONFIG
        assert "/no/cfg.json" in capsys.readouterr().err


class TestTrain:
    def test_erm_on_toy_set_reaches_full_train_accuracy(self, toy_tu_dir, tmp_path):
        out = tmp_path / "run"
        code = run_cli(
            ["train", "--dataset-dir", str(toy_tu_dir), "--method", "erm"]
            + TOY_TRAIN_FLAGS
            + ["--out", str(out)]
        )
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["status"] == "completed"
        assert report["train_accuracy"] == 1.0
        assert report["config"]["method"] == "erm"
        assert (out / "config.json").is_file()

    def test_report_round_trips_byte_identically(self, toy_tu_dir, tmp_path):
        out = tmp_path / "run"
        run_cli(
            ["train", "--dataset-dir", str(toy_tu_dir), "--method", "erm"]
            + TOY_TRAIN_FLAGS
            + ["--epochs", "3", "--patience", "3", "--out", str(out)]
        )
        raw = (out / "report.json").read_text()
        assert dump_json(json.loads(raw)) == raw

    def test_fixed_seed_reports_identical_modulo_wall_clock(self, toy_tu_dir, tmp_path):
        reports = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            code = run_cli(
                ["train", "--dataset-dir", str(toy_tu_dir), "--method", "oodgmixup"]
                + TOY_TRAIN_FLAGS
                + ["--epochs", "4", "--patience", "4", "--out", str(out)]
            )
            assert code == EXIT_OK
            reports.append(json.loads((out / "report.json").read_text()))
        assert report_determinism_key(reports[0]) == report_determinism_key(reports[1])

    def test_infeasible_split_fails_with_config_exit(self, synb_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            [
                "train", "--dataset-dir", str(synb_dir), "--threshold", "12",
                "--train-count", "300", "--val-count", "8", "--out", str(out),
            ]
        )
        assert code == EXIT_CONFIG
        assert "qualifying" in capsys.readouterr().err


class TestEvtFit:
    def test_fit_file_round_trip(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        values_file = tmp_path / "draws.txt"
        values_file.write_text(
            "".join(f"{v}\n" for v in rng.weibull(2.0, size=200) * 3.0)
        )
        out = tmp_path / "run"
        code = run_cli(
            ["evt-fit", "--input", str(values_file), "--tail", "200", "--out", str(out)]
        )
        assert code == EXIT_OK
        fit = json.loads((out / "fit.json").read_text())
        assert fit["valid"] is True
        assert fit["xi"] == pytest.approx(2.0, rel=0.2)
        assert fit["sigma"] == pytest.approx(3.0, rel=0.1)
        raw = (out / "fit.json").read_text()
        assert dump_json(json.loads(raw)) == raw
        assert "xi=" in capsys.readouterr().out

    def test_bad_line_names_file_and_line(self, tmp_path, capsys):
        bad = tmp_path / "vals.txt"
        bad.write_text("1.5\npotato\n2.5\n")
        code = run_cli(["evt-fit", "--input", str(bad)])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "vals.txt:2" in err and "potato" in err

    def test_missing_input_flag_named(self, capsys):
        code = run_cli(["evt-fit"])
        assert code == EXIT_CONFIG
        assert "--input" in capsys.readouterr().err


class TestGradcheck:
    def test_passes_and_writes_report(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(["gradcheck", "--probes", "12", "--out", str(out)])
        assert code == EXIT_OK
        assert "PASS" in capsys.readouterr().out
        report = json.loads((out / "report.json").read_text())
        assert report["passed"] is True
        assert report["max_error"] < report["tolerance"]

    def test_impossible_tolerance_fails_with_runtime_exit(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            ["gradcheck", "--probes", "6", "--tolerance", "1e-18", "--out", str(out)]
        )
        assert code == EXIT_RUNTIME
        assert "FAIL" in capsys.readouterr().out

    def test_default_out_dir_created_under_cwd(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(["gradcheck", "--probes", "4"])
        assert code == EXIT_OK
        expected = default_out_dir(
            "gradcheck", {"probes": 4, "h": 1e-5, "seed": 0, "tolerance": 1e-4}
        )
        assert (tmp_path / expected / "report.json").is_file()
        assert (tmp_path / expected / "config.json").is_file()


class TestTopLevel:
    def test_no_subcommand_is_config_error(self, capsys):
        assert run_cli([]) == EXIT_CONFIG
        assert "subcommand" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert run_cli(["--help"]) == EXIT_OK
        assert "split-stats" in capsys.readouterr().out


@pytest.fixture(scope="module")
def live_server():
    import uvicorn

    from gmixlab.service import create_app

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    config = uvicorn.Config(create_app(), host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("test server failed to start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestRemoteServer:
    def test_gradcheck_against_live_server(self, live_server, tmp_path):
        out = tmp_path / "run"
        code = run_cli(
            ["gradcheck", "--probes", "6", "--server", live_server, "--out", str(out)]
        )
        assert code == EXIT_OK
        assert json.loads((out / "report.json").read_text())["passed"] is True

    def test_train_against_live_server(self, live_server, toy_tu_dir, tmp_path):
        out = tmp_path / "run"
        code = run_cli(
            ["train", "--dataset-dir", str(toy_tu_dir), "--method", "erm"]
            + TOY_TRAIN_FLAGS
            + ["--epochs", "3", "--patience", "3", "--server", live_server, "--out", str(out)]
        )
        assert code == EXIT_OK
        assert json.loads((out / "report.json").read_text())["status"] == "completed"

    def test_unreachable_server_names_flag(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            [
                "gradcheck", "--probes", "2",
                "--server", "http://127.0.0.1:9",  # discard port: nothing listens
                "--out", str(out),
            ]
        )
        assert code == EXIT_CONFIG
        assert "--server" in capsys.readouterr().err
