from __future__ import annotations

import json

import pytest

from lacp import envelope as env
from lacp.cli import main
from lacp.node import Node, default_registry
from lacp.transport import TcpServer


@pytest.fixture
def keystore_file(tmp_path):
    path = tmp_path / "ks.json"
    assert main(["keygen", "--keystore", str(path), "--agent-id", "alice"]) == 0
    assert main(["keygen", "--keystore", str(path), "--agent-id", "server"]) == 0
    return path


@pytest.fixture
def live_server(keystore_file):
    store = env.Keystore.load(keystore_file)
    node = Node(store.get("server"), store, registry=default_registry())
    server = TcpServer(node.frame_handler)
    server.start()
    yield server
    server.stop()


class TestKeygen:
    def test_creates_and_extends_keystore(self, tmp_path):
        path = tmp_path / "ks.json"
        assert main(["keygen", "--keystore", str(path), "--agent-id", "a"]) == 0
        assert main(["keygen", "--keystore", str(path), "--agent-id", "b"]) == 0
        data = json.loads(path.read_text())
        assert set(data) == {"a", "b"}
        assert all("public_key" in entry and "private_key" in entry
                   for entry in data.values())

    def test_duplicate_id_refused(self, tmp_path):
        path = tmp_path / "ks.json"
        main(["keygen", "--keystore", str(path), "--agent-id", "a"])
        with pytest.raises(SystemExit):
            main(["keygen", "--keystore", str(path), "--agent-id", "a"])

    def test_keystore_env_var(self, tmp_path, monkeypatch):
        path = tmp_path / "ks.json"
        monkeypatch.setenv("LACP_KEYSTORE", str(path))
        assert main(["keygen", "--agent-id", "a"]) == 0
        assert path.exists()

    def test_missing_keystore_flag(self, monkeypatch):
        monkeypatch.delenv("LACP_KEYSTORE", raising=False)
        with pytest.raises(SystemExit):
            main(["keygen", "--agent-id", "a"])


class TestSend:
    def test_send_against_live_server(self, keystore_file, live_server, capsys):
        code = main(["send",
                     "--connect", f"127.0.0.1:{live_server.port}",
                     "--keystore", str(keystore_file),
                     "--identity", "alice", "--to", "server",
                     "--tool", "calculator",
                     "--params", '{"expression": "15*7"}'])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["output"] == "105"
        assert out["status"] == "ok"

    def test_send_unknown_tool_reports_error(self, keystore_file, live_server,
                                             capsys):
        code = main(["send",
                     "--connect", f"127.0.0.1:{live_server.port}",
                     "--keystore", str(keystore_file),
                     "--identity", "alice", "--to", "server",
                     "--tool", "nope", "--params", "{}"])
        assert code == 1
        assert "404" in capsys.readouterr().err

    def test_bad_params_json(self, keystore_file):
        with pytest.raises(SystemExit):
            main(["send", "--connect", "127.0.0.1:1",
                  "--keystore", str(keystore_file),
                  "--identity", "alice", "--to", "server",
                  "--tool", "echo", "--params", "{not json"])


class TestAttack:
    def test_replay_against_live_server(self, keystore_file, live_server, capsys):
        args = ["--connect", f"127.0.0.1:{live_server.port}",
                "--keystore", str(keystore_file),
                "--identity", "alice", "--to", "server"]
        assert main(["attack", "replay", *args]) == 0
        out = capsys.readouterr().out
        assert "verdict=PASS" in out and "first=200 second=409" in out

    def test_tamper_against_live_server(self, keystore_file, live_server, capsys):
        args = ["--connect", f"127.0.0.1:{live_server.port}",
                "--keystore", str(keystore_file),
                "--identity", "alice", "--to", "server"]
        assert main(["attack", "tamper", *args]) == 0
        assert "first=200 second=403" in capsys.readouterr().out


class TestBenchAndSim:
    def test_bench_writes_report(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["bench", "--iterations", "5", "--out", str(out)])
        assert code == 0
        assert out.exists()
        assert "scenario" in capsys.readouterr().out

    def test_txn_sim_clean_runs(self, capsys):
        code = main(["txn-sim", "--participants", "3", "--seed", "4",
                     "--runs", "5", "--faults", "drop=0.2,dup=0.2,delay=0.3"])
        assert code == 0
        assert "5/5 runs clean" in capsys.readouterr().out

    def test_txn_sim_bad_fault_spec(self):
        with pytest.raises(SystemExit):
            main(["txn-sim", "--faults", "explode=1"])
