import os
import re
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from robolab.cli import main, parse_script

RUN_SCRIPT = """
# short manual drive with the defect-free profile
seed 11
user example
config defects off
0.0 drive 1.0 1.0
2.0 drive 0.0 0.0
3.0 stop
"""

SWEEP_SCRIPT = """
seed 11
user example
plugin builtin
0.0 mode automatic
20.0 stop
"""


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestRun:
    def test_scripted_run_writes_history(self, tmp_path, capsys):
        script = tmp_path / "drive.script"
        script.write_text(RUN_SCRIPT)
        code, out, err = run_cli(["run", str(script), "--fast",
                                  "--out", str(tmp_path / "ws")], capsys)
        assert code == 0, err
        hist = out.strip()
        assert re.search(r"hist_[0-9]{8}_[0-9]{6}$", hist)
        csv = open(os.path.join(hist, "state.csv")).read().splitlines()
        assert len(csv) == 1 + 15  # 3 s at 200 ms ticks
        assert os.path.exists(os.path.join(hist, "world.pgm"))
        assert os.path.exists(os.path.join(hist, "world.cw"))
        assert os.path.exists(os.path.join(hist, "meta.json"))

    def test_empty_script_empty_history(self, tmp_path, capsys):
        script = tmp_path / "empty.script"
        script.write_text("# nothing\n")
        code, out, err = run_cli(["run", str(script), "--fast",
                                  "--out", str(tmp_path / "ws")], capsys)
        assert code == 0, err
        csv = open(os.path.join(out.strip(), "state.csv")).read().splitlines()
        assert csv == ["t,x,y,th,vx,vy,w,d,u1,u2,battery"]

    def test_same_seed_byte_identical_outputs(self, tmp_path, capsys):
        script = tmp_path / "drive.script"
        script.write_text(RUN_SCRIPT)
        outputs = []
        for sub in ("a", "b"):
            code, out, err = run_cli(["run", str(script), "--fast",
                                      "--out", str(tmp_path / sub)], capsys)
            assert code == 0, err
            hist = out.strip()
            outputs.append((open(os.path.join(hist, "state.csv"), "rb").read(),
                            open(os.path.join(hist, "world.pgm"), "rb").read()))
        assert outputs[0][0] == outputs[1][0]
        assert outputs[0][1] == outputs[1][1]

    def test_seed_flag_overrides_script(self, tmp_path, capsys):
        script = tmp_path / "drive.script"
        script.write_text(RUN_SCRIPT.replace("config defects off", ""))
        runs = []
        for seed, sub in (("--seed", "31"), ("--seed", "32")):
            code, out, _ = run_cli(["run", str(script), "--fast", seed, sub,
                                    "--out", str(tmp_path / sub)], capsys)
            assert code == 0
            runs.append(open(os.path.join(out.strip(), "state.csv"),
                             "rb").read())
        assert runs[0] != runs[1]

    def test_missing_script_fails_cleanly(self, tmp_path, capsys):
        code, out, err = run_cli(["run", str(tmp_path / "nope.script"),
                                  "--fast"], capsys)
        assert code == 1
        assert err.startswith("error: ")
        assert "\n" not in err.strip()

    def test_bad_script_line_names_problem(self, tmp_path, capsys):
        script = tmp_path / "bad.script"
        script.write_text("0.0 drive 1 1\nwhat is this\n")
        code, _, err = run_cli(["run", str(script), "--fast"], capsys)
        assert code == 1 and "line 2" in err


class TestParseScript:
    def test_directives_and_timeline(self):
        directives, timeline = parse_script(RUN_SCRIPT)
        assert directives["seed"] == "11"
        assert directives["user"] == "example"
        assert directives["config"] == [("defects", "off")]
        assert timeline[0] == (0, "drive", ["1.0", "1.0"])
        assert timeline[-1] == (3000, "stop", [])

    def test_descending_times_rejected(self):
        with pytest.raises(Exception, match="ascend"):
            parse_script("1.0 drive 0 0\n0.5 drive 1 1\n")


class TestRenderAndWorldgen:
    def test_worldgen_deterministic_listing(self, capsys):
        code1, out1, _ = run_cli(["worldgen", "--user", "alice"], capsys)
        code2, out2, _ = run_cli(["worldgen", "--user", "alice"], capsys)
        assert code1 == code2 == 0
        assert out1 == out2
        assert "rect" in out1 and "circle" in out1

    def test_render_from_history(self, tmp_path, capsys):
        script = tmp_path / "s.script"
        script.write_text("user example\n0.0 drive 1 1\n1.0 stop\n")
        _, out, _ = run_cli(["run", str(script), "--fast",
                             "--out", str(tmp_path / "ws")], capsys)
        hist = out.strip()
        target = str(tmp_path / "map.pgm")
        code, out, _ = run_cli(["render", hist, "-o", target], capsys)
        assert code == 0
        data = open(target, "rb").read()
        assert data.startswith(b"P5\n400 300\n255\n")

    def test_render_rejects_garbage(self, tmp_path, capsys):
        bad = tmp_path / "x.cw"
        bad.write_bytes(b"\x00\x01")
        code, _, err = run_cli(["render", str(bad)], capsys)
        assert code == 1 and err.startswith("error: ")


class TestAdmin:
    def test_user_lifecycle(self, tmp_path, capsys):
        data = ["--data", str(tmp_path)]
        code, _, _ = run_cli(["user", "add", "dana", "--password", "pw"]
                             + data, capsys)
        assert code == 0
        code, out, _ = run_cli(["user", "list"] + data, capsys)
        assert "dana" in out and "example" in out
        # sensitive material never shows up in listings
        booking_text = open(tmp_path / "booking.txt").read()
        digest = [l for l in booking_text.splitlines()
                  if l.startswith("user dana")][0].split()[3]
        assert digest not in out
        code, _, _ = run_cli(["user", "remove", "dana"] + data, capsys)
        assert code == 0
        code, _, err = run_cli(["user", "remove", "example"] + data, capsys)
        assert code == 1

    def test_slot_admin(self, tmp_path, capsys):
        data = ["--data", str(tmp_path)]
        run_cli(["user", "add", "dana", "--password", "pw"] + data, capsys)
        code, _, _ = run_cli(["slot", "add", "dana", "100", "200"] + data,
                             capsys)
        assert code == 0
        code, _, err = run_cli(["slot", "add", "dana", "150", "250"] + data,
                               capsys)
        assert code == 1 and "overlap" in err
        code, out, _ = run_cli(["slot", "list"] + data, capsys)
        assert "dana 100.0 200.0" in out


class TestServeProcess:
    def test_serve_boots_and_answers_auth(self, tmp_path):
        import json
        import struct
        port1, port2 = _free_port(), _free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "robolab.cli", "serve",
             "--data", str(tmp_path), "--tcp-port", str(port1),
             "--ws-port", str(port2)],
            stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
        try:
            sock = _connect_with_retry(port1)
            payload = json.dumps({"user": "example",
                                  "password": "example"}).encode()
            sock.sendall(struct.pack(">IB", len(payload), 0x01) + payload)
            reply = sock.recv(4096)
            assert reply[4] == 0x02  # AUTH_OK
            sock.close()
        finally:
            proc.terminate()
            proc.wait(timeout=5)

    def test_port_collision_reports_clearly(self, tmp_path):
        port = _free_port()
        blocker = socket.socket()
        blocker.bind(("0.0.0.0", port))
        blocker.listen(1)
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "robolab.cli", "serve",
                 "--data", str(tmp_path), "--tcp-port", str(port),
                 "--ws-port", str(_free_port())],
                capture_output=True, text=True, timeout=15)
            assert proc.returncode == 1
            assert proc.stderr.startswith("error: ")
            assert str(port) in proc.stderr
        finally:
            blocker.close()


def _free_port() -> int:
    s = socket.socket()
    s.bind(("", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def _connect_with_retry(port, attempts=50):
    for _ in range(attempts):
        try:
            return socket.create_connection(("127.0.0.1", port), timeout=1.0)
        except OSError:
            time.sleep(0.1)
    raise ConnectionError(f"server never came up on {port}")


class TestServeConfig:
    def test_bad_config_names_offending_key(self, tmp_path, capsys):
        conf = tmp_path / "lab.conf"
        conf.write_text("motor.warp_drive = 9\n")
        code = main(["serve", "--config", str(conf),
                     "--data", str(tmp_path)])
        err = capsys.readouterr().err
        assert code == 1
        assert err.startswith("error: ")
        assert "motor.warp_drive" in err
