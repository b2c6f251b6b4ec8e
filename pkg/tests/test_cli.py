"""End-to-end command-line flows, exit codes, and the no-leak guarantee."""

import json
import threading

import pytest

from voiceauth import cli
from voiceauth.cli import main
from voiceauth.relying_party import RelyingParty, make_server

pytestmark = pytest.mark.cli


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated corpus + trained artifact directory for all CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus_dir = root / "corpus"
    model_dir = root / "model"
    assert main(["gen-corpus", "--out", str(corpus_dir), "--speakers", "5",
                 "--utterances", "8", "--seed", "2"]) == 0
    assert main(["train", "--corpus", str(corpus_dir), "--out",
                 str(model_dir), "--seed", "2"]) == 0
    return {"root": root, "corpus": corpus_dir, "model": model_dir,
            "config": model_dir / "config.ini"}


@pytest.fixture()
def server(tmp_path):
    rp = RelyingParty(tmp_path / "rp.jsonl", service_id="default")
    srv = make_server(rp, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}", rp
    srv.shutdown()
    srv.server_close()


class RecordingClient:
    """Test double standing in for the HTTP client; records every body."""

    log: list = []

    def __init__(self, base_url, timeout=5.0):
        self.inner = cli.ServiceClient(base_url, timeout)

    def post(self, path, body):
        RecordingClient.log.append((path, json.dumps(body)))
        return self.inner.post(path, body)


def test_gen_corpus_layout(workspace):
    manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
    assert len(manifest["speakers"]) == 5
    first = next(iter(manifest["speakers"].values()))[0]
    assert (workspace["corpus"] / first).exists()


def test_train_writes_all_artifacts(workspace):
    for name in ("embedder.txt", "spoof_scorer.txt", "liveness_scorer.txt",
                 "fusion.json", "codebook.txt", "templates.json",
                 "config.ini"):
        assert (workspace["model"] / name).exists(), name


def test_enroll_requires_three_samples(workspace):
    sample = str(workspace["corpus"] / "spk00-u00.wav")
    code = main(["enroll", "--config", str(workspace["config"]),
                 "--user", "alice", sample, sample])
    assert code == 2


def test_enroll_offline_writes_registration(workspace):
    samples = [str(workspace["corpus"] / f"spk01-u0{i}.wav") for i in range(4)]
    code = main(["enroll", "--config", str(workspace["config"]),
                 "--user", "alice", *samples, "--offline"])
    assert code == 0
    reg = json.loads((workspace["model"] / "registration-alice.json").read_text())
    assert set(reg) == {"user_id", "public_key_b64", "alg"}
    creds = json.loads((workspace["model"] / "credentials.json").read_text())
    assert "alice" in creds["users"]


def test_enroll_idempotent_public_key(workspace):
    samples = [str(workspace["corpus"] / f"spk02-u0{i}.wav") for i in range(4)]
    assert main(["enroll", "--config", str(workspace["config"]),
                 "--user", "bob", *samples, "--offline"]) == 0
    first = json.loads((workspace["model"] / "registration-bob.json").read_text())
    assert main(["enroll", "--config", str(workspace["config"]),
                 "--user", "bob", *samples, "--offline"]) == 0
    second = json.loads((workspace["model"] / "registration-bob.json").read_text())
    assert first["public_key_b64"] == second["public_key_b64"]


def test_auth_accept_end_to_end(workspace, server, monkeypatch):
    endpoint, rp = server
    monkeypatch.setattr(cli, "make_client",
                        lambda ep: RecordingClient(ep))
    RecordingClient.log.clear()
    samples = [str(workspace["corpus"] / f"spk00-u0{i}.wav") for i in range(4)]
    assert main(["enroll", "--config", str(workspace["config"]),
                 "--user", "spk00", *samples,
                 "--endpoint", endpoint]) == 0
    code = main(["auth", "--config", str(workspace["config"]),
                 "--user", "spk00",
                 str(workspace["corpus"] / "spk00-u06.wav"),
                 "--endpoint", endpoint])
    assert code == 0
    paths = [p for p, _ in RecordingClient.log]
    assert paths == ["/register", "/challenge", "/verify"]
    # no-leak: nothing that leaves the process resembles audio or features
    for _, body in RecordingClient.log:
        lower = body.lower()
        for banned in ("samples", "audio", "embedding", "feature", "mfcc",
                       "template"):
            assert banned not in lower
        assert len(body) < 20_000  # a raw 3 s utterance would be ~100 kB+


def test_auth_reject_sends_nothing(workspace, server, monkeypatch):
    endpoint, _ = server
    monkeypatch.setattr(cli, "make_client", lambda ep: RecordingClient(ep))
    samples = [str(workspace["corpus"] / f"spk00-u0{i}.wav") for i in range(4)]
    assert main(["enroll", "--config", str(workspace["config"]),
                 "--user", "spk00", *samples, "--endpoint", endpoint]) == 0
    RecordingClient.log.clear()
    code = main(["auth", "--config", str(workspace["config"]),
                 "--user", "spk00",
                 str(workspace["corpus"] / "spk03-u06.wav"),
                 "--endpoint", endpoint])
    assert code == 1
    assert RecordingClient.log == []  # zero bytes toward the service


def test_auth_server_down_retains_payload(workspace, monkeypatch):
    samples = [str(workspace["corpus"] / f"spk00-u0{i}.wav") for i in range(4)]
    assert main(["enroll", "--config", str(workspace["config"]),
                 "--user", "spk00", *samples, "--offline"]) == 0
    code = main(["auth", "--config", str(workspace["config"]),
                 "--user", "spk00",
                 str(workspace["corpus"] / "spk00-u06.wav"),
                 "--endpoint", "http://127.0.0.1:1"])
    assert code == 3
    retained = workspace["model"] / "payload-spk00.json"
    assert retained.exists()
    payload = json.loads(retained.read_text())
    assert "units" in payload and "sig" in payload


def test_filter_writes_payload(workspace, tmp_path):
    out = tmp_path / "payload.json"
    code = main(["filter", "--config", str(workspace["config"]),
                 str(workspace["corpus"] / "spk04-u07.wav"),
                 "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert set(payload) <= {"version", "codebook_id", "hop", "rate", "k",
                            "units", "segments"}
    binary_out = tmp_path / "payload.bin"
    assert main(["filter", "--config", str(workspace["config"]),
                 str(workspace["corpus"] / "spk04-u07.wav"),
                 "--out", str(binary_out), "--binary"]) == 0
    from voiceauth.privacy import payload_from_binary
    back = payload_from_binary(binary_out.read_bytes())
    assert back.units == payload["units"]


def test_evaluate_transcripts_emits_table(workspace, tmp_path):
    (tmp_path / "ref.txt").write_text("turn on the lights\nwhat time is it\n")
    (tmp_path / "hyp.txt").write_text("turn off the lights\nwhat time is it\n")
    manifest = [{"condition": "private", "service": "local",
                 "ref_path": str(tmp_path / "ref.txt"),
                 "hyp_path": str(tmp_path / "hyp.txt"),
                 "processing_seconds": 2.06, "audio_seconds": 1.0}]
    (tmp_path / "cases.json").write_text(json.dumps(manifest))
    out = tmp_path / "wer.csv"
    code = main(["evaluate", "transcripts", "--manifest",
                 str(tmp_path / "cases.json"), "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "condition,service,wer,rtf"
    assert lines[1].startswith("private,local,")


def test_evaluate_fusion_emits_cv_table(workspace, tmp_path):
    out = tmp_path / "fusion.csv"
    code = main(["evaluate", "fusion", "--corpus", str(workspace["corpus"]),
                 "--seed", "2", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("model,accuracy,accuracy_std,precision")
    kinds = {line.split(",")[0] for line in lines[1:]}
    assert kinds == {"logistic", "linear-svm", "knn", "sgd-logistic"}


def test_evaluate_privacy_emits_report(workspace, tmp_path):
    out = tmp_path / "privacy.json"
    code = main(["evaluate", "privacy", "--corpus", str(workspace["corpus"]),
                 "--seed", "2", "--out", str(out), "--report", "json"])
    assert code == 0
    payload = json.loads(out.read_text())
    metrics = {row[0] for row in payload["rows"]}
    assert {"probe_accuracy_raw", "probe_accuracy_private", "zebra_tag",
            "zebra_d_ece"} <= metrics


def test_bench_reports_all_modules(workspace, tmp_path):
    out = tmp_path / "bench.json"
    code = main(["bench", "--config", str(workspace["config"]),
                 "--corpus", str(workspace["corpus"]), "--limit", "2",
                 "--out", str(out), "--report", "json"])
    assert code == 0
    payload = json.loads(out.read_text())
    modules = {row[0] for row in payload["rows"]}
    assert modules == {"SV", "SD", "LA", "PP"}
    assert payload["metadata"]["end_to_end_rtf"] < 1.0


def test_usage_errors_exit_2():
    assert main(["no-such-command"]) == 2
    assert main(["train"]) == 2  # missing required flags


def test_subsystem_errors_exit_3(tmp_path):
    missing = tmp_path / "missing.ini"
    code = main(["filter", "--config", str(missing), "x.wav",
                 "--out", str(tmp_path / "o.json")])
    assert code == 3


def test_config_validation(workspace, tmp_path):
    from voiceauth.config import load_config
    cfg = load_config(workspace["config"])
    cfg.validate()
    (workspace["model"] / "codebook.txt").rename(tmp_path / "stash.txt")
    try:
        with pytest.raises(Exception):
            cfg.validate()
    finally:
        (tmp_path / "stash.txt").rename(workspace["model"] / "codebook.txt")
