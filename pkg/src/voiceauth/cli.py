"""Command-line entry point tying the pipeline together.

Subcommands: gen-corpus, train, enroll, auth, filter, serve, evaluate,
bench. Exit codes are a stable contract: 0 success/accept, 1 biometric
reject, 2 usage error, 3 subsystem error (I/O, network, training).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .antispoof import load_scorer, save_scorer, spectral_statistics
from .audio import read_audio, write_wav
from .config import PipelineConfig, load_config, save_config
from .credentials import (CredentialStore, QuantizedTemplate,
                          assertion_message, b64url_decode,
                          registration_message, sign_payload, unlock_keypair)
from .evaluation import (EvalReport, attribute_probe, benchmark_latency,
                         calibrate_llrs, transcripts_report, zebra)
from .exceptions import (ConfigError, StageError, TransmissionError,
                         VoiceAuthError)
from .features import mfcc, void_features
from .fusion import (Pipeline, authenticate, fusion_report,
                     load_fusion_model, save_fusion_model, train_fusion)
from .identity import (load_embedder, load_templates, save_embedder,
                       save_templates, enroll as enroll_user_samples, embed)
from .privacy import (build_payload, load_codebook, payload_to_binary,
                      payload_to_json, quantize_stream, save_codebook,
                      segment_units)
from .relying_party import serve as rp_serve

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_USAGE = 2
EXIT_SUBSYSTEM = 3


class ServiceClient:
    """Minimal JSON-over-HTTP client for the relying party."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def post(self, path: str, body: dict) -> tuple[int, dict]:
        request = urllib.request.Request(
            self.base_url + path,
            data=json.dumps(body, sort_keys=True).encode(),
            headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                return exc.code, json.loads(exc.read())
            except json.JSONDecodeError:
                return exc.code, {"error": "non-JSON error body"}
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise TransmissionError(f"cannot reach {self.base_url}: {exc}") from exc


def make_client(endpoint: str) -> ServiceClient:
    return ServiceClient(endpoint)


def _load_corpus_dir(path: Path) -> dict[str, list[corpus_mod.Utterance]]:
    manifest = json.loads((path / "manifest.json").read_text())
    out: dict[str, list[corpus_mod.Utterance]] = {}
    for spk, files in manifest["speakers"].items():
        out[spk] = [corpus_mod.Utterance(
            utterance_id=Path(f).stem, speaker_id=spk,
            buffer=read_audio(path / f)) for f in files]
    return out


def _load_pipeline(cfg: PipelineConfig, user_id: str) -> Pipeline:
    cfg.validate()
    templates = load_templates(cfg.templates_path)
    if user_id not in templates:
        raise ConfigError(f"user '{user_id}' is not enrolled")
    return Pipeline(embedder=load_embedder(cfg.embedder_path),
                    template=templates[user_id],
                    spoof_scorer=load_scorer(cfg.spoof_scorer_path),
                    liveness_scorer=load_scorer(cfg.liveness_scorer_path),
                    fusion_model=load_fusion_model(cfg.fusion_path))


def cmd_gen_corpus(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = corpus_mod.generate_corpus(args.speakers, args.utterances,
                                        seed=args.seed)
    manifest = {"version": 1, "seed": args.seed, "speakers": {}}
    for spk, utts in corpus.items():
        files = []
        for utt in utts:
            name = f"{utt.utterance_id}.wav"
            write_wav(out / name, utt.buffer)
            files.append(name)
        manifest["speakers"][spk] = files
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(f"wrote {sum(len(f) for f in manifest['speakers'].values())} "
          f"utterances for {len(corpus)} speakers to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = _load_corpus_dir(Path(args.corpus))
    target = args.target or next(iter(corpus))
    system = corpus_mod.train_system(corpus, target, seed=args.seed,
                                     fusion_kind=args.fusion)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = PipelineConfig(
        root=out,
        embedder_path=out / "embedder.txt",
        spoof_scorer_path=out / "spoof_scorer.txt",
        liveness_scorer_path=out / "liveness_scorer.txt",
        fusion_path=out / "fusion.json",
        codebook_path=out / "codebook.txt",
        templates_path=out / "templates.json",
        credentials_path=out / "credentials.json",
        endpoint=args.endpoint, service_id=args.service_id, seed=args.seed)
    save_embedder(system.embedder, cfg.embedder_path)
    save_scorer(system.spoof_scorer, cfg.spoof_scorer_path)
    save_scorer(system.liveness_scorer, cfg.liveness_scorer_path)
    save_fusion_model(system.fusion_model, cfg.fusion_path)
    save_codebook(system.codebook, cfg.codebook_path)
    save_templates(system.templates, cfg.templates_path)
    save_config(cfg, out / "config.ini")
    acc = system.fusion_cv.means["accuracy"]
    eers = ", ".join(f"{k} EER {v:.3f}" for k, v in system.module_eers.items())
    print(f"trained on {len(corpus)} speakers; fusion CV accuracy {acc:.4f} "
          f"({eers}); artifacts in {out}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    if len(args.samples) < 3:
        print("error: enrollment needs at least 3 samples", file=sys.stderr)
        return EXIT_USAGE
    cfg = load_config(args.config)
    embedder = load_embedder(cfg.embedder_path)
    buffers = [read_audio(p) for p in args.samples]
    template = enroll_user_samples(embedder, buffers, args.user)
    templates = (load_templates(cfg.templates_path)
                 if cfg.templates_path.exists() else {})
    templates[args.user] = template
    save_templates(templates, cfg.templates_path)

    store = CredentialStore.open(cfg.credentials_path)
    quantized = QuantizedTemplate.from_template(template)
    kp = store.derive(args.user, cfg.service_id, quantized)
    store.add_credential(args.user, kp)
    message = registration_message(args.user, kp)
    if args.offline:
        reg_path = cfg.root / f"registration-{args.user}.json"
        reg_path.write_text(json.dumps(message, sort_keys=True) + "\n")
        print(f"enrolled '{args.user}' offline; registration in {reg_path}")
        return EXIT_OK
    client = make_client(args.endpoint or cfg.endpoint)
    status, body = client.post("/register", message)
    if status != 200:
        print(f"registration failed: {body}", file=sys.stderr)
        return EXIT_SUBSYSTEM
    print(f"enrolled '{args.user}' and registered with "
          f"{args.endpoint or cfg.endpoint}")
    return EXIT_OK


def cmd_auth(args) -> int:
    cfg = load_config(args.config)
    pipeline = _load_pipeline(cfg, args.user)
    buf = read_audio(args.utterance)
    decision = authenticate(pipeline, buf)
    print(f"voiceid score {decision.voiceid_score:.4f} "
          f"({'accept' if decision.accept else 'reject'}); components "
          f"id={decision.raw.s_id:.3f} spoof={decision.raw.s_spoof:.3f} "
          f"live={decision.raw.s_live:.3f}")
    if not decision.accept:
        return EXIT_REJECT

    codebook = load_codebook(cfg.codebook_path)
    stream = segment_units(quantize_stream(buf, codebook))
    store = CredentialStore.open(cfg.credentials_path)
    templates = load_templates(cfg.templates_path)
    quantized = QuantizedTemplate.from_template(templates[args.user])
    kp = unlock_keypair(store.derive(args.user, cfg.service_id, quantized),
                        decision)
    payload = build_payload(stream, codebook.codebook_id, signer=kp)
    payload_bytes = payload_to_json(payload).encode()

    client = make_client(args.endpoint or cfg.endpoint)
    try:
        status, challenge = client.post("/challenge", {"user_id": args.user})
        if status != 200:
            print(f"challenge refused: {challenge}", file=sys.stderr)
            return EXIT_SUBSYSTEM
        nonce = b64url_decode(challenge["nonce_b64"])
        signed = sign_payload(kp, payload_bytes, nonce)
        status, outcome = client.post("/verify",
                                      assertion_message(args.user, signed))
    except TransmissionError as exc:
        retained = cfg.root / f"payload-{args.user}.json"
        retained.write_text(payload_to_json(payload) + "\n")
        print(f"transmission failed ({exc}); payload retained at {retained}",
              file=sys.stderr)
        return EXIT_SUBSYSTEM
    if status != 200 or not outcome.get("accepted"):
        print(f"service rejected assertion: {outcome}", file=sys.stderr)
        return EXIT_SUBSYSTEM
    print(f"accepted by service: {outcome['reason']}")
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = load_config(args.config)
    codebook = load_codebook(cfg.codebook_path)
    buf = read_audio(args.utterance)
    stream = segment_units(quantize_stream(buf, codebook))
    payload = build_payload(stream, codebook.codebook_id)
    out = Path(args.out)
    if args.binary:
        out.write_bytes(payload_to_binary(payload))
    else:
        out.write_text(payload_to_json(payload) + "\n")
    print(f"wrote {len(payload.units)} units, {len(payload.segments)} "
          f"segments to {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    print(f"relying party on {args.host}:{args.port} "
          f"(store {args.store}, service '{args.service_id}')")
    rp_serve(args.store, host=args.host, port=args.port,
             service_id=args.service_id)
    return EXIT_OK


def _write_report(report: EvalReport, out: Path, fmt: str) -> None:
    if fmt == "json":
        report.to_json(out)
    else:
        report.to_csv(out)
    print(f"report '{report.name}' -> {out}")


def cmd_evaluate(args) -> int:
    if args.what == "transcripts":
        cases = json.loads(Path(args.manifest).read_text())
        report = transcripts_report(cases)
    elif args.what == "fusion":
        corpus = _load_corpus_dir(Path(args.corpus))
        target = args.target or next(iter(corpus))
        train, _ = corpus_mod.split_corpus(corpus)
        system = corpus_mod.train_system(corpus, target, seed=args.seed)
        summaries = {"logistic": None, "linear-svm": None, "knn": None,
                     "sgd-logistic": None}
        vectors, labels = corpus_mod.build_score_dataset(
            train, system.embedder, system.templates[target],
            system.spoof_scorer, system.liveness_scorer, target,
            seed=args.seed)
        for kind in summaries:
            _, summaries[kind] = train_fusion(vectors, labels, model=kind,
                                              seed=args.seed)
        report = fusion_report(summaries)
    elif args.what == "privacy":
        corpus = _load_corpus_dir(Path(args.corpus))
        target = args.target or next(iter(corpus))
        system = corpus_mod.train_system(corpus, target, seed=args.seed)
        report = privacy_report(corpus, system, seed=args.seed)
    else:
        print(f"unknown evaluate target {args.what}", file=sys.stderr)
        return EXIT_USAGE
    _write_report(report, Path(args.out), args.report)
    return EXIT_OK


def privacy_report(corpus, system, seed: int = 0) -> EvalReport:
    """Attribute-inference probe plus the anonymity tuple on held-out data."""
    raw_feats, labels = [], []
    for spk, utts in system.heldout.items():
        for utt in utts:
            values = mfcc(utt.buffer).values
            raw_feats.append(np.concatenate([values.mean(axis=0),
                                             values.std(axis=0)]))
            labels.append(spk)
    mated, nonmated, unit_feats, _ = corpus_mod.unit_histogram_trials(
        system.heldout, system.codebook)
    probe = attribute_probe(np.stack(raw_feats), unit_feats, labels, seed=seed)
    m_llr, n_llr = calibrate_llrs(mated, nonmated)
    z = zebra(m_llr, n_llr)
    report = EvalReport(
        name="privacy_evaluation",
        columns=["metric", "value"],
        rows=[["probe_accuracy_raw", f"{probe.accuracy_raw:.4f}"],
              ["probe_accuracy_private", f"{probe.accuracy_private:.4f}"],
              ["chance", f"{probe.chance:.4f}"],
              ["zebra_d_ece", f"{z.d_ece:.4f}"],
              ["zebra_log10_worst_llr", f"{z.log10_worst:.4f}"],
              ["zebra_tag", z.tag]],
        metadata={"seed": seed, "n_heldout": len(labels)})
    return report


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    corpus = _load_corpus_dir(Path(args.corpus))
    some_user = next(iter(load_templates(cfg.templates_path)))
    pipeline = _load_pipeline(cfg, some_user)
    codebook = load_codebook(cfg.codebook_path)
    buffers = [u.buffer for utts in corpus.values() for u in utts][:args.limit]

    stages = {
        "SV": {"extraction": lambda b: mfcc(b),
               "testing": lambda b: embed(pipeline.embedder, b)},
        "SD": {"extraction": lambda b: spectral_statistics(b),
               "testing": lambda b: pipeline.spoof_scorer.decision_value(
                   spectral_statistics(b))},
        "LA": {"extraction": lambda b: void_features(b),
               "testing": lambda b: pipeline.liveness_scorer.decision_value(
                   void_features(b))},
        "PP": {"extraction": lambda b: mfcc(b),
               "testing": lambda b: segment_units(quantize_stream(b, codebook))},
    }
    sizes = {name: path.stat().st_size for name, path in
             [("embedder", cfg.embedder_path),
              ("spoof_scorer", cfg.spoof_scorer_path),
              ("liveness_scorer", cfg.liveness_scorer_path),
              ("fusion", cfg.fusion_path),
              ("codebook", cfg.codebook_path)]}
    report = benchmark_latency(stages, buffers, model_sizes=sizes)

    t0 = time.perf_counter()
    for buf in buffers:
        authenticate(pipeline, buf)
    elapsed = time.perf_counter() - t0
    audio_seconds = sum(b.duration for b in buffers)
    report.metadata["end_to_end_rtf"] = elapsed / audio_seconds
    _write_report(report, Path(args.out), args.report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voiceauth",
        description="Local voice authentication with selective privacy")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic WAV corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--utterances", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train all pipeline artifacts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", default=None)
    p.add_argument("--fusion", default="logistic",
                   choices=["logistic", "linear-svm", "knn", "sgd-logistic"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--endpoint", default="http://127.0.0.1:8799")
    p.add_argument("--service-id", default="default")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enroll", help="enroll a user and register credentials")
    p.add_argument("--config", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("samples", nargs="+", help="at least 3 WAV files")
    p.add_argument("--offline", action="store_true",
                   help="write the registration message instead of POSTing")
    p.add_argument("--endpoint", default=None)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("auth", help="authenticate and send a signed payload")
    p.add_argument("--config", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("utterance")
    p.add_argument("--endpoint", default=None)
    p.set_defaults(func=cmd_auth)

    p = sub.add_parser("filter", help="privacy-filter an utterance to a payload")
    p.add_argument("--config", required=True)
    p.add_argument("utterance")
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("serve", help="run the relying-party service")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8799)
    p.add_argument("--service-id", default="default")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("evaluate", help="emit evaluation reports")
    p.add_argument("what", choices=["transcripts", "fusion", "privacy"])
    p.add_argument("--manifest", help="JSON case list (transcripts)")
    p.add_argument("--corpus", help="corpus dir (fusion/privacy)")
    p.add_argument("--target", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default="csv", choices=["csv", "json"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="latency/memory benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--limit", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default="csv", choices=["csv", "json"])
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except StageError as exc:
        print(f"pipeline error in stage '{exc.stage}': {exc.cause}",
              file=sys.stderr)
        return EXIT_SUBSYSTEM
    except (VoiceAuthError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SUBSYSTEM


if __name__ == "__main__":
    sys.exit(main())
