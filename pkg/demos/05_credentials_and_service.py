"""
From voice template to unlinkable service credentials
=====================================================

The enrollment template (never a live utterance) is quantized and fed
through HMAC-SHA256 with a device salt to derive one signing key pair per
service. The relying party stores public keys only, issues single-use
challenges, and verifies signed assertions: it never sees a biometric.
"""

import tempfile
from pathlib import Path

from voiceauth.corpus import generate_corpus
from voiceauth.credentials import (CredentialStore, QuantizedTemplate,
                                   derive_seed, keypair_from_seed,
                                   sign_payload, unlock_keypair)
from voiceauth.corpus import train_system
from voiceauth.fusion import authenticate
from voiceauth.relying_party import RelyingParty

corpus = generate_corpus(n_speakers=4, n_utterances=8, seed=8)
system = train_system(corpus, target_user="spk00", seed=8)
template = system.templates["spk00"]

with tempfile.TemporaryDirectory() as tmp:
    store = CredentialStore.open(Path(tmp) / "credentials.json")
    quantized = QuantizedTemplate.from_template(template)
    print(f"quantized template: {len(quantized.data)} bytes")

    # one key pair per service; distinct services are unlinkable
    for service in ("shopping", "banking"):
        seed = derive_seed(quantized, store.salt, service)
        kp = keypair_from_seed(seed, service)
        store.add_credential("spk00", kp)
        print(f"  {service:9s} public key {kp.public_key.hex()[:24]}...")

    # deleting and re-deriving reproduces the identical credential
    again = store.derive("spk00", "banking", quantized)
    print(f"re-derived banking key matches stored: "
          f"{store.users['spk00']['banking']['public_key_b64'][:12]}...")

    # the relying party: register, challenge, assert
    rp = RelyingParty(Path(tmp) / "rp.jsonl", service_id="banking")
    rp.register_credential("spk00", again.public_key)

    # signing is gated on a live accepting decision
    decision = authenticate(system.pipeline(), corpus["spk00"][7].buffer)
    print(f"\nfused decision: {'ACCEPT' if decision.accept else 'REJECT'} "
          f"(score {decision.voiceid_score:.3f})")
    kp = unlock_keypair(again, decision)

    challenge = rp.issue_challenge("spk00")
    signed = sign_payload(kp, b"activation-request", challenge.nonce)
    outcome = rp.verify_assertion("spk00", b"activation-request",
                                  challenge.nonce, signed.signature)
    print(f"assertion verified: {outcome.accepted} ({outcome.reason})")

    # replaying the same assertion is refused: the nonce was consumed
    replay = rp.verify_assertion("spk00", b"activation-request",
                                 challenge.nonce, signed.signature)
    print(f"replayed assertion: accepted={replay.accepted} ({replay.reason})")
