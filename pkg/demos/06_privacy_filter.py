"""
The privacy filter: what actually leaves the device
===================================================

Frames are quantized against a learned codebook and segmented into
word-like spans; the payload carries codebook indices and boundaries,
nothing else. An attribute-inference probe shows the speaker identity
that survives in raw features and vanishes from unit histograms.
"""

import numpy as np

from voiceauth.corpus import (generate_corpus, split_corpus, train_system,
                              unit_histogram_trials)
from voiceauth.credentials import keypair_from_seed
from voiceauth.evaluation import attribute_probe
from voiceauth.features import mfcc
from voiceauth.privacy import (build_payload, payload_to_binary,
                               payload_to_json, quantize_stream,
                               segment_units, verify_payload)

corpus = generate_corpus(n_speakers=6, n_utterances=10, seed=12)
system = train_system(corpus, target_user="spk00", seed=12)
_, heldout = split_corpus(corpus)

# discretize one utterance and package it
utt = heldout["spk01"][0]
stream = segment_units(quantize_stream(utt.buffer, system.codebook))
print(f"'{utt.utterance_id}': {len(stream.units)} units over "
      f"{len(stream.segments)} word-like segments")
print(f"  first units    {stream.units[:18].tolist()}")
print(f"  first segments {stream.segments[:5]}")

signer = keypair_from_seed(bytes(range(32)), "cloud-asr", unlocked=True)
payload = build_payload(stream, system.codebook.codebook_id, signer=signer)
wire_json = payload_to_json(payload)
wire_binary = payload_to_binary(payload)
raw_bytes = len(utt.buffer.samples) * 2
print(f"\nraw PCM {raw_bytes} B -> JSON {len(wire_json)} B, "
      f"binary {len(wire_binary)} B "
      f"({raw_bytes / len(wire_binary):.0f}x smaller)")
print(f"signature verifies at the relying party: "
      f"{verify_payload(payload, signer.public_key)}")

# the identity probe: raw pooled features vs unit histograms
raw_feats, labels = [], []
for spk, utts in heldout.items():
    for u in utts:
        values = mfcc(u.buffer).values
        raw_feats.append(np.concatenate([values.mean(0), values.std(0)]))
        labels.append(spk)
_, _, unit_hists, _ = unit_histogram_trials(heldout, system.codebook)
probe = attribute_probe(np.stack(raw_feats), unit_hists, labels, seed=12)
print(f"\nspeaker-inference accuracy, raw features:    "
      f"{probe.accuracy_raw:.2f}")
print(f"speaker-inference accuracy, unit histograms: "
      f"{probe.accuracy_private:.2f} (chance {probe.chance:.2f})")
