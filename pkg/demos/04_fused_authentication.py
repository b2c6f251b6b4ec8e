"""
Three predictors, one decision
==============================

Identity, spoofing, and liveness scores live on different scales; the
fusion model normalizes them and fuses them into the single authenticity
score that gates everything downstream. This demo trains the whole stack
and authenticates clean, replayed, and impostor inputs.
"""

import numpy as np

from voiceauth.corpus import (generate_corpus, replay_copy, split_corpus,
                              train_system)
from voiceauth.fusion import authenticate

corpus = generate_corpus(n_speakers=6, n_utterances=10, seed=6)
system = train_system(corpus, target_user="spk00", seed=6)
cv = system.fusion_cv
print(f"fusion ({system.fusion_model.kind}): 5-fold accuracy "
      f"{cv.means['accuracy']:.4f} +/- {cv.stds['accuracy']:.4f}, "
      f"precision {cv.means['precision']:.4f}, recall {cv.means['recall']:.4f}")
print("per-predictor EER on training trials: "
      + ", ".join(f"{k} {v:.3f}" for k, v in system.module_eers.items()))

_, heldout = split_corpus(corpus)
pipe = system.pipeline()

# a held-out utterance of the enrolled speaker
genuine = heldout["spk00"][1]
decision = authenticate(pipe, genuine.buffer)
print(f"\ngenuine '{genuine.utterance_id}': score "
      f"{decision.voiceid_score:.3f} -> "
      f"{'ACCEPT' if decision.accept else 'REJECT'}")
print(f"  raw        id {decision.raw.s_id:+.3f}  spoof "
      f"{decision.raw.s_spoof:+.3f}  live {decision.raw.s_live:+.3f}")
print(f"  normalized {np.round(decision.normalized.as_array(), 3)}")

# the same utterance through the replay channel
replayed = replay_copy(genuine, seed=9)
decision = authenticate(pipe, replayed.buffer)
print(f"\nreplayed copy: score {decision.voiceid_score:.3f} -> "
      f"{'ACCEPT' if decision.accept else 'REJECT'}")
print(f"  liveness collapsed to {decision.raw.s_live:+.3f}")

# another speaker's clean utterance against spk00's template
impostor = heldout["spk03"][0]
decision = authenticate(pipe, impostor.buffer)
print(f"\nimpostor '{impostor.utterance_id}': score "
      f"{decision.voiceid_score:.3f} -> "
      f"{'ACCEPT' if decision.accept else 'REJECT'}")
print(f"  identity similarity only {decision.raw.s_id:+.3f}")
