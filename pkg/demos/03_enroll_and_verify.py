"""
Speaker enrollment and cosine verification
==========================================

Trains the projection embedder on a small corpus, enrolls one speaker
from a handful of samples, and reads identity claims off cosine
similarity against the stored template.
"""

import numpy as np

from voiceauth.corpus import generate_corpus
from voiceauth.evaluation import roc_eer_auc
from voiceauth.identity import (calibrate_threshold, cosine_score, embed,
                                enroll, train_embedder)

corpus = generate_corpus(n_speakers=5, n_utterances=8, seed=4)
buffers = {spk: [u.buffer for u in utts] for spk, utts in corpus.items()}

# triplet-trained linear projection over pooled MFCC statistics
train = {spk: bufs[:5] for spk, bufs in buffers.items()}
embedder = train_embedder(train, seed=4)
print(f"embedder: {embedder.weights.shape[1]} pooled dims -> "
      f"{embedder.dim}-dim unit vectors")

# enroll spk00 from four samples; the template is their renormalized mean
template = enroll(embedder, buffers["spk00"][:4], "spk00")
print(f"enrolled '{template.user_id}' from {template.n_samples} samples")

# score held-out utterances: own speaker vs everyone else
target_scores = [cosine_score(template, embed(embedder, b))
                 for b in buffers["spk00"][5:]]
impostor_scores = [cosine_score(template, embed(embedder, b))
                   for spk, bufs in buffers.items() if spk != "spk00"
                   for b in bufs[5:]]
print(f"target scores   {np.round(target_scores, 3)}")
print(f"impostor scores mean {np.mean(impostor_scores):+.3f}, "
      f"max {np.max(impostor_scores):+.3f}")

# threshold at the equal-error operating point
threshold = calibrate_threshold(target_scores, impostor_scores)
roc = roc_eer_auc(target_scores, impostor_scores)
print(f"calibrated threshold {threshold:.3f} (EER {roc.eer:.3f}, "
      f"AUC {roc.auc:.3f})")
accepted = sum(s > threshold for s in target_scores)
false_accepts = sum(s > threshold for s in impostor_scores)
print(f"decision rule s > T: {accepted}/{len(target_scores)} targets in, "
      f"{false_accepts}/{len(impostor_scores)} impostors in")
