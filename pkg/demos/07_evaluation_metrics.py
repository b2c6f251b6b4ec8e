"""
The measurement toolbox
=======================

Detection metrics, anonymity scoring, transcription utility, and latency:
every number the pipeline reports comes from these primitives.
"""

import numpy as np

from voiceauth.evaluation import (calibrate_llrs, classification_metrics,
                                  roc_eer_auc, rtf, wer, zebra)

rng = np.random.default_rng(0)

# ROC, equal error rate, and AUC from two score piles
genuine = rng.normal(1.2, 0.6, 400)
impostor = rng.normal(0.0, 0.6, 400)
roc = roc_eer_auc(genuine, impostor)
print(f"EER {roc.eer:.3f} at threshold {roc.eer_threshold:.3f}, "
      f"AUC {roc.auc:.3f}")

# confusion-matrix metrics with explicit zero-denominator flags
m = classification_metrics([1, 1, 1, 1], [1, 1, 0, 0])
print(f"all-positive classifier: acc {m.accuracy}, precision {m.precision}, "
      f"recall {m.recall}, F1 {m.f1:.3f}")

# anonymity: calibrate verification scores into LLRs, then the ZEBRA tuple
weak_mated = rng.normal(0.05, 0.2, 300)      # a well-anonymized system
weak_nonmated = rng.normal(0.0, 0.2, 300)
m_llr, n_llr = calibrate_llrs(weak_mated, weak_nonmated)
z = zebra(m_llr, n_llr)
print(f"anonymized system: (D_ECE {z.d_ece:.3f}, log10 worst LLR "
      f"{z.log10_worst:.3f}, tag {z.tag})")

strong_mated = rng.normal(2.5, 0.5, 300)     # a fully linkable system
strong_nonmated = rng.normal(-2.5, 0.5, 300)
m_llr, n_llr = calibrate_llrs(strong_mated, strong_nonmated)
z = zebra(m_llr, n_llr)
print(f"linkable system:   (D_ECE {z.d_ece:.3f}, log10 worst LLR "
      f"{z.log10_worst:.3f}, tag {z.tag})")

# zero evidence is the fixed point: exactly (0, 0, A)
z = zebra([0.0, 0.0], [0.0, 0.0])
print(f"zero-evidence fixed point: ({z.d_ece}, {z.worst_llr}, {z.tag})")

# transcription utility
print(f"\nWER('set an alarm for ten' -> 'set alarm for ten pm') = "
      f"{wer('set an alarm for ten', 'set alarm for ten pm'):.2f}")
print(f"RTF(0.8 s processing / 2.0 s audio) = {rtf(0.8, 2.0):.2f}")
