"""voiceauth: local voice authentication with selective paralinguistic privacy.

The pipeline in one breath: read audio -> extract features -> score
identity, spoofing, and liveness -> fuse into one authenticity decision ->
on accept, unlock per-service signing keys derived from the enrollment
template -> discretize the utterance against a codebook and send only the
signed unit stream to the relying party.
"""

from .audio import AudioBuffer, FrameMatrix, frame_signal, read_audio, write_wav
from .antispoof import (BinaryScorer, ReplayChannel, liveness_score,
                        simulate_replay, spectral_statistics, spoof_score,
                        train_scorer)
from .credentials import (CredentialKeyPair, CredentialStore,
                          QuantizedTemplate, SignedPayload, derive_seed,
                          keypair_from_seed, sign_payload, unlock_keypair,
                          verify_signature)
from .evaluation import (EvalReport, RocResult, ZebraResult,
                         classification_metrics, kfold, roc_eer_auc, rtf,
                         wer, zebra)
from .features import (LogMelMatrix, MfccMatrix, log_mel, lpcc, mfcc,
                       void_features)
from .fusion import (AuthDecision, FusionModel, NormalizationStats, Pipeline,
                     ScoreVector, authenticate, normalize_scores, train_fusion)
from .identity import (Embedder, EnrollmentTemplate, IdentityEmbedding,
                       calibrate_threshold, cosine_score, embed, enroll,
                       train_embedder)
from .privacy import (Codebook, DiscreteUnitStream, PrivatePayload,
                      build_payload, quantize_stream, segment_units,
                      train_codebook)
from .relying_party import Challenge, CredentialRecord, RelyingParty

__version__ = "0.1.0"
