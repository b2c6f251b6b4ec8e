"""
Simulating replay attacks
=========================

A replayed command passes through a loudspeaker and a room before the
microphone hears it again. The parametric channel model stacks the four
dominant artifacts: band limiting, saturation, an early reflection, and
noise. The spectral footprint is what the liveness scorer learns.
"""

import numpy as np

from voiceauth.antispoof import (IDENTITY_CHANNEL, REPLAY_CHANNEL,
                                 SYNTH_CHANNEL, simulate_replay)
from voiceauth.corpus import make_speakers, synth_utterance
from voiceauth.features import VOID_GROUP_SLICES, void_features

profile = make_speakers(3, seed=1)[1]
buf = synth_utterance(profile, np.random.default_rng(1), duration_s=2.0)

# the identity configuration proves the plumbing adds nothing by itself
clean = simulate_replay(buf, IDENTITY_CHANNEL, seed=0)
print(f"identity channel max deviation: "
      f"{np.max(np.abs(clean.samples - buf.samples)):.1e}")

# telephone-band playback: the default negative class for liveness
replayed = simulate_replay(buf, REPLAY_CHANNEL, seed=0)
spectrum = lambda x: np.abs(np.fft.rfft(x)) ** 2  # noqa: E731
freqs = np.fft.rfftfreq(len(buf.samples), 1 / 16000)


def band_change_db(lo, hi):
    band = (freqs >= lo) & (freqs < hi)
    return 10 * np.log10(spectrum(replayed.samples)[band].mean()
                         / spectrum(buf.samples)[band].mean())


# The clipper adds broadband gain, so read bands against the passband.
# The low band is simply gone; the high band ends up dominated by clipper
# harmonics and channel noise instead of voice. That asymmetric footprint
# is what the liveness features pick up.
passband = band_change_db(300, 3400)
print("band contrast relative to the 300-3400 Hz passband:")
for lo, hi in [(0, 300), (300, 3400), (3400, 8000)]:
    print(f"  {lo:4d}-{hi:4d} Hz: {band_change_db(lo, hi) - passband:+6.1f} dB")

# the spectral-shape features move in a consistent, learnable direction
v_clean = void_features(buf)
v_replay = void_features(replayed)
lin = VOID_GROUP_SLICES["linearity"]
print(f"power-linearity features clean  {np.round(v_clean[lin], 3)}")
print(f"power-linearity features replay {np.round(v_replay[lin], 3)}")

# the resynthesis channel leaves a different footprint than playback
synth = simulate_replay(buf, SYNTH_CHANNEL, seed=0)
print(f"replay vs resynthesis differ: "
      f"{not np.allclose(replayed.samples, synth.samples)}")
