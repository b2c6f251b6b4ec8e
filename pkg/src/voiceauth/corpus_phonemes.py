"""Shared phoneme-like formant inventory for the synthetic corpus.

All synthetic speakers voice the same inventory (scaled by their
vocal-tract factor), so which unit is spoken carries no identity
information. Values are (F1, F2, F3) center frequencies in Hz, loosely
modeled on vowel formant charts.
"""

PHONEME_FORMANTS: list[tuple[float, float, float]] = [
    (310.0, 2020.0, 2960.0),   # i-like
    (400.0, 1920.0, 2560.0),   # e-like
    (660.0, 1720.0, 2410.0),   # ae-like
    (730.0, 1090.0, 2440.0),   # a-like
    (570.0, 840.0, 2410.0),    # o-like
    (440.0, 1020.0, 2240.0),   # open-o
    (300.0, 870.0, 2240.0),    # u-like
    (490.0, 1350.0, 1690.0),   # r-colored
    (640.0, 1190.0, 2390.0),   # schwa-like
    (360.0, 1570.0, 2320.0),   # y-like
]
