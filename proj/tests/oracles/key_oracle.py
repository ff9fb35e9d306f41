"""Independent key-estimation oracle.

Correlates a duration-weighted pitch-class histogram with the 12 rotations of
the Krumhansl-Kessler major profile (numpy.corrcoef) and prints the winning
tonic and the semitone shift that moves it to C. The C++ tests freeze the
printed values.
"""
import numpy as np

PROFILE = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.37, 3.66, 2.29, 2.88])

CASES = {
    # (pitch, duration in beats)
    "g_major_tune": [(67, 2), (69, 1), (71, 1), (72, 1), (74, 2), (76, 1), (78, 1), (79, 4), (74, 2), (71, 2), (67, 4)],
    "c_major_tune": [(60, 2), (62, 1), (64, 1), (65, 1), (67, 2), (69, 1), (71, 1), (72, 4), (67, 2), (64, 2), (60, 4)],
    "d_major_tune": [(62, 2), (66, 2), (69, 2), (74, 4), (73, 1), (71, 1), (69, 2), (67, 1), (66, 1), (64, 2), (62, 4)],
    "eb_major_tune": [(63, 3), (67, 1), (70, 2), (75, 2), (74, 1), (72, 1), (70, 2), (68, 1), (67, 1), (65, 2), (63, 4)],
    "a_major_tune": [(69, 2), (73, 2), (76, 2), (81, 2), (80, 1), (78, 1), (76, 1), (74, 1), (73, 2), (71, 2), (69, 4)],
}


def estimate(notes):
    hist = np.zeros(12)
    for pitch, dur in notes:
        hist[pitch % 12] += dur
    scores = [np.corrcoef(hist, np.roll(PROFILE, k))[0, 1] for k in range(12)]
    best = int(np.argmax(scores))  # argmax returns the first (smallest shift) on ties
    return best, scores


if __name__ == "__main__":
    for name, notes in CASES.items():
        tonic, scores = estimate(notes)
        print(f"{name}: tonic={tonic} shift={-tonic} r={scores[tonic]:.12f}")
