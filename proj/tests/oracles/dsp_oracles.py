"""Reference values for the DSP unit tests, computed with numpy/scipy.

Run: python3 tests/oracles/dsp_oracles.py
"""
import itertools
import math

import numpy as np
import scipy.signal as sg
import scipy.stats as st

np.set_printoptions(precision=17)
FS = 512.0


def corners(low=0.5, high=32.0, order=4, passes=2, edge_db=1.0):
    r = (10 ** (edge_db / (10 * passes)) - 1) ** (1 / (2 * order))
    lp = math.atan(math.tan(math.pi * high / FS) / r) * FS / math.pi
    hp = math.atan(math.tan(math.pi * low / FS) * r) * FS / math.pi
    return hp, lp


def bandpass_sos():
    hp, lp = corners()
    return np.vstack([sg.butter(4, hp, "highpass", fs=FS, output="sos"),
                      sg.butter(4, lp, "lowpass", fs=FS, output="sos")]), hp, lp


def test_signal(n):
    t = np.arange(n) / FS
    return np.sin(2 * np.pi * 7 * t) + 0.5 * np.sin(2 * np.pi * 60 * t) + 0.3 * np.cos(2 * np.pi * 0.2 * t) + 0.01 * np.arange(n) / FS


sos, hp, lp = bandpass_sos()
print("corners", repr(hp), repr(lp))
freqs = [0.0, 0.5, 1.0, 10.0, 31.0, 32.0, 64.0, 100.0]
_, h = sg.sosfreqz(sos, worN=np.array(freqs), fs=FS)
print("zero-phase gain dB", [repr(20 * np.log10(max(abs(v) ** 2, 1e-300))) for v in h])
n = 2048
x = test_signal(n)
pad = min(n - 1, max(51, math.ceil(3 * FS / hp)))
y = sg.sosfiltfilt(sos, x, padtype="odd", padlen=pad)
print("pad", pad, "filtfilt", [repr(y[i]) for i in (0, 100, 1024, 2047)])

# Decimator.
A, trans, cut = 40.0, 4.0, 30.0
beta = 0.5842 * (A - 21) ** 0.4 + 0.07886 * (A - 21)
numtaps = math.ceil((A - 8) / (2.285 * 2 * np.pi * trans / FS)) + 1
numtaps += 1 - numtaps % 2
taps = sg.firwin(numtaps, cut, window=("kaiser", beta), fs=FS, scale=True)
print("numtaps", numtaps, "beta", repr(beta), "taps", [repr(taps[i]) for i in (0, 50, numtaps // 2)])
half = (numtaps - 1) // 2
xd = test_signal(1000)
ext = np.concatenate([2 * xd[0] - xd[half:0:-1], xd, 2 * xd[-1] - xd[-2:-half - 2:-1]])
full = np.convolve(ext, taps)
dec = [full[m * 8 + half + half] for m in range(1000 // 8)]
print("decimated", [repr(dec[i]) for i in (0, 10, 60, 124)])
w, hd = sg.freqz(taps, worN=np.array([0.0, 26.0, 30.0, 34.0, 40.0]), fs=FS)
print("decimator gain", [repr(abs(v)) for v in hd])

# Mel filterbank (HTK mel scale, unnormalised triangles over FFT bin frequencies).
def hz2mel(f):
    return 2595 * np.log10(1 + f / 700)


def mel2hz(m):
    return 700 * (10 ** (m / 2595) - 1)


sr, n_fft, n_mels = 16000, 512, 28
edges = mel2hz(np.linspace(hz2mel(0), hz2mel(8000), n_mels + 2))
fft_f = np.arange(n_fft // 2 + 1) * sr / n_fft
bank = np.zeros((n_mels, fft_f.size))
for m in range(n_mels):
    lo, c, hi = edges[m:m + 3]
    bank[m] = np.maximum(0, np.minimum((fft_f - lo) / (c - lo), (hi - fft_f) / (hi - c)))
print("bank", [repr(bank[m, k]) for m, k in ((0, 1), (5, 12), (27, 240), (13, 50))])
tone = 0.1 * np.sin(2 * np.pi * 1000 * np.arange(8000) / sr)
emph = np.concatenate([[tone[0]], tone[1:] - 0.97 * tone[:-1]])
win = np.hamming(500)
frame = emph[3 * 250:3 * 250 + 500] * win
spec = np.abs(np.fft.rfft(frame, n_fft)) ** 2
logmel = np.log(bank @ spec + 1e-10)
print("logmel frame 3", [repr(logmel[i]) for i in (0, 5, 10, 27)], "argmax", int(np.argmax(logmel)))

# Wilcoxon signed-rank.
a = np.array([1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30])
b = np.array([0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29])
print("wilcoxon exact", repr(st.wilcoxon(a, b, method="exact").pvalue))


def brute(d):
    d = np.asarray([v for v in d if v != 0])
    ranks = st.rankdata(np.abs(d))
    w = ranks[d > 0].sum()
    sums = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product([0, 1], repeat=len(d))]
    sums = np.array(sums)
    lower = np.mean(sums <= w + 1e-9)
    upper = np.mean(sums >= w - 1e-9)
    return w, min(1.0, 2 * min(lower, upper))


tied = np.array([1, -2, 2, 3, 3, 3, -4, 5, 6, 0, 7, -1])
print("wilcoxon tied brute", brute(tied))
rng = np.random.default_rng(0)
big_a = np.round(rng.normal(0.3, 1, 40), 1)
big_b = np.zeros(40)
res = st.wilcoxon(big_a, big_b, method="approx", correction=True, zero_method="wilcox")
print("wilcoxon approx", repr(res.pvalue), "big_a", big_a.tolist())
