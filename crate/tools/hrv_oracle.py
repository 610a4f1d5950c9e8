"""Independent HRV and stress-constant computation for the bundled corpus.

Writes fixtures/hrv_oracle.json, which the Rust tests compare against.
Run from the workspace root: python3 tools/hrv_oracle.py
"""
import json
import pathlib

import numpy as np
from scipy.signal import periodogram

ROOT = pathlib.Path(__file__).resolve().parent.parent
WEIGHTS = np.array([-0.4, -0.3, 0.3])


def peaks(ppg, fs):
    n = len(ppg)
    half = int(round(fs)) // 2
    trend = np.array([ppg[max(0, i - half):min(n, i + half + 1)].mean() for i in range(n)])
    x = ppg - trend
    w = int(round(10 * fs))
    starts = list(range(0, n, w))
    spans = [(s, min(s + w, n)) for s in starts]
    if len(spans) > 1 and spans[-1][1] - spans[-1][0] < w // 2:
        spans[-2] = (spans[-2][0], spans[-1][1])
        spans.pop()
    thr = np.empty(n)
    for s, e in spans:
        seg = x[s:e]
        thr[s:e] = seg.mean() + 0.5 * seg.std()
    kept = []
    for i in range(1, n - 1):
        if x[i] > x[i - 1] and x[i] >= x[i + 1] and x[i] > thr[i]:
            if kept and i - kept[-1] < 0.3 * fs:
                if x[i] > x[kept[-1]]:
                    kept[-1] = i
            else:
                kept.append(i)
    out = []
    for i in kept:
        a, b, c = x[i - 1], x[i], x[i + 1]
        d = a - 2 * b + c
        out.append((i + (0.5 * (a - c) / d if d != 0 else 0.0)) / fs)
    return np.array(out)


def features(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    fs = 1000.0 / np.median(np.diff(data["date"]))
    t = peaks(data["ppg"], fs)
    nn = np.diff(t) * 1000.0
    d = np.diff(nn)
    grid = np.arange(t[1], t[-1] + 1e-12, 0.25)
    res = np.interp(grid, t[1:], nn)
    f, psd = periodogram(res, fs=4.0, window="boxcar", detrend="constant", scaling="density")
    df = f[1] - f[0]
    lf = psd[(f >= 0.04) & (f < 0.15)].sum() * df
    hf = psd[(f >= 0.15) & (f < 0.4)].sum() * df
    return {
        "mean_hr": 60000.0 / nn.mean(),
        "sdnn": nn.std(),
        "rmssd": np.sqrt(np.mean(d * d)),
        "pnn50": float(np.mean(np.abs(d) > 50)),
        "mean_nn": nn.mean(),
        "lf": lf,
        "hf": hf,
        "lf_hf": lf / hf,
        "beats": len(t),
    }


def main():
    patients = sorted(p.name for p in (ROOT / "data").iterdir() if p.is_dir())
    feats = {p: features(ROOT / "data" / p / "ppg.csv") for p in patients}
    x = np.array([[feats[p]["rmssd"], feats[p]["sdnn"], feats[p]["lf_hf"]] for p in patients])
    mean, std = x.mean(axis=0), x.std(axis=0)
    scores = ((x - mean) / std) @ WEIGHTS
    s = np.sort(scores)
    edges = (s[:-1] + s[1:]) / 2
    out = {
        "features": {p: {k: float(v) for k, v in feats[p].items()} for p in patients},
        "norms": {"mean": mean.tolist(), "std": std.tolist()},
        "scores": dict(zip(patients, scores.tolist())),
        "bin_edges": edges.tolist(),
    }
    (ROOT / "fixtures").mkdir(exist_ok=True)
    (ROOT / "fixtures" / "hrv_oracle.json").write_text(json.dumps(out, indent=2) + "\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
