"""Regenerate the bundled synthetic drive-cycle fixtures.

The official UDDS/WLTP traces are not redistributed here.  These are
deterministic stand-ins with comparable duration, distance, peak speed and
peak acceleration; users load the official traces from CSV when needed.

    python scripts/make_fixture_cycles.py
"""

from pathlib import Path

import numpy as np

KMH = 1.0 / 3.6
OUT = Path(__file__).resolve().parents[1] / "src" / "hesslab" / "data"


def _profile(segments, total):
    """Speed trace from (target_kmh, ramp_s, hold_s) segments.

    Transitions use a raised-cosine ramp so acceleration is continuous.
    """
    t_knots = [0.0]
    v_knots = [0.0]
    for target, ramp, hold in segments:
        t_knots.append(t_knots[-1] + ramp)
        v_knots.append(target * KMH)
        if hold > 0:
            t_knots.append(t_knots[-1] + hold)
            v_knots.append(target * KMH)
    t = np.arange(total, dtype=float)
    v = np.zeros_like(t)
    for i in range(len(t_knots) - 1):
        t0, t1 = t_knots[i], t_knots[i + 1]
        v0, v1 = v_knots[i], v_knots[i + 1]
        m = (t >= t0) & (t <= t1)
        s = (t[m] - t0) / (t1 - t0)
        v[m] = v0 + (v1 - v0) * 0.5 * (1.0 - np.cos(np.pi * s))
    v[t > t_knots[-1]] = v_knots[-1]
    return t, np.round(np.clip(v, 0.0, None), 3)


def _wobble(t, v, amp_kmh, period, seed):
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi)
    w = amp_kmh * KMH * np.sin(2 * np.pi * t / period + phase)
    # only disturb sustained cruising, never near a stop
    w *= np.clip((v - 8.0) / 4.0, 0.0, 1.0)
    return np.round(np.clip(v + w, 0.0, None), 3)


def udds_like():
    stop = 0.0
    seg = [
        (0, 20, 0),
        (48, 18, 6), (40, 8, 10), (50, 10, 18), (30, 10, 4), (0, 14, 18),
        (60, 22, 10), (75, 14, 24), (91, 18, 40), (80, 10, 26), (60, 12, 6), (0, 20, 6),
        (40, 14, 14), (25, 8, 4), (0, 10, 20),
        (35, 12, 18), (0, 12, 20),
        (45, 14, 22), (30, 8, 8), (0, 12, 26),
        (52, 16, 24), (0, 16, 18),
        (38, 12, 20), (0, 12, 24),
        (55, 16, 30), (42, 8, 12), (0, 14, 20),
        (30, 10, 10), (0, 10, 18),
        (45, 14, 26), (0, 14, 20),
        (40, 12, 16), (55, 10, 14), (0, 16, 22),
        (34, 12, 16), (0, 12, 24),
        (48, 14, 30), (0, 14, 20),
        (44, 14, 28), (28, 8, 8), (0, 12, 22),
        (52, 16, 26), (0, 16, 20),
        (36, 12, 12), (0, 12, 2),
    ]
    t, v = _profile(seg, 1370)
    v = _wobble(t, v, 2.0, 23.0, 11)
    v[-1] = stop
    return t, v


def wltp_like():
    seg = [
        # low
        (0, 12, 0), (18, 8, 6), (0, 8, 64), (40, 16, 20), (25, 10, 6), (50, 14, 24),
        (0, 20, 20), (35, 12, 24), (0, 12, 30), (45, 16, 40), (20, 12, 8), (0, 10, 40),
        (56, 20, 30), (30, 12, 10), (0, 12, 20),
        # medium
        (50, 16, 20), (70, 14, 30), (40, 16, 10), (0, 14, 18), (60, 20, 40),
        (76, 12, 36), (50, 14, 20), (0, 18, 24), (55, 18, 50), (74, 14, 24), (0, 24, 30),
        # high
        (70, 20, 30), (97, 20, 30), (80, 12, 30), (60, 12, 20), (0, 22, 14),
        (60, 18, 20), (85, 16, 30), (97, 12, 30), (70, 14, 20), (0, 24, 20),
        # extra-high
        (90, 26, 40), (120, 24, 34), (131, 16, 20), (110, 14, 20), (125, 14, 30),
        (80, 24, 10), (0, 32, 64),
    ]
    t, v = _profile(seg, 1801)
    v = _wobble(t, v, 2.5, 29.0, 23)
    v[-1] = 0.0
    return t, v


def _stats(name, t, v):
    dist = np.trapezoid(v, t) if hasattr(np, "trapezoid") else np.trapz(v, t)
    acc = np.diff(v)
    print(f"{name}: n={len(t)} dist={dist/1000:.2f} km ({dist/1609.344:.2f} mi) "
          f"vmax={v.max():.2f} m/s amax={acc.max():.2f} dmax={acc.min():.2f} "
          f"idle={np.mean(v == 0):.2f}")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in (("udds_like", udds_like), ("wltp_like", wltp_like)):
        t, v = fn()
        _stats(name, t, v)
        with open(OUT / f"{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("time_s,speed_mps\n")
            for ti, vi in zip(t, v):
                fh.write(f"{ti:.0f},{vi:.3f}\n")


if __name__ == "__main__":
    main()
