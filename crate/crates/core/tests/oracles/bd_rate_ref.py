"""Reference BD-rate for tests/metrics.rs: natural-log cubic polyfit, numpy
polyint integration, written independently of the crate's normalized fit.

Run: python3 bd_rate_ref.py
"""
import numpy as np

anchor = ([0.1, 0.2, 0.4, 0.8], [28.0, 30.5, 33.1, 35.6])
test = ([0.09, 0.17, 0.33, 0.70], [28.3, 30.6, 33.4, 36.2])


def bd_rate(r1, q1, r2, q2):
    p1 = np.polyfit(q1, np.log(r1), 3)
    p2 = np.polyfit(q2, np.log(r2), 3)
    lo, hi = max(min(q1), min(q2)), min(max(q1), max(q2))
    i1 = np.polyint(p1)
    i2 = np.polyint(p2)
    d = (np.polyval(i2, hi) - np.polyval(i2, lo) - np.polyval(i1, hi) + np.polyval(i1, lo)) / (hi - lo)
    return (np.exp(d) - 1) * 100


print(repr(bd_rate(*anchor, *test)))
