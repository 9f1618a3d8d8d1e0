"""Where should uncertainty sampling center? Fit the label-given-score curve
on bootstrap resamples and solve mean sigmoid = 1/2, instead of assuming
the raw score 0.5 is the decision boundary."""
import numpy as np

from rareloop.calibration import bootstrap_params, calibrated_threshold

rng = np.random.default_rng(7)

# scores from a miscalibrated model: the true boundary sits at 0.65
xs = rng.uniform(0, 1, size=1500)
p = 1.0 / (1.0 + np.exp(-12.0 * (xs - 0.65)))
ys = rng.random(1500) < p
print(f"{ys.sum()} positives in {len(xs)} labeled scores")

pairs = list(zip(xs.tolist(), ys.tolist()))
params = bootstrap_params(pairs, B=500, seed=1)
result = calibrated_threshold(params)

print(f"calibrated center x* = {result.x_star:.4f} (bracketed={result.bracketed})")
print(f"naive center        = 0.5000")

# querying around x* targets the actual boundary region
b0 = np.mean([q.beta0 for q in params])
b1 = np.mean([q.beta1 for q in params])
for x in (0.5, result.x_star, 0.8):
    prob = 1.0 / (1.0 + np.exp(-(b0 + b1 * x)))
    print(f"  P(positive | score={x:.3f}) ~ {prob:.3f}")
