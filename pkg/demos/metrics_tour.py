"""Evaluate a noisy disparity estimate in disparity space and in depth space.

Shows which metrics change once disparities are converted to metric depth
with a stereo rig's baseline and focal length, and which cannot.
"""

import numpy as np

from dispfuse import metrics

rng = np.random.default_rng(7)
rig = metrics.CameraCalib(baseline=0.12, focal=700.0)

# a ground plane receding from 2 m to 12 m, plus a box at 3 m
rows = np.linspace(2.0, 12.0, 60)[::-1]
depth = np.repeat(rows[:, None], 80, axis=1)
depth[20:40, 30:55] = 3.0
gt = rig.baseline * rig.focal / depth

pred = gt + rng.normal(0, 1.0, gt.shape)
pred[:3] = 0.0  # a few rows the matcher gave up on

print("1 px of Gaussian noise on the disparity, top rows missing\n")
in_disp = metrics.evaluate(pred, gt)
print(in_disp.table(), "\n")
in_depth = metrics.evaluate(pred, gt, rig)
print(in_depth.table(), "\n")

print("log10 and the sigma accuracies are identical in both spaces: depth is")
print("B*F/d, so the depth ratio is the inverse of the disparity ratio and both")
print("metrics only look at |log ratio|.  abs_rel barely moves (to first order")
print("|dz|/z = |dd|/d), while RMSE switches units from pixels to metres.")

far = depth > 9
print("\nOn the far band (z > 9 m) one pixel of noise is a larger share of the signal:")
print("  abs_rel far %.3f vs whole image %.3f" % (
    metrics.abs_rel(pred, gt, far & (pred > 1e-6)), in_disp.abs_rel))

print("\nThe metric is not symmetric in its arguments:")
print("  abs_rel(pred=2, gt=1) =", metrics.abs_rel(np.array([[2.0]]), np.array([[1.0]])))
print("  abs_rel(pred=1, gt=2) =", metrics.abs_rel(np.array([[1.0]]), np.array([[2.0]])))
