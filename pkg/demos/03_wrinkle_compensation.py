# %% [markdown]
# # Wrinkle compensation
#
# Wrinkles shorten a garment's apparent size. Ridges are found with a
# Frangi branch and a Gabor branch, split into components, routed to a
# dimension by orientation and body zone, and their skeleton length drives
# a piecewise ratio that inflates the measurement.

# %%
from vtonsize import measure, synthetic, wrinkle

for L in (4000, 7500, 12500, 17500, 19999, 20000):
    print(f"R({L:>5}) = {wrinkle.compensation_ratio(L):.5f}")
print("400 px with L=7500 ->", wrinkle.compensated_length(400, 7500))

# %% One ridge per zone and orientation
import numpy as np

H, W = 600, 700
body = np.zeros((H, W), bool)
body[40:560, 180:520] = True
sleeve = np.zeros((H, W), bool)
sleeve[40:560, 20:170] = True
regions = measure.GarmentRegions(body, np.zeros_like(body), sleeve)
cases = {"30 deg, upper body": (170, 350, 30, 160), "70 deg, upper body": (170, 350, 70, 160),
         "70 deg, lower body": (430, 350, 70, 160), "30 deg, sleeve": (300, 95, 30, 120)}
for name, seg in cases.items():
    gray = 0.4 + 0.3 * synthetic.ridge_layer((H, W), [seg])
    rep = wrinkle.analyze_wrinkles(gray, regions)
    (c,) = rep.components
    print(f"{name:<20} -> {c.dimension}  length {c.length:6.1f} (drawn {seg[3]})")

# %% A garment carrying ~7500 px of wrinkles per dimension
layout = synthetic.Layout(height=1400, width=1400, top=100, torso_half=330, gap=24, sleeve_width=240)
dims = {"cl": 130, "sl": 120, "sw": 70, "ww": 76}
scene = synthetic.render(dims, layout, synthetic.wrinkle_segments(dims, layout, 7500))
regions = measure.GarmentRegions(scene.body, scene.left_sleeve, scene.right_sleeve)
rep = wrinkle.analyze_wrinkles(scene.rgb.mean(axis=2), regions)
raw = measure.measure(regions)
comp = wrinkle.compensate(raw, rep)
for d in measure.DIMENSIONS:
    print(f"{d.upper()}: L={rep.lengths[d]:7.1f}  R={rep.ratios[d]:.4f}  {raw.get(d):6.1f} -> {comp.get(d):6.1f} px")
