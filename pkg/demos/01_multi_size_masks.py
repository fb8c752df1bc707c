# %% [markdown]
# # Multi-size try-on masks
#
# A tight garment mask grows into fitted and loose variants: smoothing,
# dilation and closing scaled by the size level, plus a rectangle hung off
# the elbow/wrist/hip keypoints. The classical refiner then smooths only a
# thin band around the edge.

# %%
import numpy as np

from vtonsize import pose, refine, synthetic

layout = synthetic.Layout()
dims = {"cl": 65, "sl": 60, "sw": 40, "ww": 44}
person, mo = synthetic.person_image(dims, layout)
kp = synthetic.keypoints_for(dims, layout)
print("tight mask pixels:", int(mo.sum()))

# %%
masks = pose.multi_size_masks(mo, kp)
for level, m in zip(pose.SizeLevel, masks):
    print(f"M{int(level)} ({level.label:>6}): {int(m.sum()):7d} px")
print("nested:", all(not (a & ~b).any() for a, b in zip(masks, masks[1:])))
print("level 1 is the tight mask:", masks[0].tobytes() == mo.tobytes())

# %% The keypoint rectangle alone, for the loose level
rect = pose.extension_rectangle(mo.shape, kp, 3)
rows = np.flatnonzero(rect.any(axis=1))
cols = np.flatnonzero(rect.any(axis=0))
print(f"rectangle rows {rows[0]}..{rows[-1]}, cols {cols[0]}..{cols[-1]}")

# %% Refinement touches only the edge band
refined = refine.refine_mask_classical(masks[2])
band = refine.edge_mask(masks[2])
changed = refined != masks[2]
print("changed pixels:", int(changed.sum()), "all inside band:", not (changed & ~band).any())

# %% Garment images for the larger sizes are stretched vertically
garment = np.ones((256, 192, 3)) * np.array(synthetic.GARMENT)
for level in (1, 2, 3):
    print(f"C{level}:", pose.adjust_garment(garment, level).shape)
