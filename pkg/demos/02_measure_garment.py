# %% [markdown]
# # Measuring a generated garment
#
# Extract the garment pixels inside the refined mask, split them into body
# and sleeves with the parse map, and read off clothing length, sleeve
# length, shoulder width and waist width.

# %%
from vtonsize import measure, synthetic

layout = synthetic.Layout()
dims_cm = {"cl": 65, "sl": 60, "sw": 40, "ww": 44}
scene = synthetic.render(dims_cm, layout)

ic = measure.extract_garment(scene.rgb, scene.refined_mask)
regions = measure.split_regions(ic, scene.labels)
print("garment px:", int(ic.sum()), " body:", int(regions.body.sum()), " sleeves:", int(regions.sleeves.sum()))

# %%
raw = measure.measure(regions)
print("pixels:", {d: raw.get(d) for d in measure.DIMENSIONS})

# %% Pixels to centimetres, from a known scale or from the person's height
scale = measure.PixelScale(layout.cm_per_pixel)
print("cm:    ", {d: round(v, 3) for d, v in zip(measure.DIMENSIONS, (measure.to_cm(raw, scale).get(d) for d in measure.DIMENSIONS))})
print("height-derived scale:", measure.PixelScale.from_person_height(170, 850).cm_per_pixel)

# %% Sleeveless garments drop the sleeve length
bare = measure.GarmentRegions(regions.body, regions.body & False, regions.body & False)
print("sleeveless SL valid:", measure.measure(bare).valid["sl"])
