# %% [markdown]
# # Size increments and their error
#
# Adjacent size levels should differ by standard increments (3, 1, 2 and
# 3 cm for CL, SL, SW, WW). Observed increments are scored with MAE, RMSE,
# MAPE and SMAPE, and combined with weights proportional to each
# dimension's size.

# %%
from vtonsize import measure, size_eval


def cm(*v):
    return measure.Measurement(*v, unit="cm")


t = size_eval.SizeTriplet({1: cm(65, 60.0, 40, 50), 2: cm(68, 61.2, 42, 53), 3: cm(71, 61.9, 44, 56)})
for pair, row in size_eval.increments(t).items():
    print(pair, {d: round(v, 3) for d, v in row.items()})

# %%
m = size_eval.error_metrics([3.3], 3.0)
print(f"o=3.3 vs s=3: MAE {m.mae:.2f}  RMSE {m.rmse:.2f}  MAPE {m.mape:.2f}%  SMAPE {m.smape:.2f}%")

# %% Size-sensitivity weights
ref = {"cl": 66.0, "sl": 60.0, "sw": 40.0, "ww": 50.0}
print("weights:", {d: round(w, 4) for d, w in size_eval.dimension_weights(ref).items()})
print("weighted (1,2,3,4):", size_eval.weighted_score({"cl": 1, "sl": 2, "sw": 3, "ww": 4}, ref), "=", 506 / 216)

# %% A batch: raw weighted error X_t and normalised score E_t per pair
rep = size_eval.evaluate_batch([("a", t)])
for pair, s in rep.scores.items():
    print(pair, f"X_t={s['x_t']:.4f}  E_t={s['e_t']:.4f}")
