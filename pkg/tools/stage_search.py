"""Two-stage parameter search for the example trap dimensions.

Stage 1: center + outer boundary (cx, cy, ox, oy) -> h1, fx, fy, depth1.
Stage 2: middle boundary (ix, iy) -> h0, hout, depth0.
Shifts for the principal-axis tilt are tuned afterwards.
"""

import sys

import numpy as np
from scipy.constants import Boltzmann
from scipy.optimize import minimize

from fibertrap import layout as L
from fibertrap import trap

DRIVE = trap.RfDrive(omega_rf=2 * np.pi * 45e6, v_inner=50.0)


def build(cx, cy, ix, iy, ox, oy, dy1=0.0, dy2=0.0):
    return L.build_ring_trap_layout(
        center_half_x=cx, center_half_y=cy,
        inner_half_x=ix, inner_half_y=iy, inner_shift_y=dy1,
        outer_half_x=ox, outer_half_y=oy, outer_shift_y=dy2,
    )


def alpha1_observables(cx, cy, ox, oy):
    # middle boundary is irrelevant at alpha=1; place it anywhere legal
    ix, iy = 0.5 * (cx + ox), 0.5 * (cy + oy)
    lay = build(cx, cy, ix, iy, ox, oy)
    if L.validate_layout(lay):
        return None
    d1 = DRIVE.replace_alpha(1.0)
    n1 = trap.find_rf_null(lay, d1)
    modes = trap.secular_modes(lay, d1, trap.MG24, n1)
    depth, _ = trap.trap_depth(lay, d1, trap.MG24, n1)
    return {
        "h1": n1[2] * 1e6,
        "f": [m.frequency / 1e6 for m in modes],
        "depth1": depth / Boltzmann,
    }


def stage1_cost(v):
    cx, cy, ox, oy = v
    if not (26.0 <= cx <= 45 and cx <= cy <= 140 and cx + 30 <= ox <= 320 and
            max(oy0 := cy + 40, ox) - 1e9 < 1e12):
        pass
    if cx < 26.0 or cy < cx - 1e-9 or ox < cx + 40 or oy < cy + 40 or oy > 540 or ox > 330:
        return 1e6
    try:
        obs = alpha1_observables(cx, cy, ox, oy)
    except Exception:
        return 1e6
    if obs is None:
        return 1e6
    fy, fx, fz = sorted(obs["f"])
    c = 0.0
    c += 14 * np.log(obs["h1"] / 50.0) ** 2
    c += 8 * np.log(fy / 2.3) ** 2
    c += 8 * np.log(fx / 6.1) ** 2
    c += 8 * np.log(fz / 8.4) ** 2
    c += 6 * np.log(obs["depth1"] / 3800.0) ** 2
    print(f"  cost {c:8.4f}  cx={cx:6.1f} cy={cy:6.1f} ox={ox:6.1f} oy={oy:6.1f}  "
          f"h1={obs['h1']:5.1f} f={fy:4.2f}/{fx:4.2f}/{fz:5.2f} d1={obs['depth1']:6.0f}")
    return c


def main():
    v0 = np.array([float(x) for x in sys.argv[2:6]]) if len(sys.argv) > 5 else np.array(
        [26.5, 60.0, 135.0, 195.0])
    res = minimize(stage1_cost, v0, method="Nelder-Mead",
                   options={"maxfev": int(sys.argv[1]) if len(sys.argv) > 1 else 150,
                            "xatol": 0.3, "fatol": 1e-4})
    print("best:", res.x, res.fun)


if __name__ == "__main__":
    main()
