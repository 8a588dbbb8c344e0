"""Nelder-Mead refinement of the gap-family example geometry (polygon model)."""

import sys

import numpy as np
from scipy.optimize import minimize

sys.path.insert(0, "tools")
from tune_layout import evaluate  # noqa: E402


def params(v):
    ay, bx, by, gx, gy, ox, oy = v
    return {
        "center_half_x": 26.0, "center_half_y": ay,
        "inner_half_x": bx, "inner_half_y": by, "inner_shift_y": 0.0,
        "gap_half_x": gx, "gap_half_y": gy,
        "outer_half_x": ox, "outer_half_y": oy, "outer_shift_y": 0.0,
    }


def cost(v):
    ay, bx, by, gx, gy, ox, oy = v
    if not (40 <= ay <= 110 and 30 <= bx <= 70 and by >= ay + 15 and
            gx >= bx + 6 and gy >= by + 8 and ox >= gx + 40 and oy >= gy + 30 and
            ox <= 400 and oy <= 400):
        return 1e6
    out = evaluate(params(v), verbose=False)
    if out is None:
        return 1e6
    fy, fx, fz = sorted(out["freqs"])
    c = 0.0
    c += 30 * np.log(out["h0"] / 30.0) ** 2
    c += 50 * np.log(out["h1"] / 52.0) ** 2
    c += 25 * np.log(out["hout"] / 87.0) ** 2
    c += 20 * np.log(fy / 2.3) ** 2
    c += 20 * np.log(fx / 6.1) ** 2
    c += 15 * np.log(fz / 8.4) ** 2
    c += -2.0 * np.log(out["depth1_K"] / 1200.0)
    c += 60 * max(0.0, np.log(out["depth0_K"] / (0.92 * out["depth1_K"]))) ** 2
    c += 8 * max(0.0, np.log(0.70 * out["depth1_K"] / out["depth0_K"])) ** 2
    print(
        f"c={c:8.3f} v=[{', '.join(f'{x:.1f}' for x in v)}] "
        f"h={out['h0']:.1f}/{out['h1']:.1f}/{out['hout']:.1f} "
        f"f={fy:.2f}/{fx:.2f}/{fz:.2f} d={out['depth0_K']:.0f}/{out['depth1_K']:.0f}",
        flush=True,
    )
    return c


def main():
    v0 = np.array([62, 40, 105, 60, 145, 160, 200], dtype=float)
    if len(sys.argv) > 2:
        v0 = np.array([float(x) for x in sys.argv[2:9]])
    res = minimize(
        cost, v0, method="Nelder-Mead",
        options={"maxfev": int(sys.argv[1]) if len(sys.argv) > 1 else 250,
                 "xatol": 0.2, "fatol": 1e-4},
    )
    print("BEST:", [round(float(x), 2) for x in res.x], res.fun)


if __name__ == "__main__":
    main()
