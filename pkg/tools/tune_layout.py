"""Scratch tool: evaluate/tune the bundled example trap dimensions.

Targets for the frozen geometry (45 MHz drive, 50 V, 24Mg+):
  null heights  30 um (alpha=0), 50 um (alpha=1), 90 um (outer only)
  mode frequencies 2.3 / 6.1 / 8.4 MHz at alpha=1, lowest axis tilted
  ~15 deg from -y toward +z, depths ~3100 K (alpha=0) < ~3800 K (alpha=1)
"""

import sys

import numpy as np

from fibertrap import layout as L
from fibertrap import trap


def evaluate(params, verbose=True):
    lay = L.build_ring_trap_layout(**params)
    bad = L.validate_layout(lay)
    if bad:
        if verbose:
            for d in bad:
                print("  INVALID:", d.message)
        return None
    drive = trap.RfDrive(omega_rf=2 * np.pi * 45e6, v_inner=50.0)
    out = {}
    try:
        n0 = trap.find_rf_null(lay, drive.replace_alpha(0.0))
        n1 = trap.find_rf_null(lay, drive.replace_alpha(1.0), guess=n0)
        drive_out = trap.RfDrive(drive.omega_rf, drive.v_inner, inner_grounded=True)
        nout = trap.find_rf_null(lay, drive_out, guess=n1)
        out["h0"] = n0[2] * 1e6
        out["h1"] = n1[2] * 1e6
        out["hout"] = nout[2] * 1e6
        out["null1_xy"] = (n1[0] * 1e6, n1[1] * 1e6)
        modes = trap.secular_modes(lay, drive.replace_alpha(1.0), trap.MG24, n1)
        out["freqs"] = [m.frequency / 1e6 for m in modes]
        low = modes[0].axis
        if low[1] > 0:
            low = -low
        out["low_axis"] = low
        out["tilt"] = np.degrees(np.arctan2(low[2], -low[1]))
        d0, _ = trap.trap_depth(lay, drive.replace_alpha(0.0), trap.MG24, n0)
        d1, _ = trap.trap_depth(lay, drive.replace_alpha(1.0), trap.MG24, n1)
        from scipy.constants import Boltzmann

        out["depth0_K"] = d0 / Boltzmann
        out["depth1_K"] = d1 / Boltzmann
    except Exception as exc:  # noqa: BLE001
        if verbose:
            print("  FAILED:", type(exc).__name__, exc)
        return None
    if verbose:
        print(
            "  h0={h0:6.1f} h1={h1:6.1f} hout={hout:6.1f} um   "
            "f={freqs[0]:.2f}/{freqs[1]:.2f}/{freqs[2]:.2f} MHz  "
            "tilt={tilt:5.1f} deg  depth0={depth0_K:6.0f}K depth1={depth1_K:6.0f}K "
            "nullxy=({null1_xy[0]:.1f},{null1_xy[1]:.1f})".format(**out)
        )
    return out


def penalty(out):
    if out is None:
        return 1e9
    p = 0.0
    p += (np.log(out["h0"] / 30.0)) ** 2 * 12
    p += (np.log(out["h1"] / 50.0)) ** 2 * 12
    p += (np.log(out["hout"] / 90.0)) ** 2 * 8
    targets = (2.3, 6.1, 8.4)
    for f, t in zip(sorted(out["freqs"]), targets):
        p += (np.log(f / t)) ** 2 * 6
    p += ((out["tilt"] - 15.0) / 15.0) ** 2 * 2
    p += (np.log(out["depth0_K"] / 3100.0)) ** 2 * 2
    p += (np.log(out["depth1_K"] / 3800.0)) ** 2 * 2
    if out["depth0_K"] >= out["depth1_K"]:
        p += 5.0
    return p


BASE = dict(L.EXAMPLE_DIMENSIONS)


def params_from_vector(v):
    p = dict(BASE)
    (
        p["center_half_x"],
        p["center_half_y"],
        p["inner_half_x"],
        p["inner_half_y"],
        p["inner_shift_y"],
        p["outer_half_x"],
        p["outer_half_y"],
        p["outer_shift_y"],
    ) = v
    return p


def feasible(v):
    cx, cy, ix, iy, dy1, ox, oy, dy2 = v
    if cx < 26.0 or cy < 26.0:
        return False
    if ix < cx + 6 or iy < cy + abs(dy1) + 6:
        return False
    if ox < ix + 20 or oy < iy + abs(dy1) + abs(dy2) + 20:
        return False
    if oy + abs(dy2) > 540:
        return False
    return True


def main():
    if len(sys.argv) > 1 and sys.argv[1] == "search":
        from scipy.optimize import minimize

        v0 = np.array([BASE[k] for k in (
            "center_half_x", "center_half_y", "inner_half_x", "inner_half_y",
            "inner_shift_y", "outer_half_x", "outer_half_y", "outer_shift_y",
        )])

        def cost(v):
            if not feasible(v):
                return 1e9
            out = evaluate(params_from_vector(v), verbose=False)
            c = penalty(out)
            print("cost %.4f  at %s" % (c, np.array2string(v, precision=1)))
            return c

        res = minimize(cost, v0, method="Nelder-Mead",
                       options={"maxfev": int(sys.argv[2]) if len(sys.argv) > 2 else 120,
                                "xatol": 0.2, "fatol": 1e-3})
        print(res.x)
        evaluate(params_from_vector(res.x))
    else:
        evaluate(BASE)


if __name__ == "__main__":
    main()
