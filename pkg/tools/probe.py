"""Scratch probe: alpha=1 observables for candidate dimension sets."""

import sys

import numpy as np
from scipy.constants import Boltzmann

from fibertrap import layout as L
from fibertrap import trap

DRIVE = trap.RfDrive(omega_rf=2 * np.pi * 45e6, v_inner=50.0)


def a1(cx, cy, ox, oy, ea=2.0, eo=2.0, label=""):
    ix, iy = 0.5 * (cx + ox), 0.5 * (cy + oy)
    lay = L.build_ring_trap_layout(
        center_half_x=cx, center_half_y=cy,
        inner_half_x=ix, inner_half_y=iy, inner_shift_y=0.0,
        outer_half_x=ox, outer_half_y=oy, outer_shift_y=0.0,
        center_exponent=ea, outer_exponent=eo,
    )
    bad = L.validate_layout(lay)
    if bad:
        print(f"{label}: INVALID {[d.rule for d in bad]}")
        return
    d1 = DRIVE.replace_alpha(1.0)
    try:
        n1 = trap.find_rf_null(lay, d1)
        modes = trap.secular_modes(lay, d1, trap.MG24, n1)
        depth, _ = trap.trap_depth(lay, d1, trap.MG24, n1)
    except Exception as exc:  # noqa: BLE001
        print(f"{label}: FAIL {type(exc).__name__} {exc}")
        return
    f = [m.frequency / 1e6 for m in modes]
    fy, fx, fz = sorted(f)
    print(
        f"{label}: h1={n1[2] * 1e6:5.1f} f={fy:4.2f}/{fx:4.2f}/{fz:5.2f} "
        f"d1={depth / Boltzmann:6.0f}K"
    )


if __name__ == "__main__":
    for spec in sys.argv[1:]:
        vals = [float(t) for t in spec.split(",")]
        cx, cy, ox, oy = vals[:4]
        ea = vals[4] if len(vals) > 4 else 2.0
        eo = vals[5] if len(vals) > 5 else 2.0
        a1(cx, cy, ox, oy, ea, eo, label=spec)
