"""Time profiles of the two Besov controls on the desk chain.

Columns are lag, total norm, low-frequency part and thermic part. The
printed slopes sit next to the predicted power laws; the thermic integral is
cut at v = 1, which steepens the measured decay at lags of order one.

    python3 demos/besov_controls.py
"""
import numpy as np

from kolmo.besov import control_series, first_besov_control, first_control_exponent, second_besov_control
from kolmo.catalogue import desk_level2_drift
from kolmo.verify import desk_ou

ou = desk_ou()
lags = np.geomspace(0.025, 0.6, 4)
for l in (0, 1):
    target = first_control_exponent(1.5, 0.4, 2, l)
    ser = control_series(lambda **kw: first_besov_control(ou, l=l, **kw), lags, target)
    print(f"first control, l = {l}: slope {ser.slope:.3f}, predicted {target:.3f}")
    for row in ser.rows():
        print("   ", "  ".join(f"{v:10.4g}" for v in row))

drift = desk_level2_drift(1.0)
ser = control_series(lambda **kw: second_besov_control(ou, drift, x=np.array([0.0, -0.2]), **kw),
                     lags, 0.4 / 1.5)
print(f"second control: slope {ser.slope:.3f}, predicted {0.4 / 1.5:.3f}")
