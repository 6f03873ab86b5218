"""Canonical-form geometry of the elastic-shaft manipulator.

The manipulator is linear apart from a gravity cosine on the output, so its
canonical-form map is a constant matrix built from the output chain and the
characteristic polynomial. The script prints that matrix, checks the
existence conditions at random points, and shows that doubling the pairing
field breaks the normalization check.

Run: python demos/esslm_canonical_form.py
"""

import numpy as np

from distobs.cli import cmd_check_geometry
from distobs.geometry import verify_diffeomorphism
from distobs.models import make_leader

m = make_leader('esslm')
np.set_printoptions(precision=6, suppress=True)
print("eta = T w with T =")
print(m.T)
print("linear-part coefficients a0..a3:", m.charpoly)

W = np.random.default_rng(0).uniform(-2, 2, (1000, 4))
rep = verify_diffeomorphism(m, W, tol=1e-4)
print(f"pushforward defect {rep.max_pushforward:.1e}, "
      f"round trip {rep.max_roundtrip:.1e}")

for scale in (1.0, 2.0):
    _, rep, text = cmd_check_geometry('esslm', samples=30, tau_scale=scale)
    print(f"\ntau scaled by {scale:g}:")
    print(text.strip())
