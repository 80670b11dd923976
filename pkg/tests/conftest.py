import os
import sys

import pytest

_HERE = os.path.dirname(os.path.abspath(__file__))
for p in (os.path.join(_HERE, os.pardir, "src"), _HERE):
    p = os.path.abspath(p)
    if p not in sys.path:
        sys.path.insert(0, p)


@pytest.fixture(scope="session")
def pretrained_circle04():
    """Full-size net distilled from the radius-0.4 circle (the standard
    inversion starting shape). Expensive; shared across modules."""
    from sdfscat import inverse, siren
    from sdfscat.sdfgeom import Rect, circle_sdf

    target = circle_sdf((0.0, 0.0), 0.4, Rect(-1.1, 1.1, -1.1, 1.1), 64, 64)
    return inverse.fit_sdf(target, siren.SirenConfig(), 5000, 2e-4, 0)


@pytest.fixture(scope="session")
def unit_circle_net():
    """Full-size net distilled from the unit circle with the high-accuracy
    recipe (full batch, lr 5e-3): max |eta - target| ~ 2e-3 over the grid
    nodes, ~1e-4 rms on the zero-level set. Expensive; shared across
    modules."""
    from sdfscat import inverse, siren
    from sdfscat.sdfgeom import Rect, circle_sdf

    target = circle_sdf((0.0, 0.0), 1.0, Rect(-1.275, 1.275, -1.275, 1.275),
                        64, 64)
    return inverse.fit_sdf(target, siren.SirenConfig(), 5000, 5e-3, 0, 4096)
