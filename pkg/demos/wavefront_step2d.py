"""Estimate the wave front set of a mollified 2D step and print a sector map.

Each row is one spatial cell; each column one of 16 frequency sectors.
'#' marks a direction where the Fourier decay fails to improve with the
localization order, '.' a regular direction.
"""
import warnings

import numpy as np

from gmicrolocal.fixtures import build_fixture
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.quantize import GridSpec, ResolutionWarning
from gmicrolocal.symbols import ConeGrid
from gmicrolocal.wavefront import CellDecomposition, wavefront_estimate

warnings.simplefilter("ignore", ResolutionWarning)

spec, grid = GridSpec(2, 128), EpsilonGrid(1, 8)
cells, cones = CellDecomposition(spec), ConeGrid(2, 16)
u = build_fixture("heaviside2d", spec, grid)
est = wavefront_estimate(u, cells, cones)

angles = [np.degrees(cones.center_angle(d)) for d in range(cones.count)]
print("sector centres (deg):", " ".join(f"{a:.0f}" for a in angles))
for c in cells.cells:
    row = "".join("#" if (c, d) in est.singular else "." for d in range(cones.count))
    print(f"cell {c}: {row}")
print("singular cells:", est.singular_cells())
