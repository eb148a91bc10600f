"""Transport a mollified delta with a variable speed and compare the estimated
wave front set at several times with the Hamilton-flow prediction."""
import warnings

from gmicrolocal import expr as E
from gmicrolocal.fixtures import build_fixture
from gmicrolocal.hyperbolic import (CauchyProblem, HamiltonianField, bicharacteristic_lift,
                                    verify_propagation)
from gmicrolocal.nets import EpsilonGrid
from gmicrolocal.quantize import GridSpec, ResolutionWarning
from gmicrolocal.symbols import SymbolFamily

warnings.simplefilter("ignore", ResolutionWarning)

X, XI = E.x(0), E.xi(0)
spec, grid = GridSpec(1, 256), EpsilonGrid(1, 8)
g = build_fixture("delta1d", spec, grid)
P = SymbolFamily(E.mul(E.add(1.0, E.mul(0.5, E.sin(X))), XI), 1, 1, "(1+0.5 sin x) xi")

field = HamiltonianField(P)
field.validate()
curve = bicharacteristic_lift(field, [3.0], [64.0], (0.0, 1.0), 1e-3, 5)
print("lifted bicharacteristic (t, x, xi, tau):")
for r in curve.rows():
    print("  " + "  ".join(f"{v:9.4f}" for v in r))
print(f"characteristic residual {curve.residual:.2e}")

for rep in verify_propagation(CauchyProblem(P, g, record_times=[0.5, 1.0])):
    print(f"t={rep.t:+.1f} pass={rep.passed} estimated={sorted(rep.estimated)} "
          f"predicted={sorted(rep.predicted)}")
