"""How the ILUT drop tolerance trades fill for GMRES iterations.

Condenses the VAG system on a 16^3 mesh, factors it with several drop
tolerances and solves with right-preconditioned GMRES. Smaller tolerances
keep more entries in L and U and need fewer iterations.

    python demos/preconditioner.py
"""
import time

from fracdarcy import assemble, eliminate_cells, gmres, ilut_factor
from fracdarcy.mesh import build_bundle
from fracdarcy.model import make_case
from fracdarcy.study import make_scheme

if __name__ == "__main__":
    case = make_case("isotropic")
    scheme = make_scheme("vag-fe", build_bundle("cartesian", 16), case.data)
    reduced = eliminate_cells(assemble(scheme, case))
    A = reduced.matrix
    print(f"reduced system: {A.shape[0]} unknowns, {A.nnz} nonzeros")
    print(f"{'drop':>8} {'fill':>6} {'iter':>5} {'residual':>10} {'seconds':>8}")
    for drop in (1e-2, 1e-3, 1e-4, 1e-5, 0.0):
        start = time.perf_counter()
        factors = ilut_factor(A, drop)
        result = gmres(A, reduced.rhs, factors, tol=1e-10)
        elapsed = time.perf_counter() - start
        print(f"{drop:>8.0e} {factors.nnz / A.nnz:>6.2f} {result.iterations:>5} "
              f"{result.residual:>10.2e} {elapsed:>8.2f}")
