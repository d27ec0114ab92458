"""Refine the Cartesian mesh and watch both schemes converge.

Runs VAG (conforming and lumped) and HFV on the isotropic test case with
4, 8 and 16 cells per axis and prints errors with the observed orders. The
orders are measured against the cube root of the cell count, so 2 means
second order in the mesh size.

    python demos/convergence.py
"""
from fracdarcy import StudyConfig, run_study


def show(result):
    cfg = result.config
    print(f"\n{cfg.scheme} on {cfg.mesh} meshes")
    print(f"{'n':>4} {'dofs':>7} {'iter':>5} {'err_sol':>10} {'err_grad':>10} "
          f"{'a_sol':>6} {'a_grad':>6}")
    for lv in result.levels:
        a_sol, a_grad, _ = lv.orders
        print(f"{lv.n:>4} {lv.n_dofs:>7} {lv.iterations:>5} {lv.errors.err_sol:>10.3e} "
              f"{lv.errors.err_grad:>10.3e} "
              f"{'' if a_sol is None else f'{a_sol:.2f}':>6} "
              f"{'' if a_grad is None else f'{a_grad:.2f}':>6}")


if __name__ == "__main__":
    for scheme in ("vag-fe", "vag-cv", "hfv"):
        show(run_study(StudyConfig(scheme=scheme, levels=(4, 8, 16))))
