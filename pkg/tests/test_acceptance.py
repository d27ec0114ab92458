"""End-to-end acceptance checks.

Each test records its findings in the ``acceptance`` log, and the terminal
summary prints one PASS/FAIL verdict per criterion. Reference values come
from reference tables for the test case (isotropic and anisotropic
Cartesian runs, mesh keys 1-3 with 8, 16 and 32 cells per axis).
"""
import time
import warnings

import numpy as np
import pytest

from fracdarcy.assembly import (assemble, eliminate_cells, global_matrix, impose_dirichlet,
                                jacobian_nnz, recover_cells)
from fracdarcy.errors import convergence_orders, discrete_jump_norm
from fracdarcy.layout import local_fluxes
from fracdarcy.mesh import FRACTURE_PLANE_NORMALS, build_bundle
from fracdarcy.model import SIDE_SUBDOMAIN, CompatibilityWarning, FRACTURE_AXIS, make_case
from fracdarcy.study import StudyConfig, make_scheme, solve_level

HEX = (8, 16, 32)
TET = (6, 12, 24)

TABLE_COUNTS = {
    "vag-fe": {"dofs": (1949, 11701, 79205), "eliminated": (1437, 7605, 46437),
               "jac": (31253, 178845, 1154861)},
    "hfv": {"dofs": (2776, 19248, 142432), "eliminated": (2264, 15152, 109664),
            "jac": (20696, 150320, 1141856)},
}
VAG_ISO = {"err_sol": (5.78e-3, 1.53e-3, 3.92e-4), "err_grad": (1.74e-2, 4.44e-3, 1.14e-3),
           "err_jump": (8.99e-3, 2.53e-3, 6.72e-4)}
HFV_ISO_SOL = (1.34e-2, 3.49e-3, 8.91e-4)
ANISO_SOL = {"vag-fe": (8.78e-3, 2.37e-3, 6.15e-4), "vag-cv": (9.09e-3, 2.46e-3, 6.37e-4)}
ITERATIONS = {("vag-fe", "isotropic"): (8, 12, 22), ("hfv", "isotropic"): (11, 19, 35),
              ("vag-fe", "anisotropic"): (7, 9, 14), ("vag-cv", "anisotropic"): (7, 9, 15)}

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="session")
def runs():
    """Memoized ``solve_level`` calls; each entry keeps its wall time."""
    cache = {}

    def get(scheme, mesh, n, case="isotropic", **options):
        key = (scheme, mesh, n, case, tuple(sorted(options.items())))
        if key not in cache:
            config = StudyConfig(scheme=scheme, mesh=mesh, levels=(n,), case=case, **options)
            start = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CompatibilityWarning)
                result = solve_level(config, n)
            result.wall_seconds = time.perf_counter() - start
            cache[key] = result
        return cache[key]

    get.cache = cache
    return get


def within(value, ref, rel):
    return abs(value - ref) <= rel * abs(ref)


def fmt(values):
    return "/".join(f"{v:.3g}" for v in values)


def orders(levels, name):
    return convergence_orders([getattr(r.errors, name) for r in levels],
                              [r.n_cells for r in levels])


# -- 1: dof counts ----------------------------------------------------------------

@pytest.mark.parametrize("scheme", ["vag-fe", "hfv"])
def test_dof_counts(runs, acceptance, scheme):
    levels = [runs(scheme, "cartesian", n) for n in HEX]
    ref = TABLE_COUNTS[scheme]
    got = {"dofs": tuple(r.n_dofs for r in levels),
           "eliminated": tuple(r.n_dofs_eliminated for r in levels),
           "jac": tuple(jacobian_nnz(r.scheme) for r in levels)}
    for what in ("dofs", "eliminated", "jac"):
        acceptance.record(1, got[what] == ref[what],
                          f"{scheme} {what}: {got[what]} (table {ref[what]})")
    assert got == ref


# -- 2: isotropic error reproduction -----------------------------------------------

@pytest.mark.parametrize("name", ["err_sol", "err_grad"])
def test_vag_isotropic_errors(runs, acceptance, name):
    got = [getattr(runs("vag-fe", "cartesian", n).errors, name) for n in HEX]
    ref = VAG_ISO[name]
    ok = all(within(g, r, 0.10) for g, r in zip(got, ref))
    acceptance.record(2, ok, f"vag-fe {name} {fmt(got)} vs {fmt(ref)} (+-10%)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the jump norm is off by a constant factor; see notes")
def test_vag_isotropic_jump_error(runs, acceptance):
    levels = [runs("vag-fe", "cartesian", n) for n in HEX]
    got = [r.errors.err_jump for r in levels]
    minus = [r.errors.err_jump_minus for r in levels]
    ref = VAG_ISO["err_jump"]
    ok = all(within(g, r, 0.10) for g, r in zip(got, ref))
    acceptance.record(2, ok, f"vag-fe err_jump {fmt(got)} vs {fmt(ref)} (+-10%); "
                             f"alternate denominator gives {fmt(minus)}")
    assert ok


def test_hfv_isotropic_solution_error(runs, acceptance):
    got = [runs("hfv", "cartesian", n).errors.err_sol for n in HEX]
    ok = all(within(g, r, 0.20) for g, r in zip(got, HFV_ISO_SOL))
    acceptance.record(2, ok, f"hfv err_sol {fmt(got)} vs {fmt(HFV_ISO_SOL)} (+-20%)")
    assert ok


def test_isotropic_runtime(runs, acceptance):
    total = sum(runs(s, "cartesian", n).wall_seconds for s in ("vag-fe", "hfv") for n in HEX)
    ok = total < 120.0
    acceptance.record(2, ok, f"six isotropic runs took {total:.1f} s (limit 120 s)")
    assert ok


# -- 3: convergence orders ---------------------------------------------------------

ORDER_BOUNDS = [
    ("vag-fe", "cartesian", HEX, "err_sol", (1.8, 2.1)),
    ("vag-fe", "cartesian", HEX, "err_grad", (1.8, 2.1)),
    ("hfv", "cartesian", HEX, "err_grad", (1.7, 2.0)),
    ("vag-fe", "tetrahedral", TET, "err_sol", (1.6, 2.3)),
    ("vag-fe", "tetrahedral", TET, "err_grad", (0.85, 1.2)),
    ("hfv", "tetrahedral", TET, "err_sol", (1.6, 2.3)),
    ("hfv", "tetrahedral", TET, "err_grad", (0.85, 1.2)),
]


@pytest.mark.parametrize("scheme, mesh, sizes, name, bounds", ORDER_BOUNDS,
                         ids=[f"{s}-{m}-{e}" for s, m, _, e, _ in ORDER_BOUNDS])
def test_convergence_orders(runs, acceptance, scheme, mesh, sizes, name, bounds):
    levels = [runs(scheme, mesh, n) for n in sizes]
    alpha = orders(levels, name)
    ok = all(bounds[0] <= a <= bounds[1] for a in alpha)
    acceptance.record(3, ok, f"{scheme} {mesh} {name} orders {fmt(alpha)} in {list(bounds)}")
    assert ok


# -- 4: anisotropic case -----------------------------------------------------------

@pytest.mark.parametrize("scheme", ["vag-fe", "vag-cv"])
def test_anisotropic_orders(runs, acceptance, scheme):
    levels = [runs(scheme, "cartesian", n, case="anisotropic") for n in HEX]
    alpha = orders(levels, "err_sol")
    ok = all(1.8 <= a <= 2.1 for a in alpha)
    acceptance.record(4, ok, f"{scheme} anisotropic err_sol orders {fmt(alpha)} in [1.8, 2.1]")
    got = [r.errors.err_sol for r in levels]
    acceptance.note(4, f"{scheme} anisotropic err_sol {fmt(got)}, table {fmt(ANISO_SOL[scheme])}")
    assert ok


# -- 5: property suite -------------------------------------------------------------

@pytest.fixture(scope="module", params=[
    ("cartesian", "vag-fe"), ("cartesian", "vag-cv"), ("cartesian", "hfv"),
    ("tetrahedral", "vag-fe"), ("tetrahedral", "hfv")], ids=lambda p: "-".join(p))
def property_scheme(request):
    bundle = build_bundle(request.param[0], 4)
    return make_scheme(request.param[1], bundle, make_case("isotropic", xi=0.8).data)


def _label(scheme):
    return f"{type(scheme).__name__}/{getattr(scheme, 'mode', '')}/" \
           f"{scheme.bundle.mesh.n_cells} cells"


def test_property_affine_gradients(property_scheme, acceptance):
    s = property_scheme
    a = np.array([0.3, -1.7, 2.2])
    u = s.layout.anchor @ a + 0.4
    worst = max(np.abs(p["gradient"] - a).max() for p in s.matrix_pieces(u))
    ok = acceptance.record(5, worst <= 1e-13, f"affine gradient error {worst:.1e} "
                                              f"({_label(s)}, limit 1e-13)")
    assert ok


def test_property_flux_duality(property_scheme, acceptance):
    s = property_scheme
    n = s.layout.n_dofs
    A = global_matrix(s)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        u, v = rng.standard_normal((2, n))
        # sum over blocks of flux(u) paired with v, built from the local evaluators
        pairing = sum(v @ b.scatter(b.apply(u), n) for b in s.blocks.values())
        worst = max(worst, abs(pairing - v @ (A @ u)) / abs(v @ (A @ u)))
    fluxes = local_fluxes(s.blocks, np.full(n, 3.0))
    constant = max(np.abs(f).max() for f in fluxes.values())
    ok = acceptance.record(5, worst <= 1e-12, f"flux/bilinear duality {worst:.1e} over 100 pairs "
                                              f"({_label(s)}, limit 1e-12)")
    assert ok and constant < 1e-11


def test_property_reduced_spd_and_constants(property_scheme, acceptance):
    s = property_scheme
    reduced = eliminate_cells(assemble(s, make_case("isotropic", xi=0.8)))
    S = reduced.matrix.toarray()
    asym = np.abs(S - S.T).max() / np.abs(S).max()
    lam = np.linalg.eigvalsh(0.5 * (S + S.T)).min()
    lay = s.layout
    c = 1.7
    system = impose_dirichlet(global_matrix(s), np.zeros(lay.n_dofs), lay.dirichlet,
                              np.where(lay.dirichlet, c, 0.0), lay.n_cells)
    red = eliminate_cells(system)
    u = recover_cells(np.linalg.solve(red.matrix.toarray(), red.rhs), red)
    drift = np.abs(u - c).max()
    ok = asym <= 1e-12 and lam > 0 and drift <= 1e-12
    acceptance.record(5, ok, f"reduced system asymmetry {asym:.1e}, min eigenvalue {lam:.2e}, "
                             f"constant solution drift {drift:.1e} ({_label(s)})")
    assert ok


def test_property_transmission_identity(acceptance, iso):
    rng = np.random.default_rng(6)
    d = iso.data
    worst = 0.0
    for _ in range(100):
        side = rng.integers(8)
        j, a = divmod(side, 2)
        p = np.zeros((1, 3))
        p[0, FRACTURE_AXIS[j]] = rng.uniform(0.01, 0.49) * (1 if j < 2 else -1)
        p[0, 2] = rng.uniform(-0.49, 0.49)
        sub = SIDE_SUBDOMAIN[j, a]
        trace = iso.matrix_jet(p, sub)
        normal = (1 if a == 0 else -1) * FRACTURE_PLANE_NORMALS[j]
        flux = -(d.K_m[sub] * trace.g) @ normal
        exchange = d.T_f[j] * (trace.v - iso.fracture_jet(p, j).v)
        worst = max(worst, abs(flux - exchange)[0] / max(1.0, abs(flux[0])))
    ok = acceptance.record(5, worst <= 1e-9,
                           f"transmission identity residual {worst:.1e} at 100 points "
                           f"(limit 1e-9)")
    assert ok


def test_property_derivatives(acceptance, iso):
    h = 1e-3
    stencil = np.array([1, -8, 0, 8, -1]) / (12 * h)
    rng = np.random.default_rng(8)
    worst = 0.0
    for i, sign in enumerate([(-1, 1), (1, 1), (1, -1), (-1, -1)]):
        p = np.column_stack([rng.uniform(0.02, 0.48, (50, 2)) * sign,
                             rng.uniform(-0.48, 0.48, 50)])
        jet = iso.matrix_jet(p, i)
        for ax in range(3):
            fd = 0.0
            for w, k in zip(stencil, range(-2, 3)):
                q = p.copy()
                q[:, ax] += k * h
                fd = fd + w * iso.matrix_jet(q, i).v
            scale = max(1.0, np.abs(fd).max())
            worst = max(worst, np.abs(jet.g[:, ax] - fd).max() / scale)
    ok = acceptance.record(5, worst <= 1e-6,
                           f"analytic vs finite-difference gradient {worst:.1e} (limit 1e-6)")
    assert ok


@pytest.mark.parametrize("mesh", ["cartesian", "tetrahedral"])
def test_property_partition_of_measure(acceptance, mesh):
    b = build_bundle(mesh, 4)
    m, sub, fr = b.mesh, b.sub, b.fractures
    vol = np.bincount(sub.tet_cell, sub.tet_volumes, minlength=m.n_cells)
    area = np.bincount(sub.tri_face, sub.tri_areas, minlength=fr.n_faces)
    ref = m.face_areas[fr.faces]
    worst = max(abs(m.cell_volumes.sum() - 1.0),
                np.max(np.abs(vol - m.cell_volumes) / m.cell_volumes),
                np.max(np.abs(area - ref) / ref))
    ok = acceptance.record(5, worst <= 1e-12,
                           f"{mesh} partition of measure {worst:.1e} (limit 1e-12)")
    assert ok


# -- 7: large transmissibility -----------------------------------------------------

@pytest.mark.parametrize("scheme", ["vag-fe", "vag-cv", "hfv"])
def test_large_transmissibility(runs, acceptance, scheme):
    base = runs(scheme, "cartesian", 8)
    stiff = runs(scheme, "cartesian", 8, t_scale=1e6)
    j0 = discrete_jump_norm(base.scheme, base.solution)
    j1 = discrete_jump_norm(stiff.scheme, stiff.solution)
    ok = stiff.converged and j0 >= 1e3 * j1
    acceptance.record(7, ok, f"{scheme} jump norm {j0:.2e} -> {j1:.2e} "
                             f"(shrink {j0 / j1:.0f}, need >= 1000)")
    assert ok


# -- 6: solver contract ------------------------------------------------------------

def _true_residual(reduced, x):
    # independent matvec from the raw triplets
    A = reduced.matrix.tocoo()
    Ax = np.bincount(A.row, A.data * x[A.col], minlength=reduced.n_dofs)
    return np.linalg.norm(reduced.rhs - Ax) / np.linalg.norm(reduced.rhs)


def test_solver_contract(runs, acceptance):
    # last in the file, so the cache holds every accepted run
    if not runs.cache:
        runs("vag-fe", "cartesian", 8)
    worst = 0.0
    for result in runs.cache.values():
        assert result.converged
        res = _true_residual(result.reduced, result.solution[result.reduced.n_cells:])
        worst = max(worst, res)
    ok = worst <= 1e-10
    acceptance.record(6, ok, f"worst true relative residual {worst:.1e} over "
                             f"{len(runs.cache)} runs (limit 1e-10)")
    for (scheme, case), ref in ITERATIONS.items():
        key_runs = [runs.cache.get((scheme, "cartesian", n, case, ())) for n in HEX]
        if any(r is None for r in key_runs):
            continue
        its = [r.iterations for r in key_runs]
        inside = all(i <= 2 * r for i, r in zip(its, ref))
        acceptance.note(6, f"{scheme} {case} iterations {its}, table {list(ref)}, "
                           f"{'inside' if inside else 'outside'} the 2x envelope")
    assert ok
