import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mixvar.envelope import EnvelopeOptions, tabulate_envelope
from mixvar.grid import Grid, GridField, a_gradient, stencil_matrix
from mixvar.integrand import builtin
from mixvar.smoothness import SmoothnessVector, homogeneity_set
from mixvar.solver import (
    DirichletProblem,
    SolveOptions,
    apolynomial_datum,
    relax_compare,
    solve_dirichlet,
)


SV12 = SmoothnessVector((1, 2))


def test_apolynomial_datum_gradient_reads_off_coefficients():
    g = Grid(((-1, 1), (-1, 1)), (17, 17), SV12)
    datum = apolynomial_datum({(1, 0): 1.0, (0, 2): 2.0}, g)
    ag = a_gradient(datum)
    assert np.allclose(ag.values[..., 0, 0], 1.0, atol=1e-10)
    assert np.allclose(ag.values[..., 0, 1], 2.0, atol=1e-10)


def test_apolynomial_datum_constant():
    g = Grid(((-1, 1), (-1, 1)), (17, 17), SV12)
    datum = apolynomial_datum({(0, 0): 5.0}, g)
    assert np.allclose(datum.values, 5.0)
    assert np.allclose(a_gradient(datum).values, 0.0, atol=1e-12)


def test_apolynomial_datum_rejects_outside_lower_set():
    g = Grid(((-1, 1), (-1, 1)), (17, 17), SV12)
    with pytest.raises(ValueError, match="lower set"):
        apolynomial_datum({(1, 1): 1.0}, g)  # pairing 3/2 > 1


def quad_oracle_energy(prob):
    """Independent oracle: assemble the normal equations of the quadratic
    energy sum |S_alpha (g + phi)|^2 sparsely and solve with a direct SPD
    factorization."""
    grid = prob.grid()
    g = prob.datum_field(grid)
    free = ~grid.collar_mask().reshape(-1)
    mats = [stencil_matrix(grid, al) for al in homogeneity_set(grid.a)]
    gvec = g.values[..., 0].reshape(-1)
    A = sp.vstack([M[:, free] for M in mats], format="csr")
    b = np.concatenate([M @ gvec for M in mats])
    x = spla.spsolve((A.T @ A).tocsc(), -A.T @ b)
    resid = A @ x + b
    return grid.quad_weight * float(resid @ resid)


def test_convex_quadratic_datum_is_minimizer():
    F = builtin("pnorm", p=2, n=1, m=2)
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F,
                            {(1, 0): 1.0, (0, 2): 2.0}, 2.0, 17)
    res = solve_dirichlet(prob, SolveOptions(seed=1))
    grid = prob.grid()
    X = np.array([[1.0, 2.0]])
    expected = grid.volume * float(F(X))
    assert abs(res.energy - expected) <= 1e-10 * (1 + abs(expected))
    # minimizer is the datum itself
    g = prob.datum_field(grid)
    assert np.max(np.abs(res.u.values - g.values)) <= 1e-6


def test_pantographic_matches_sparse_spd_oracle():
    F = builtin("pantographic")
    rng = np.random.default_rng(42)
    coeffs = {(0, 0): rng.normal(), (1, 0): rng.normal(),
              (0, 1): rng.normal(), (0, 2): rng.normal()}
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F, coeffs, 2.0, 17)
    res = solve_dirichlet(prob, SolveOptions(seed=2))
    oracle = quad_oracle_energy(prob)
    assert abs(res.energy - oracle) <= 1e-8 * (1 + abs(oracle))


def test_constant_integrand_exits_immediately():
    F = builtin("constant", c=2.0, n=1, m=2)
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F, {(0, 0): 1.0}, 2.0, 9)
    res = solve_dirichlet(prob, SolveOptions(seed=3))
    assert res.energy == pytest.approx(2.0 * prob.grid().volume, rel=1e-12)


def test_dirichlet_collar_consistency():
    F = builtin("double_well", col=0, w=1.0, n=1, m=2)
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F,
                            {(1, 0): 0.5, (0, 1): -0.3}, 4.0, 17)
    res = solve_dirichlet(prob, SolveOptions(seed=4, multistart=1))
    grid = prob.grid()
    g = prob.datum_field(grid)
    collar = grid.collar_mask()
    # bit-exact agreement on the collar
    assert np.array_equal(res.u.values[collar], g.values[collar])


def test_kernel_polynomial_frame_invariance():
    # adding a kernel a-polynomial (span{1, y} for a=(1,2)) to the datum
    # leaves every gradient-dependent energy unchanged to round-off
    F = builtin("pnorm", p=2, n=1, m=2)
    base = {(1, 0): 0.7, (0, 2): -0.4}
    shifted = dict(base)
    shifted[(0, 0)] = 5.0
    shifted[(0, 1)] = -3.0
    p1 = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F, base, 2.0, 17)
    p2 = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F, shifted, 2.0, 17)
    r1 = solve_dirichlet(p1, SolveOptions(seed=5))
    r2 = solve_dirichlet(p2, SolveOptions(seed=5))
    assert abs(r1.energy - r2.energy) <= 1e-10 * (1 + abs(r1.energy))


def test_trace_energies_nonincreasing():
    # an a-polynomial datum is a stationary point (constant dF against exact
    # zero-mean stencils), so a perturbed start is what actually iterates
    F = builtin("double_well", col=0, w=1.0, n=1, m=2)
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F,
                            {(1, 0): 0.2}, 4.0, 17)
    res = solve_dirichlet(prob, SolveOptions(seed=6, multistart=1, perturbation=0.1))
    e = res.trace.energies
    assert len(e) >= 2
    assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(e, e[1:]))


def test_grid_field_datum_resolution_mismatch():
    F = builtin("pnorm", p=2, n=1, m=2)
    g_other = Grid(((-1, 1), (-1, 1)), (9, 9), SV12)
    datum = GridField.zeros(g_other)
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F, datum, 2.0, 17)
    with pytest.raises(ValueError, match="resolution"):
        solve_dirichlet(prob, SolveOptions(seed=7))


def test_relax_convex_zero_gap():
    F = builtin("pnorm", p=2, n=1, m=1)
    table = tabulate_envelope(
        F, (2,), [(-2.0, 2.0, 21)], EnvelopeOptions(resolution=33, multistart=2, seed=8)
    )
    # datum slope 0.4 sits exactly on a lattice node
    prob = DirichletProblem((2,), ((-1.0, 1.0),), F, {(2,): 0.4}, 2.0, 9)
    rep = relax_compare(prob, table, refinement_levels=2, opts=SolveOptions(seed=9))
    assert rep.lower_bound_ok
    assert all(abs(g) <= 1e-8 for g in rep.gaps)
    assert rep.no_gap_detected


def test_relax_double_well_gap_shrinks():
    F = builtin("double_well", w=1.0, n=1, m=1)
    table = tabulate_envelope(
        F, (2,), [(-2.0, 2.0, 21)],
        EnvelopeOptions(resolution=129, multistart=8, maxiter=2000, seed=10),
        levels=(17, 33, 65, 129),
    )
    prob = DirichletProblem((2,), ((-1.0, 1.0),), F, {(0,): 0.0}, 4.0, 9)
    rep = relax_compare(prob, table, refinement_levels=3,
                        opts=SolveOptions(seed=11, multistart=2, perturbation=0.05))
    assert rep.lower_bound_ok
    assert all(b <= a + 1e-10 for a, b in zip(rep.E_F, rep.E_F[1:]))
    assert rep.gaps[-1] <= 0.1 * (1 + rep.E_F[0])
    assert not rep.no_gap_detected


def test_relax_hull_exceeded_aborts():
    F = builtin("pnorm", p=2, n=1, m=1)
    # tiny hull: the datum gradient 1.9 runs straight out of [-0.5, 0.5]
    table = tabulate_envelope(
        F, (2,), [(-0.5, 0.5, 5)], EnvelopeOptions(resolution=17, multistart=2, seed=12)
    )
    prob = DirichletProblem((2,), ((-1.0, 1.0),), F, {(2,): 1.9}, 2.0, 9)
    with pytest.raises(RuntimeError, match="hull"):
        relax_compare(prob, table, refinement_levels=1, opts=SolveOptions(seed=13))


def test_trace_snapshots_recorded():
    F = builtin("double_well", col=0, w=1.0, n=1, m=2)
    prob = DirichletProblem((1, 2), ((-1, 1), (-1, 1)), F, {(1, 0): 0.2}, 4.0, 17)
    res = solve_dirichlet(prob, SolveOptions(seed=6, multistart=1, perturbation=0.1,
                                             checkpoints=4))
    assert len(res.trace.snapshots) >= 1
    it, stack = res.trace.snapshots[-1]
    assert stack.shape == prob.grid().interior_shape + (1, 2)
