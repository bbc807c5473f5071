import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from wiggleguide import (
    Grid,
    PreconditionError,
    assemble,
    assemble_segment,
    element_mass,
    export_matrix_market,
    grid_for,
    make_spec,
)


@pytest.fixture
def wiggled(bump):
    return make_spec(bump, 0.25, [0.4, 1.0, 0.7])


def test_grid_geometry():
    g = Grid(17, 9, 2.0)
    assert g.h1 == pytest.approx(0.125)
    assert g.h2 == pytest.approx(np.pi / 8)
    assert g.refined() == Grid(33, 17, 2.0)
    with pytest.raises(PreconditionError):
        Grid(5, 9, 1.0)


def test_stiffness_is_exactly_symmetric(wiggled):
    op = assemble(wiggled, grid_for(wiggled, 8, 13))
    assert (op.K != op.K.T).nnz == 0
    assert (op.M != op.M.T).nnz == 0
    assert op.size == 25 * 11


def test_mass_is_positive_definite_and_totals_area(wiggled):
    op = assemble(wiggled, grid_for(wiggled, 8, 13))
    # M integrates the product of hat functions; the full-node 1-D masses sum to lengths
    M1 = op.factors["M1"]
    assert M1.sum() == pytest.approx(wiggled.L)
    assert np.linalg.eigvalsh(op.M.toarray()).min() > 0


def _quadrature_energy(spec, g, U):
    """Transformed Dirichlet form of the bilinear interpolant of ``U``.

    Tensor Gauss quadrature with 6 points per direction per element.
    """
    xq, wq = np.polynomial.legendre.leggauss(6)
    s = 0.5 * (xq + 1)
    S1, S2 = np.meshgrid(s, s, indexing="ij")
    W = np.outer(wq, wq) * 0.25 * g.h1 * g.h2
    total = 0.0
    for i in range(g.n1 - 1):
        dp = spec.profile(g.xi1[i] + S1 * g.h1, 1)
        for j in range(g.n2 - 1):
            c = U[i:i + 2, j:j + 2]
            d1 = ((c[1, 0] - c[0, 0]) * (1 - S2) + (c[1, 1] - c[0, 1]) * S2) / g.h1
            d2 = ((c[0, 1] - c[0, 0]) * (1 - S1) + (c[1, 1] - c[1, 0]) * S1) / g.h2
            total += np.sum(W * ((d1 - dp * d2) ** 2 + d2**2))
    return total


def _form_pair(spec, per_cell, n2):
    g = grid_for(spec, per_cell, n2)
    op = assemble(spec, g)
    X1, X2 = op.nodes()
    u = np.sin(X2) * (1 + X1**2) + 0.3 * np.sin(2 * X2) * X1
    U = np.zeros((g.n1, g.n2))
    U[:, 1:-1] = u.reshape(op.shape2d)
    return u @ (op.K @ u), _quadrature_energy(spec, g, U)


def test_form_exact_for_straight_guide(bump):
    s = make_spec(bump, 0.0, [0.5, 0.5, 0.5])
    a, b = _form_pair(s, 4, 9)
    assert a == pytest.approx(b, rel=1e-13)


def test_form_matches_quadrature_of_transformed_energy(wiggled):
    # the P' terms use two-point Gauss per element, so agreement is O(h^4)
    a, b = _form_pair(wiggled, 4, 9)
    err_coarse = abs(a - b) / b
    a, b = _form_pair(wiggled, 8, 9)
    err_fine = abs(a - b) / b
    assert err_coarse < 1e-4
    assert err_fine < err_coarse / 8


def test_straight_guide_kronecker_structure(bump):
    s = make_spec(bump, 0.0, [0.5, 0.5])
    op = assemble(s, grid_for(s, 8, 11))
    f = op.factors
    ref = sp.kron(f["A1"], f["M2"]) + sp.kron(f["M1"], f["K2"])
    assert abs(op.K - ref).max() < 1e-14


def test_segment_reuses_global_nodes(wiggled):
    g = grid_for(wiggled, 8, 13)
    full = assemble(wiggled, g)
    seg = assemble_segment(wiggled, g, 1, 2)
    assert seg.grid.n1 == 17 and seg.x0 == 1.0
    x1, _ = seg.nodes()
    assert x1.min() == pytest.approx(1.0) and x1.max() == pytest.approx(3.0)
    # interior rows of the segment coincide with the corresponding rows of the full operator
    m = g.n2 - 2
    row = 8 * m + 3  # a node strictly inside the segment
    full_row = (8 + 8) * m + 3
    a = seg.K[row].toarray().ravel()
    b = full.K[full_row].toarray().ravel()[8 * m: 8 * m + seg.size]
    assert np.allclose(a, b, atol=1e-14)


def test_segment_preconditions(wiggled):
    g = grid_for(wiggled, 8, 13)
    with pytest.raises(PreconditionError):
        assemble_segment(wiggled, g, 2, 2)
    with pytest.raises(PreconditionError):
        assemble(wiggled, Grid(26, 13, 3.0))


def test_element_mass_bounds(wiggled):
    op = assemble(wiggled, grid_for(wiggled, 8, 13))
    MA = element_mass(op, 0.0, 1.0)
    full = element_mass(op, 0.0, wiggled.L)
    assert abs(full - op.M).max() < 1e-15
    ev = np.linalg.eigvalsh((op.M - MA).toarray())
    assert ev.min() > -1e-14


def test_matrix_market_round_trip(tmp_path, wiggled):
    op = assemble(wiggled, grid_for(wiggled, 4, 9))
    kpath, mpath = export_matrix_market(op, tmp_path, "seg")
    K = scipy.io.mmread(kpath).tocsr()
    assert abs(K - op.K).max() < 1e-12
    assert abs(scipy.io.mmread(mpath).tocsr() - op.M).max() < 1e-15
