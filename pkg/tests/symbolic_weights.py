"""Symbolic-integration oracle for the reference weight tables (shared by
the unit tests and the acceptance suite)."""

import sympy as sym

from fetv.spaces import lagrange_layout, reference_weights


def assert_weights_match_symbolic(r):
    """Rebuild every nodal basis with sympy and compare the exact integrals
    against the packaged tables (rational equality)."""
    x, y, t = sym.symbols("x y t")
    lay = lagrange_layout(r)
    w = reference_weights(r)

    def sym_cell_basis(nodes_exact, exps):
        monos = [x ** a * y ** b for a, b in exps]
        vander = sym.Matrix(
            [[m.subs({x: sym.Rational(nx), y: sym.Rational(ny)})
              for m in monos] for nx, ny in nodes_exact])
        coeff = vander.inv()
        return [sum(coeff[m, k] * monos[m] for m in range(len(monos)))
                for k in range(len(nodes_exact))]

    def tri_integral(expr):
        return sym.integrate(sym.integrate(expr, (y, 0, 1 - x)), (x, 0, 1))

    for k, phi in enumerate(sym_cell_basis(lay._cell_nodes_exact,
                                           lay._cell_exps)):
        exact = tri_integral(phi) / sym.Rational(1, 2)
        assert sym.Rational(w.cell_full[k].numerator,
                            w.cell_full[k].denominator) == exact

    if r >= 1:
        for i, phi in enumerate(sym_cell_basis(lay._sub_nodes_exact,
                                               lay._sub_exps)):
            exact = tri_integral(phi) / sym.Rational(1, 2)
            assert sym.Rational(w.cell_interior[i].numerator,
                                w.cell_interior[i].denominator) == exact

    monos = [t ** a for (a,) in lay._edge_exps]
    vander = sym.Matrix([[m.subs(t, sym.Rational(tn)) for m in monos]
                         for tn in lay._edge_nodes_exact])
    coeff = vander.inv()
    for j in range(r + 1):
        phi = sum(coeff[m, j] * monos[m] for m in range(len(monos)))
        exact = sym.integrate(phi, (t, 0, 1))
        assert sym.Rational(w.edge[j].numerator,
                            w.edge[j].denominator) == exact
