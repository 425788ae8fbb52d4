"""Fitting a box that moves diagonally, without time stepping.

Nine exact cell averages of the box at (t, mu) samples form the snapshots.
For a new (t, mu) the four corner snapshots of its parameter element are
shifted and the coefficients are the least-squares fit to the exact cell
averages. A fixed reduced mesh sees the box only near where it was trained;
once the box has left those cells the fit returns zero coefficients and
the relative error is one.

Run with ``python demos/static_box.py``.
"""

from shiftrom.bench import VARIANTS, build_offline, load_case, static_error

case = load_case("test2-small", n_x=150)
off = build_offline(case)
print(f"{case.N} cells, reduced mesh n = {case.n_reduced}")

# off the sample lattice; where the shift is a whole number of cells the
# shifted snapshots match exactly and every shifted variant has zero error
points = [(0.137, 0.262), (0.41, 0.73), (0.77, 0.19), (0.95, 0.9), (0.05, 0.05)]
print("   (t, mu)        " + "".join(f"{v:>10s}" for v in VARIANTS))
for z in points:
    errs = []
    for v in VARIANTS:
        n = case.n_reduced if VARIANTS[v][1] else case.N
        errs.append(static_error(off, v, z, n)[0])
    print(f"   {str(z):14s}" + "".join(f"{e:10.3f}" for e in errs))
