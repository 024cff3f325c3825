"""Command-line interface: experiment runs and a quick self-verification suite."""

import argparse
import sys
import tempfile

import numpy as np

from . import app
from .errors import SignmsError


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="signms",
        description="Two-scale solver for Helmholtz-like problems with "
        "sign-changing coefficients",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file/flags")
    run_p.add_argument("--config", default=None, help="key = value config file")
    run_p.add_argument("--experiment", default=None, choices=app.EXPERIMENTS)
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--parallel", action="store_true",
                       help="run coarse sizes concurrently (capped by SIGNMS_THREADS)")
    run_p.add_argument("--dump-fields", action="store_true",
                       help="dump solutions in the grid text format")
    run_p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")

    sub.add_parser("verify", help="run the invariant/oracle suite on small meshes")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        return _verify()
    except SignmsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _run(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.experiment:
        overrides["experiment"] = args.experiment
    if args.out:
        overrides["output_dir"] = args.out
    if args.dump_fields:
        overrides["dump_fields"] = "true"

    config, provenance = app.parse_config(args.config, overrides)
    reports = app.run_experiment(config, provenance, parallel=args.parallel)
    failed = 0
    for r in reports:
        if r.error:
            failed += 1
            print(f"H=1/{r.n_coarse} m={r.m}: FAILED ({r.error})")
        else:
            note = "" if r.rho_ok else "  [resolution ratio above threshold]"
            print(
                f"H=1/{r.n_coarse} m={r.m}: energy {r.energy_rel:.3e}  "
                f"l2 {r.l2_rel:.3e}{note}"
            )
    print(f"wrote {config.output_dir}/errors.csv")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# `signms verify`: fast invariant and oracle checks on small meshes

def _checks():
    from . import assembly, auxspace, coarse, coeffs, msbasis
    from .mesh import build_mesh, oversample_patch

    def mesh_bookkeeping():
        m = build_mesh(8, 2)
        assert m.num_nodes == 81 and m.dirichlet_dofs.size == 32
        assert oversample_patch(build_mesh(400, 20), 0, 1).element_set.size == 4
        assert oversample_patch(build_mesh(400, 20), 210, 1).element_set.size == 9
        sat = oversample_patch(m, 0, m.n_coarse)
        assert np.array_equal(sat.interior_dofs, m.free_dofs)

    def element_matrices():
        m = build_mesh(1, 1)
        ones = coeffs.CoefficientField(sigma=np.ones(1), c=np.ones(1))
        conn = m.cell_nodes()[0]  # global matrix in node order, reference in corner order
        a = assembly.assemble_stiffness(m, ones, "signed").toarray()
        assert np.abs(a[np.ix_(conn, conn)] - assembly.STIFFNESS_REF).max() < 1e-14
        mm = assembly.assemble_mass(m, ones, "signed", 1.0).toarray()
        assert np.abs(mm[np.ix_(conn, conn)] - assembly.MASS_REF).max() < 1e-14

    def stiffness_kernel():
        m = build_mesh(12, 3)
        fld = coeffs.flat_interface(m)
        a = assembly.assemble_stiffness(m, fld, "signed")
        assert np.abs(a @ np.ones(m.num_nodes)).max() < 1e-12

    def mass_partition_of_unity():
        m = build_mesh(10, 2)
        ones = coeffs.CoefficientField(sigma=np.ones(100), c=np.ones(100))
        mm = assembly.assemble_mass(m, ones, "signed", 1.0)
        assert abs(np.ones(m.num_nodes) @ (mm @ np.ones(m.num_nodes)) - 1.0) < 1e-12

    def eigens_uniform():
        m = build_mesh(16, 4)
        ones = coeffs.CoefficientField(sigma=np.ones(256), c=np.ones(256))
        aux = auxspace.build_auxiliary_space(m, ones, 3)
        assert aux.lambda_gap > 0
        assert np.all(aux.eigenvalues[:, 0] <= 1e-10 * aux.eigenvalues[:, 3])
        data = aux.element_data(5)
        gram = data.vectors.T @ data.s_local @ data.vectors
        assert np.abs(gram - np.eye(3)).max() < 1e-10

    def projection_identities():
        m = build_mesh(16, 4)
        fld = coeffs.flat_interface(m)
        aux = auxspace.build_auxiliary_space(m, fld, 3)
        rng = np.random.default_rng(1)
        a_abs = assembly.assemble_stiffness(m, fld, "absolute")
        for _ in range(10):
            v = rng.standard_normal(m.num_nodes)
            piv = auxspace.apply_pi(aux, v)
            assert np.abs(auxspace.apply_pi(aux, piv) - piv).max() < 1e-10
            lhs = auxspace.stilde_norm(aux, auxspace.break_vector(aux, v) - piv) ** 2
            rhs = coarse.quad_norm(a_abs, v) ** 2 / aux.lambda_gap
            assert lhs <= rhs * (1 + 1e-10)

    def saturated_equals_global():
        m = build_mesh(16, 4)
        ones = coeffs.CoefficientField(sigma=np.ones(256), c=np.ones(256))
        aux = auxspace.build_auxiliary_space(m, ones, 2)
        a = assembly.assemble_stiffness(m, ones, "signed")
        mm = assembly.assemble_mass(m, ones, "signed", 1.0)
        system = (a - mm).tocsr()
        loc = msbasis.build_multiscale_basis(aux, system, m.n_coarse)
        glo = msbasis.build_global_basis(aux, system)
        assert abs(loc.matrix - glo.matrix).max() < 1e-10

    def galerkin_oracle():
        m = build_mesh(16, 4)
        ones = coeffs.CoefficientField(sigma=np.ones(256), c=np.ones(256))
        aux = auxspace.build_auxiliary_space(m, ones, 2)
        a = assembly.assemble_stiffness(m, ones, "signed")
        mm = assembly.assemble_mass(m, ones, "signed", 1.0)
        system = (a - mm).tocsr()
        basis = msbasis.build_multiscale_basis(aux, system, m.n_coarse)
        src = coeffs.gaussian_source(m, (0.5, 0.5), 0.1, True)
        b = assembly.assemble_load(m, src)
        u_ms = coarse.solve_ms(coarse.assemble_coarse_system(basis, system, b), basis)
        free = m.free_dofs
        dense = system.toarray()[np.ix_(free, free)]
        phi = basis.matrix.toarray()[free, :]
        z = np.linalg.solve(phi.T @ dense @ phi, phi.T @ b[free])
        u_oracle = np.zeros(m.num_nodes)
        u_oracle[free] = phi @ z
        a_abs = assembly.assemble_stiffness(m, ones, "absolute")
        num = coarse.quad_norm(a_abs, u_ms - u_oracle)
        den = coarse.quad_norm(a_abs, u_oracle)
        assert num <= 1e-9 * den

    def contrast_ratios():
        m = build_mesh(8, 2)
        assert abs(coeffs.contrast_ratio(coeffs.flat_interface(m)) - 1.0 / 3.0) < 1e-15
        ones = coeffs.CoefficientField(sigma=np.ones(64), c=np.ones(64))
        assert coeffs.contrast_ratio(ones) == float("inf")

    def grid_round_trip():
        m = build_mesh(12, 3)
        fld = coeffs.nim_slab(m)
        with tempfile.NamedTemporaryFile(suffix=".txt", mode="w", delete=False) as fh:
            path = fh.name
        coeffs.save_field(fld, path)
        loaded = coeffs.load_field(path)
        assert np.array_equal(loaded.sigma, fld.sigma)

    return [
        ("mesh bookkeeping", mesh_bookkeeping),
        ("Q1 element matrices", element_matrices),
        ("stiffness kernel", stiffness_kernel),
        ("mass partition of unity", mass_partition_of_unity),
        ("element eigenproblems", eigens_uniform),
        ("projection identities", projection_identities),
        ("saturated localization", saturated_equals_global),
        ("Galerkin oracle", galerkin_oracle),
        ("contrast ratios", contrast_ratios),
        ("grid round trip", grid_round_trip),
    ]


def _verify():
    failures = 0
    for name, check in _checks():
        try:
            check()
        except Exception as exc:  # report every failing check, keep going
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
