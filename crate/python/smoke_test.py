#!/usr/bin/env python3
"""Builds the mesh_dispatch_py extension module and exercises it end to
end: case construction, a short decentralized run, the centralized
reference, and the contraction certificate."""

import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_extension(target_dir: Path) -> Path:
    subprocess.run(
        [
            "cargo",
            "build",
            "--release",
            "-p",
            "mesh-dispatch-py",
            "--features",
            "extension-module",
        ],
        cwd=REPO,
        check=True,
    )
    built = REPO / "target" / "release" / "libmesh_dispatch_py.so"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    module = target_dir / f"mesh_dispatch_py{suffix}"
    shutil.copy2(built, module)
    return module


def approx(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        build_extension(Path(tmp))
        sys.path.insert(0, tmp)
        import mesh_dispatch_py as md

        case = md.ieee14_case()
        assert case.hub_count == 14, case.hub_count
        assert len(case.edges) == 20, case.edges
        assert case.zeta == (1.1, 0.6), case.zeta
        assert '"hubs"' in case.to_json()

        cert = md.certificate(case)
        assert cert.verdict, cert
        assert 0.90 < cert.gamma_w1 < 0.91, cert.gamma_w1
        assert cert.p_min_eig is not None and cert.p_min_eig > 0

        ref = md.solve_centralized(case)
        assert approx(ref.f_star, 8220.03, 0.5), ref.f_star
        assert approx(ref.mu_star[1], -8.888, 0.01), ref.mu_star
        assert len(ref.allocations) == 14
        assert ref.feasibility_residual <= 1e-5, ref.feasibility_residual

        result = md.run(case, n_min=30, n_max=30)
        assert result.iterations == 30, result
        assert len(result.welfare) == 30
        assert len(result.allocations) == 14
        assert result.lemma1_max <= 1e-9, result.lemma1_max
        # The aggregate mismatch must shrink substantially within 30 rounds.
        first = max(abs(result.mismatch[0][0]), abs(result.mismatch[0][1]))
        last = max(abs(result.mismatch[-1][0]), abs(result.mismatch[-1][1]))
        assert last < 0.2 * first, (first, last)

        # Identical seeds reproduce the trajectory bit for bit.
        again = md.run(case, n_min=30, n_max=30)
        assert again.welfare == result.welfare

        small = md.random_case(5, 7)
        assert small.hub_count == 5
        small_run = md.run(small, n_min=1, n_max=10)
        assert small_run.iterations <= 10
        assert small_run.lemma1_max <= 1e-9

        # Invalid requests surface as Python exceptions.
        try:
            md.random_case(0, 1)
        except ValueError:
            pass
        else:
            raise AssertionError("zero-hub cases must be rejected")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
