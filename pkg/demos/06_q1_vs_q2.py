"""Why element degree matters for the cell residual: Q1 vs Q2.

The second benchmark has a solution whose Laplacian does not vanish.  The
cell residual measures f + div(K grad p_h) - time term; with Q1 elements
div(K grad p_h) is identically zero inside cells, so the indicator sees
the full source everywhere and drives excessive, poorly targeted
refinement.  Q2 elements resolve the second derivatives and concentrate
the work at the corner singularity.  Expect several minutes of runtime.
"""

from egadapt import RunConfig, run_timeloop

runs = {}
for k in (1, 2):
    cfg = RunConfig(problem="example2", mode="adaptive_full", h0=0.25,
                    dt=0.01, tau=2e-3, theta_coarse=0.4, theta_refine=0.2,
                    k=k, coarsen_rule="fraction")
    runs[k] = run_timeloop(cfg)
    last = runs[k][-1]
    print(f"EG-Q{k}: final dofs {last.dofs}, h_min "
          f"{min(r.h_min_n for r in runs[k])}, error {last.error_linf:.5f}")

half = len(runs[1]) // 2
ratios = [a.error_h1 / b.error_h1
          for a, b in zip(runs[1][half:], runs[2][half:])]
print(f"\ndof ratio Q1/Q2 at the final step: "
      f"{runs[1][-1].dofs / runs[2][-1].dofs:.1f}")
print(f"per-step error ratio Q1/Q2 over the final half: "
      f"{min(ratios):.2f} .. {max(ratios):.2f}")
