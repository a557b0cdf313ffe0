"""Library-level tour: constants, a growth oracle, and one randomized estimate."""

import numpy as np

from boltz1d import inequality_lab as lab
from boltz1d.integrator import run
from boltz1d.config import parse_config

k = lab.small_entropy_constants(m=1.0, C=1.0)
print(f"small-entropy constants for m = C = 1: K = {k.K:.6f}, alpha = {k.alpha:.6f}, "
      f"threshold = {k.threshold:.6f}")

t = lab.ORACLE_GRID
spec = lab.GrowthBoundSpec("bony", c=2.0, phi0=0.5, a=np.exp(-0.5 * t))
orc = lab.maximal_solution_oracle(spec, t)
logb = lab.bony_bound_curve(spec.c, spec.a, spec.phi0, t)
print(f"oracle phi(4) = {orc.values[-1]:.4f} after {orc.iterations} sweeps; "
      f"closed-form bound exp({logb[-1]:.3f})")

rng = np.random.default_rng(0)
g, f = lab.random_state(rng, lab.TRIAL_GRID), lab.random_state(rng, lab.TRIAL_GRID)
res = lab.verify_bilinear_X(g, f, lab.kernel_pool()[0], quad=lab.TRIAL_QUAD, n_q=64)
print(f"bilinear X estimate: {res.lhs:.4g} <= {res.rhs:.4g} ({'holds' if res.holds else 'fails'})")

cfg = parse_config("[grid]\nNx = 4\nNv = 6\n[integrator]\nt_end = 0.2\n")
traj = run(cfg)
for r in traj.records:
    print(f"t = {r.t:.2f}  H = {r.H:.6f}  X = {r.X:.4f}  L = {r.L:+.3e}")
