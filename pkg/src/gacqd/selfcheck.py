"""Self-test battery behind the CLI ``check`` verb.

Runs the gradient suite (all five trainer losses against central finite
differences), the container binning oracle, and a determinism smoke test.
The same functions back the acceptance tests.
"""

import time

import numpy as np

from . import nets, trainers
from .archive import Archive, GridSpec, archive_fingerprint, grid_index
from .config import config_from_pairs
from .loop import run_gac
from .replay import Batch

GRAD_TOL = 1e-4


def _random_batch(rng, n=6, state_dim=3, action_dim=2):
    return Batch(s=rng.normal(size=(n, state_dim)),
                 a=rng.uniform(-1, 1, size=(n, action_dim)),
                 s_next=rng.normal(size=(n, state_dim)),
                 r=rng.normal(size=n),
                 done=rng.random(n) < 0.2)


def _trainer(family, seed):
    return trainers.make_trainer(family, 3, 2, np.random.default_rng(seed),
                                 policy_hidden=(6, 6), critic_hidden=(8, 8),
                                 batch_size=6)


def gradient_suite(n_seeds: int = 20, eps: float = 1e-5) -> dict:
    """Max relative finite-difference error per loss, over n_seeds seeds."""
    worst = {"td3_critic": 0.0, "td3_actor": 0.0, "sac_critic": 0.0,
             "sac_actor": 0.0, "alpha": 0.0}
    for seed in range(n_seeds):
        rng = np.random.default_rng(1000 + seed)
        batch = _random_batch(rng)

        td3 = _trainer("td3", seed)
        y = trainers.bellman_targets(td3, batch, np.random.default_rng(seed))

        def td3_critic(p):
            loss, grad, _ = trainers.critic_loss_and_grad(td3, p, batch, y)
            return loss, grad

        worst["td3_critic"] = max(
            worst["td3_critic"],
            nets.grad_check(td3.critic1.copy(), td3_critic, eps))

        def td3_actor(p):
            return trainers.actor_loss_and_grad(td3, p, batch)

        worst["td3_actor"] = max(
            worst["td3_actor"],
            nets.grad_check(td3.actor.copy(), td3_actor, eps))

        sac = _trainer("sac", seed + 500)
        y_sac = trainers.bellman_targets(sac, batch, np.random.default_rng(seed))

        def sac_critic(p):
            loss, grad, _ = trainers.critic_loss_and_grad(sac, p, batch, y_sac)
            return loss, grad

        worst["sac_critic"] = max(
            worst["sac_critic"],
            nets.grad_check(sac.critic1.copy(), sac_critic, eps))

        xi = rng.standard_normal((len(batch), sac.action_dim))

        def sac_actor(p):
            return trainers.actor_loss_and_grad(sac, p, batch, xi=xi)

        worst["sac_actor"] = max(
            worst["sac_actor"],
            nets.grad_check(sac.actor.copy(), sac_actor, eps))

        # alpha loss is linear in log alpha for frozen log-probs
        out = nets.forward(sac.actor_spec, sac.actor, batch.s)
        from . import heads
        _, logp, _, _, _ = heads.squash_sample(out, xi)
        target = sac.target_entropy

        def alpha_loss(v):
            loss = float(np.mean(-v[0] * (logp + target)))
            grad = np.array([-float(np.mean(logp + target))])
            return loss, grad

        worst["alpha"] = max(
            worst["alpha"],
            nets.grad_check(np.array([sac.log_alpha]), alpha_loss, eps))
    return worst


def container_oracle(n: int = 10_000, seed: int = 0) -> bool:
    """Replay n random insertions against a per-cell max scan over the log."""
    spec = GridSpec((12, 9), (0.0, -1.0), (1.0, 1.0))
    archive = Archive(spec)
    rng = np.random.default_rng(seed)
    best = {}
    for k in range(n):
        desc = rng.uniform((0.0, -1.0), (1.0, 1.0))
        fit = float(rng.normal())
        archive.try_insert(np.array([float(k)]), fit, desc, "ga", k)
        cell = grid_index(spec, desc)
        if cell not in best or fit > best[cell][0]:
            best[cell] = (fit, k)
    if set(archive.cells) != set(best):
        return False
    return all(archive.cells[c].fitness == fit
               and archive.cells[c].genotype[0] == float(k)
               for c, (fit, k) in best.items())


def determinism_smoke() -> bool:
    cfg = config_from_pairs({
        "env": "point_gait", "T": "20", "B": "4", "J": "2", "G": "2",
        "policy_hidden": "8,8", "critic_hidden": "8,8", "grid_dims": "8,8",
        "n_init": "6", "transitions_batch": "8", "seed": "7",
    })
    a = run_gac(cfg)
    b = run_gac(cfg)
    return archive_fingerprint(a.archive) == archive_fingerprint(b.archive)


def run_all(verbose: bool = True) -> bool:
    ok = True
    t0 = time.perf_counter()
    errors = gradient_suite()
    for name, err in errors.items():
        good = err < GRAD_TOL
        ok &= good
        if verbose:
            print(f"{'PASS' if good else 'FAIL'} gradient {name}: "
                  f"max rel err {err:.3g} (tol {GRAD_TOL})")
    good = container_oracle()
    ok &= good
    if verbose:
        print(f"{'PASS' if good else 'FAIL'} container insertion oracle")
    good = determinism_smoke()
    ok &= good
    if verbose:
        print(f"{'PASS' if good else 'FAIL'} determinism smoke test")
        print(f"self-check finished in {time.perf_counter() - t0:.1f}s")
    return ok
