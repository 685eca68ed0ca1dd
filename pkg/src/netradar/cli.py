"""Command-line front end: simulate, evaluate, train, verify, benchmark.

Exit codes: 0 on success, 2 for configuration problems (bad flags, missing
files, malformed scenarios or weights), 3 when ``verify`` finds a property
violation, 4 for failures while running (a simulation or training error).

All randomness is seeded through the flags, so rerunning a command with the
same arguments produces byte-identical output files.  Floats in CSV output
are written with ``repr`` so values survive a write/read cycle exactly.
"""

import argparse
import dataclasses
import json
import os
import re
import sys
import time

import numpy as np

from netradar import geometry, seqdec
from netradar.esto import (
    EstoError,
    PreferencePolicy,
    load_weights,
    save_weights,
    train as train_esto,
)
from netradar.neural import nets as neural_nets
from netradar.neural import ppo
from netradar.policy import GreedyBaseline, PolicyError
from netradar.world import (
    ScenarioError,
    World,
    WorldError,
    resolve_scenario,
    run_episode,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_RUNTIME = 4


class ConfigError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


# -- CSV helpers -----------------------------------------------------------

_INT_RE = re.compile(r"-?\d+$")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _parse_cell(text: str):
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Returns (header, rows) with ints/floats parsed back exactly."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty CSV")
    header = lines[0].split(",")
    rows = [tuple(_parse_cell(c) for c in line.split(","))
            for line in lines[1:]]
    return header, rows


# -- scenario / policy resolution -------------------------------------------

def _load_scenario(ref: str, overrides):
    try:
        scenario = resolve_scenario(ref)
    except (ScenarioError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"scenario {ref!r}: {exc}") from exc
    if overrides:
        changes = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, raw = item.split("=", 1)
            try:
                changes[key] = json.loads(raw)
            except json.JSONDecodeError:
                changes[key] = raw
        try:
            scenario = dataclasses.replace(scenario, **changes)
        except (TypeError, ScenarioError) as exc:
            raise ConfigError(f"override failed: {exc}") from exc
    return scenario


def build_policies(spec: str, scenario):
    """Map a policy spec string to one policy instance per radar."""
    n = scenario.n_radars
    if spec == "baseline":
        return [GreedyBaseline() for _ in range(n)]
    if spec.startswith("esto:"):
        path = spec[len("esto:"):]
        try:
            model, _ = load_weights(path)
        except (EstoError, OSError, ValueError) as exc:
            raise ConfigError(f"weights {path!r}: {exc}") from exc
        return [PreferencePolicy(model) for _ in range(n)]
    if spec.startswith("rl:"):
        path = spec[len("rl:"):]
        try:
            actor, _, _, _, _ = ppo.load_checkpoint(path)
        except (neural_nets.NeuralError, OSError,
                ValueError, KeyError) as exc:
            raise ConfigError(f"checkpoint {path!r}: {exc}") from exc
        return [ppo.NeuralPolicy(actor, mode="greedy") for _ in range(n)]
    raise ConfigError(
        f"unknown policy spec {spec!r} (use baseline, esto:<file>, rl:<file>)")


def _parse_seeds(text: str):
    """Either a count ('16' -> seeds 0..15) or an explicit '3,7,11' list."""
    if "," in text:
        seeds = [int(s) for s in text.split(",")]
    else:
        seeds = list(range(int(text)))
    if not seeds:
        raise ConfigError("need at least one seed")
    return seeds


def _run_one(scenario, policies, seed: int, steps: int) -> np.ndarray:
    try:
        world = World(scenario, seed=seed)
        return run_episode(world, policies, n_steps=steps)
    except (WorldError, PolicyError, neural_nets.NeuralError) as exc:
        raise RuntimeFailure(f"seed {seed}: {exc}") from exc


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    policies = build_policies(args.policy, scenario)
    utilities = _run_one(scenario, policies, args.seed, args.steps)
    if args.out:
        rows = [(scenario.name, args.policy, args.seed, t, float(u))
                for t, u in enumerate(utilities)]
        write_csv(args.out, ("scenario", "policy", "seed", "step", "utility"),
                  rows)
    print(f"{scenario.name}: policy {args.policy} seed {args.seed} "
          f"mean utility {utilities.mean():.6f} over {len(utilities)} steps")
    return EXIT_OK


def cmd_eval(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    seeds = _parse_seeds(args.seeds)
    specs = [s for s in args.policies.split(",") if s]
    if not specs:
        raise ConfigError("--policies must list at least one policy")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    summary = {}
    for spec in specs:
        policies = build_policies(spec, scenario)
        means = []
        for seed in seeds:
            utilities = _run_one(scenario, policies, seed, args.steps)
            rows.extend((scenario.name, spec, seed, t, float(u))
                        for t, u in enumerate(utilities))
            means.append(float(utilities.mean()))
        arr = np.array(means)
        summary[spec] = {
            "episode_means": means,
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
        }
        print(f"{scenario.name}: {spec} mean {arr.mean():.6f} "
              f"std {summary[spec]['std']:.6f} over {len(seeds)} seeds")
    csv_path = os.path.join(args.out, "results.csv")
    write_csv(csv_path, ("scenario", "policy", "seed", "step", "utility"),
              rows)
    with open(os.path.join(args.out, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"scenario": scenario.name, "steps": args.steps,
                   "seeds": seeds, "policies": summary}, fh, indent=2)
    return EXIT_OK


def cmd_train_esto(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    train_scenario = scenario
    changes = {}
    if args.steps:
        changes["episode_length"] = args.steps
    if args.vertices:
        changes["vertices_per_ellipse"] = args.vertices
    if changes:
        train_scenario = dataclasses.replace(scenario, **changes)
    try:
        result = train_esto(args.variant, train_scenario,
                            generations=args.generations, runs=args.runs,
                            seed=args.seed, sigma0=args.sigma0,
                            n_jobs=args.jobs)
    except (EstoError, WorldError) as exc:
        raise RuntimeFailure(str(exc)) from exc
    save_weights(result, args.out)
    if args.history:
        hist = result.history
        rows = list(zip(hist["generation"], hist["best"], hist["mean"],
                        hist["best_ever"]))
        write_csv(args.history, ("generation", "best", "mean", "best_ever"),
                  rows)
    print(f"trained {args.variant} on {scenario.name}: "
          f"best fitness {result.history['best_ever'][-1]:.6f} "
          f"after {args.generations} generations -> {args.out}")
    return EXIT_OK


def cmd_train_rl(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    train_scenario = scenario
    if args.vertices:
        train_scenario = dataclasses.replace(scenario,
                                             vertices_per_ellipse=args.vertices)
    if args.resume:
        try:
            ppo.load_checkpoint(args.resume)
        except (neural_nets.NeuralError, OSError,
                ValueError, KeyError) as exc:
            raise ConfigError(f"resume {args.resume!r}: {exc}") from exc
    try:
        result = ppo.train_rl(
            train_scenario, iterations=args.iterations,
            episodes=args.episodes, horizon=args.horizon, seed=args.seed,
            lr=args.lr, clip_eps=args.clip_eps, epochs=args.epochs,
            minibatch=args.minibatch, entropy_coef=args.entropy_coef,
            gamma=args.gamma, lam=args.lam, checkpoint_path=args.out,
            resume=args.resume)
    except (neural_nets.NeuralError, WorldError) as exc:
        raise RuntimeFailure(str(exc)) from exc
    if args.history:
        keys = list(result.history[0].keys())
        rows = [tuple(row[k] for k in keys) for row in result.history]
        write_csv(args.history, keys, rows)
    final = result.history[-1]["mean_utility"]
    print(f"trained rl on {scenario.name}: rollout mean utility "
          f"{final:.6f} at iteration {result.history[-1]['iteration']} "
          f"-> {args.out}")
    return EXIT_OK


# -- verify ------------------------------------------------------------------

def _verify_surjectivity(rng, n_tables: int, max_m: int) -> float:
    worst = 0.0
    for _ in range(n_tables):
        m = int(rng.integers(1, max_m + 1))
        n_agents = int(rng.integers(1, 3))
        probs = tuple(
            rng.dirichlet(np.ones(1 << m), size=int(rng.integers(1, 3)))
            for _ in range(n_agents))
        pi = seqdec.PolicyTable(n_targets=m, probs=probs)
        back = seqdec.transpose(seqdec.invert(pi))
        for k in range(n_agents):
            worst = max(worst, float(np.max(np.abs(
                back.probs[k] - pi.probs[k]))))
    return worst


def _verify_value_equivalence(rng, n_instances: int) -> float:
    worst = 0.0
    for _ in range(n_instances):
        n_agents = int(rng.integers(1, 3))
        m = int(rng.integers(1, 4 - n_agents))
        M = seqdec.random_instance(
            rng, n_agents=n_agents, n_targets=m,
            n_states=int(rng.integers(1, 4)),
            n_obs=int(rng.integers(1, 3)),
            horizon=int(rng.integers(1, 4)))
        sq = seqdec.random_seq_policy(M, rng)
        lifted = seqdec.value_lifted(seqdec.lift(M), sq)
        direct = seqdec.value(M, seqdec.transpose(sq))
        worst = max(worst, abs(lifted - direct))
    return worst


def _verify_gradients(rng) -> float:
    actor = neural_nets.ActorNet(seed=int(rng.integers(1000)))
    m, batch = 4, 5
    obs = rng.normal(size=(batch, m, 23)) * 0.5
    valid = rng.random((batch, m + 1)) > 0.3
    valid[:, m] = True
    actions = np.array([int(np.flatnonzero(v)[0]) for v in valid])
    adv = rng.normal(size=batch)

    def compute_actor():
        loss, grads, _ = ppo._actor_loss_and_grads(
            actor, obs, valid, actions, np.zeros(batch), adv,
            clip_eps=0.2, entropy_coef=0.01)
        return loss, grads

    worst = neural_nets.grad_check(actor.parameters(),
                                   compute_actor).max_rel_error
    critic = neural_nets.CriticNet(input_dim=7, hidden=8,
                                   seed=int(rng.integers(1000)))
    S = rng.normal(size=(6, 7))
    targets = rng.normal(size=6)

    def compute_critic():
        v, cache = critic.forward(S)
        resid = v - targets
        return float(np.mean(resid ** 2)), critic.backward(
            (2.0 / 6) * resid, cache)

    return max(worst, neural_nets.grad_check(critic.parameters(),
                                             compute_critic).max_rel_error)


def _random_ellipses(rng, count: int):
    """Overlapping configurations whose intersection fills a few percent of
    the common bounding box, keeping the rejection estimate's own noise well
    inside the 2-percent band at one million samples."""
    out = []
    for _ in range(count):
        theta = rng.uniform(0.0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        cov = rot @ np.diag(rng.uniform(0.3, 1.0, 2)) @ rot.T
        center = rng.uniform(-0.2, 0.2, 2)
        out.append(geometry.ellipse_from_covariance(center, cov, scale_k=1.0))
    return out


def _mc_area(ellipses, n_samples: int, rng) -> float:
    boxes = np.array([e.bounding_box() for e in ellipses])
    lo = boxes[:, :2].max(axis=0)
    hi = boxes[:, 2:].min(axis=0)
    if np.any(hi <= lo):
        return 0.0
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    inside = np.ones(n_samples, dtype=bool)
    for e in ellipses:
        local = np.linalg.solve(e.transform, (pts - e.center).T)
        inside &= (local ** 2).sum(axis=0) <= 1.0
    return float(np.prod(hi - lo) * inside.mean())


def _verify_mc_area(rng, n_configs: int, n_samples: int) -> float:
    """Worst error ratio: |poly - mc| over max(0.02 * mc, 1e-3)."""
    worst = 0.0
    for k in range(n_configs):
        ellipses = _random_ellipses(rng, 2 + k % 2)
        area = geometry.intersection_area(ellipses, vertices_per_ellipse=64)
        mc = _mc_area(ellipses, n_samples, rng)
        allowed = max(0.02 * mc, 1e-3)
        worst = max(worst, abs(area - mc) / allowed)
    return worst


def cmd_verify(args) -> int:
    quick = args.level == "quick"
    rng = np.random.default_rng(0)
    checks = [
        ("policy-transposition round trip",
         _verify_surjectivity(rng, 60 if quick else 200, 3 if quick else 4),
         1e-9),
        ("lifted value equivalence",
         _verify_value_equivalence(rng, 15 if quick else 50), 1e-9),
        ("actor/critic gradient match", _verify_gradients(rng), 1e-4),
        ("monte-carlo intersection area",
         _verify_mc_area(rng, 20 if quick else 100,
                         200_000 if quick else 1_000_000), 1.0),
    ]
    failed = False
    for name, observed, tolerance in checks:
        ok = observed <= tolerance
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: max error "
              f"{observed:.3e} (tolerance {tolerance:.0e})")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    B, E = args.batch, args.ellipses
    centers = rng.uniform(-1.0, 1.0, size=(B, E, 2))
    mats = rng.normal(size=(B, E, 2, 2))
    transforms = mats @ np.swapaxes(mats, -1, -2) + 0.5 * np.eye(2)
    transforms = geometry.spd_sqrt_2x2(transforms)

    from netradar.geometry import _purepy
    backends = [("pure", _purepy)]
    try:
        from netradar.geometry import _core
        backends.insert(0, ("compiled", _core))
    except ImportError:
        print("compiled backend unavailable; timing pure backend only")

    timings = {}
    for name, impl in backends:
        impl.intersection_areas_batch(centers, transforms, args.vertices)
        t0 = time.perf_counter()
        for _ in range(args.reps):
            areas = impl.intersection_areas_batch(centers, transforms,
                                                  args.vertices)
        timings[name] = (time.perf_counter() - t0) / args.reps
        print(f"{name:9s} {timings[name] * 1e3:9.3f} ms per batch of "
              f"{B} x {E} ellipses at {args.vertices} vertices "
              f"(checksum {areas.sum():.6f})")
    if len(timings) == 2:
        print(f"speedup: {timings['pure'] / timings['compiled']:.1f}x "
              f"(active backend: {geometry.BACKEND})")
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netradar",
        description="Decentralized multi-radar target-allocation workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario(p):
        p.add_argument("--scenario", required=True,
                       help="bundled scenario name or path to a JSON file")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a scenario field (repeatable; value "
                            "parsed as JSON, falling back to a string)")

    p = sub.add_parser("simulate", help="run one seeded episode")
    add_scenario(p)
    p.add_argument("--policy", default="baseline",
                   help="baseline, esto:<weights.json>, or rl:<ckpt.json>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--out", help="write per-step utilities as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="multi-seed policy comparison")
    add_scenario(p)
    p.add_argument("--policies", default="baseline",
                   help="comma-separated policy specs")
    p.add_argument("--seeds", default="16",
                   help="a count (16 -> seeds 0..15) or a comma list")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-esto",
                       help="optimize preference weights with the"
                            " evolution strategy")
    add_scenario(p)
    p.add_argument("--variant", choices=("esto", "esto-m"), default="esto")
    p.add_argument("--generations", type=int, default=50)
    p.add_argument("--runs", type=int, default=10,
                   help="episodes averaged per fitness evaluation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma0", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=0,
                   help="training episode length override (0 = scenario)")
    p.add_argument("--vertices", type=int, default=0,
                   help="training ellipse vertex override (0 = scenario)")
    p.add_argument("--jobs", type=int, default=None,
                   help="fitness evaluations in parallel "
                        "(default: NETRADAR_JOBS or 1)")
    p.add_argument("--out", required=True, help="weights JSON output path")
    p.add_argument("--history", help="per-generation fitness CSV")
    p.set_defaults(func=cmd_train_esto)

    p = sub.add_parser("train-rl", help="train the actor-critic policy")
    add_scenario(p)
    p.add_argument("--iterations", type=int, default=60)
    p.add_argument("--episodes", type=int, default=4)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--clip-eps", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--minibatch", type=int, default=64)
    p.add_argument("--entropy-coef", type=float, default=1e-2)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--lam", type=float, default=0.95)
    p.add_argument("--vertices", type=int, default=0,
                   help="training ellipse vertex override (0 = scenario)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", required=True,
                   help="checkpoint path (rewritten every iteration)")
    p.add_argument("--history", help="per-iteration training CSV")
    p.set_defaults(func=cmd_train_rl)

    p = sub.add_parser("verify",
                       help="run the executable property suites")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="compare geometry backends")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--ellipses", type=int, default=3)
    p.add_argument("--vertices", type=int, default=64)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
