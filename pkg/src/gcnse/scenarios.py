"""Named synthetic scenarios built from an :class:`ExperimentConfig`."""

from __future__ import annotations

import numpy as np

from . import synthgen
from .config import ConfigError, ExperimentConfig
from .graph import DynamicGraph

# label drift used when the config leaves it unset
DEFAULT_DRIFT = {
    "base": 0.05,
    "transition": None,
}

DEFAULT_STEPS = {
    "deletion": (3, 8, 9),
    "densify": (1, 4, 5, 8),
    "anomaly": (5,),
    "transition": (3,),
}


def scenario_steps(cfg: ExperimentConfig) -> tuple[int, ...]:
    if cfg.steps is not None:
        return tuple(cfg.steps)
    if cfg.scenario == "single-relevant":
        return tuple(range(cfg.num_timesteps - 1))
    return DEFAULT_STEPS.get(cfg.scenario, ())


def base_params(cfg: ExperimentConfig, num_timesteps: int | None = None, seed: int | None = None) -> synthgen.GenParams:
    t = num_timesteps or cfg.num_timesteps
    if cfg.scenario == "transition":
        if cfg.label_drift is not None:
            raise ConfigError("the transition scenario takes high_prob/low_prob, not label_drift")
        tp = synthgen.transition_schedule(t, scenario_steps(cfg), cfg.high_prob, cfg.low_prob)
    else:
        drift = cfg.label_drift if cfg.label_drift is not None else DEFAULT_DRIFT.get(cfg.scenario, 0.0)
        tp = (drift,) * t
    return synthgen.GenParams(
        num_nodes=cfg.num_nodes,
        num_classes=cfg.num_classes,
        num_timesteps=t,
        p_intra=cfg.p_intra,
        p_inter=cfg.p_inter,
        transition_prob=tp,
        seed=seed,
    )


def base_graph(cfg: ExperimentConfig) -> DynamicGraph:
    """The unmanipulated graph a scenario starts from (shared by paired comparisons)."""
    gen_seed = _scenario_seeds(cfg)[0]
    return synthgen.generate(base_params(cfg, seed=gen_seed))


def _scenario_seeds(cfg: ExperimentConfig) -> tuple[int, int, int]:
    scen, _ = cfg.seeds()
    kids = np.random.SeedSequence(scen).spawn(3)
    return tuple(int(k.generate_state(1)[0]) for k in kids)


def build(cfg: ExperimentConfig, base: DynamicGraph | None = None) -> DynamicGraph:
    """Generate the scenario graph described by ``cfg``."""
    gen_seed, manip_seed, flip_seed = _scenario_seeds(cfg)
    kind = cfg.scenario
    if kind == "periodic":
        block = synthgen.generate(base_params(cfg, num_timesteps=cfg.period, seed=gen_seed))
        block = periodic_block(block, manip_seed, cfg)
        return synthgen.make_periodic(block, cfg.repeats, cfg.flip_prob, seed=flip_seed)
    g = base if base is not None else synthgen.generate(base_params(cfg, seed=gen_seed))
    steps = scenario_steps(cfg)
    if kind == "deletion":
        return synthgen.delete_edges(g, steps, cfg.fraction, seed=manip_seed)
    if kind == "densify":
        classes = cfg.classes if cfg.classes is not None else range(cfg.num_classes)
        return synthgen.densify(
            g, steps, classes, cfg.p_intra_hi, cfg.p_inter_hi, seed=manip_seed,
            boost_between_listed=cfg.boost_between_listed,
        )
    if kind in ("anomaly", "single-relevant"):
        return synthgen.randomize_labels(g, steps, seed=manip_seed, p_intra=cfg.p_intra, p_inter=cfg.p_inter)
    return g


def periodic_block(block: DynamicGraph, seed: int, cfg: ExperimentConfig) -> DynamicGraph:
    """Give the block's positions distinct relevance so the attention has something to repeat.

    Position 0 carries random labels, position 1 is densified and the rest
    stay plain. The final position is never randomized since it holds the
    prediction target of the last copy.
    """
    if block.num_timesteps < 2:
        raise ConfigError("the periodic scenario needs period >= 2")
    rand_seed, dense_seed = np.random.SeedSequence(seed).spawn(2)
    out = synthgen.randomize_labels(
        block, [0], seed=int(rand_seed.generate_state(1)[0]), p_intra=cfg.p_intra, p_inter=cfg.p_inter
    )
    if block.num_timesteps > 2:
        out = synthgen.densify(
            out, [1], range(cfg.num_classes), cfg.p_intra_hi, cfg.p_inter_hi,
            seed=int(dense_seed.generate_state(1)[0]),
        )
    return out
