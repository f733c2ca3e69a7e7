"""Shared seeded fixtures.

The expensive artifacts (world, model, query pairs, dictionary) are built
once per session; individual tests treat them as read-only.
"""

import numpy as np
import pytest

from morphattack import (FlowEstimatorConfig, Image, FlowField, QuerySeed,
                         QueryStageConfig, RoiMask, TrainingPair, build_world,
                         learn_dictionary, run_query_stage, train_toy)
from morphattack.rng import CounterRng

FIXTURE_SEED = 0
WORLD_KW = dict(width=32, height=32, frames=10, amplitude=2.0, sigma=8.0,
                smoothness=2.0)
ORACLE_D = 24
ORACLE_TEMPERATURE = 0.1
TRAIN_FRAMES = 3
GAMMA = 0.6


def random_image(rng: CounterRng, width: int, height: int,
                 lo: float = 0.0, hi: float = 1.0) -> Image:
    return Image(rng.uniform(width * height, lo, hi).reshape(height, width))


def random_flow(rng: CounterRng, width: int, height: int,
                scale: float = 1.0) -> FlowField:
    h = rng.uniform(width * height, -scale, scale)
    v = rng.uniform(width * height, -scale, scale)
    return FlowField.from_vectors(h, v, width, height)


def toy_pairs(seed: int, count: int, width: int, height: int,
              roi: RoiMask) -> list[TrainingPair]:
    """Random smooth-ish pairs for span/round-trip tests."""
    rng = CounterRng.from_seeds(seed).split_label("toy-pairs")
    out = []
    for i in range(count):
        sub = rng.split(i)
        out.append(TrainingPair(image=random_image(sub, width, height,
                                                   0.2, 0.8),
                                flow=random_flow(sub, width, height, 1.5)))
    return out


@pytest.fixture(scope="session")
def world20():
    return build_world(FIXTURE_SEED, 20, **WORLD_KW)


@pytest.fixture(scope="session")
def fr_model(world20):
    samples = [(img, w.label) for w in world20
               for img in w.frames[:TRAIN_FRAMES]]
    return train_toy(samples, d=ORACLE_D, temperature=ORACLE_TEMPERATURE)


@pytest.fixture(scope="session")
def query_result(world20, fr_model):
    seeds = [QuerySeed(image_id=f"id{w.label}", label=w.label,
                       image=w.frames[0], frames=w.frames) for w in world20]
    return run_query_stage(seeds, fr_model, FlowEstimatorConfig(),
                           QueryStageConfig(gamma=GAMMA))


@pytest.fixture(scope="session")
def joint_dict(query_result):
    return learn_dictionary(query_result.pairs, RoiMask.full(32, 32))


@pytest.fixture(scope="session")
def attack_targets(world20):
    return [(f"id{w.label}_f{t}", w.label, img)
            for w in world20 for t, img in enumerate(w.frames)]
