"""
Именованные потоки случайных чисел.

Вся случайность выводится из одного целого seed: каждый компонент получает
собственный поток по имени (scene, trajectory, init, shuffle, augment, ...)
и целочисленным солям (индекс сцены, EM-итерация, эпоха).
"""

import zlib
from typing import Tuple

import numpy as np
import torch

STREAMS: Tuple[str, ...] = (
    "scene", "trajectory", "lighting", "init", "shuffle", "augment", "baseline", "eval",
)


def seed_sequence(seed: int, stream: str, *salt: int) -> np.random.SeedSequence:
    """Построение SeedSequence для потока ``stream`` с солями ``salt``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = zlib.crc32(stream.encode("utf-8"))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(key,) + tuple(int(s) for s in salt))


def rng(seed: int, stream: str, *salt: int) -> np.random.Generator:
    """Генератор numpy для именованного потока."""
    return np.random.default_rng(seed_sequence(seed, stream, *salt))


def torch_generator(seed: int, stream: str, *salt: int) -> torch.Generator:
    """Генератор torch, засеянный из того же именованного потока."""
    state = seed_sequence(seed, stream, *salt).generate_state(2, dtype=np.uint32)
    generator = torch.Generator()
    generator.manual_seed(int(state[0]) << 32 | int(state[1]))
    return generator


def derive_seed(seed: int, stream: str, *salt: int) -> int:
    """Производный целый seed (например, seed сцены по ее индексу)."""
    return int(seed_sequence(seed, stream, *salt).generate_state(1, dtype=np.uint32)[0])
