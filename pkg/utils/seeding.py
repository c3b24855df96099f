# utils/seeding.py - named random streams derived from one root seed

import hashlib

import numpy as np


def derive_seed(root: int, label: str, index: int = 0) -> int:
    """Hash (root, label, index) into a 63-bit seed"""
    digest = hashlib.sha256(f"{int(root)}/{label}/{int(index)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def make_rng(root: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, label, index))
