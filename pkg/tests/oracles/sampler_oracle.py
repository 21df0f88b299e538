"""Independent splitmix64 + Fisher-Yates reference for the episode sampler.

Deliberately written from the splitmix64 recurrence, without importing
anything from the ccli package. Runnable as a script to print the
frozen vectors used in the tests:

    python3 tests/oracles/sampler_oracle.py
"""

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_sequence(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of splitmix64 seeded with ``seed``."""
    out = []
    state = seed & MASK
    for _ in range(count):
        state = (state + GOLDEN) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z = z ^ (z >> 31)
        out.append(z)
    return out


def stream_seed(seed: int, stream: int) -> int:
    """Stream k's seed is the (k+1)-th splitmix64 output of the base seed."""
    return splitmix64_sequence(seed, stream + 1)[-1]


def fisher_yates(items: list, seed: int) -> list:
    """Descending-index Fisher-Yates shuffle driven by splitmix64 % bound."""
    items = list(items)
    gen = iter(
        splitmix64_sequence(seed, max(0, len(items) - 1))
    )
    for i in range(len(items) - 1, 0, -1):
        j = next(gen) % (i + 1)
        items[i], items[j] = items[j], items[i]
    return items


def episode_indices(
    labels: list[int], num_classes: int, shots: int, seed: int
) -> list[list[int]]:
    """Expected per-class support indices for a labeled image list."""
    rows = []
    for c in range(num_classes):
        class_idx = [i for i, y in enumerate(labels) if y == c]
        shuffled = fisher_yates(class_idx, stream_seed(seed, c))
        rows.append(shuffled[:shots])
    return rows


if __name__ == "__main__":
    print("splitmix64(seed=0)[:5] =", splitmix64_sequence(0, 5))
    print("splitmix64(seed=42)[:5] =", splitmix64_sequence(42, 5))
    toy_labels = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
    print(
        "episode(seed=42, 3x4, shots=4) =",
        episode_indices(toy_labels, 3, 4, 42),
    )
    print(
        "episode(seed=42, 3x4, shots=2) =",
        episode_indices(toy_labels, 3, 2, 42),
    )
