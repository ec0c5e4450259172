"""Independent reference for the toy transformer's parameter stream.

Regenerates every parameter with numpy float32 arithmetic and prints the
FNV-1a 64 checksum over the little-endian bytes. The C++ tests compare
against the value printed here.

    python3 toy_params_reference.py [seed] [layers hidden heads vocab max_seq]
"""
import sys

import numpy as np

MASK = (1 << 64) - 1


def splitmix64(state):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def draws(gen, n):
    top = np.array([next(gen) >> 40 for _ in range(n)], dtype=np.float64)
    return (top * 2.0**-24 * 0.2 - 0.1).astype(np.float32)


def gains(gen, n):
    return np.float32(1.0) + draws(gen, n)


def parameters(seed, layers=4, hidden=32, heads=4, vocab=128, max_seq=128):
    assert hidden % heads == 0
    d, f, v = hidden, 4 * hidden, vocab
    gen = splitmix64(seed)
    parts = [draws(gen, v * d), draws(gen, max_seq * d)]
    for _ in range(layers):
        parts += [gains(gen, d), draws(gen, d)]
        parts += [draws(gen, d * d) for _ in range(4)]
        parts += [gains(gen, d), draws(gen, d)]
        parts += [draws(gen, f * d), draws(gen, f), draws(gen, d * f), draws(gen, d)]
    parts += [gains(gen, d), draws(gen, d), draws(gen, v * d)]
    return np.concatenate(parts).astype("<f4")


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def main(argv):
    seed = int(argv[1]) if len(argv) > 1 else 1
    shape = [int(a) for a in argv[2:7]] if len(argv) > 6 else []
    params = parameters(seed, *shape)
    print(f"count {params.size}")
    print(f"first {params[0]:.9g} {params[1]:.9g} {params[2]:.9g}")
    print(f"checksum 0x{fnv1a64(params.tobytes()):016x}")


if __name__ == "__main__":
    main(sys.argv)
