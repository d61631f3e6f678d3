from .rng import seed_sequence, stream

__all__ = [
    'seed_sequence',
    'stream',
]
