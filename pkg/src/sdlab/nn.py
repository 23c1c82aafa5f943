"""Minimal flat-parameter MLP with a hand-written backward pass."""

import numpy as np

from . import kernels


class Mlp:
    """Fully connected net, SiLU hidden activations, linear output.

    Parameters live in a single flat float64 vector so the same buffer can
    be serialized, perturbed for finite differences, and updated by Adam
    without any repacking.
    """

    def __init__(self, sizes):
        if len(sizes) < 2:
            raise ValueError("need at least input and output size")
        self.sizes = list(int(s) for s in sizes)
        offs = []
        cursor = 0
        for nin, nout in zip(self.sizes[:-1], self.sizes[1:]):
            offs.append((cursor, cursor + nin * nout, nin, nout))
            cursor += nin * nout + nout
        self.offs = np.array(offs, dtype=np.int64)
        self.n_params = cursor

    def init_params(self, rng):
        params = np.zeros(self.n_params)
        for w0, b0, nin, nout in self.offs:
            params[w0:w0 + nin * nout] = (
                rng.standard_normal(nin * nout) * np.sqrt(2.0 / nin)
            )
        return params

    def forward(self, params, X):
        return kernels.mlp_forward(params, self.offs, np.atleast_2d(X))

    def forward_cached(self, params, X):
        return kernels.mlp_forward_cached(params, self.offs, np.atleast_2d(X))

    def backward(self, params, Z, A, dY):
        return kernels.mlp_backward(params, self.offs, Z, A, np.atleast_2d(dY))


def time_embedding_table(T, dim):
    """Sinusoidal embeddings for integer timesteps 0..T, shape (T+1, dim)."""
    if dim % 2 != 0:
        raise ValueError("time embedding dimension must be even")
    t = np.arange(T + 1, dtype=np.float64)[:, None]
    freqs = np.exp(-np.log(10000.0) * np.arange(dim // 2) / (dim // 2))
    ang = t * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
