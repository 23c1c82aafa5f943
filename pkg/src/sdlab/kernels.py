"""Hot numeric kernels: MLP forward/backward and bilinear patch warp.

All kernels are float64 and process batches strictly row by row, so the
result for a sample is bitwise independent of the batch it is evaluated in.
They are JIT-compiled unless SDLAB_BACKEND=numpy (see backend.py).

MLP weights live in one flat parameter vector. `offs` is an int64 array of
shape (n_layers, 4) with columns (w_offset, b_offset, n_in, n_out); layer l
applies x @ W_l + b_l with SiLU on every layer except the last.
"""

import numpy as np

from .backend import maybe_njit


@maybe_njit
def mlp_forward(params, offs, X):
    L = offs.shape[0]
    B = X.shape[0]
    Y = np.empty((B, offs[L - 1, 3]))
    for r in range(B):
        a = X[r].copy()
        for l in range(L):
            w0, b0, nin, nout = offs[l, 0], offs[l, 1], offs[l, 2], offs[l, 3]
            W = params[w0:w0 + nin * nout].reshape(nin, nout)
            z = np.dot(a, W) + params[b0:b0 + nout]
            if l < L - 1:
                a = z / (1.0 + np.exp(-z))
            else:
                a = z
        Y[r] = a
    return Y


@maybe_njit
def mlp_forward_cached(params, offs, X):
    """Forward pass keeping per-layer inputs A and preactivations Z.

    A[l, r, :n_in(l)] is the input of layer l for row r; Z[l, r, :n_out(l)]
    its preactivation. Both are padded to the widest layer.
    """
    L = offs.shape[0]
    B = X.shape[0]
    maxw = offs[:, 2].max()
    if offs[:, 3].max() > maxw:
        maxw = offs[:, 3].max()
    A = np.zeros((L, B, maxw))
    Z = np.zeros((L, B, maxw))
    Y = np.empty((B, offs[L - 1, 3]))
    for r in range(B):
        a = X[r].copy()
        for l in range(L):
            w0, b0, nin, nout = offs[l, 0], offs[l, 1], offs[l, 2], offs[l, 3]
            A[l, r, :nin] = a
            W = params[w0:w0 + nin * nout].reshape(nin, nout)
            z = np.dot(a, W) + params[b0:b0 + nout]
            Z[l, r, :nout] = z
            if l < L - 1:
                a = z / (1.0 + np.exp(-z))
            else:
                a = z
        Y[r] = a
    return Y, Z, A


@maybe_njit
def mlp_backward(params, offs, Z, A, dY):
    """Reverse pass; returns (flat parameter gradient, input gradient)."""
    L = offs.shape[0]
    B = dY.shape[0]
    dparams = np.zeros_like(params)
    dX = np.empty((B, offs[0, 2]))
    for r in range(B):
        delta = dY[r].copy()
        for l in range(L - 1, -1, -1):
            w0, b0, nin, nout = offs[l, 0], offs[l, 1], offs[l, 2], offs[l, 3]
            W = params[w0:w0 + nin * nout].reshape(nin, nout)
            a = A[l, r, :nin].copy()
            dW = dparams[w0:w0 + nin * nout].reshape(nin, nout)
            dW += np.outer(a, delta)
            dparams[b0:b0 + nout] += delta
            da = np.dot(W, delta)
            if l > 0:
                z = Z[l - 1, r, :nin].copy()
                sig = 1.0 / (1.0 + np.exp(-z))
                delta = da * (sig * (1.0 + z * (1.0 - sig)))
            else:
                dX[r] = da
    return dparams, dX


@maybe_njit
def patch_render(scene, P, angle, dy, dx, scale):
    """Bilinear crop of `scene` under a rotate/scale/translate view."""
    Hs, Ws = scene.shape
    out = np.empty((P, P))
    cy = (Hs - 1) / 2.0
    cx = (Ws - 1) / 2.0
    h = (P - 1) / 2.0
    ca = np.cos(angle)
    sa = np.sin(angle)
    for i in range(P):
        u = i - h
        for j in range(P):
            v = j - h
            y = cy + dy + scale * (ca * u - sa * v)
            x = cx + dx + scale * (sa * u + ca * v)
            y0 = int(np.floor(y))
            x0 = int(np.floor(x))
            if y0 > Hs - 2:
                y0 = Hs - 2
            if y0 < 0:
                y0 = 0
            if x0 > Ws - 2:
                x0 = Ws - 2
            if x0 < 0:
                x0 = 0
            wy = y - y0
            wx = x - x0
            out[i, j] = ((1.0 - wy) * (1.0 - wx) * scene[y0, x0]
                         + (1.0 - wy) * wx * scene[y0, x0 + 1]
                         + wy * (1.0 - wx) * scene[y0 + 1, x0]
                         + wy * wx * scene[y0 + 1, x0 + 1])
    return out


@maybe_njit
def patch_vjp(Hs, Ws, P, angle, dy, dx, scale, upstream):
    """Adjoint of patch_render: scatter upstream with transposed weights."""
    grad = np.zeros((Hs, Ws))
    cy = (Hs - 1) / 2.0
    cx = (Ws - 1) / 2.0
    h = (P - 1) / 2.0
    ca = np.cos(angle)
    sa = np.sin(angle)
    for i in range(P):
        u = i - h
        for j in range(P):
            v = j - h
            y = cy + dy + scale * (ca * u - sa * v)
            x = cx + dx + scale * (sa * u + ca * v)
            y0 = int(np.floor(y))
            x0 = int(np.floor(x))
            if y0 > Hs - 2:
                y0 = Hs - 2
            if y0 < 0:
                y0 = 0
            if x0 > Ws - 2:
                x0 = Ws - 2
            if x0 < 0:
                x0 = 0
            wy = y - y0
            wx = x - x0
            g = upstream[i, j]
            grad[y0, x0] += (1.0 - wy) * (1.0 - wx) * g
            grad[y0, x0 + 1] += (1.0 - wy) * wx * g
            grad[y0 + 1, x0] += wy * (1.0 - wx) * g
            grad[y0 + 1, x0 + 1] += wy * wx * g
    return grad
