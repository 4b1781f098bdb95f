"""Independent dense reference implementations.

Everything here is written from the model definition with explicit
matrix inverses and scalar kernel loops, sharing no code with the package.
"""
import math

import numpy as np


def k_se(a, b, ell, sig):
    d2 = (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2
    return sig**2 * math.exp(-d2 / (2 * ell**2))


def gram(A, B, ell, sig, sm):
    """Intercept-plus-GP covariance between two point lists, by loops."""
    out = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = sm**2 + k_se(a, b, ell, sig)
    return out


def cliff_oracle(X_T, Y_T, X_C, Y_C, B, ell, sig, eps, sm):
    """Posterior of g_T(B) - g_C(B) from the full joint Gaussian."""
    R, nT, nC = len(B), len(X_T), len(X_C)
    # latent z = [g_T(B), g_C(B)], observed y = [Y_T, Y_C]
    Kzz = np.zeros((2 * R, 2 * R))
    Kzz[:R, :R] = gram(B, B, ell, sig, sm)
    Kzz[R:, R:] = gram(B, B, ell, sig, sm)
    Kzy = np.zeros((2 * R, nT + nC))
    Kzy[:R, :nT] = gram(B, X_T, ell, sig, sm)
    Kzy[R:, nT:] = gram(B, X_C, ell, sig, sm)
    Kyy = np.zeros((nT + nC, nT + nC))
    Kyy[:nT, :nT] = gram(X_T, X_T, ell, sig, sm) + eps**2 * np.eye(nT)
    Kyy[nT:, nT:] = gram(X_C, X_C, ell, sig, sm) + eps**2 * np.eye(nC)
    inv = np.linalg.inv(Kyy)
    y = np.concatenate([Y_T, Y_C])
    A = np.hstack([np.eye(R), -np.eye(R)])
    mean = A @ Kzy @ inv @ y
    cov = A @ (Kzz - Kzy @ inv @ Kzy.T) @ A.T
    return mean, cov


def covariate_oracle(X_T, Y_T, D_T, X_C, Y_C, D_C, B, ell, sig, eps, sm, sb):
    """Cliff posterior and coefficient posterior mean with a shared linear term.

    Latent z = [g_T(B), g_C(B), beta]; outcomes Y = g(X) + D beta + noise.
    """
    R, nT, nC = len(B), len(X_T), len(X_C)
    p = D_T.shape[1]
    D = np.vstack([D_T, D_C])
    Kyy = np.zeros((nT + nC, nT + nC))
    Kyy[:nT, :nT] = gram(X_T, X_T, ell, sig, sm) + eps**2 * np.eye(nT)
    Kyy[nT:, nT:] = gram(X_C, X_C, ell, sig, sm) + eps**2 * np.eye(nC)
    Kyy += sb**2 * D @ D.T
    Kzy = np.zeros((2 * R + p, nT + nC))
    Kzy[:R, :nT] = gram(B, X_T, ell, sig, sm)
    Kzy[R:2 * R, nT:] = gram(B, X_C, ell, sig, sm)
    Kzy[2 * R:, :] = sb**2 * D.T
    Kzz = np.zeros((2 * R + p, 2 * R + p))
    Kzz[:R, :R] = gram(B, B, ell, sig, sm)
    Kzz[R:2 * R, R:2 * R] = gram(B, B, ell, sig, sm)
    Kzz[2 * R:, 2 * R:] = sb**2 * np.eye(p)
    inv = np.linalg.inv(Kyy)
    y = np.concatenate([Y_T, Y_C])
    post_mean = Kzy @ inv @ y
    post_cov = Kzz - Kzy @ inv @ Kzy.T
    A = np.hstack([np.eye(R), -np.eye(R), np.zeros((R, p))])
    return A @ post_mean, A @ post_cov @ A.T, post_mean[2 * R:]


def unit_weight_oracle(X_T, X_C, B, w, ell, sig, eps, sm):
    ST = gram(X_T, X_T, ell, sig, sm) + eps**2 * np.eye(len(X_T))
    SC = gram(X_C, X_C, ell, sig, sm) + eps**2 * np.eye(len(X_C))
    W_T = gram(B, X_T, ell, sig, sm) @ np.linalg.inv(ST)
    W_C = gram(B, X_C, ell, sig, sm) @ np.linalg.inv(SC)
    s = np.sum(w)
    return W_T.T @ w / s, -(W_C.T @ w) / s


def null_variance_oracle(X_T, X_C, B, w, ell, sig, eps, sm):
    """Variance of the LATE posterior mean when outcomes follow one surface."""
    a_T, a_C = unit_weight_oracle(X_T, X_C, B, w, ell, sig, eps, sm)
    X = list(X_T) + list(X_C)
    S0 = gram(X, X, ell, sig, sm) + eps**2 * np.eye(len(X))
    a = np.concatenate([a_T, a_C])
    return float(a @ S0 @ a)
