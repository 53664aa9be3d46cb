"""Reference spectra computed independently of the kernel estimators."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from evolop._rng import make_rng
from evolop.datasets.systems import (
    LogisticMap,
    NoisyLogisticMap,
    harmonic_weights,
    noise_quantile,
    quadwell_potential,
)
from evolop.exceptions import ConfigError, NumericalError

logger = logging.getLogger("evolop")

PROVENANCES = ("FiniteRank", "GridGenerator", "Ulam")
# Drift of lambda_1 under mesh doubling above which a grid spectrum is not converged.
CONVERGENCE_TOL = 1e-3


@dataclass(frozen=True)
class GroundTruthSpectrum:
    """Reference eigenvalues with eigenfunctions sampled on a grid.

    ``eigenfunctions[:, j]`` belongs to ``eigenvalues[j]``; ``invariant_density``
    holds quadrature weights (summing to one) on ``grid``.
    """

    eigenvalues: np.ndarray
    grid: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    invariant_density: np.ndarray = field(repr=False)
    provenance: str
    converged: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"provenance must be one of {PROVENANCES}")

    def evaluate(self, x, index):
        """Linear interpolation of eigenfunction ``index`` at points ``x`` (1-d grids)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        f = self.eigenfunctions[:, index]
        return np.interp(x, self.grid, f.real) + 1j * np.interp(x, self.grid, f.imag)

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "converged": self.converged,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in np.asarray(self.eigenvalues, complex)],
            "grid": np.asarray(self.grid).tolist(),
            "eigenfunctions_re": np.real(self.eigenfunctions).tolist(),
            "eigenfunctions_im": np.imag(self.eigenfunctions).tolist(),
            "invariant_density": np.asarray(self.invariant_density).tolist(),
            "meta": self.meta,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _sort_desc(lam):
    lam = np.asarray(lam)
    return np.lexsort((-np.round(lam.imag, 12), -np.round(lam.real, 12), -np.round(np.abs(lam), 12)))


def _normalize(F, weights):
    norms = np.sqrt(weights @ np.abs(F) ** 2 / weights.sum())
    F = F / norms
    top = F[np.argmax(np.abs(F), axis=0), np.arange(F.shape[1])]
    return F * (np.conj(top) / np.abs(top))


# -- noisy logistic map ------------------------------------------------------


def _logistic(x):
    return 4.0 * x * (1.0 - x)


def noisy_logistic_truth(N, grid_points=1024, quad_nodes=None):
    """Exact spectrum of the noisy logistic transfer operator.

    The noise density is ``sum_j c_j e^{2 pi i j z}`` with ``|j| <= N/2``, so the
    Koopman operator maps onto ``span{e^{-2 pi i l F(x)}}`` with
    ``F(x) = 4x(1-x)`` and acts there through the matrix
    ``K_jl = c_j int_0^1 e^{2 pi i j y} e^{-2 pi i l F(y)} dy``, evaluated by
    Gauss-Legendre quadrature. Eigenfunctions are Koopman (observable-side)
    eigenfunctions sampled on a uniform grid of cell midpoints; the invariant
    density is the transfer-side eigenvector at 1.
    """
    if int(N) != N or N < 0 or N % 2:
        raise ConfigError(f"N must be an even nonnegative integer (harmonic expansion), got {N}")
    N = int(N)
    if N > 64:
        raise ConfigError("N > 64 exceeds the quadrature budget")
    half = N // 2
    j = np.arange(-half, half + 1)
    c = harmonic_weights(N)[np.abs(j)]
    nodes = quad_nodes or max(256, 64 * (N + 2))
    t, w = np.polynomial.legendre.leggauss(nodes)
    y, w = 0.5 * (t + 1.0), 0.5 * w
    Fy = _logistic(y)
    E_y = np.exp(2j * np.pi * np.outer(y, j))  # e^{2 pi i j y}
    E_F = np.exp(-2j * np.pi * np.outer(Fy, j))  # e^{-2 pi i l F(y)}
    K = c[:, None] * ((E_y * w[:, None]).T @ E_F)
    lam, A = np.linalg.eig(K)
    order = _sort_desc(lam)
    lam, A = lam[order], A[:, order]
    lam = np.where(np.abs(lam.imag) <= 1e-13, lam.real + 0j, lam)

    grid = (np.arange(grid_points) + 0.5) / grid_points
    F = np.exp(-2j * np.pi * np.outer(_logistic(grid), j)) @ A

    # Transfer side: densities in span{e^{2 pi i j y}}, coefficient map c_j <e^{-2 pi i j F}, e^{2 pi i l .}>.
    P = c[:, None] * ((E_F * w[:, None]).T @ E_y)
    mu, B = np.linalg.eig(P)
    k = np.argmin(np.abs(mu - 1.0))
    rho = (np.exp(2j * np.pi * np.outer(grid, j)) @ B[:, k]).real
    rho = rho * np.sign(rho.sum())
    rho = np.clip(rho, 0.0, None)
    weights = rho / rho.sum()
    return GroundTruthSpectrum(
        lam,
        grid,
        _normalize(F, weights),
        weights,
        "FiniteRank",
        True,
        {"system": NoisyLogisticMap(N).to_dict(), "quad_nodes": nodes},
    )


# -- Ulam ---------------------------------------------------------------------


def _noise_antiderivative(N, z):
    # int_0^z of the periodic noise density, valid for all real z
    c = harmonic_weights(N)
    out = c[0] * z
    for j in range(1, c.size):
        out = out + c[j] * np.sin(2 * np.pi * j * z) / (np.pi * j)
    return out


def _ulam_quadrature(N, cells, nodes_per_cell=8):
    edges = np.linspace(0.0, 1.0, cells + 1)
    t, w = np.polynomial.legendre.leggauss(nodes_per_cell)
    h = 1.0 / cells
    P = np.empty((cells, cells))
    for i in range(cells):
        x = edges[i] + 0.5 * h * (t + 1.0)
        Fx = _logistic(x)
        G = _noise_antiderivative(N, edges[None, :] - Fx[:, None])  # (nodes, cells+1)
        mass = np.diff(G, axis=1)  # P(y in cell k | x)
        P[i] = 0.5 * w @ mass
    return P


def _ulam_montecarlo(spec, cells, samples_per_cell, seed):
    rng = make_rng(seed)
    P = np.zeros((cells, cells))
    quant = noise_quantile(spec.N) if isinstance(spec, NoisyLogisticMap) and spec.N > 0 else None
    for i in range(cells):
        x = (i + rng.uniform(size=samples_per_cell)) / cells
        y = spec.step(x)
        if isinstance(spec, NoisyLogisticMap):
            u = rng.uniform(size=samples_per_cell)
            y = (y + (quant(u) if quant is not None else u - 0.5)) % 1.0
        idx = np.minimum((y * cells).astype(np.int64), cells - 1)
        P[i] = np.bincount(idx, minlength=cells) / samples_per_cell
    return P


def ulam_truth(spec, cells=2048, samples_per_cell=1000, seed=0, method="auto", n_eig=None):
    """Ulam discretization of a 1-d map on [0, 1].

    ``method`` is ``"quadrature"`` (noisy logistic map only, transition
    probabilities integrated exactly in the noise variable), ``"montecarlo"``,
    or ``"auto"`` which picks quadrature when available. Eigenfunctions are
    the right eigenvectors of the transition matrix on the cell midpoints,
    i.e. observable-side functions; the invariant density is the left
    eigenvector at 1.
    """
    if not isinstance(spec, (LogisticMap, NoisyLogisticMap)):
        raise ConfigError(f"ulam_truth needs a 1-d map system, got {getattr(spec, 'name', spec)!r}")
    if int(cells) != cells or cells < 2:
        raise ConfigError(f"cells must be an integer >= 2, got {cells}")
    cells = int(cells)
    if method == "auto":
        method = "quadrature" if isinstance(spec, NoisyLogisticMap) else "montecarlo"
    if method == "quadrature":
        if not isinstance(spec, NoisyLogisticMap):
            raise ConfigError("quadrature Ulam is only available for the noisy logistic map")
        P = _ulam_quadrature(spec.N, cells)
        P = np.clip(P, 0.0, None)
    elif method == "montecarlo":
        if samples_per_cell < 1:
            raise ConfigError("samples_per_cell must be positive")
        P = _ulam_montecarlo(spec, cells, int(samples_per_cell), seed)
    else:
        raise ConfigError(f"unknown Ulam method {method!r}")
    P = P / P.sum(axis=1, keepdims=True)

    # Right eigenvectors of P are the discretized Koopman eigenfunctions.
    lam, Lv, R = sl.eig(P, left=True, right=True)
    order = _sort_desc(lam)
    lam, Lv, R = lam[order], Lv[:, order], R[:, order]
    lam = np.where(np.abs(lam.imag) <= 1e-13, lam.real + 0j, lam)
    if abs(lam[0] - 1.0) > 1e-8:
        raise NumericalError(f"Ulam matrix leading eigenvalue {lam[0]} is not 1")
    rho = np.abs(Lv[:, 0].real)
    if n_eig is not None:
        lam, R = lam[:n_eig], R[:, :n_eig]
    weights = rho / rho.sum()
    grid = (np.arange(cells) + 0.5) / cells
    return GroundTruthSpectrum(
        lam,
        grid,
        _normalize(R, np.full(cells, 1.0 / cells)),
        weights,
        "Ulam",
        True,
        {"system": spec.to_dict(), "cells": cells, "method": method, "transition_row_sums": P.sum(axis=1).tolist()},
    )


# -- Langevin ------------------------------------------------------------------


def _langevin_grid_spectrum(beta, lo, hi, points, n_eig):
    # Flux-form central differences of L f = beta^-1 e^{beta V} (e^{-beta V} f')'
    # with no-flux boundaries; symmetric in the weights pi_i h_i.
    x = np.linspace(lo, hi, points)
    h = x[1] - x[0]
    V = quadwell_potential(x)
    Vmid = quadwell_potential(0.5 * (x[:-1] + x[1:]))
    shift = V.min()
    pi = np.exp(-beta * (V - shift))
    pi_mid = np.exp(-beta * (Vmid - shift))
    cell = np.full(points, h)
    cell[0] = cell[-1] = 0.5 * h
    mass = pi * cell  # diagonal of the weighted inner product
    cond = pi_mid / (beta * h)  # edge conductances
    diag = np.zeros(points)
    diag[:-1] -= cond
    diag[1:] -= cond
    # Symmetrize D^-1/2 S D^-1/2 with S the stiffness, D the mass.
    sq = np.sqrt(mass)
    d = diag / mass
    e = cond / (sq[:-1] * sq[1:])
    nu, Z = sl.eigh_tridiagonal(d, e, select="i", select_range=(points - n_eig, points - 1))
    nu, Z = nu[::-1], Z[:, ::-1]
    F = Z / sq[:, None]  # eigenfunctions, mass-orthonormal
    weights = mass / mass.sum()
    F = F * np.sqrt(mass.sum())
    return x, nu, F, weights


def langevin_truth(beta_inv_temp=1.0, lag_time=0.1, grid=(-1.0, 1.0, 1000), n_eig=6):
    """Transfer-operator spectrum of the quadruple-well Langevin dynamics at lag ``lag_time``.

    The generator is discretized on a uniform grid; eigenvalues are
    ``exp(lag_time * nu)``. The spectrum is recomputed on a grid with twice as
    many points and flagged as non-converged if ``lambda_1`` moves by more than
    ``CONVERGENCE_TOL``.
    """
    lo, hi, points = grid
    if not lo < hi:
        raise ConfigError("grid must satisfy lo < hi")
    if int(points) != points or points < 100:
        raise ConfigError(f"grid needs at least 100 points, got {points}")
    if beta_inv_temp <= 0 or lag_time <= 0:
        raise ConfigError("beta_inv_temp and lag_time must be positive")
    points = int(points)
    n_eig = max(2, min(int(n_eig), points))
    x, nu, F, weights = _langevin_grid_spectrum(beta_inv_temp, lo, hi, points, n_eig)
    nu[0] = min(nu[0], 0.0)
    lam = np.exp(lag_time * nu)
    _, nu2, _, _ = _langevin_grid_spectrum(beta_inv_temp, lo, hi, 2 * points, 2)
    drift = float(abs(np.exp(lag_time * nu2[1]) - lam[1]))
    converged = drift <= CONVERGENCE_TOL
    if not converged:
        logger.warning("Langevin grid spectrum not converged: lambda_1 drift %.2e", drift)
    F = F * np.sign(F[np.argmax(np.abs(F), axis=0), np.arange(F.shape[1])])
    return GroundTruthSpectrum(
        lam.astype(complex),
        x,
        F.astype(complex),
        weights,
        "GridGenerator",
        converged,
        {
            "beta_inv_temp": beta_inv_temp,
            "lag_time": lag_time,
            "grid": [lo, hi, points],
            "generator_eigenvalues": nu.tolist(),
            "lambda1_drift": drift,
        },
    )
