"""Closed-form convergence bound and its empirical verification.

The bound applies to federated averaging of single full-gradient local
steps with equal client weights and per-round Gaussian model noise at a
fixed maximum budget:

    gap(T) <= A^T * gap(0)
              + L^2 (1 - A^T) (S^2 ln(1.25/delta) / (mu * eps_max^2)
                               + lr^2 * div^2 / (2 mu C)),
    A = 1 - 2 mu lr + mu lr^2 L.

Constants are estimated on synthetic quadratic instances, where smoothness,
the PL constant, and the optimum are available in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .rng import rng_stream

__all__ = [
    "QuadraticProblem",
    "BoundInputs",
    "ConstantEstimates",
    "BoundCheck",
    "default_quadratic_problem",
    "convergence_bound",
    "estimate_constants",
    "verify_bound_montecarlo",
    "format_bound_report",
]


@dataclass(frozen=True)
class QuadraticProblem:
    """Per-client losses 0.5 (m - center_c)' H_c (m - center_c), averaged."""

    hessians: np.ndarray  # (C, d, d), symmetric positive definite
    centers: np.ndarray  # (C, d)
    start: np.ndarray  # (d,) the initial model

    def __post_init__(self) -> None:
        h = np.asarray(self.hessians, dtype=np.float64)
        b = np.asarray(self.centers, dtype=np.float64)
        m0 = np.asarray(self.start, dtype=np.float64)
        if h.ndim != 3 or h.shape[1] != h.shape[2]:
            raise ParameterError("hessians must be (C, d, d)")
        if b.shape != h.shape[:2]:
            raise ParameterError("centers must be (C, d)")
        if m0.shape != (h.shape[1],):
            raise ParameterError("start must be a d-vector")
        for c in range(h.shape[0]):
            if not np.allclose(h[c], h[c].T):
                raise ParameterError(f"hessian {c} is not symmetric")
            if np.linalg.eigvalsh(h[c]).min() <= 0:
                raise ParameterError(f"hessian {c} is not positive definite")
        object.__setattr__(self, "hessians", h)
        object.__setattr__(self, "centers", b)
        object.__setattr__(self, "start", m0)

    @property
    def num_clients(self) -> int:
        return self.hessians.shape[0]

    @property
    def dim(self) -> int:
        return self.hessians.shape[1]

    @property
    def mean_hessian(self) -> np.ndarray:
        return self.hessians.mean(axis=0)

    @property
    def optimum(self) -> np.ndarray:
        rhs = np.mean([self.hessians[c] @ self.centers[c] for c in range(self.num_clients)], axis=0)
        return np.linalg.solve(self.mean_hessian, rhs)

    def client_gradient(self, c: int, m: np.ndarray) -> np.ndarray:
        return self.hessians[c] @ (m - self.centers[c])

    def global_gradient(self, m: np.ndarray) -> np.ndarray:
        return np.mean([self.client_gradient(c, m) for c in range(self.num_clients)], axis=0)

    def global_loss(self, m: np.ndarray) -> float:
        diffs = m - self.centers
        return float(
            np.mean([0.5 * diffs[c] @ self.hessians[c] @ diffs[c] for c in range(self.num_clients)])
        )


def default_quadratic_problem(dim: int = 5, num_clients: int = 4, seed: int = 5) -> QuadraticProblem:
    """A well-conditioned shared-Hessian instance for bound experiments.

    All clients share a diagonal Hessian with eigenvalues spread over
    [1, 3], so the divergence between client and global gradients is exact
    (model-independent); centers differ per client and the start point sits
    a unit-or-so of loss above the optimum.
    """
    if dim < 2 or num_clients < 2:
        raise ParameterError("need dim >= 2 and num_clients >= 2")
    eigenvalues = np.linspace(1.0, 3.0, dim)
    hessian = np.diag(eigenvalues)
    rng = rng_stream(seed, "bound-problem")
    centers = rng.normal(0.0, 0.5, size=(num_clients, dim))
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    start = centers.mean(axis=0) + direction * np.sqrt(2.0)
    return QuadraticProblem(
        hessians=np.repeat(hessian[None, :, :], num_clients, axis=0),
        centers=centers,
        start=start,
    )


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the closed-form bound."""

    smoothness: float  # per-client gradient Lipschitz constant
    pl_constant: float  # Polyak-Lojasiewicz constant of the global loss
    lr: float
    rounds: int
    clip_norm: float
    delta: float
    epsilon_max: float
    gradient_divergence: float  # bound on |grad_c - grad| over the domain
    num_clients: int
    init_gap: float  # loss(start) - loss(optimum)

    def __post_init__(self) -> None:
        positive = {
            "smoothness": self.smoothness,
            "pl_constant": self.pl_constant,
            "lr": self.lr,
            "clip_norm": self.clip_norm,
            "epsilon_max": self.epsilon_max,
            "init_gap": self.init_gap,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ParameterError(f"{name} must be positive, got {value}")
        if self.rounds < 0:
            raise ParameterError("rounds must be >= 0")
        if not (0.0 < self.delta < 1.0):
            raise ParameterError("delta must lie in (0, 1)")
        if self.gradient_divergence < 0:
            raise ParameterError("gradient_divergence must be >= 0")
        if self.num_clients < 1:
            raise ParameterError("num_clients must be >= 1")

    @property
    def contraction(self) -> float:
        """A = 1 - 2 mu lr + mu lr^2 L, the per-round decay factor."""
        return 1.0 - 2.0 * self.pl_constant * self.lr + self.pl_constant * self.lr ** 2 * self.smoothness

    @property
    def is_contractive(self) -> bool:
        return 0.0 < self.contraction < 1.0


def convergence_bound(inputs: BoundInputs) -> float:
    """Evaluate the closed-form bound; warns when A falls outside (0, 1)."""
    a = inputs.contraction
    if not inputs.is_contractive:
        warnings.warn(
            f"contraction factor A={a:.6g} is outside (0, 1); the bound does not decay",
            RuntimeWarning,
            stacklevel=2,
        )
    a_pow = a ** inputs.rounds
    noise_term = (
        inputs.clip_norm ** 2 * math.log(1.25 / inputs.delta)
        / (inputs.pl_constant * inputs.epsilon_max ** 2)
    )
    divergence_term = (
        inputs.lr ** 2 * inputs.gradient_divergence ** 2
        / (2.0 * inputs.pl_constant * inputs.num_clients)
    )
    return a_pow * inputs.init_gap + inputs.smoothness ** 2 * (1.0 - a_pow) * (
        noise_term + divergence_term
    )


@dataclass(frozen=True)
class ConstantEstimates:
    smoothness: float
    pl_constant: float
    gradient_divergence: float
    init_gap: float
    optimum_loss: float


def estimate_constants(
    problem: QuadraticProblem,
    grid_points: int = 64,
    grid_radius: float = 4.0,
    seed: int = 0,
) -> ConstantEstimates:
    """Measure the bound's constants on a quadratic instance.

    Smoothness is the largest per-client Hessian eigenvalue; the PL constant
    is the smallest eigenvalue of the average Hessian. The gradient
    divergence is maximized over the clients and a seeded sample of models
    within ``grid_radius`` of the optimum (for shared Hessians it is exact,
    since the divergence is then model-independent).
    """
    if grid_points < 1:
        raise ParameterError("grid_points must be >= 1")
    smoothness = float(max(np.linalg.eigvalsh(h).max() for h in problem.hessians))
    pl_constant = float(np.linalg.eigvalsh(problem.mean_hessian).min())

    opt = problem.optimum
    rng = rng_stream(seed, "divergence-grid")
    samples = [opt]
    for _ in range(grid_points - 1):
        direction = rng.normal(size=problem.dim)
        direction /= np.linalg.norm(direction)
        samples.append(opt + rng.uniform(0.0, grid_radius) * direction)

    divergence = 0.0
    for m in samples:
        g = problem.global_gradient(m)
        for c in range(problem.num_clients):
            divergence = max(divergence, float(np.linalg.norm(problem.client_gradient(c, m) - g)))

    optimum_loss = problem.global_loss(opt)
    init_gap = problem.global_loss(problem.start) - optimum_loss
    return ConstantEstimates(
        smoothness=smoothness,
        pl_constant=pl_constant,
        gradient_divergence=divergence,
        init_gap=init_gap,
        optimum_loss=optimum_loss,
    )


@dataclass(frozen=True)
class BoundCheck:
    empirical_gap: float
    bound: float
    holds: bool
    inputs: BoundInputs
    trials: int
    sigma: float


def verify_bound_montecarlo(
    problem: QuadraticProblem,
    lr: float,
    rounds: int,
    clip_norm: float,
    delta: float,
    epsilon_max: float,
    trials: int,
    seed: int = 0,
    sigma_override: Optional[float] = None,
    constants: Optional[ConstantEstimates] = None,
) -> BoundCheck:
    """Simulate noisy federated rounds in the bound's own setting.

    Each trial runs ``rounds`` iterations of: every client takes one full
    gradient step from the shared model, per-coordinate Gaussian noise of
    scale sigma * clip_norm is added to each local model, and the server
    averages with equal weights. The mean final optimality gap is compared
    against the closed-form bound.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if constants is None:
        constants = estimate_constants(problem)
    inputs = BoundInputs(
        smoothness=constants.smoothness,
        pl_constant=constants.pl_constant,
        lr=lr,
        rounds=rounds,
        clip_norm=clip_norm,
        delta=delta,
        epsilon_max=epsilon_max,
        gradient_divergence=constants.gradient_divergence,
        num_clients=problem.num_clients,
        init_gap=constants.init_gap,
    )
    bound = convergence_bound(inputs)

    if sigma_override is not None:
        if sigma_override < 0:
            raise ParameterError("sigma_override must be non-negative")
        sigma = sigma_override
    else:
        sigma = clip_norm * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon_max

    noise_scale = sigma * clip_norm
    optimum_loss = constants.optimum_loss
    gaps = np.empty(trials)
    for trial in range(trials):
        rng = rng_stream(seed, "bound-trial", trial)
        m = problem.start.copy()
        for _ in range(rounds):
            locals_ = []
            for c in range(problem.num_clients):
                stepped = m - lr * problem.client_gradient(c, m)
                if noise_scale > 0.0:
                    stepped = stepped + rng.normal(0.0, noise_scale, size=problem.dim)
                locals_.append(stepped)
            m = np.mean(locals_, axis=0)
        gaps[trial] = problem.global_loss(m) - optimum_loss

    empirical = float(gaps.mean())
    return BoundCheck(
        empirical_gap=empirical,
        bound=bound,
        holds=empirical <= bound,
        inputs=inputs,
        trials=trials,
        sigma=sigma,
    )


def format_bound_report(check: BoundCheck) -> str:
    """Human-readable summary of a bound verification."""
    i = check.inputs
    lines = [
        "convergence bound check",
        f"  clients          = {i.num_clients}",
        f"  rounds           = {i.rounds}",
        f"  lr               = {i.lr}",
        f"  smoothness       = {i.smoothness:.6g}",
        f"  pl_constant      = {i.pl_constant:.6g}",
        f"  divergence       = {i.gradient_divergence:.6g}",
        f"  clip_norm        = {i.clip_norm}",
        f"  delta            = {i.delta}",
        f"  epsilon_max      = {i.epsilon_max}",
        f"  contraction A    = {i.contraction:.6g}",
        f"  init_gap         = {i.init_gap:.6g}",
        f"  noise sigma      = {check.sigma:.6g}",
        f"  trials           = {check.trials}",
        f"  empirical gap    = {check.empirical_gap:.6g}",
        f"  bound            = {check.bound:.6g}",
        f"  margin           = {check.bound - check.empirical_gap:.6g}",
        f"  verdict          = {'holds' if check.holds else 'violated'}",
    ]
    return "\n".join(lines)
