"""First-order optimizers, cyclical learning rates and the mini-batch training loop."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DivergenceError

logger = logging.getLogger(__name__)


class Optimizer:
    """Updates a flat weight array in place."""

    name = None

    def __init__(self, n_weights):
        self.n_weights = n_weights

    def step(self, w, g, lr):
        raise NotImplementedError

    def state(self):
        return {}


class SGD(Optimizer):
    name = "sgd"

    def step(self, w, g, lr):
        w -= lr * g
        return w


class RMSprop(Optimizer):
    name = "rmsprop"

    def __init__(self, n_weights, rho=0.9, eps=1e-7):
        super().__init__(n_weights)
        self.rho, self.eps = rho, eps
        self.v = np.zeros(n_weights)

    def step(self, w, g, lr):
        self.v *= self.rho
        self.v += (1.0 - self.rho) * g * g
        w -= lr * g / (np.sqrt(self.v) + self.eps)
        return w

    def state(self):
        return {"v": self.v}


class Adam(Optimizer):
    name = "adam"

    def __init__(self, n_weights, beta1=0.9, beta2=0.999, eps=1e-7):
        super().__init__(n_weights)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_weights)
        self.v = np.zeros(n_weights)
        self.t = 0

    def step(self, w, g, lr):
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        w -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return w

    def state(self):
        return {"m": self.m, "v": self.v, "t": self.t}


class Adadelta(Optimizer):
    name = "adadelta"

    def __init__(self, n_weights, rho=0.95, eps=1e-7):
        super().__init__(n_weights)
        self.rho, self.eps = rho, eps
        self.acc_grad = np.zeros(n_weights)
        self.acc_delta = np.zeros(n_weights)

    def step(self, w, g, lr):
        self.acc_grad *= self.rho
        self.acc_grad += (1.0 - self.rho) * g * g
        delta = np.sqrt(self.acc_delta + self.eps) / np.sqrt(self.acc_grad + self.eps) * g
        self.acc_delta *= self.rho
        self.acc_delta += (1.0 - self.rho) * delta * delta
        w -= lr * delta
        return w

    def state(self):
        return {"acc_grad": self.acc_grad, "acc_delta": self.acc_delta}


OPTIMIZERS = {cls.name: cls for cls in (SGD, RMSprop, Adam, Adadelta)}


def make_optimizer(name, n_weights):
    try:
        return OPTIMIZERS[name](n_weights)
    except KeyError:
        raise ConfigError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None


def optimizer_step(optimizer, weights, gradient, lr, epoch=None, batch=None):
    """Apply one update and return the new weights (the input array is left untouched)."""
    gradient = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(gradient)):
        raise DivergenceError("non-finite gradient", epoch=epoch, batch=batch)
    w = np.array(weights, dtype=float, copy=True)
    if w.shape != gradient.shape:
        raise ConfigError("weights and gradient shapes differ")
    return optimizer.step(w, gradient, lr)


# ---------------------------------------------------------------------------
# learning rate schedule


@dataclass
class CLRConfig:
    """Triangular cyclical learning rate; ``max_lr=None`` means five times the base rate.

    ``cycle_length`` is the half-period in epochs. The default of 150 makes a
    1500-epoch run cover five full periods and finish at the base rate.
    """

    max_lr: float = None
    cycle_length: float = 150.0
    policy: str = "triangular"

    def __post_init__(self):
        if self.policy != "triangular":
            raise ConfigError(f"unsupported CLR policy {self.policy!r}")
        if self.cycle_length <= 0:
            raise ConfigError("cycle_length must be positive")


def clr(iteration, base_lr, max_lr, step_size):
    """Triangular wave: ``base_lr`` at 0, ``max_lr`` after ``step_size`` iterations."""
    if step_size <= 0:
        raise ConfigError("step_size must be positive")
    cycle = math.floor(1 + iteration / (2 * step_size))
    x = abs(iteration / step_size - 2 * cycle + 1)
    return base_lr + (max_lr - base_lr) * max(0.0, 1.0 - x)


@dataclass
class TrainConfig:
    """Training settings. The default schedule cycles between 0.02 and a peak of 0.1."""

    optimizer: str = "rmsprop"
    base_lr: float = 0.02
    clr: CLRConfig = field(default_factory=CLRConfig)
    epochs: int = 1500
    batch_size: int = 50
    restarts: int = 1
    seed: int = 0
    shuffle: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.restarts < 1:
            raise ConfigError("need epochs >= 0, batch_size >= 1, restarts >= 1")
        if isinstance(self.clr, dict):
            self.clr = CLRConfig(**self.clr)
        if self.clr is not None and self.clr.max_lr is not None and self.clr.max_lr < self.base_lr:
            raise ConfigError("clr.max_lr must be >= base_lr")

    @classmethod
    def from_lr(cls, lr, clr=True, **kwargs):
        """Nominal rate ``lr``: the CLR peak (base ``lr / 5``) or a constant rate."""
        if clr:
            cycle = kwargs.pop("cycle_length", CLRConfig.cycle_length)
            return cls(base_lr=lr / 5.0, clr=CLRConfig(max_lr=lr, cycle_length=cycle), **kwargs)
        return cls(base_lr=lr, clr=None, **kwargs)

    @property
    def max_lr(self):
        if self.clr is None:
            return self.base_lr
        return self.clr.max_lr if self.clr.max_lr is not None else 5.0 * self.base_lr

    def learning_rate(self, iteration, steps_per_epoch):
        if self.clr is None:
            return self.base_lr
        return clr(iteration, self.base_lr, self.max_lr, self.clr.cycle_length * steps_per_epoch)


# ---------------------------------------------------------------------------
# training


def run_streams(seed):
    """Independent generators for weight initialisation and batch shuffling."""
    init_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss)


@dataclass
class RestartSummary:
    seed: int
    final_risk: float
    risk_trajectory: list
    diverged: bool = False
    message: str = ""


@dataclass
class FitResult:
    weights: np.ndarray
    risk_trajectory: list
    lr_trajectory: list
    params: object
    final_risk: float
    seed: int = 0
    restarts: list = field(default_factory=list)
    best_restart: int = 0
    model: object = None


def train(model, X, y, config):
    """Mini-batch training of ``model`` on ``(X, y)``.

    Unset-up models are set up on ``X`` and initialised from ``config.seed``;
    otherwise training continues from the current weights.
    """
    init_rng, shuffle_rng = run_streams(config.seed)
    X = np.asarray(X, dtype=float)
    if not model.is_setup:
        model.setup(X)
        model.init_weights(init_rng, y)
    cache = model.design(X)
    y = model.check_outcome(y)
    n = y.shape[0]
    if n == 0:
        raise ConfigError("training data is empty")
    b = min(config.batch_size, n)
    steps = math.ceil(n / b)
    opt = make_optimizer(config.optimizer, model.n_weights)
    w = model.weights
    risks, lrs = [], []
    it = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        lr = config.base_lr
        for bi in range(steps):
            rows = order[bi * b:(bi + 1) * b]
            lr = config.learning_rate(it, steps)
            _, g = model.objective(cache, y, rows=rows, grad=True, checked=True,
                                   penalty_scale=rows.size / n)
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient at epoch {epoch}, batch {bi}",
                                      epoch=epoch, batch=bi, trajectory=risks)
            opt.step(w, g, lr)
            it += 1
        risk = model.objective(cache, y, checked=True)[0]
        if not np.isfinite(risk):
            raise DivergenceError(f"non-finite risk after epoch {epoch}",
                                  epoch=epoch, trajectory=risks)
        risks.append(risk)
        lrs.append(lr)
    final = risks[-1] if risks else model.objective(cache, y, checked=True)[0]
    return FitResult(weights=model.get_weights(), risk_trajectory=risks, lr_trajectory=lrs,
                     params=model.forward(cache), final_risk=float(final), seed=config.seed,
                     model=model)


def _one_restart(model_factory, X, y, config, seed):
    cfg = _with_seed(config, seed)
    model = model_factory(seed)
    try:
        return train(model, X, y, cfg), None
    except DivergenceError as exc:
        return None, RestartSummary(seed, float("nan"), exc.trajectory, True, str(exc))


def _with_seed(config, seed):
    from dataclasses import replace
    return replace(config, seed=seed, restarts=1)


def multi_restart(model_factory, X, y, config):
    """Train ``config.restarts`` independently seeded models; keep the lowest final risk.

    ``model_factory(seed)`` returns a fresh model (set up and initialised, or
    bare, in which case ``train`` initialises it from the seed).
    """
    seeds = [config.seed + r for r in range(config.restarts)]
    if config.jobs > 1 and len(seeds) > 1:
        from joblib import Parallel, delayed
        outcomes = Parallel(n_jobs=config.jobs)(
            delayed(_one_restart)(model_factory, X, y, config, s) for s in seeds)
    else:
        outcomes = [_one_restart(model_factory, X, y, config, s) for s in seeds]

    summaries, fits = [], []
    for seed, (fit, failed) in zip(seeds, outcomes):
        if fit is None:
            logger.warning("restart with seed %d diverged: %s", seed, failed.message)
            summaries.append(failed)
        else:
            summaries.append(RestartSummary(seed, fit.final_risk, fit.risk_trajectory))
            fits.append((len(summaries) - 1, fit))
    if not fits:
        raise DivergenceError("all restarts diverged: "
                              + "; ".join(s.message for s in summaries))
    best_idx, best = min(fits, key=lambda item: item[1].final_risk)
    best.restarts = summaries
    best.best_restart = best_idx
    return best
