"""scikit-learn style front end."""

from sklearn.base import BaseEstimator

from .bootstrap import DEFAULT_B, analyze
from .randomizer import fresh_seed
from .validation import (
    check_alpha,
    check_experiment,
    check_method,
    check_n_bootstrap,
    check_seed,
)


class StratifiedATE(BaseEstimator):
    """Average treatment effect in a stratified or paired randomized experiment.

    Parameters
    ----------
    method : str, default="sharp-boot"
        One of ``neyman-normal``, ``sharp-normal``, ``sharp-boot``,
        ``pair-normal``, ``pair-boot``.
    alpha : float, default=0.05
        One minus the confidence level.
    n_bootstrap : int, default=1000
        Bootstrap replicates for the ``*-boot`` methods.
    delta : float, optional
        Constant effect imputed by ``pair-boot``; defaults to the estimate.
    random_state : int, numpy Generator or None
        Bootstrap seed. ``None`` draws a fresh seed, stored in ``seed_``.

    Attributes
    ----------
    tau_hat_ : float
    tau_hat_per_stratum_ : tuple of float
    weights_ : tuple of float
    sigma2_ : float
        Variance estimate on the ``Var(sqrt(n) (tau_hat - tau))`` scale.
    variances_ : dict
    ci_ : ConfidenceInterval or None
        ``None`` if the bootstrap degenerated (see ``diagnostics_``).
    design_kind_ : str
    strata_ : tuple
    bootstrap_ : BootstrapResult or None
    seed_ : int or None
    diagnostics_ : dict

    Examples
    --------
    >>> est = StratifiedATE(method="neyman-normal").fit([[0, 1], [0, 1], [0, 0], [0, 0]], [4, 2, 1, 3])
    >>> est.tau_hat_, est.sigma2_
    (1.0, 8.0)
    """

    def __init__(self, method="sharp-boot", alpha=0.05, n_bootstrap=DEFAULT_B,
                 delta=None, random_state=None):
        self.method = method
        self.alpha = alpha
        self.n_bootstrap = n_bootstrap
        self.delta = delta
        self.random_state = random_state

    def fit(self, X, y):
        """Fit on ``X`` with columns ``(stratum, z)`` and outcomes ``y``."""
        method = check_method(self.method)
        alpha = check_alpha(self.alpha)
        boot = method.endswith("-boot")
        B = check_n_bootstrap(self.n_bootstrap) if boot else self.n_bootstrap
        seed = check_seed(self.random_state)
        if boot and seed is None:
            seed = fresh_seed()
        obs = check_experiment(X, y)
        res = analyze(obs, method, alpha=alpha, B=B, seed=seed, delta=self.delta, strict=False)

        self.result_ = res
        self.tau_hat_ = res.tau_hat
        self.tau_hat_per_stratum_ = res.tau_hat_per_stratum
        self.weights_ = res.weights
        self.variances_ = res.variances
        self.sigma2_ = res.variances[{"n": "neyman", "s": "sharp", "p": "paired"}[method[0]]]
        self.ci_ = res.ci
        self.design_kind_ = res.design_kind
        self.strata_ = res.strata
        self.n_strata_ = res.M
        self.n_ = res.n
        self.bootstrap_ = res.bootstrap
        self.seed_ = res.seed
        self.diagnostics_ = res.diagnostics
        return self

    def confint(self):
        """``(lower, upper)``, or ``None`` when the bootstrap degenerated."""
        if self.ci_ is None:
            return None
        return self.ci_.lower, self.ci_.upper
