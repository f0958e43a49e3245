"""scikit-learn style front end: fit on two unlabeled domains, transform
any raw features into the aligned unit-norm embedding space.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import DOMAIN_A, DOMAIN_B, DomainDataset, FeatureRecord
from .encoder import encode
from .trainer import Hyperparams, initialize, epoch as run_epoch
from .numerics import InvalidInputError, make_rng


class DomainAlignedEncoder(TransformerMixin, BaseEstimator):
    """Learns a common embedding for two unlabeled feature domains.

    Parameters mirror the training hyperparameters; `fit(X, domains)` takes
    the stacked raw features and a per-row domain tag ('A' or 'B'),
    `transform(X)` returns unit-norm embeddings.
    """

    def __init__(self, embed_dim=64, hidden_dims=(128,), eta=0.95,
                 batch_size=16, lam=0.01, epochs=20, tau=0.01, lr=0.003,
                 n_k=10, n_runs=4, variant="full", random_state=0):
        self.embed_dim = embed_dim
        self.hidden_dims = hidden_dims
        self.eta = eta
        self.batch_size = batch_size
        self.lam = lam
        self.epochs = epochs
        self.tau = tau
        self.lr = lr
        self.n_k = n_k
        self.n_runs = n_runs
        self.variant = variant
        self.random_state = random_state

    def _hyperparams(self):
        return Hyperparams(
            eta=self.eta, batch_size=self.batch_size, lam=self.lam,
            epochs=self.epochs, tau=self.tau, lr=self.lr, n_k=self.n_k,
            n_runs=self.n_runs, hidden_dims=tuple(self.hidden_dims),
            embed_dim=self.embed_dim, seed=self.random_state,
            variant=self.variant)

    def fit(self, X, domains):
        X = check_array(X, dtype=np.float64)
        domains = np.asarray(domains)
        if domains.shape[0] != X.shape[0]:
            raise InvalidInputError("one domain tag per row required")
        if set(np.unique(domains)) != {DOMAIN_A, DOMAIN_B}:
            raise InvalidInputError("domains must contain both 'A' and 'B'")

        def dataset(tag):
            idx = np.flatnonzero(domains == tag)
            return DomainDataset(tag, tuple(
                FeatureRecord(int(i), tag, X[i]) for i in idx))

        ds_a, ds_b = dataset(DOMAIN_A), dataset(DOMAIN_B)
        hp = self._hyperparams()
        state = initialize(ds_a, ds_b, hp)
        rng = make_rng(hp.seed + 1)
        for _ in range(hp.epochs):
            run_epoch(state, ds_a, ds_b, hp, rng)
        self.state_ = state
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        return encode(self.state_.params, X)
