"""Linear-chain CRF: log-partition, path scores, Viterbi decoding.

Scores of a path y over n tokens::

    start[y0] + sum_t emit[t, y_t] + sum_{t>0} trans[y_{t-1}, y_t] + end[y_{n-1}]

Batched functions take emissions ``[B, T, L]`` and a boolean mask ``[B, T]``
whose rows are a prefix of ones (right padding).
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DataError

NEG = -1e4  # forbidden-transition score when IOB2 constraints are on


def log_partition(emissions, trans, start, end, mask):
    """Forward algorithm in log space; returns ``[B]``."""
    B, T, L = emissions.shape
    alpha = start + emissions[:, 0]
    for t in range(1, T):
        scores = ad.reshape(alpha, (B, L, 1)) + trans
        nxt = ad.log_sum_exp(scores, axis=1) + emissions[:, t]
        alpha = ad.where(mask[:, t, None], nxt, alpha)
    return ad.log_sum_exp(alpha + end, axis=1)


def path_score(emissions, tags, trans, start, end, mask):
    """Unnormalized score of ``tags`` (int array ``[B, T]``); returns ``[B]``."""
    B, T, _ = emissions.shape
    mask_f = mask.astype(np.float64)
    lengths = mask.sum(axis=1)
    rows = np.arange(B)[:, None]
    cols = np.arange(T)[None, :]
    emit = ad.sum(emissions[rows, cols, tags] * mask_f, axis=1)
    score = emit + start[tags[:, 0]] + end[tags[np.arange(B), lengths - 1]]
    if T > 1:
        tr = trans[tags[:, :-1], tags[:, 1:]] * mask_f[:, 1:]
        score = score + ad.sum(tr, axis=1)
    return score


def nll(emissions, tags, trans, start, end, mask):
    """Per-sentence negative log-likelihood ``logZ - score(gold)``; ``[B]``."""
    if not np.all(mask[:, 0]):
        raise ContractError("every sentence needs at least one token")
    return log_partition(emissions, trans, start, end, mask) - path_score(
        emissions, tags, trans, start, end, mask)


def viterbi(emissions, trans, start, end):
    """Best path for one sentence ``[n, L]`` (numpy).  Ties go to the lowest label index."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n, L = emissions.shape
    if n == 0:
        raise ContractError("cannot decode an empty sentence")
    delta = start + emissions[0]
    back = np.zeros((n, L), dtype=np.intp)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(L)] + emissions[t]
    final = delta + end
    best = int(np.argmax(final))
    score = float(final[best])
    path = [best]
    for t in range(n - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    return path[::-1], score


class CrfLayer:
    """Transition, start and end scores over ``num_labels`` labels."""

    def __init__(self, num_labels, constraints=None):
        self.num_labels = num_labels
        self.trans = Tensor(np.zeros((num_labels, num_labels)), requires_grad=True, name="crf.trans")
        self.start = Tensor(np.zeros(num_labels), requires_grad=True, name="crf.start")
        self.end = Tensor(np.zeros(num_labels), requires_grad=True, name="crf.end")
        self.set_constraints(constraints)

    def set_constraints(self, constraints):
        """``constraints`` = (allowed transition pairs, allowed start labels) or None."""
        L = self.num_labels
        self.trans_bias = np.zeros((L, L))
        self.start_bias = np.zeros(L)
        if constraints is not None:
            pairs, starts = constraints
            self.trans_bias[:] = NEG
            for a, b in pairs:
                self.trans_bias[a, b] = 0.0
            self.start_bias[:] = NEG
            self.start_bias[sorted(starts)] = 0.0

    @property
    def params(self):
        return [self.trans, self.start, self.end]

    def _effective(self):
        return self.trans + self.trans_bias, self.start + self.start_bias, self.end

    def batch_nll(self, emissions, tags, mask):
        trans, start, end = self._effective()
        return nll(emissions, tags, trans, start, end, mask)

    def log_likelihood_loss(self, emissions, gold):
        """NLL of one sentence: ``emissions`` is an ``[n, L]`` Tensor, ``gold`` label ids."""
        gold = np.asarray(gold, dtype=np.intp)
        n = emissions.shape[0]
        if gold.shape != (n,):
            raise DataError(f"{n} emission rows but {gold.size} gold labels")
        if np.any((gold < 0) | (gold >= self.num_labels)):
            raise DataError("gold label index out of range")
        em = ad.reshape(emissions, (1, n, self.num_labels))
        return ad.reshape(self.batch_nll(em, gold[None, :], np.ones((1, n), bool)), ())

    def log_partition(self, emissions):
        n = emissions.shape[0]
        trans, start, end = self._effective()
        em = ad.reshape(emissions, (1, n, self.num_labels))
        return ad.reshape(log_partition(em, trans, start, end, np.ones((1, n), bool)), ())

    def decode(self, emissions):
        e = emissions.data if isinstance(emissions, Tensor) else emissions
        trans, start, end = (self.trans.data + self.trans_bias,
                             self.start.data + self.start_bias, self.end.data)
        return viterbi(e, trans, start, end)
