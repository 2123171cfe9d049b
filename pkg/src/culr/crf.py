"""Linear-chain CRF inference and losses, all in log space.

The transition parameter is a single (K+1) x (K+1) matrix for K labels:
``transitions[K, y]`` scores starting in label y, ``transitions[x, K]``
scores ending in label x, ``transitions[x, y]`` (both < K) scores the label
bigram x -> y, and the corner ``transitions[K, K]`` is unused.

Three objectives are supported, each returning analytic gradients with
respect to the emission matrix and the transition matrix:

* negative log-likelihood of a gold label sequence,
* cross-entropy of per-position soft target distributions against the
  per-position marginals (gradients flow through both forward and backward
  recursions),
* softmax cross-entropy treating positions independently (the transition
  matrix is ignored).

All three are divided by the sentence count, so losses and gradients share a
per-sentence scale across heads and across documents of different lengths.
That keeps per-document Adam updates comparable and makes the hand-off from
soft-target training to gold-path training smooth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def logsumexp(a: np.ndarray, axis: int | None = None):
    """Stable log-sum-exp; inputs are assumed finite.  Scalar when axis is None."""
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def split_transitions(transitions: np.ndarray, n_labels: int):
    """Split the packed matrix into (start, end, pairwise) views."""
    t = np.asarray(transitions, dtype=np.float64)
    if t.shape != (n_labels + 1, n_labels + 1):
        raise DataError(
            f"transition matrix must be {(n_labels + 1, n_labels + 1)}, got {t.shape}"
        )
    return t[n_labels, :n_labels], t[:n_labels, n_labels], t[:n_labels, :n_labels]


def pack_transition_grad(
    grad_start: np.ndarray, grad_end: np.ndarray, grad_pair: np.ndarray
) -> np.ndarray:
    k = grad_pair.shape[0]
    out = np.zeros((k + 1, k + 1))
    out[:k, :k] = grad_pair
    out[k, :k] = grad_start
    out[:k, k] = grad_end
    return out


@dataclass
class ForwardBackward:
    """Forward/backward messages plus the quantities derived from them."""

    log_partition: float
    marginals: np.ndarray  # (m, K), each row sums to 1
    pairwise: np.ndarray  # (m-1, K, K) joint marginals of adjacent positions
    alpha: np.ndarray  # (m, K) forward log messages
    beta: np.ndarray  # (m, K) backward log messages


def _check_emissions(emissions: np.ndarray) -> np.ndarray:
    em = np.asarray(emissions, dtype=np.float64)
    if em.ndim != 2 or em.shape[0] < 1:
        raise DataError(f"emissions must be (m, K) with m >= 1, got {em.shape}")
    if not np.all(np.isfinite(em)):
        raise DataError("emissions contain non-finite scores")
    return em


def crf_forward_backward(emissions: np.ndarray, transitions: np.ndarray) -> ForwardBackward:
    em = _check_emissions(emissions)
    m, k = em.shape
    start, end, pair = split_transitions(transitions, k)

    alpha = np.empty((m, k))
    alpha[0] = start + em[0]
    for t in range(1, m):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + pair, axis=0) + em[t]

    beta = np.empty((m, k))
    beta[m - 1] = end
    for t in range(m - 2, -1, -1):
        beta[t] = logsumexp(pair + em[t + 1][None, :] + beta[t + 1][None, :], axis=1)

    log_z = float(logsumexp(alpha[m - 1] + end))
    marginals = np.exp(alpha + beta - log_z)

    pairwise = np.empty((max(m - 1, 0), k, k))
    for t in range(m - 1):
        pairwise[t] = np.exp(
            alpha[t][:, None] + pair + em[t + 1][None, :] + beta[t + 1][None, :] - log_z
        )
    return ForwardBackward(log_z, marginals, pairwise, alpha, beta)


def crf_path_score(
    emissions: np.ndarray, transitions: np.ndarray, labels: np.ndarray
) -> float:
    em = _check_emissions(emissions)
    m, k = em.shape
    start, end, pair = split_transitions(transitions, k)
    labels = np.asarray(labels)
    score = start[labels[0]] + end[labels[-1]] + em[np.arange(m), labels].sum()
    score += pair[labels[:-1], labels[1:]].sum()
    return float(score)


def crf_viterbi(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Highest-scoring label path; ties resolve to the lower label id."""
    em = _check_emissions(emissions)
    m, k = em.shape
    start, end, pair = split_transitions(transitions, k)

    score = start + em[0]
    backptr = np.empty((m, k), dtype=np.intp)
    for t in range(1, m):
        cand = score[:, None] + pair  # (from, to)
        backptr[t] = np.argmax(cand, axis=0)
        score = cand[backptr[t], np.arange(k)] + em[t]

    path = np.empty(m, dtype=np.intp)
    path[m - 1] = int(np.argmax(score + end))
    for t in range(m - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path


def crf_nll_and_grad(
    emissions: np.ndarray, transitions: np.ndarray, labels
) -> tuple[float, np.ndarray, np.ndarray]:
    """Per-sentence-normalized gold-path negative log-likelihood and gradients.

    loss = (log Z - score(gold path)) / m.  The emission gradient is
    ``(marginals - onehot(gold)) / m``; the transition gradient is the
    expected minus observed transition counts, scaled the same way.
    """
    em = _check_emissions(emissions)
    m, k = em.shape
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (m,):
        raise DataError(f"labels must have shape ({m},), got {labels.shape}")
    fb = crf_forward_backward(em, transitions)
    loss = (fb.log_partition - crf_path_score(em, transitions, labels)) / m

    grad_em = fb.marginals.copy()
    grad_em[np.arange(m), labels] -= 1.0
    grad_em /= m

    grad_pair = fb.pairwise.sum(axis=0) if m > 1 else np.zeros((k, k))
    np.subtract.at(grad_pair, (labels[:-1], labels[1:]), 1.0)
    grad_pair /= m
    grad_start = fb.marginals[0].copy()
    grad_start[labels[0]] -= 1.0
    grad_start /= m
    grad_end = fb.marginals[m - 1].copy()
    grad_end[labels[m - 1]] -= 1.0
    grad_end /= m
    return float(loss), grad_em, pack_transition_grad(grad_start, grad_end, grad_pair)


def crf_marginal_ce_and_grad(
    emissions: np.ndarray, transitions: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of soft targets against per-position marginals.

    loss = -(1/m) sum_t sum_j targets[t, j] * log marginal[t, j].

    Because log marginal[t, j] = alpha[t, j] + beta[t, j] - log Z, the
    gradient is assembled from three parts: adjoints swept backward through
    the forward recursion, adjoints swept forward through the backward
    recursion, and the usual expected sufficient statistics from log Z.
    """
    em = _check_emissions(emissions)
    m, k = em.shape
    start, end, pair = split_transitions(transitions, k)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (m, k):
        raise DataError(f"targets must have shape {(m, k)}, got {targets.shape}")

    fb = crf_forward_backward(em, transitions)
    alpha, beta, log_z = fb.alpha, fb.beta, fb.log_partition
    log_marg = alpha + beta - log_z
    loss = float(-(targets * log_marg).sum() / m)

    tau = targets / m
    # posterior over the final position, from the log Z term
    q = np.exp(alpha[m - 1] + end - log_z)

    # w[t][x, y] = d alpha[t, y] / d alpha[t-1, x]; u[t][x, y] = d beta[t, x] / d beta[t+1, y]
    w = np.empty((m, k, k))
    for t in range(1, m):
        pre = alpha[t - 1][:, None] + pair
        w[t] = np.exp(pre - logsumexp(pre, axis=0)[None, :])
    u = np.empty((max(m - 1, 0), k, k))
    for t in range(m - 1):
        post = pair + em[t + 1][None, :] + beta[t + 1][None, :]
        u[t] = np.exp(post - beta[t][:, None])

    abar = np.empty((m, k))
    abar[m - 1] = -tau[m - 1] + q
    for t in range(m - 2, -1, -1):
        abar[t] = -tau[t] + w[t + 1] @ abar[t + 1]

    bbar = np.empty((m, k))
    bbar[0] = -tau[0]
    for t in range(1, m):
        bbar[t] = -tau[t] + bbar[t - 1] @ u[t - 1]

    # bbar[t] + tau[t] equals the beta-side contribution to emission t
    grad_em = abar + bbar + tau

    grad_pair = np.zeros((k, k))
    for t in range(1, m):
        grad_pair += w[t] * abar[t][None, :]
    for t in range(m - 1):
        grad_pair += bbar[t][:, None] * u[t]
    grad_start = abar[0].copy()
    grad_end = q + bbar[m - 1]
    return loss, grad_em, pack_transition_grad(grad_start, grad_end, grad_pair)


def softmax_ce_and_grad(
    emissions: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Positionwise softmax cross-entropy; returns the emission gradient."""
    em = _check_emissions(emissions)
    m, k = em.shape
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (m, k):
        raise DataError(f"targets must have shape {(m, k)}, got {targets.shape}")
    log_p = em - logsumexp(em, axis=1)[:, None]
    loss = float(-(targets * log_p).sum() / m)
    grad_em = (np.exp(log_p) - targets) / m
    return loss, grad_em
