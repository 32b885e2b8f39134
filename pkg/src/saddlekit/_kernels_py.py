"""Numpy fallback for the solver inner loops.

Both backends share this exact interface; see ``kernels`` for selection.
Trace rows hold [primal_err_sq, dual_err_sq, lyapunov, range_residual,
rel_error]; row ``i`` describes the state after ``i`` steps (row 0 is the
initial state).  Error columns are nan when no reference is supplied.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_DIVERGED = 2

MODE_INCREMENTAL = 0
MODE_NONINCREMENTAL = 1
MODE_FORWARD_BACKWARD = 2

ALG_PD = 0
ALG_EXTRA = 1
ALG_EXACT_DIFFUSION = 2
ALG_DIFFUSION = 3
ALG_DIGING = 4
ALG_DLM = 5


def _single_row(w, lam, wstar, lamstar, cw, clam, projector, wstar_norm_sq):
    lam_norm = np.linalg.norm(lam)
    range_res = np.linalg.norm(lam - projector @ lam) / (1.0 + lam_norm)
    if wstar is None:
        return (np.nan, np.nan, np.nan, range_res, np.nan)
    dw = w - wstar
    dl = lam - lamstar
    p = float(dw @ dw)
    d = float(dl @ dl)
    lyap = cw * p + clam * d if cw > 0.0 else np.nan
    rel = p / wstar_norm_sq if wstar_norm_sq > 0.0 else p
    return (p, d, lyap, range_res, rel)


def run_single(
    mode,
    hess,
    lin,
    cmat,
    crhs,
    mu_w,
    mu_lambda,
    penalty,
    w0,
    lam0,
    max_iter,
    divergence_threshold,
    stop_tolerance,
    wstar,
    lamstar,
    cw,
    clam,
    projector,
    wstar_norm_sq,
):
    """Quadratic-cost primal-dual recursion with per-iteration trace.

    mode 0: dual ascent uses the freshly updated primal iterate, penalty
    weight applied to the constraint residual inside the gradient.
    mode 1: dual ascent uses the previous primal iterate.
    mode 2: reflected dual update ``lam += mu_lambda B (2 w_new - w_old)``
    (homogeneous right-hand side assumed; validated upstream).
    """
    w = np.array(w0, dtype=float)
    lam = np.array(lam0, dtype=float)
    rows = np.empty((max_iter + 1, 5))
    rows[0] = _single_row(w, lam, wstar, lamstar, cw, clam, projector, wstar_norm_sq)
    status = STATUS_MAX_ITER
    steps = 0
    if wstar is not None and stop_tolerance > 0.0 and rows[0, 4] <= stop_tolerance:
        return rows[:1].copy(), STATUS_CONVERGED, w, lam, 0

    BT = cmat.T
    for i in range(1, max_iter + 1):
        grad = hess @ w + lin
        if mode == MODE_INCREMENTAL:
            if penalty != 0.0:
                grad = grad + penalty * (BT @ (cmat @ w - crhs))
            w_new = w - mu_w * (grad + BT @ lam)
            lam_new = lam + mu_lambda * (cmat @ w_new - crhs)
        elif mode == MODE_NONINCREMENTAL:
            if penalty != 0.0:
                grad = grad + penalty * (BT @ (cmat @ w - crhs))
            w_new = w - mu_w * (grad + BT @ lam)
            lam_new = lam + mu_lambda * (cmat @ w - crhs)
        else:
            w_new = w - mu_w * (grad + BT @ lam)
            lam_new = lam + mu_lambda * (cmat @ (2.0 * w_new - w))

        if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(lam_new))):
            status = STATUS_DIVERGED
            break
        disp = np.linalg.norm(w_new - w)
        w, lam = w_new, lam_new
        steps = i
        rows[i] = _single_row(w, lam, wstar, lamstar, cw, clam, projector, wstar_norm_sq)
        if np.linalg.norm(w) > divergence_threshold or np.linalg.norm(lam) > divergence_threshold:
            status = STATUS_DIVERGED
            break
        if stop_tolerance > 0.0:
            if wstar is not None:
                if rows[i, 4] <= stop_tolerance:
                    status = STATUS_CONVERGED
                    break
            elif disp / (1.0 + np.linalg.norm(w)) <= stop_tolerance:
                status = STATUS_CONVERGED
                break

    return rows[: steps + 1].copy(), status, w, lam, steps


def _distributed_row(W, Y, Wstar, Ystar, cw, clam, wstar_norm_sq, node_count):
    y_norm = np.linalg.norm(Y)
    col_mean = Y.mean(axis=0)
    range_res = np.sqrt(node_count) * np.linalg.norm(col_mean) / (1.0 + y_norm)
    if Wstar is None:
        return (np.nan, np.nan, np.nan, range_res, np.nan)
    dW = W - Wstar
    p = float(np.sum(dW * dW))
    if Ystar is None:
        d = np.nan
        lyap = np.nan
    else:
        dY = Y - Ystar
        d = float(np.sum(dY * dY))
        lyap = cw * p + clam * d if cw > 0.0 else np.nan
    rel = p / wstar_norm_sq if wstar_norm_sq > 0.0 else p
    return (p, d, lyap, range_res, rel)


def run_distributed_diag(
    alg,
    hess_diag,
    lin,
    avg_weights,
    laplacian,
    mu_w,
    mu_lambda,
    rho,
    dlm_c,
    dlm_d,
    W0,
    Y0,
    max_iter,
    divergence_threshold,
    stop_tolerance,
    Wstar,
    Ystar,
    cw,
    clam,
    wstar_norm_sq,
):
    """Networked primal-dual recursions for diagonal quadratic agent costs.

    State arrays are node-by-coordinate.  ``avg_weights`` is the
    symmetric doubly stochastic combination matrix; the averaging
    deviation ``u = W - A W`` plays the constraint residual.  ``alg``
    selects the recursion (see module constants).
    """
    K = W0.shape[0]
    W = np.array(W0, dtype=float)
    Y = np.array(Y0, dtype=float)
    A = avg_weights
    rows = np.empty((max_iter + 1, 5))
    rows[0] = _distributed_row(W, Y, Wstar, Ystar, cw, clam, wstar_norm_sq, K)
    status = STATUS_MAX_ITER
    steps = 0
    if Wstar is not None and stop_tolerance > 0.0 and rows[0, 4] <= stop_tolerance:
        return rows[:1].copy(), STATUS_CONVERGED, W, Y, 0

    for i in range(1, max_iter + 1):
        G = hess_diag * W + lin
        if alg == ALG_PD:
            W_new = W - mu_w * (G + Y)
            if rho != 0.0:
                W_new = W_new - (mu_w * rho) * (W - A @ W)
            Y_new = Y + mu_lambda * (W_new - A @ W_new)
        elif alg == ALG_EXTRA:
            W_new = W - 0.5 * (W - A @ W) - mu_w * (G + Y)
            Y_new = Y + mu_lambda * (W_new - A @ W_new)
        elif alg == ALG_EXACT_DIFFUSION:
            phi = W - mu_w * G
            W_new = phi - 0.5 * (phi - A @ phi) - mu_w * Y
            Y_new = Y + mu_lambda * (W_new - A @ W_new)
        elif alg == ALG_DIFFUSION:
            W_new = A @ (W - mu_w * G)
            Y_new = Y
        elif alg == ALG_DIGING:
            W_new = A @ (A @ W) - mu_w * G - mu_w * (Y - A @ Y)
            Y_new = Y + mu_lambda * (W_new - A @ W_new)
        else:  # ALG_DLM
            W_new = W - (1.0 / dlm_d) * (G + dlm_c * (laplacian @ W) + Y)
            Y_new = Y + dlm_c * (laplacian @ W_new)

        if not (np.all(np.isfinite(W_new)) and np.all(np.isfinite(Y_new))):
            status = STATUS_DIVERGED
            break
        disp = np.linalg.norm(W_new - W)
        W, Y = W_new, Y_new
        steps = i
        rows[i] = _distributed_row(W, Y, Wstar, Ystar, cw, clam, wstar_norm_sq, K)
        if np.linalg.norm(W) > divergence_threshold or np.linalg.norm(Y) > divergence_threshold:
            status = STATUS_DIVERGED
            break
        if stop_tolerance > 0.0:
            if Wstar is not None:
                if rows[i, 4] <= stop_tolerance:
                    status = STATUS_CONVERGED
                    break
            elif disp / (1.0 + np.linalg.norm(W)) <= stop_tolerance:
                status = STATUS_CONVERGED
                break

    return rows[: steps + 1].copy(), status, W, Y, steps
