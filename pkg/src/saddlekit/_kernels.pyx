# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled extension core for the solver inner loops.

Mirrors ``_kernels_py`` exactly: same signatures, same control flow,
same trace layout.  Kept free of Python-level work inside the iteration
loops so long runs stay cheap.
"""

import numpy as np

from libc.math cimport sqrt, isfinite, NAN

BACKEND_NAME = "compiled"

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


cdef void _matvec(double[:, ::1] A, double[::1] x, double[::1] out) noexcept:
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1], i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += A[i, j] * x[j]
        out[i] = s


cdef void _matvec_t(double[:, ::1] A, double[::1] x, double[::1] out) noexcept:
    # out = A' x for row-major A
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1], i, j
    for j in range(m):
        out[j] = 0.0
    for i in range(n):
        for j in range(m):
            out[j] += A[i, j] * x[i]


cdef void _matmul_km(double[:, ::1] A, double[:, ::1] X, double[:, ::1] out) noexcept:
    # out = A @ X with A (K,K) and X (K,M)
    cdef Py_ssize_t K = A.shape[0], M = X.shape[1], k, s, m
    cdef double a
    for k in range(K):
        for m in range(M):
            out[k, m] = 0.0
        for s in range(K):
            a = A[k, s]
            if a != 0.0:
                for m in range(M):
                    out[k, m] += a * X[s, m]


cdef double _norm1d(double[::1] x) noexcept:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return sqrt(s)


cdef double _norm2d(double[:, ::1] X) noexcept:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            s += X[i, j] * X[i, j]
    return sqrt(s)


cdef bint _finite1d(double[::1] x) noexcept:
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        if not isfinite(x[i]):
            return 0
    return 1


cdef bint _finite2d(double[:, ::1] X) noexcept:
    cdef Py_ssize_t i, j
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            if not isfinite(X[i, j]):
                return 0
    return 1


cdef void _single_row(double[::1] w, double[::1] lam, bint has_ref,
                      double[::1] wstar, double[::1] lamstar,
                      double cw, double clam, double[:, ::1] projector,
                      double wstar_norm_sq, double[::1] tmpE,
                      double[:, ::1] trace, Py_ssize_t row) noexcept:
    cdef Py_ssize_t E = lam.shape[0], M = w.shape[0], i, j
    cdef double lam_norm, rr = 0.0, s, p = 0.0, d = 0.0
    lam_norm = _norm1d(lam)
    for i in range(E):
        s = 0.0
        for j in range(E):
            s += projector[i, j] * lam[j]
        tmpE[i] = lam[i] - s
    for i in range(E):
        rr += tmpE[i] * tmpE[i]
    trace[row, 3] = sqrt(rr) / (1.0 + lam_norm)
    if not has_ref:
        trace[row, 0] = NAN
        trace[row, 1] = NAN
        trace[row, 2] = NAN
        trace[row, 4] = NAN
        return
    for i in range(M):
        s = w[i] - wstar[i]
        p += s * s
    for i in range(E):
        s = lam[i] - lamstar[i]
        d += s * s
    trace[row, 0] = p
    trace[row, 1] = d
    trace[row, 2] = cw * p + clam * d if cw > 0.0 else NAN
    trace[row, 4] = p / wstar_norm_sq if wstar_norm_sq > 0.0 else p


def run_single(int mode, object hess_o, object lin_o, object cmat_o, object crhs_o,
               double mu_w, double mu_lambda, double penalty,
               object w0_o, object lam0_o, long max_iter,
               double divergence_threshold, double stop_tolerance,
               object wstar_o, object lamstar_o, double cw, double clam,
               object projector_o, double wstar_norm_sq):
    cdef double[:, ::1] hess = np.array(hess_o, dtype=np.float64, order="C")
    cdef double[::1] lin = np.array(lin_o, dtype=np.float64, order="C")
    cdef double[:, ::1] cmat = np.array(cmat_o, dtype=np.float64, order="C")
    cdef double[::1] crhs = np.array(crhs_o, dtype=np.float64, order="C")
    cdef double[:, ::1] projector = np.array(projector_o, dtype=np.float64, order="C")
    cdef Py_ssize_t M = hess.shape[0], E = cmat.shape[0], i, j
    cdef bint has_ref = wstar_o is not None
    cdef double[::1] wstar = (np.array(wstar_o, dtype=np.float64, order="C")
                              if has_ref else np.zeros(M))
    cdef double[::1] lamstar = (np.array(lamstar_o, dtype=np.float64, order="C")
                                if has_ref else np.zeros(E))

    w_arr = np.array(w0_o, dtype=np.float64)
    lam_arr = np.array(lam0_o, dtype=np.float64)
    cdef double[::1] w = w_arr
    cdef double[::1] lam = lam_arr
    trace_np = np.empty((max_iter + 1, 5), dtype=np.float64)
    cdef double[:, ::1] trace = trace_np

    cdef double[::1] grad = np.empty(M)
    cdef double[::1] res = np.empty(E)
    cdef double[::1] btv = np.empty(M)
    cdef double[::1] w_new = np.empty(M)
    cdef double[::1] lam_new = np.empty(E)
    cdef double[::1] tmpE = np.empty(E)
    cdef double[::1] tmpM = np.empty(M)

    cdef int status = STATUS_MAX_ITER
    cdef Py_ssize_t steps = 0
    cdef long it
    cdef double disp, s, wn, ln

    _single_row(w, lam, has_ref, wstar, lamstar, cw, clam, projector,
                wstar_norm_sq, tmpE, trace, 0)
    if has_ref and stop_tolerance > 0.0 and trace[0, 4] <= stop_tolerance:
        return trace_np[:1].copy(), STATUS_CONVERGED, w_arr, lam_arr, 0

    for it in range(1, max_iter + 1):
        # grad = hess @ w + lin (+ penalty * B'(B w - b) for modes 0/1)
        _matvec(hess, w, grad)
        for i in range(M):
            grad[i] += lin[i]
        if mode != MODE_FORWARD_BACKWARD and penalty != 0.0:
            _matvec(cmat, w, res)
            for i in range(E):
                res[i] -= crhs[i]
            _matvec_t(cmat, res, btv)
            for i in range(M):
                grad[i] += penalty * btv[i]
        _matvec_t(cmat, lam, btv)
        for i in range(M):
            w_new[i] = w[i] - mu_w * (grad[i] + btv[i])
        if mode == MODE_INCREMENTAL:
            _matvec(cmat, w_new, res)
            for i in range(E):
                lam_new[i] = lam[i] + mu_lambda * (res[i] - crhs[i])
        elif mode == MODE_NONINCREMENTAL:
            _matvec(cmat, w, res)
            for i in range(E):
                lam_new[i] = lam[i] + mu_lambda * (res[i] - crhs[i])
        else:
            for i in range(M):
                tmpM[i] = 2.0 * w_new[i] - w[i]
            _matvec(cmat, tmpM, res)
            for i in range(E):
                lam_new[i] = lam[i] + mu_lambda * res[i]

        if not (_finite1d(w_new) and _finite1d(lam_new)):
            status = STATUS_DIVERGED
            break
        disp = 0.0
        for i in range(M):
            s = w_new[i] - w[i]
            disp += s * s
        disp = sqrt(disp)
        for i in range(M):
            w[i] = w_new[i]
        for i in range(E):
            lam[i] = lam_new[i]
        steps = it
        _single_row(w, lam, has_ref, wstar, lamstar, cw, clam, projector,
                    wstar_norm_sq, tmpE, trace, it)
        wn = _norm1d(w)
        ln = _norm1d(lam)
        if wn > divergence_threshold or ln > divergence_threshold:
            status = STATUS_DIVERGED
            break
        if stop_tolerance > 0.0:
            if has_ref:
                if trace[it, 4] <= stop_tolerance:
                    status = STATUS_CONVERGED
                    break
            elif disp / (1.0 + wn) <= stop_tolerance:
                status = STATUS_CONVERGED
                break

    return trace_np[: steps + 1].copy(), status, w_arr, lam_arr, steps


cdef void _distributed_row(double[:, ::1] W, double[:, ::1] Y, bint has_ref,
                           double[:, ::1] Wstar, bint has_dual, double[:, ::1] Ystar,
                           double cw, double clam, double wstar_norm_sq,
                           double[::1] colmean, double[:, ::1] trace,
                           Py_ssize_t row) noexcept:
    cdef Py_ssize_t K = W.shape[0], M = W.shape[1], k, m
    cdef double y_norm, rr = 0.0, s, p = 0.0, d = 0.0
    y_norm = _norm2d(Y)
    for m in range(M):
        s = 0.0
        for k in range(K):
            s += Y[k, m]
        colmean[m] = s / K
    for m in range(M):
        rr += colmean[m] * colmean[m]
    trace[row, 3] = sqrt(K * rr) / (1.0 + y_norm)
    if not has_ref:
        trace[row, 0] = NAN
        trace[row, 1] = NAN
        trace[row, 2] = NAN
        trace[row, 4] = NAN
        return
    for k in range(K):
        for m in range(M):
            s = W[k, m] - Wstar[k, m]
            p += s * s
    trace[row, 0] = p
    trace[row, 4] = p / wstar_norm_sq if wstar_norm_sq > 0.0 else p
    if has_dual:
        for k in range(K):
            for m in range(M):
                s = Y[k, m] - Ystar[k, m]
                d += s * s
        trace[row, 1] = d
        trace[row, 2] = cw * p + clam * d if cw > 0.0 else NAN
    else:
        trace[row, 1] = NAN
        trace[row, 2] = NAN


def run_distributed_diag(int alg, object hess_diag_o, object lin_o,
                         object avg_weights_o, object laplacian_o,
                         double mu_w, double mu_lambda, double rho,
                         double dlm_c, double dlm_d,
                         object W0_o, object Y0_o, long max_iter,
                         double divergence_threshold, double stop_tolerance,
                         object Wstar_o, object Ystar_o, double cw, double clam,
                         double wstar_norm_sq):
    cdef double[:, ::1] hd = np.array(hess_diag_o, dtype=np.float64, order="C")
    cdef double[:, ::1] lin = np.array(lin_o, dtype=np.float64, order="C")
    cdef double[:, ::1] A = np.array(avg_weights_o, dtype=np.float64, order="C")
    cdef double[:, ::1] L = np.array(laplacian_o, dtype=np.float64, order="C")
    cdef Py_ssize_t K = hd.shape[0], M = hd.shape[1], k, m
    cdef bint has_ref = Wstar_o is not None
    cdef bint has_dual = Ystar_o is not None
    cdef double[:, ::1] Wstar = (np.array(Wstar_o, dtype=np.float64, order="C")
                                 if has_ref else np.zeros((K, M)))
    cdef double[:, ::1] Ystar = (np.array(Ystar_o, dtype=np.float64, order="C")
                                 if has_dual else np.zeros((K, M)))

    W_arr = np.array(W0_o, dtype=np.float64)
    Y_arr = np.array(Y0_o, dtype=np.float64)
    cdef double[:, ::1] W = W_arr
    cdef double[:, ::1] Y = Y_arr
    trace_np = np.empty((max_iter + 1, 5), dtype=np.float64)
    cdef double[:, ::1] trace = trace_np

    cdef double[:, ::1] G = np.empty((K, M))
    cdef double[:, ::1] T1 = np.empty((K, M))
    cdef double[:, ::1] T2 = np.empty((K, M))
    cdef double[:, ::1] W_new = np.empty((K, M))
    cdef double[:, ::1] Y_new = np.empty((K, M))
    cdef double[::1] colmean = np.empty(M)

    cdef int status = STATUS_MAX_ITER
    cdef Py_ssize_t steps = 0
    cdef long it
    cdef double disp, s, wn, yn, inv_d

    _distributed_row(W, Y, has_ref, Wstar, has_dual, Ystar, cw, clam,
                     wstar_norm_sq, colmean, trace, 0)
    if has_ref and stop_tolerance > 0.0 and trace[0, 4] <= stop_tolerance:
        return trace_np[:1].copy(), STATUS_CONVERGED, W_arr, Y_arr, 0

    for it in range(1, max_iter + 1):
        for k in range(K):
            for m in range(M):
                G[k, m] = hd[k, m] * W[k, m] + lin[k, m]
        if alg == ALG_PD:
            for k in range(K):
                for m in range(M):
                    W_new[k, m] = W[k, m] - mu_w * (G[k, m] + Y[k, m])
            if rho != 0.0:
                _matmul_km(A, W, T1)
                for k in range(K):
                    for m in range(M):
                        W_new[k, m] = W_new[k, m] - (mu_w * rho) * (W[k, m] - T1[k, m])
            _matmul_km(A, W_new, T1)
            for k in range(K):
                for m in range(M):
                    Y_new[k, m] = Y[k, m] + mu_lambda * (W_new[k, m] - T1[k, m])
        elif alg == ALG_EXTRA:
            _matmul_km(A, W, T1)
            for k in range(K):
                for m in range(M):
                    W_new[k, m] = (W[k, m] - 0.5 * (W[k, m] - T1[k, m])
                                   - mu_w * (G[k, m] + Y[k, m]))
            _matmul_km(A, W_new, T1)
            for k in range(K):
                for m in range(M):
                    Y_new[k, m] = Y[k, m] + mu_lambda * (W_new[k, m] - T1[k, m])
        elif alg == ALG_EXACT_DIFFUSION:
            for k in range(K):
                for m in range(M):
                    T1[k, m] = W[k, m] - mu_w * G[k, m]
            _matmul_km(A, T1, T2)
            for k in range(K):
                for m in range(M):
                    W_new[k, m] = (T1[k, m] - 0.5 * (T1[k, m] - T2[k, m])
                                   - mu_w * Y[k, m])
            _matmul_km(A, W_new, T1)
            for k in range(K):
                for m in range(M):
                    Y_new[k, m] = Y[k, m] + mu_lambda * (W_new[k, m] - T1[k, m])
        elif alg == ALG_DIFFUSION:
            for k in range(K):
                for m in range(M):
                    T1[k, m] = W[k, m] - mu_w * G[k, m]
            _matmul_km(A, T1, W_new)
            for k in range(K):
                for m in range(M):
                    Y_new[k, m] = Y[k, m]
        elif alg == ALG_DIGING:
            _matmul_km(A, W, T1)
            _matmul_km(A, T1, T2)
            _matmul_km(A, Y, T1)
            for k in range(K):
                for m in range(M):
                    W_new[k, m] = (T2[k, m] - mu_w * G[k, m]
                                   - mu_w * (Y[k, m] - T1[k, m]))
            _matmul_km(A, W_new, T2)
            for k in range(K):
                for m in range(M):
                    Y_new[k, m] = Y[k, m] + mu_lambda * (W_new[k, m] - T2[k, m])
        else:  # ALG_DLM
            inv_d = 1.0 / dlm_d
            _matmul_km(L, W, T1)
            for k in range(K):
                for m in range(M):
                    W_new[k, m] = W[k, m] - inv_d * (G[k, m] + dlm_c * T1[k, m] + Y[k, m])
            _matmul_km(L, W_new, T2)
            for k in range(K):
                for m in range(M):
                    Y_new[k, m] = Y[k, m] + dlm_c * T2[k, m]

        if not (_finite2d(W_new) and _finite2d(Y_new)):
            status = STATUS_DIVERGED
            break
        disp = 0.0
        for k in range(K):
            for m in range(M):
                s = W_new[k, m] - W[k, m]
                disp += s * s
        disp = sqrt(disp)
        for k in range(K):
            for m in range(M):
                W[k, m] = W_new[k, m]
                Y[k, m] = Y_new[k, m]
        steps = it
        _distributed_row(W, Y, has_ref, Wstar, has_dual, Ystar, cw, clam,
                         wstar_norm_sq, colmean, trace, it)
        wn = _norm2d(W)
        yn = _norm2d(Y)
        if wn > divergence_threshold or yn > divergence_threshold:
            status = STATUS_DIVERGED
            break
        if stop_tolerance > 0.0:
            if has_ref:
                if trace[it, 4] <= stop_tolerance:
                    status = STATUS_CONVERGED
                    break
            elif disp / (1.0 + wn) <= stop_tolerance:
                status = STATUS_CONVERGED
                break

    return trace_np[: steps + 1].copy(), status, W_arr, Y_arr, steps
