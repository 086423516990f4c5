# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled urn kernels. ``_urn_py`` holds the reference implementation."""
import numpy as np


def urn_null_statistics(const unsigned char[::1] successes, const double[:, ::1] uniforms,
                        long balls_e, long balls_c, long beta):
    cdef Py_ssize_t n_res = uniforms.shape[0]
    cdef Py_ssize_t n = successes.shape[0]
    cdef Py_ssize_t r, i
    cdef long e, c, ne, nc, se, sc
    cdef long s, to_e, reward_e, total_s = 0
    if uniforms.shape[1] != n:
        raise ValueError("uniforms must have one column per patient")
    for i in range(n):
        total_s += successes[i] != 0
    out = np.empty(n_res, dtype=np.float64)
    cdef double[::1] o = out
    for r in range(n_res):
        e = balls_e
        c = balls_c
        ne = nc = se = sc = 0
        for i in range(n):
            s = successes[i] != 0
            to_e = uniforms[r, i] * (e + c) < e
            ne += to_e
            se += to_e & s
            # success rewards the drawn arm, failure the other one
            reward_e = to_e == s
            e += beta * reward_e
            c += beta * (1 - reward_e)
        nc = n - ne
        sc = total_s - se
        if ne > 0 and nc > 0:
            o[r] = (<double>se) / ne - (<double>sc) / nc
        else:
            o[r] = 0.0
    return out


def rpw_allocate(const double[::1] u_draw, const double[::1] u_outcome, double p_e, double p_c,
                 long balls_e, long balls_c, long beta):
    cdef Py_ssize_t n = u_draw.shape[0]
    cdef Py_ssize_t i
    cdef long e = balls_e, c = balls_c, n_e = 0
    cdef bint success
    if u_outcome.shape[0] != n:
        raise ValueError("u_draw and u_outcome must have equal length")
    for i in range(n):
        if u_draw[i] * (e + c) < e:
            n_e += 1
            success = u_outcome[i] < p_e
            if success:
                e += beta
            else:
                c += beta
        else:
            success = u_outcome[i] < p_c
            if success:
                c += beta
            else:
                e += beta
    return n_e, e, c
