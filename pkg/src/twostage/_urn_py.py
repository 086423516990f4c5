"""Pure-numpy urn kernels, used when the compiled extension is unavailable."""
import numpy as np


def urn_null_statistics(successes, uniforms, balls_e, balls_c, beta):
    """Difference in arm success proportions for each row of ``uniforms``.

    Each row replays the randomized play-the-winner urn from its initial
    state over the patients in enrollment order; patient ``i`` goes to
    Experimental when ``u[i] * (E + C) < E``. The success flags stay with
    the patients, so rows sample the allocation distribution under the
    null of no arm difference. A row where one arm receives nobody scores 0.
    """
    s = np.ascontiguousarray(successes, dtype=np.uint8).astype(np.int64)
    u = np.ascontiguousarray(uniforms, dtype=np.float64)
    n_res, n = u.shape
    if s.shape[0] != n:
        raise ValueError("uniforms must have one column per patient")
    e = np.full(n_res, balls_e, dtype=np.int64)
    c = np.full(n_res, balls_c, dtype=np.int64)
    ne = np.zeros(n_res, dtype=np.int64)
    se = np.zeros(n_res, dtype=np.int64)
    for i in range(n):
        to_e = u[:, i] * (e + c) < e
        ne += to_e
        se += to_e * s[i]
        # success rewards the drawn arm; failure rewards the other one
        reward_e = to_e == bool(s[i])
        e += beta * reward_e
        c += beta * ~reward_e
    nc = n - ne
    sc = int(s.sum()) - se
    out = np.zeros(n_res)
    ok = (ne > 0) & (nc > 0)
    out[ok] = se[ok].astype(float) / ne[ok] - sc[ok].astype(float) / nc[ok]
    return out


def rpw_allocate(u_draw, u_outcome, p_e, p_c, balls_e, balls_c, beta):
    e, c, n_e = int(balls_e), int(balls_c), 0
    for ud, uo in zip(np.asarray(u_draw, dtype=float).tolist(), np.asarray(u_outcome, dtype=float).tolist()):
        if ud * (e + c) < e:
            n_e += 1
            if uo < p_e:
                e += beta
            else:
                c += beta
        elif uo < p_c:
            c += beta
        else:
            e += beta
    return n_e, e, c
