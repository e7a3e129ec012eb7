"""Reference forward pass of the tiny fixed-parameter model.

Recomputes, with plain numpy and no shared code, the values frozen as
literals in tests/acceptance.rs. Run: python3 tiny_model.py
"""
import numpy as np

D, H, K, F, OPS, V = 2, 2, 2, 2, 2, 8
E = 2 * H
CMP = 2 * K + 2 + 2 * E

SHAPES = [
    ("emb_names", (V, D)), ("emb_code", (V, D)),
    ("enc_names.att_w", (E, E)), ("enc_names.att_b", (E,)), ("enc_names.att_ctx", (E,)),
    ("enc_names.fwd.w_x", (3 * H, D)), ("enc_names.fwd.w_h", (3 * H, H)), ("enc_names.fwd.b", (3 * H,)),
    ("enc_names.bwd.w_x", (3 * H, D)), ("enc_names.bwd.w_h", (3 * H, H)), ("enc_names.bwd.b", (3 * H,)),
    ("enc_code.att_w", (E, E)), ("enc_code.att_b", (E,)), ("enc_code.att_ctx", (E,)),
    ("enc_code.fwd.w_x", (3 * H, D)), ("enc_code.fwd.w_h", (3 * H, H)), ("enc_code.fwd.b", (3 * H,)),
    ("enc_code.bwd.w_x", (3 * H, D)), ("enc_code.bwd.w_h", (3 * H, H)), ("enc_code.bwd.b", (3 * H,)),
    ("cmp_ts.nn_w", (K, 2 * E)), ("cmp_ts.nn_b", (K,)), ("cmp_ts.nt_w", (K, E, E)), ("cmp_ts.nt_b", (K,)),
    ("red_ts.w", (F, CMP)), ("red_ts.b", (F,)),
    ("red_l.w", (F, E)), ("red_l.b", (F,)),
    ("out.w", (2, 3 * F + OPS)), ("out.b", (2,)),
    ("cmp_ba.nn_w", (K, 2 * E)), ("cmp_ba.nn_b", (K,)), ("cmp_ba.nt_w", (K, E, E)), ("cmp_ba.nt_b", (K,)),
    ("red_ba.w", (F, CMP)), ("red_ba.b", (F,)),
]


def pattern():
    p, k = {}, 0
    for name, shape in SHAPES:
        n = int(np.prod(shape))
        vals = [(((k + i + 1) * 37) % 23 - 11) / 22 for i in range(n)]
        k += n
        p[name] = np.array(vals, dtype=np.float64).reshape(shape)
    return p


def sig(x):
    return 1 / (1 + np.exp(-x))


def gru(p, pre, xs):
    wx, wh, b = p[pre + ".w_x"], p[pre + ".w_h"], p[pre + ".b"]
    h = np.zeros(H)
    out = []
    for x in xs:
        z = sig(wx[:H] @ x + wh[:H] @ h + b[:H])
        r = sig(wx[H:2 * H] @ x + wh[H:2 * H] @ h + b[H:2 * H])
        c = np.tanh(wx[2 * H:] @ x + wh[2 * H:] @ (r * h) + b[2 * H:])
        h = z * h + (1 - z) * c
        out.append(h)
    return out


def encode(p, channel, seq):
    emb = p["emb_" + channel]
    xs = [emb[i] for i in seq]
    f = gru(p, "enc_%s.fwd" % channel, xs)
    b = gru(p, "enc_%s.bwd" % channel, xs[::-1])[::-1]
    states = np.array([np.concatenate([f[t], b[t]]) for t in range(len(seq))])
    u = np.tanh(states @ p["enc_%s.att_w" % channel].T + p["enc_%s.att_b" % channel])
    s = u @ p["enc_%s.att_ctx" % channel]
    a = np.exp(s - s.max())
    a /= a.sum()
    return a @ states, a


def compare(p, pre, v1, v2):
    nn = np.maximum(p[pre + ".nn_w"] @ np.concatenate([v1, v2]) + p[pre + ".nn_b"], 0)
    nt = np.maximum(np.array([v1 @ p[pre + ".nt_w"][k] @ v2 for k in range(K)]) + p[pre + ".nt_b"], 0)
    cos = v1 @ v2 / (np.linalg.norm(v1) * np.linalg.norm(v2))
    euc = np.linalg.norm(v1 - v2)
    return np.concatenate([nn, nt, [cos, euc], v1 - v2, v1 * v2])


def p_kill(p, test, source, line, before, after, op):
    vt, _ = encode(p, "names", test)
    vs, _ = encode(p, "names", source)
    vl, _ = encode(p, "code", line)
    vb, _ = encode(p, "code", before)
    va, _ = encode(p, "code", after)
    onehot = np.zeros(OPS)
    onehot[op] = 1
    fusion = np.concatenate([
        p["red_ts.w"] @ compare(p, "cmp_ts", vt, vs) + p["red_ts.b"],
        p["red_ba.w"] @ compare(p, "cmp_ba", vb, va) + p["red_ba.b"],
        p["red_l.w"] @ vl + p["red_l.b"],
        onehot,
    ])
    logits = p["out.w"] @ fusion + p["out.b"]
    e = np.exp(logits - logits.max())
    return (e / e.sum())[1]


if __name__ == "__main__":
    p = pattern()
    test, source = [5, 6, 7], [7, 5, 2]
    vt, at = encode(p, "names", test)
    vs, _ = encode(p, "names", source)
    print("encoded test name:", [repr(float(x)) for x in vt])
    print("attention:", [repr(float(x)) for x in at])
    print("compare:", [repr(float(x)) for x in compare(p, "cmp_ts", vt, vs)])
    print("p_kill:", repr(float(p_kill(p, test, source, [1, 6, 5], [6, 5, 7], [4, 7, 5], 1))))
