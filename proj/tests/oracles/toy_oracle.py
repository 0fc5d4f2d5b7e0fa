#!/usr/bin/env python3
"""Independent modular-arithmetic oracle for the p=23, q=11, g=4 toy group.

Every value printed here is recomputed from first principles with plain
Python integers (pow / modular inverse), with no reference to the C++ code.
The C++ unit tests and the acceptance suite freeze these values as known
answers.  Re-run with `python3 tests/oracles/toy_oracle.py`.
"""

P, Q, G = 23, 11, 4


def inv_mod(a, m):
    return pow(a, -1, m)


def subgroup():
    return sorted({pow(G, k, P) for k in range(Q)})


def main():
    out = {}
    sub = subgroup()
    out["g^q"] = pow(G, Q, P)
    out["subgroup"] = sub
    out["non_members"] = [v for v in range(1, P) if v not in sub]
    out["exp(4,2)"] = pow(4, 2, P)
    out["mul(18,13)"] = 18 * 13 % P
    out["scalar_inv(7)"] = inv_mod(7, Q)

    # ABE setup with a=(3,5), d=7
    a = [3, 5]
    d = 7
    pk = [pow(G, ai, P) for ai in a]
    gd = pow(G, d, P)
    out["abe.pk_attrs"] = pk
    out["abe.g_d"] = gd

    # KeyGen with shares a_{1,.}=(1,2), a_{2,.}=(4,1), s=2
    s = 2
    sh1 = [1, 4]
    sh2 = [2, 1]
    assert sum(sh1) + sum(sh2) == sum(a)
    sk1 = (s + sum(sh1)) % Q
    sk2 = ((-s + sum(sh2)) * inv_mod(d, Q)) % Q
    out["abe.sk"] = (sk1, sk2)
    assert (sk1 + d * sk2) % Q == sum(a) % Q

    # split_message: policy (+1,+1), m = 4, k1 = 18
    m = 4
    k1 = 18
    k2 = m * inv_mod(k1, P) % P
    out["abe.k2"] = k2
    assert k1 * k2 % P == m

    # Encrypt with r = 2
    r = 2
    A = pow(G, r, P)
    B = [k1 * pow(pk[0], r, P) % P, k2 * pow(pk[1], r, P) % P]
    D = pow(gd, r, P)
    out["abe.ct"] = (A, B, D)

    # Decrypt with (sk1, sk2), attrs {1,2}
    prodB = B[0] * B[1] % P
    mask = pow(A, sk1, P) * pow(D, sk2, P) % P
    rec = prodB * inv_mod(mask, P) % P
    out["abe.decrypt.prodB"] = prodB
    out["abe.decrypt.mask"] = mask
    out["abe.decrypt.m"] = rec

    # Decrypt with a key lacking attribute 2: key over {1} only.
    # KeyGen for attrs {1}: shares (1,2), s=2 -> sk1 = 3, sk2 = (0)*d^-1 = 0 ... s=2 gives -2+2=0.
    # Use s=3 so the tuple is generic: sk1 = 3+1 = 4, sk2 = (-3+2)*8 = -8 = 3 mod 11.
    s_b = 3
    sk1b = (s_b + 1) % Q
    sk2b = ((-s_b + 2) * inv_mod(d, Q)) % Q
    recb = B[0] * inv_mod(pow(A, sk1b, P) * pow(D, sk2b, P) % P, P) % P
    out["abe.decrypt.missing_attr"] = ((sk1b, sk2b), recb)

    # Out.Encrypt1 with v = 1 and v = 2
    for v in (1, 2):
        out[f"abe.mo(v={v})"] = (pow(G, v, P), [pow(x, v, P) for x in pk], pow(gd, v, P))

    # Forbidden-slot behaviour: policy (+1,-1), m = 4, alpha over every non-identity
    # member; key holding {1,2}. Recovery happens iff alpha == 1, never for alpha != 1.
    forb = []
    for alpha in sub:
        if alpha == 1:
            continue
        Bf = [m * pow(pk[0], r, P) % P, alpha * pow(pk[1], r, P) % P]
        got = Bf[0] * Bf[1] % P * inv_mod(mask, P) % P
        forb.append(got == m)
    out["abe.forbidden.any_recovers"] = any(forb)

    # IBS: x = 3
    x = 3
    X = pow(G, x, P)
    out["ibs.X"] = X
    # KeyGen beta = 2, H1(B, ID) stub -> 5
    beta = 2
    Bk = pow(G, beta, P)
    h_id = 5
    kappa = (beta + h_id * x) % Q
    out["ibs.key"] = (Bk, kappa)
    assert pow(G, kappa, P) == Bk * pow(X, h_id, P) % P

    # Direct sign: y = 4, H1(Y, B, M) stub -> 7
    y = 4
    Y = pow(G, y, P)
    h_msg = 7
    z = (y + h_msg * kappa) % Q
    out["ibs.sign.direct"] = (Y, Bk, z)
    assert pow(G, z, P) == Y * pow(Bk, h_msg, P) * pow(X, h_msg * h_id, P) % P

    # Offline sign: y = 3, omega = 4
    y_off, omega = 3, 4
    Y_off = pow(G, y_off, P)
    omega_inv = inv_mod(omega, Q)
    g_inv_omega = pow(G, omega_inv, P)
    out["ibs.offline"] = (Y_off, omega_inv, g_inv_omega)

    # Out.Sign1: Y = 18, x_t = 2
    out["ibs.out_sign1(18,2)"] = pow(18, 2, P)

    # Out.Sign2: x_t = 2, Yp = Y_off^2, H1 stub -> 7, split X_t = 5
    xt = 2
    Yp = pow(Y_off, xt, P)
    z2 = (xt * y_off + h_msg * kappa) % Q
    Xs = 5
    Ys = (z2 - Xs) % Q
    wX = omega * Xs % Q
    out["ibs.sign.outsourced"] = (Yp, Bk, wX, g_inv_omega, Ys)
    lhs = pow(g_inv_omega, wX, P) * pow(G, Ys, P) % P
    rhs = Yp * pow(Bk, h_msg, P) * pow(X, h_msg * h_id, P) % P
    assert lhs == rhs == pow(G, z2, P)

    # Tokens: x_cn = 6, y_cn = g^6
    x_cn = 6
    y_cn = pow(G, x_cn, P)
    out["tok.y_cn"] = y_cn
    # make_pid shared secret for alpha = 9: y_cn^alpha == (g^alpha)^x_cn
    alpha = 9
    out["tok.pid.shared"] = (pow(y_cn, alpha, P), pow(pow(G, alpha, P), x_cn, P), pow(G, alpha, P))
    # CN token u = 3, H1(U, T, PID) stub -> 4
    u = 3
    U = pow(G, u, P)
    h_cn = 4
    z_cn = (u + x_cn * h_cn) % Q
    out["tok.cn"] = (U, z_cn)
    assert pow(G, z_cn, P) == U * pow(y_cn, h_cn, P) % P
    # User token: w = 5, H1(U, T_cur) stub -> 9, kappa from the IBS key above
    w = 5
    W = pow(G, w, P)
    h_ut = 9
    z_sum = (z_cn + w + h_ut * kappa) % Q
    out["tok.user"] = (W, z_sum)
    rhs = U * W % P * pow(y_cn, h_cn, P) % P * pow(Bk * pow(X, h_id, P) % P, h_ut, P) % P
    assert pow(G, z_sum, P) == rhs
    # The same token with W replaced by g^1 no longer satisfies the equation.
    rhs_bad = U * G % P * pow(y_cn, h_cn, P) % P * pow(Bk * pow(X, h_id, P) % P, h_ut, P) % P
    out["tok.user.w_replaced_ok"] = pow(G, z_sum, P) == rhs_bad

    for k, v in out.items():
        print(f"{k} = {v}")


if __name__ == "__main__":
    main()
