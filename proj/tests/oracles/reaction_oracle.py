# Independent high-precision values for the Mori reaction (delta=1, gamma=9).
import mpmath as mp

mp.mp.dps = 40
d, g = mp.mpf(1), mp.mpf(9)


def roots(v):
    # trigonometric Cardano for u^3 + b u^2 + c u + e
    b, c, e = -v * (d + g), mp.mpf(1), -v * d
    p = c - b**2 / 3
    q = 2 * b**3 / 27 - b * c / 3 + e
    r = 2 * mp.sqrt(-p / 3)
    phi = mp.acos(3 * q / (p * r))
    t = sorted(r * mp.cos((phi - 2 * mp.pi * k) / 3) for k in range(3))
    return [x - b / 3 for x in t]


def disc(v):
    a, b, c, e = 1, -v * (d + g), 1, -v * d
    return 18 * a * b * c * e - 4 * b**3 * e + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * e**2


def J(v):
    hm, _, hp = roots(v)
    F = lambda s: -s * s / 2 + d * v * s + g * v * (s - mp.atan(s))
    return F(hp) - F(hm)


def Jp(v):
    hm, _, hp = roots(v)
    F = lambda s: d * s + g * (s - mp.atan(s))
    return F(hp) - F(hm)


lo = mp.findroot(disc, 0.1769)
hi = mp.findroot(disc, 0.1789)
vs = mp.findroot(J, (mp.mpf("0.1772"), mp.mpf("0.1779")), solver="bisect")
print("window", mp.nstr(lo, 20), mp.nstr(hi, 20))
print("vstar", mp.nstr(vs, 20), "Jprime", mp.nstr(Jp(vs), 20))
print("roots", [mp.nstr(x, 20) for x in roots(vs)])
vm = (lo + hi) / 2
print("J(mid)", mp.nstr(J(vm), 20), "roots(mid)", [mp.nstr(x, 20) for x in roots(vm)])
