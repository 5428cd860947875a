"""Independent pure-Python evaluators used as oracles by the test suite.

Nothing here imports exf: every quantity is recomputed from its defining
formula with explicit loops and the ``math`` module.  Run as a script to
print the frozen fixture values used in the tests.
"""
import math


def dist(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def anchor_mean(points, i):
    n = len(points)
    return sum(dist(points[i], points[k]) for k in range(n)) / n


def contrastive(points, y, delta):
    n = len(points)
    total = 0.0
    for i in range(n):
        for j in range(n):
            d = dist(points[i], points[j])
            total += y[i][j] * d * d + (1 - y[i][j]) * max(delta - d, 0.0) ** 2
    return total / n


def relaxed_relative(points, w, delta):
    n = len(points)
    total = 0.0
    for i in range(n):
        mu = anchor_mean(points, i)
        for j in range(n):
            r = dist(points[i], points[j]) / mu
            total += w[i][j] * r * r + (1 - w[i][j]) * max(delta - r, 0.0) ** 2
    return total / n


def relaxed_ms(points, w, delta, alpha, beta):
    n = len(points)
    total = 0.0
    for i in range(n):
        mu = anchor_mean(points, i)
        pos = neg = 0.0
        for j in range(n):
            if j == i:
                continue
            r = dist(points[i], points[j]) / mu
            pos += w[i][j] * math.exp(alpha * r)
            neg += (1 - w[i][j]) * math.exp(beta * (delta - r))
        total += math.log(1 + pos) / alpha + math.log(1 + neg) / beta
    return total / n


def softmax(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def hkd(student, teacher, T):
    total = 0.0
    for s_row, t_row in zip(student, teacher):
        p = softmax([v / T for v in t_row])
        q = softmax([v / T for v in s_row])
        total += sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)
    return T * T * total / len(student)


def recall_at_k(points, labels, ks):
    """Full distance sort per query; ties broken by index."""
    n = len(points)
    out = []
    for k in ks:
        hits = 0
        for q in range(n):
            others = sorted((dist(points[q], points[j]), j) for j in range(n) if j != q)
            if any(labels[j] == labels[q] for _, j in others[:k]):
                hits += 1
        out.append(hits / n)
    return out


FIXTURE_POINTS = [[0.0], [1.0], [3.0]]
FIXTURE_W = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.5], [0.0, 0.5, 1.0]]


if __name__ == "__main__":
    print("relaxed_contrastive (0,1,3)", repr(relaxed_relative(FIXTURE_POINTS, FIXTURE_W, 1.0)))
    print("relaxed_ms (0,1,3) a=1 b=2", repr(relaxed_ms(FIXTURE_POINTS, FIXTURE_W, 1.0, 1.0, 2.0)))
    ones = [[1.0] * 3 for _ in range(3)]
    print("unrelaxed positives 0,1,2", repr(relaxed_relative([[0.0], [1.0], [2.0]], ones, 1.0)))
    print("hkd teacher (2,0) student (0,0) T=1", repr(hkd([[0.0, 0.0]], [[2.0, 0.0]], 1.0)))
    print("contrastive pos d=0.5", repr(contrastive([[0.0], [0.5]], [[1, 1], [1, 1]], 1.0)))
    print("contrastive neg d=0.4", repr(contrastive([[0.0], [0.4]], [[1, 0], [0, 1]], 1.0)))
    print("recall (0,0),(0,0.1),(5,5)", recall_at_k([[0, 0], [0, 0.1], [5, 5]], [0, 0, 1], [1]))
