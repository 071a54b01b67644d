"""Quick check of the compiled cohort_embed module.

Build and install first:  pip install --no-build-isolation ./crates/python
"""
import math
import random
import tempfile
from pathlib import Path

import cohort_embed as ce


def brute_auc(scores, positives):
    pos = [s for s, p in zip(scores, positives) if p]
    neg = [s for s, p in zip(scores, positives) if not p]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def main():
    print(ce.tokenize(ce.normalize_text("I can't sleep!!  See http://x.org")))

    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(2, 30)
        scores = [rng.randint(0, 5) / 5 for _ in range(n)]
        positives = [i % 2 == 0 for i in range(n)]
        assert abs(ce.auc(scores, positives) - brute_auc(scores, positives)) < 1e-12
    points, area = ce.roc_curve([0.9, 0.1, 0.8, 0.3], [True, False, True, False])
    assert area == 1.0 and points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)

    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 1, 1, 1, 2, 0]
    assert 0.0 < ce.macro_f1(truth, pred, 3) <= 1.0
    assert ce.binary_f1(truth, truth, 3, [1, 2]) == 1.0

    u, w = [0.1, -0.2, 0.3], [0.5, 0.5, 0.5]
    loss, grad = ce.user2vec_loss(u, w, [[1.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
    assert loss >= 0.0 and len(grad) == 3

    labels = ["control", "depression", "ptsd"]
    x, y = [], []
    for c in range(3):
        for _ in range(20):
            x.append([rng.gauss(3.0 if j == c else 0.0, 1.0) for j in range(6)])
            y.append(labels[c])
    lr = ce.train_lr(x, y, c=1.0)
    acc = sum(lr.predict(row) == lab for row, lab in zip(x, y)) / len(y)
    assert acc > 0.8, acc
    assert math.isclose(sum(lr.predict_proba(x[0])), 1.0)

    idx = list(range(len(y)))
    rng.shuffle(idx)
    model = ce.train_nlse(x, y, idx[:48], idx[48:], subspace_dim=4, learning_rate=0.5, seed=1)
    g, p = model.forward(x[0])
    assert all(0.0 <= v <= 1.0 for v in g) and math.isclose(sum(p), 1.0)
    print(model)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "nlse.csv"
        model.save(str(path))
        again = ce.NlseModel.load(str(path))
        assert again.forward(x[5]) == model.forward(x[5])
        corpus = Path(tmp) / "corpus.jsonl"
        assert ce.synth_corpus(str(corpus), users=4, posts=10, tokens=5) == 12
        assert len(corpus.read_text().splitlines()) == 12

    print("smoke test ok")


if __name__ == "__main__":
    main()
