"""Reference implementations written as plain Python loops over nested lists.

They share no code with the package and are deliberately naive: every sum
is an explicit loop, every mean divides by an explicit count.
"""

import math


def to_list(x):
    return x.tolist() if hasattr(x, "tolist") else x


def flatten(x):
    x = to_list(x)
    if isinstance(x, (list, tuple)):
        out = []
        for item in x:
            out.extend(flatten(item))
        return out
    return [float(x)]


def mean(values):
    total = 0.0
    for v in values:
        total += v
    return total / len(values)


def adv_g(score_fake):
    return mean([(s - 1.0) ** 2 for s in flatten(score_fake)])


def adv_d(score_fake, score_real):
    return mean([s**2 for s in flatten(score_fake)]) + mean([(s - 1.0) ** 2 for s in flatten(score_real)])


def softplus(z):
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def adv_ce(score, is_real):
    # -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    return mean([softplus(-z) if is_real else softplus(z) for z in flatten(score)])


def cross_entropy(logits, labels):
    rows = to_list(logits)
    labels = flatten(labels)
    losses = []
    for row, y in zip(rows, labels):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        losses.append(lse - row[int(y)])
    return mean(losses)


def l1_mean(a, b):
    fa, fb = flatten(a), flatten(b)
    assert len(fa) == len(fb)
    return mean([abs(x - y) for x, y in zip(fa, fb)])


def normalize_track(track):
    track = flatten(track)
    voiced = [v for v in track if v > 0]
    m = mean(voiced) if voiced else mean(track)
    if m == 0:
        return list(track)
    return [v / m for v in track]


def f0_loss(src_tracks, gen_tracks):
    """Tracks are lists of 1-D lists (one per batch item)."""
    diffs = []
    for a, b in zip(src_tracks, gen_tracks):
        n = min(len(a), len(b))
        na, nb = normalize_track(a[:n]), normalize_track(b[:n])
        diffs.extend(abs(x - y) for x, y in zip(na, nb))
    return mean(diffs)


def norm_loss(x, g):
    """x, g: nested lists shaped (B, N, T) or (N, T)."""
    x, g = to_list(x), to_list(g)
    if not isinstance(x[0][0], list):
        x, g = [x], [g]
    diffs = []
    for xb, gb in zip(x, g):
        n_bands, n_frames = len(xb), len(xb[0])
        for t in range(n_frames):
            nx = sum(abs(xb[n][t]) for n in range(n_bands))
            ng = sum(abs(gb[n][t]) for n in range(n_bands))
            diffs.append(abs(nx - ng))
    return mean(diffs)


def column_norm(mel, t):
    """1-based column index."""
    mel = to_list(mel)
    return sum(abs(row[t - 1]) for row in mel)


def slm_consistency(real_stack, gen_stack):
    """Stacks shaped (13, T', D) or (B, 13, T', D); L1 mean over layers 6..9."""
    real, gen = to_list(real_stack), to_list(gen_stack)
    if not isinstance(real[0][0][0], list):
        real, gen = [real], [gen]
    diffs = []
    for rb, gb in zip(real, gen):
        n = min(len(rb[0]), len(gb[0]))
        for layer in (6, 7, 8, 9):
            for t in range(n):
                for d in range(len(rb[layer][t])):
                    diffs.append(abs(rb[layer][t][d] - gb[layer][t][d]))
    return mean(diffs)


def bcr(critic, real, fake, augment):
    """``critic`` maps an input to a list of per-sample scores."""
    r, ra = flatten(critic(real)), flatten(critic(augment(real)))
    f, fa = flatten(critic(fake)), flatten(critic(augment(fake)))
    return mean([(a - b) ** 2 for a, b in zip(r, ra)]) + mean([(a - b) ** 2 for a, b in zip(f, fa)])


def weighted_generator(terms, w):
    return (
        terms["adv"]
        + w["advcls"] * terms["advcls"]
        + w["sty"] * terms["sty"]
        + w["f0"] * terms["f0"]
        + w["slm"] * terms["slm"]
        + w["norm"] * terms["norm"]
        + w["cyc"] * terms["cyc"]
    )


def project(layers, weight, bias):
    """layers (L, T, D), weight (L*D, O) -> (T, O)."""
    layers, weight, bias = to_list(layers), to_list(weight), to_list(bias)
    n_layers, n_frames, dim = len(layers), len(layers[0]), len(layers[0][0])
    out_dim = len(bias)
    out = []
    for t in range(n_frames):
        row = []
        for o in range(out_dim):
            acc = bias[o]
            for l in range(n_layers):
                for d in range(dim):
                    acc += layers[l][t][d] * weight[l * dim + d][o]
            row.append(acc)
        out.append(row)
    return out


def importance(weight, n_layers, norm="fro"):
    weight = to_list(weight)
    dim = len(weight) // n_layers
    mags = []
    for l in range(n_layers):
        acc = 0.0
        for r in range(l * dim, (l + 1) * dim):
            for v in weight[r]:
                acc += v * v if norm == "fro" else abs(v)
        mags.append(math.sqrt(acc) if norm == "fro" else acc)
    total = sum(mags)
    return [m / total for m in mags]


def adain(features, gamma, beta, eps=1e-8):
    """features (C, T) for one sample; gamma, beta length C."""
    features = to_list(features)
    out = []
    for c, row in enumerate(features):
        m = mean(row)
        var = mean([(v - m) ** 2 for v in row])
        std = math.sqrt(var) + eps
        out.append([gamma[c] * (v - m) / std + beta[c] for v in row])
    return out


def channel_mean(out_map, y):
    """out_map (C, H, W) for one sample."""
    return mean(flatten(to_list(out_map)[y]))
