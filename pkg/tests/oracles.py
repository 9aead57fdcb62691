"""Slow, loop-based reference implementations used as test oracles.

None of these share code with the package; they are written from the
definitions directly.
"""

import math
from fractions import Fraction


def keep_k(p, n):
    # p comes from a decimal grid, so its decimal string is the intended value
    return max(1, math.ceil(Fraction(repr(p)) * n))


def select_sort_slice(scores, graph_id, p):
    """Per graph: sort (score desc, index asc), keep the first k, merge sorted."""
    kept = []
    for g in sorted(set(graph_id)):
        nodes = [i for i, gi in enumerate(graph_id) if gi == g]
        ranked = sorted(nodes, key=lambda i: (-scores[i], i))
        kept += ranked[:keep_k(p, len(nodes))]
    return sorted(kept)


def select_reverse(scores, graph_id, p):
    kept = []
    for g in sorted(set(graph_id)):
        nodes = [i for i, gi in enumerate(graph_id) if gi == g]
        ranked = sorted(nodes, key=lambda i: (scores[i], i))
        kept += ranked[:keep_k(p, len(nodes))]
    return sorted(kept)


def induced(adj, idx):
    return [[adj[i][j] for j in idx] for i in idx]


def gated(features, scores, idx):
    return [[features[i][c] * scores[i] for c in range(len(features[i]))] for i in idx]


def readout(weights_per_head, values, idx, graph_id, n_graphs):
    """h[g] = concat over heads of sum_{i in idx, graph(i)=g} a_h[i] * v_h[i]."""
    heads = len(weights_per_head)
    d = len(values[0])
    dh = d // heads
    out = [[0.0] * d for _ in range(n_graphs)]
    for h, a in enumerate(weights_per_head):
        for i in idx:
            for c in range(dh):
                out[graph_id[i]][h * dh + c] += a[i] * values[i][h * dh + c]
    return out


def attention_weights(h, w_key, query, head, heads, graph_id):
    """Softmax over each graph of k_i . q / sqrt(dh) for one head."""
    d = len(w_key)
    dh = d // heads
    logits = []
    for row in h:
        k = [sum(row[r] * w_key[r][head * dh + c] for r in range(d)) for c in range(dh)]
        logits.append(sum(k[c] * query[c] for c in range(dh)) / math.sqrt(dh))
    out = [0.0] * len(h)
    for g in set(graph_id):
        nodes = [i for i, gi in enumerate(graph_id) if gi == g]
        m = max(logits[i] for i in nodes)
        z = sum(math.exp(logits[i] - m) for i in nodes)
        for i in nodes:
            out[i] = math.exp(logits[i] - m) / z
    return out
