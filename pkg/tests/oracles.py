"""Independent brute-force references used by tests and the acceptance suite."""
import itertools
import math


def prufer_to_edges(seq, n):
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = min(i for i in range(n) if degree[i] == 1)
        edges.append((leaf, v))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = [i for i in range(n) if degree[i] == 1]
    edges.append((u, w))
    return edges


def brute_mst_cost(points):
    """Minimum over all n^(n-2) labelled spanning trees (Cayley), enumerated by Prufer code."""
    n = len(points)
    dist = [[math.dist(points[i], points[j]) for j in range(n)] for i in range(n)]
    if n == 2:
        return dist[0][1]
    return min(sum(dist[a][b] for a, b in prufer_to_edges(seq, n))
               for seq in itertools.product(range(n), repeat=n - 2))
