"""Independent reference computations used only by the tests.

Everything here is written with dense linear algebra or plain loops so it
shares no code path with the package solvers.
"""
from collections import deque

import numpy as np
from scipy.integrate import solve_ivp


def dense_kkt_solve(laplacian_u, divergence, rhs_u):
    """Full saddle system with a mean-zero pressure row, solved densely."""
    A = np.asarray(laplacian_u.todense())
    D = np.asarray(divergence.todense())
    nu, npres = A.shape[0], D.shape[0]
    K = np.zeros((nu + npres + 1, nu + npres + 1))
    K[:nu, :nu] = A
    K[:nu, nu:nu + npres] = -D.T
    K[nu:nu + npres, :nu] = D
    K[nu + npres, nu:nu + npres] = 1.0
    K[nu:nu + npres, nu + npres] = 1.0
    rhs = np.concatenate([rhs_u, np.zeros(npres + 1)])
    sol = np.linalg.solve(K, rhs)
    return sol[:nu], sol[nu:nu + npres]


def dense_neumann_solve(K, b):
    """Solve a singular symmetric system with constant kernel by bordering."""
    K = np.asarray(K.todense()) if hasattr(K, "todense") else np.asarray(K)
    n = K.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = K
    M[n, :n] = 1.0
    M[:n, n] = 1.0
    sol = np.linalg.solve(M, np.concatenate([b, [0.0]]))
    return sol[:n]


def flood_fill_connected(mask):
    """4-connectivity of the True cells by breadth-first search."""
    cells = list(zip(*np.nonzero(mask)))
    if not cells:
        return False
    seen = {cells[0]}
    queue = deque([cells[0]])
    n0, n1 = mask.shape
    while queue:
        i, j = queue.popleft()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < n0 and 0 <= b < n1 and mask[a, b] and (a, b) not in seen:
                seen.add((a, b))
                queue.append((a, b))
    return len(seen) == len(cells)


def count_disk_centres(n, radius):
    count = 0
    for i in range(n):
        for j in range(n):
            y1 = -0.5 + (i + 0.5) / n
            y2 = -0.5 + (j + 0.5) / n
            if y1 * y1 + y2 * y2 < radius * radius:
                count += 1
    return count


def reaction_ode(d0, t):
    """High-accuracy solution of d' = (1 - |d|^2) d."""
    sol = solve_ivp(lambda _, d: (1.0 - d @ d) * d, (0.0, t), np.asarray(d0, float),
                    method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1]


def dirichlet_laplacian_1d(n):
    return 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def director_force_loops(fluid, d, h):
    """Cell-by-cell assembly of -(grad d)^T Lap d on an obstacle-free walled grid.

    ``d`` has shape ``(2, N, N)``; returns cell arrays ``(fx, fy)``.
    """
    N = fluid.shape[0]
    fx = np.zeros((N, N))
    fy = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            for k in range(2):
                v = d[k]
                lap = 0.0
                for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                    if 0 <= a < N and 0 <= b < N:
                        lap += (v[a, b] - v[i, j]) / h ** 2
                if 0 < i < N - 1:
                    gx = (v[i + 1, j] - v[i - 1, j]) / (2 * h)
                elif i == 0:
                    gx = (v[1, j] - v[0, j]) / h
                else:
                    gx = (v[i, j] - v[i - 1, j]) / h
                if 0 < j < N - 1:
                    gy = (v[i, j + 1] - v[i, j - 1]) / (2 * h)
                elif j == 0:
                    gy = (v[i, 1] - v[i, 0]) / h
                else:
                    gy = (v[i, j] - v[i, j - 1]) / h
                fx[i, j] -= gx * lap
                fy[i, j] -= gy * lap
    return fx, fy


def unit_cell_means_loops(values, fluid, m, n):
    out = np.zeros((m, m))
    for k1 in range(m):
        for k2 in range(m):
            total, count = 0.0, 0
            for o1 in range(n):
                for o2 in range(n):
                    i, j = k1 * n + o1, k2 * n + o2
                    if fluid[i, j]:
                        total += values[i, j]
                        count += 1
            out[k1, k2] = total / count
    return out


def rayleigh_square_array(c):
    """Rayleigh's effective conductivity of a square array of insulating cylinders."""
    return 1.0 - 2.0 * c / (1.0 + c - 0.305827 * c ** 4 / (1.0 - 1.402958 * c ** 8)
                            - 0.013362 * c ** 8)


def periodic_cell_system(fluid, h):
    """Loop assembly of the periodic masked Neumann Laplacian and the chi right sides.

    Returns ``(K, b1, b2, index)`` with ``K = -Lap`` on fluid cells numbered
    row-major by ``index``.
    """
    n = fluid.shape[0]
    index = -np.ones(fluid.shape, dtype=int)
    cells = list(zip(*np.nonzero(fluid)))
    for k, (i, j) in enumerate(cells):
        index[i, j] = k
    K = np.zeros((len(cells), len(cells)))
    b = np.zeros((2, len(cells)))
    for k, (i, j) in enumerate(cells):
        for axis, step in ((0, 1), (0, -1), (1, 1), (1, -1)):
            a = ((i + step) % n, j) if axis == 0 else (i, (j + step) % n)
            if fluid[a]:
                K[k, k] += 1 / h ** 2
                K[k, index[a]] -= 1 / h ** 2
            else:
                # outward normal of the fluid region points into the solid
                b[axis, k] -= step / h
    return K, b[0], b[1], index
