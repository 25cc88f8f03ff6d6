"""Compiled inner loops: staggered-grid interpolation and particle stepping.

Everything here works in SI units.
"""

import math

import numpy as np
from numba import njit

STATUS_RUNNING = 0
STATUS_OUTLET = 1
STATUS_TIMEOUT = 2
STATUS_FAULT = 3


@njit(cache=True)
def interp_velocity(x, y, u, v, solid, h, periodic, mask_solid=True):
    """Bilinear staggered interpolation; zero inside solid cells if ``mask_solid``.

    The tracer passes ``mask_solid=False``: a stair-step cell can poke out
    past the true post surface, and a particle parked there would otherwise
    see exactly zero velocity and stall. Face velocities on solid cells are
    zero anyway, so the unmasked interpolant still vanishes at the posts.
    """
    nx = solid.shape[0]
    ny = solid.shape[1]
    height = ny * h
    if periodic:
        y = y - height * math.floor(y / height)

    ci = min(max(int(math.floor(x / h)), 0), nx - 1)
    cj = min(max(int(math.floor(y / h)), 0), ny - 1)
    if mask_solid and solid[ci, cj]:
        return 0.0, 0.0

    # u lives on (i h, (j + 1/2) h)
    fx = x / h
    i0 = min(max(int(math.floor(fx)), 0), nx - 1)
    tx = min(max(fx - i0, 0.0), 1.0)
    fy = y / h - 0.5
    if periodic:
        j0 = int(math.floor(fy))
        ty = fy - j0
        ja = j0 % ny
        jb = (j0 + 1) % ny
        lo = (1.0 - tx) * u[i0, ja] + tx * u[i0 + 1, ja]
        hi = (1.0 - tx) * u[i0, jb] + tx * u[i0 + 1, jb]
    elif fy < 0.0:
        ty = (fy + 0.5) / 0.5
        lo = 0.0
        hi = (1.0 - tx) * u[i0, 0] + tx * u[i0 + 1, 0]
    elif fy > ny - 1:
        ty = (fy - (ny - 1)) / 0.5
        lo = (1.0 - tx) * u[i0, ny - 1] + tx * u[i0 + 1, ny - 1]
        hi = 0.0
    else:
        j0 = min(int(math.floor(fy)), ny - 2)
        ty = fy - j0
        lo = (1.0 - tx) * u[i0, j0] + tx * u[i0 + 1, j0]
        hi = (1.0 - tx) * u[i0, j0 + 1] + tx * u[i0 + 1, j0 + 1]
    ux = (1.0 - ty) * lo + ty * hi

    # v lives on ((i + 1/2) h, j h)
    fx = x / h - 0.5
    i0 = int(math.floor(fx))
    if nx == 1:
        i0 = 0
        tx = 0.0
        i1 = 0
    elif i0 < 0:
        i0, i1, tx = 0, 1, 0.0
    elif i0 >= nx - 1:
        i0, i1, tx = nx - 2, nx - 1, 1.0
    else:
        i1 = i0 + 1
        tx = fx - i0
    fy = y / h
    j0 = int(math.floor(fy))
    if periodic:
        ty = fy - j0
        ja = j0 % ny
        jb = (j0 + 1) % ny
    else:
        j0 = min(max(j0, 0), ny - 1)
        ty = min(max(fy - j0, 0.0), 1.0)
        ja = j0
        jb = j0 + 1
    lo = (1.0 - tx) * v[i0, ja] + tx * v[i1, ja]
    hi = (1.0 - tx) * v[i0, jb] + tx * v[i1, jb]
    uy = (1.0 - ty) * lo + ty * hi
    return ux, uy


@njit(cache=True)
def nearest_surface(x, y, post_x, post_y, row_start, row_x0, pitch, radius,
                    periodic, height, walls):
    """Distance from (x, y) to the nearest solid surface and its outward normal.

    Returns (distance, nx, ny, k) where k is the post index, -1 for the
    bottom wall, -2 for the top wall and -3 when nothing is in range.
    """
    best = 1e300
    bnx = 0.0
    bny = 0.0
    bk = -3
    n_rows = row_start.shape[0] - 1
    if n_rows > 0:
        rc = int(math.floor((x - row_x0) / pitch + 0.5))
        for r in range(rc - 1, rc + 2):
            if r < 0 or r >= n_rows:
                continue
            for k in range(row_start[r], row_start[r + 1]):
                dx = x - post_x[k]
                dy = y - post_y[k]
                if periodic:
                    dy = dy - height * math.floor(dy / height + 0.5)
                dist = math.sqrt(dx * dx + dy * dy)
                s = dist - radius
                if s < best:
                    best = s
                    if dist > 0.0:
                        bnx = dx / dist
                        bny = dy / dist
                    else:
                        bnx = 0.0
                        bny = 1.0
                    bk = k
    if walls:
        if y < best:
            best = y
            bnx, bny, bk = 0.0, 1.0, -1
        if height - y < best:
            best = height - y
            bnx, bny, bk = 0.0, -1.0, -2
    return best, bnx, bny, bk


@njit(cache=True)
def resolve_collision(x, y, vx, vy, half_d, post_x, post_y, row_start, row_x0, pitch,
                      radius, periodic, height, walls):
    """Project a penetrating centre back onto the steric surface and drop inward velocity."""
    n_rows = row_start.shape[0] - 1
    if n_rows > 0:
        rc = int(math.floor((x - row_x0) / pitch + 0.5))
        reach = radius + half_d
        for r in range(rc - 1, rc + 2):
            if r < 0 or r >= n_rows:
                continue
            for k in range(row_start[r], row_start[r + 1]):
                dx = x - post_x[k]
                dy = y - post_y[k]
                if periodic:
                    dy = dy - height * math.floor(dy / height + 0.5)
                dist2 = dx * dx + dy * dy
                if dist2 < reach * reach:
                    dist = math.sqrt(dist2)
                    if dist > 0.0:
                        nxn = dx / dist
                        nyn = dy / dist
                    else:
                        nxn = -1.0
                        nyn = 0.0
                    x = x + (reach - dist) * nxn
                    y = y + (reach - dist) * nyn
                    vn = vx * nxn + vy * nyn
                    if vn < 0.0:
                        vx -= vn * nxn
                        vy -= vn * nyn
    if walls:
        if y < half_d:
            y = half_d
            if vy < 0.0:
                vy = 0.0
        elif y > height - half_d:
            y = height - half_d
            if vy > 0.0:
                vy = 0.0
    return x, y, vx, vy


@njit(cache=True)
def relaxation_time(d, rho_p, mu, re_p):
    return rho_p * d * d / (18.0 * mu) / (1.0 + 0.15 * re_p ** 0.687)


@njit(cache=True)
def integrate(x, y, vx, vy, d, rho_p, rho_f, mu, c_l,
              u, v, solid, h, periodic, walls,
              post_x, post_y, row_start, row_x0, pitch, radius,
              dt, max_steps, x_stop, stride, collide):
    """March one particle until it passes ``x_stop`` or ``max_steps`` elapse.

    Returns samples (t, x, y), the final state, a status code and the
    smallest steric clearance seen after any step. With ``collide`` false
    the posts only feed the lift term and are never resolved sterically.
    """
    nx = solid.shape[0]
    ny = solid.shape[1]
    height = ny * h
    width = nx * h
    half_d = 0.5 * d
    mass = rho_p * math.pi * d * d * d / 6.0
    n_samples = max_steps // stride + 2
    ts = np.empty(n_samples)
    xs = np.empty(n_samples)
    ys = np.empty(n_samples)
    ts[0] = 0.0
    xs[0] = x
    ys[0] = y
    ns = 1
    status = STATUS_TIMEOUT
    min_clear = 1e300
    step = 0
    while step < max_steps:
        if x < 0.0 or x > width:
            status = STATUS_FAULT
            break
        if walls and (y < 0.0 or y > height):
            status = STATUS_FAULT
            break
        uf, vf = interp_velocity(x, y, u, v, solid, h, periodic, False)
        sx = uf - vx
        sy = vf - vy
        re_p = rho_f * math.sqrt(sx * sx + sy * sy) * d / mu
        tau = relaxation_time(d, rho_p, mu, re_p)
        ax = 0.0
        ay = 0.0
        if c_l > 0.0:
            dist, nxn, nyn, k = nearest_surface(x, y, post_x, post_y, row_start, row_x0,
                                                pitch, radius, periodic, height, walls)
            if k != -3 and dist < d:
                speed2 = vx * vx + vy * vy
                f = c_l * rho_f * speed2 * d * d / 2.0
                ax = f / mass * nxn
                ay = f / mass * nyn
        decay = math.exp(-dt / tau)
        # terminal velocity under constant fluid velocity and lift
        tx_ = uf + ax * tau
        ty_ = vf + ay * tau
        gain = tau * (1.0 - decay)
        x = x + tx_ * dt + (vx - tx_) * gain
        y = y + ty_ * dt + (vy - ty_) * gain
        vx = tx_ + (vx - tx_) * decay
        vy = ty_ + (vy - ty_) * decay
        if collide:
            x, y, vx, vy = resolve_collision(x, y, vx, vy, half_d, post_x, post_y, row_start,
                                             row_x0, pitch, radius, periodic, height, walls)
        step += 1
        if collide and row_start.shape[0] > 1:
            dist, nxn, nyn, k = nearest_surface(x, y, post_x, post_y, row_start, row_x0,
                                                pitch, radius, periodic, height, False)
            if k >= 0 and dist - half_d < min_clear:
                min_clear = dist - half_d
        if x >= x_stop:
            status = STATUS_OUTLET
            break
        if step % stride == 0 and ns < n_samples:
            ts[ns] = step * dt
            xs[ns] = x
            ys[ns] = y
            ns += 1
    if status != STATUS_FAULT and (ns == 0 or ts[ns - 1] != step * dt) and ns < n_samples:
        ts[ns] = step * dt
        xs[ns] = x
        ys[ns] = y
        ns += 1
    return ts[:ns], xs[:ns], ys[:ns], x, y, vx, vy, status, min_clear, step
