"""Independent reference implementations used only by the tests.

These deliberately re-derive their formulas instead of importing package
internals: the projected-gradient minimizer checks the damped-Newton step,
finite differences of the edge energy check the discrete operator, and
scipy.integrate.quad checks the closed-form / Simpson segment integrals.
"""

import numpy as np
from scipy.integrate import quad


def energy_reference(w, u, gamma, h, dt, p, eps_reg):
    d = np.diff(w) / h
    quad_part = 0.5 * h * np.sum((w - u) ** 2)
    reg_part = (dt / p) * h * np.sum(gamma * (d * d + eps_reg**2) ** (p / 2.0))
    return float(quad_part + reg_part)


def gradient_reference(w, u, gamma, h, dt, p, eps_reg):
    d = np.diff(w) / h
    flux = gamma * (d * d + eps_reg**2) ** ((p - 2.0) / 2.0) * d
    g = h * (w - u)
    g[:-1] -= dt * flux
    g[1:] += dt * flux
    return g


def projected_gradient_minimize(
    u, gamma, h, dt, p, eps_reg, tol=1e-11, max_iter=2_000_000
):
    """Mean-preserving gradient descent on the per-step energy.

    The search direction is the gradient projected onto the zero-mean plane
    (the minimizer conserves the mean), with backtracking on the squared
    projected-gradient merit.  Slow but assumption-free: no Hessian, no
    linearization.
    """
    w = u.astype(float).copy()
    g = gradient_reference(w, u, gamma, h, dt, p, eps_reg)
    gp = g - np.mean(g)
    merit = float(np.dot(gp, gp))
    step = 1.0
    for _ in range(max_iter):
        if float(np.max(np.abs(g))) / h <= tol:
            return w
        direction = -gp / h
        accepted = False
        trial = min(step * 2.0, 1e6)
        while trial >= 1e-18:
            w_try = w + trial * direction
            g_try = gradient_reference(w_try, u, gamma, h, dt, p, eps_reg)
            gp_try = g_try - np.mean(g_try)
            m_try = float(np.dot(gp_try, gp_try))
            if m_try <= (1.0 - 1e-4 * min(trial, 1.0)) * merit:
                w, g, gp, merit, step = w_try, g_try, gp_try, m_try, trial
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break
    return w


def fd_operator(u, gamma, h, p, eps_reg, fd_eps=1e-7):
    """A_h u as the rescaled finite-difference gradient of the edge energy."""

    def edge_energy(v):
        d = np.diff(v) / h
        return float((1.0 / p) * h * np.sum(gamma * (d * d + eps_reg**2) ** (p / 2.0)))

    n = u.shape[0]
    out = np.zeros(n)
    for i in range(n):
        up = u.copy()
        up[i] += fd_eps
        um = u.copy()
        um[i] -= fd_eps
        out[i] = (edge_energy(up) - edge_energy(um)) / (2.0 * fd_eps * h)
    return out


def power_flow_value(x, kappa, rho, tau):
    """T(tau)x for the scalar power-law flow, recomputed from scratch."""
    r = abs(x) ** rho - kappa * tau
    if r <= 0:
        return 0.0
    return np.sign(x) * r ** (1.0 / rho)


def quad_segment_integral(x, kappa, rho, delta, weight=1.0, shift=0.0, signed=False):
    """scipy.integrate.quad of the power-law segment integrand.

    weight * |T(tau)x| (+shift), or the signed value when signed=True; the
    integration interval is split at the extinction time.
    """
    t_star = abs(x) ** rho / kappa

    def f(tau):
        v = power_flow_value(x, kappa, rho, tau)
        base = v if signed else abs(v)
        return weight * base + shift

    points = [t for t in (t_star,) if 0.0 < t < delta]
    val, _ = quad(f, 0.0, delta, points=points or None, limit=200)
    return val
