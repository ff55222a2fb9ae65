"""Bundled desk-scale example systems.

``split_cart``
    A cart carrying two actuated pendula, split into two half-carts that each
    carry one pendulum and are glued by a horizontal force.
``double_pendulum_pivot``
    Two rods split at the pivot joint; the upper rod is pinned to the ground
    through a contact constraint, the rods are glued by the joint force.
``random_affine_ccs``
    A CCS with constant input matrices and affine drifts, for brute-force checks.

Physical parameters are illustrative constants, not taken from any robot.
"""
import math
from dataclasses import dataclass

import numpy as np

from .ccs import CcsModel, SubsystemModel
from .mechanical import LagrangianModel, OutputSpec, to_ccs

GRAVITY = 9.81


@dataclass(frozen=True)
class ExampleSystem:
    full: LagrangianModel
    ccs: CcsModel
    outputs: tuple
    parts: tuple
    params: dict

    def full_from_split(self, x, z):
        """Full-order ``(q, qd)`` of a decomposed state with ``z_1 = z_2``."""
        raise NotImplementedError

    def split_from_full(self, q, qd):
        raise NotImplementedError


# -- split cart ---------------------------------------------------------------

def _half_cart(M_half, m, l, g):
    # scalar math keeps these callbacks cheap; they run at every integrator stage
    def D(q):
        c = m * l * math.cos(q[1])
        return np.array([[M_half + m, c], [c, m * l * l]])

    def H(q, qd):
        s = m * l * math.sin(q[1])
        w = float(qd[1])
        return np.array([-s * w * w, g * s])

    return LagrangianModel(
        n=2, D=D, H=H, B=np.array([[0.0], [1.0]]), J_couple=np.array([[1.0, 0.0]]),
        base_dim=1, potential=lambda q: -m * g * l * np.cos(q[1]), name="half_cart",
    )


def _cart_two_pendula(M, m1, l1, m2, l2, g):
    def D(q):
        c1, c2 = np.cos(q[1]), np.cos(q[2])
        return np.array([
            [M + m1 + m2, m1 * l1 * c1, m2 * l2 * c2],
            [m1 * l1 * c1, m1 * l1 * l1, 0.0],
            [m2 * l2 * c2, 0.0, m2 * l2 * l2],
        ])

    def H(q, qd):
        s1, s2 = np.sin(q[1]), np.sin(q[2])
        return np.array([
            -m1 * l1 * s1 * qd[1] ** 2 - m2 * l2 * s2 * qd[2] ** 2,
            m1 * g * l1 * s1,
            m2 * g * l2 * s2,
        ])

    def V(q):
        return -m1 * g * l1 * np.cos(q[1]) - m2 * g * l2 * np.cos(q[2])

    B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return LagrangianModel(n=3, D=D, H=H, B=B, J_couple=np.zeros((0, 3)), base_dim=1,
                           potential=V, name="cart_two_pendula")


# degree-5 desired pendulum angle over the cart position; mirrored for the rear
SPLIT_CART_ALPHA = np.array([[0.08, 0.05, 0.02, -0.03, -0.05, -0.08]])


class SplitCart(ExampleSystem):
    def full_from_split(self, x, z):
        zf = np.asarray(z[1], dtype=float)
        q = np.zeros(3)
        qd = np.zeros(3)
        q[0], qd[0] = zf[0], zf[1]
        for v in (1, 2):
            out = self.outputs[v - 1]
            yd, grad = out.desired(zf[:1])
            q[v] = x[v][0] + yd[0]
            qd[v] = x[v][1] + grad[0, 0] * zf[1]
        return q, qd

    def split_from_full(self, q, qd):
        x, z = {}, {}
        for v in (1, 2):
            out = self.outputs[v - 1]
            yd, grad = out.desired(q[:1])
            x[v] = np.array([q[v] - yd[0], qd[v] - grad[0, 0] * qd[0]])
            z[v] = np.array([q[0], qd[0]])
        return x, z


def split_cart(M=2.0, m=1.0, l=0.5, g=GRAVITY, alpha=None, mirror=-1.0,
               phase_range=(-1.0, 1.0)):
    """Cart of mass ``M`` with two pendula (``m``, ``l``); each half-cart owns ``M/2``."""
    alpha = SPLIT_CART_ALPHA if alpha is None else np.atleast_2d(alpha)
    front = _half_cart(M / 2, m, l, g)
    rear = _half_cart(M / 2, m, l, g)
    out_f = OutputSpec(alpha, actuated=(1,), phase_index=0, phase_range=phase_range)
    out_r = out_f.mirrored(np.array([[mirror]]))
    ccs = to_ccs(front, rear, out_f, out_r, name="split_cart")
    full = _cart_two_pendula(M, m, l, m, l, g)
    return SplitCart(full=full, ccs=ccs, outputs=(out_f, out_r), parts=(front, rear),
                     params={"M": M, "m": m, "l": l, "g": g, "mirror": mirror})


def example_split_cart(**kw):
    """``(full, ccs, outputs)`` of :func:`split_cart`."""
    sys = split_cart(**kw)
    return sys.full, sys.ccs, sys.outputs


# -- double pendulum split at the pivot ----------------------------------------

def _rod_terms(masses, inertias, Jcs, Jcdots, grads):
    def D(q):
        out = np.zeros((len(q), len(q)))
        for mk, Ik, Jc in zip(masses, inertias, Jcs):
            J = Jc(q)
            out += mk * J.T @ J
            out += Ik(q)
        return out

    def H(q, qd):
        out = np.zeros(len(q))
        for mk, Jc, Jcd in zip(masses, Jcs, Jcdots):
            out += mk * Jc(q).T @ Jcd(q, qd)
        for gr in grads:
            out += gr(q)
        return out

    return D, H


def _upper_rod(m, l, g):
    a = 0.5 * l
    I = m * l * l / 12.0

    def Jc(q):
        return np.array([[1.0, 0.0, -a * np.cos(q[2])], [0.0, 1.0, -a * np.sin(q[2])]])

    def Jcd(q, qd):
        return np.array([a * np.sin(q[2]), -a * np.cos(q[2])]) * qd[2] ** 2

    def inertia(q):
        out = np.zeros((3, 3))
        out[2, 2] = I
        return out

    D, H = _rod_terms([m], [inertia], [Jc], [Jcd],
                      [lambda q: m * g * np.array([0.0, 1.0, -a * np.sin(q[2])])])

    def Jpin(q):
        return np.array([[1.0, 0.0, -l * np.cos(q[2])], [0.0, 1.0, -l * np.sin(q[2])]])

    def Jpin_dot(q, qd):
        return np.array([[0.0, 0.0, l * np.sin(q[2]) * qd[2]],
                         [0.0, 0.0, -l * np.cos(q[2]) * qd[2]]])

    return LagrangianModel(
        n=3, D=D, H=H, B=np.array([[0.0], [0.0], [1.0]]), J_couple=np.eye(2, 3), base_dim=2,
        J_contact=Jpin, Jdot_contact=Jpin_dot,
        potential=lambda q: m * g * (q[1] + a * np.cos(q[2])), name="upper_rod",
    )


def _lower_rod(m, l, g):
    b = 0.5 * l
    I = m * l * l / 12.0

    def Jc(q):
        return np.array([[1.0, 0.0, b * np.cos(q[2])], [0.0, 1.0, b * np.sin(q[2])]])

    def Jcd(q, qd):
        return np.array([-b * np.sin(q[2]), b * np.cos(q[2])]) * qd[2] ** 2

    def inertia(q):
        out = np.zeros((3, 3))
        out[2, 2] = I
        return out

    D, H = _rod_terms([m], [inertia], [Jc], [Jcd],
                      [lambda q: m * g * np.array([0.0, 1.0, b * np.sin(q[2])])])
    return LagrangianModel(
        n=3, D=D, H=H, B=np.array([[0.0], [0.0], [1.0]]), J_couple=np.eye(2, 3), base_dim=2,
        potential=lambda q: m * g * (q[1] - b * np.cos(q[2])), name="lower_rod",
    )


def _double_pendulum(m1, l1, m2, l2, g):
    a, b = 0.5 * l1, 0.5 * l2
    I1, I2 = m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0

    def Jc1(q):
        return np.array([[a * np.cos(q[0]), 0.0], [a * np.sin(q[0]), 0.0]])

    def Jc1d(q, qd):
        return np.array([-a * np.sin(q[0]), a * np.cos(q[0])]) * qd[0] ** 2

    def Jc2(q):
        return np.array([[l1 * np.cos(q[0]), b * np.cos(q[1])],
                         [l1 * np.sin(q[0]), b * np.sin(q[1])]])

    def Jc2d(q, qd):
        return (np.array([-l1 * np.sin(q[0]), l1 * np.cos(q[0])]) * qd[0] ** 2
                + np.array([-b * np.sin(q[1]), b * np.cos(q[1])]) * qd[1] ** 2)

    D, H = _rod_terms(
        [m1, m2], [lambda q: np.diag([I1, 0.0]), lambda q: np.diag([0.0, I2])],
        [Jc1, Jc2], [Jc1d, Jc2d],
        [lambda q: g * np.array([(m1 * a + m2 * l1) * np.sin(q[0]), m2 * b * np.sin(q[1])])],
    )

    def V(q):
        return -g * ((m1 * a + m2 * l1) * np.cos(q[0]) + m2 * b * np.cos(q[1]))

    return LagrangianModel(n=2, D=D, H=H, B=np.eye(2), J_couple=np.zeros((0, 2)), base_dim=0,
                           potential=V, name="double_pendulum")


DOUBLE_PENDULUM_ALPHA = np.array([[0.05, 0.03, 0.0, -0.02, -0.04, -0.05]])


class DoublePendulumPivot(ExampleSystem):
    def full_from_split(self, x, z):
        phis = []
        for v in (1, 2):
            yd, _ = self.outputs[v - 1].desired(np.asarray(z[v])[:2])
            phis.append(x[v][0] + yd[0])
        phid = []
        for v in (1, 2):
            _, grad = self.outputs[v - 1].desired(np.asarray(z[v])[:2])
            phid.append(x[v][1] + grad[0] @ np.asarray(z[v])[2:])
        return np.array(phis), np.array(phid)

    def split_from_full(self, q, qd):
        l1 = self.params["l1"]
        p = l1 * np.array([np.sin(q[0]), -np.cos(q[0])])
        pd = l1 * np.array([np.cos(q[0]), np.sin(q[0])]) * qd[0]
        x, z = {}, {}
        for v in (1, 2):
            yd, grad = self.outputs[v - 1].desired(p)
            x[v] = np.array([q[v - 1] - yd[0], qd[v - 1] - grad[0] @ pd])
            z[v] = np.concatenate([p, pd])
        return x, z


def double_pendulum_pivot(m1=1.0, l1=0.5, m2=1.0, l2=0.5, g=GRAVITY, alpha=None, mirror=1.0):
    alpha = DOUBLE_PENDULUM_ALPHA if alpha is None else np.atleast_2d(alpha)
    upper, lower = _upper_rod(m1, l1, g), _lower_rod(m2, l2, g)
    out_u = OutputSpec(alpha, actuated=(2,), phase_index=0, phase_range=(-1.5 * l1, 1.5 * l1))
    out_l = out_u.mirrored(np.array([[mirror]]))
    q_nom = (np.array([0.0, -l1, 0.0]), np.array([0.0, -l1, 0.0]))
    ccs = to_ccs(upper, lower, out_u, out_l, q_nominal=q_nom, name="double_pendulum_pivot")
    return DoublePendulumPivot(
        full=_double_pendulum(m1, l1, m2, l2, g), ccs=ccs, outputs=(out_u, out_l),
        parts=(upper, lower), params={"m1": m1, "l1": l1, "m2": m2, "l2": l2, "g": g},
    )


# -- random affine CCS --------------------------------------------------------

@dataclass(frozen=True)
class AffineData:
    """Matrices of an affine CCS, per vertex."""

    F: dict
    Cx: dict
    a: dict
    G: dict
    P: dict
    Rz: dict
    r: dict
    Q: dict
    GB: dict
    QB: dict


def random_affine_ccs(seed=0, n_x=2, n_u=2, n_z=3, scale=0.5):
    """Random CCS with affine drifts and constant input/coupling matrices.

    Redraws until the coupling block matrix is comfortably invertible.
    """
    rng = np.random.default_rng(seed)
    while True:
        d = {k: {} for k in AffineData.__dataclass_fields__}
        for v in (1, 2):
            d["F"][v] = scale * rng.standard_normal((n_x, n_x))
            d["Cx"][v] = scale * rng.standard_normal((n_x, n_z))
            d["a"][v] = scale * rng.standard_normal(n_x)
            d["G"][v] = np.eye(n_x, n_u) + scale * rng.standard_normal((n_x, n_u))
            d["P"][v] = scale * rng.standard_normal((n_z, n_x))
            d["Rz"][v] = scale * rng.standard_normal((n_z, n_z))
            d["r"][v] = scale * rng.standard_normal(n_z)
            d["Q"][v] = scale * rng.standard_normal((n_z, n_u))
            d["GB"][v] = scale * rng.standard_normal((n_x, n_z))
            d["QB"][v] = np.eye(n_z) + scale * rng.standard_normal((n_z, n_z))
        data = AffineData(**d)
        Q = np.block([[data.G[2], data.GB[2]], [data.Q[2], data.QB[1] + data.QB[2]]])
        if np.linalg.cond(Q) < 1e3 and np.linalg.cond(data.G[1]) < 1e3:
            break
    return affine_ccs(data, n_x, n_u, n_z), data


def affine_ccs(data, n_x, n_u, n_z):
    def vertex(v):
        return SubsystemModel(
            n_x=n_x, n_z=n_z, n_u=n_u,
            f=lambda x, z: data.F[v] @ x + data.Cx[v] @ z + data.a[v],
            g=lambda x, z: data.G[v],
            p=lambda x, z: data.P[v] @ x + data.Rz[v] @ z + data.r[v],
            q=lambda x, z: data.Q[v],
            g_breve=lambda x, zi, zj: data.GB[v],
            q_breve=lambda x, zi, zj: data.QB[v],
            name=f"affine{v}",
        )

    return CcsModel(sub={1: vertex(1), 2: vertex(2)}, name="random_affine")


EXAMPLES = {
    "split_cart": split_cart,
    "double_pendulum_pivot": double_pendulum_pivot,
}


def get_example(name, **params):
    try:
        factory = EXAMPLES[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; available: {', '.join(sorted(EXAMPLES))}"
        ) from None
    return factory(**params)
