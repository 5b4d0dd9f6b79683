"""Shared test fixtures: a hand-wired PD lane-keeping policy expressed as
PolicyNets, and small empty tracks for rollout tests."""

import numpy as np

from drivemimic.nets import DenseNet, Layer, PolicyNets
from drivemimic.sim import OBS_DIM
from drivemimic.track import Track, _build_loop


def oval_track(obstacles=()):
    """Smooth ~700 m oval: four 90-degree arcs joined by straights."""
    track = _build_loop((90.0, 90.0, 90.0, 90.0), (60.0, 60.0, 60.0, 60.0),
                        (140.0, 40.0, 140.0, 40.0), "oval-test", list(obstacles))
    return track


def pd_lanekeeper_nets(target_d=3.0, kp=8.0, kd=60.0, v_target_kmh=45.0,
                       kv=12.0, var_bias=-8.0):
    """PolicyNets implementing steer = -kp*(D-target) - kd*dD, torque = kv*dV.

    The two hidden layers pass the needed observation channels through paired
    ReLUs (x = relu(x) - relu(-x)); the output layer forms the PD law before
    softsign.  All three mixture components share the same means.
    """
    d_scale = 6.0
    # channels: 2 (V), 4 (D current), 15 (D previous)
    picks = [2, 4, 15]
    w1 = np.zeros((64, OBS_DIM))
    for i, ch in enumerate(picks):
        w1[2 * i, ch] = 1.0
        w1[2 * i + 1, ch] = -1.0
    l1 = Layer(w1, np.zeros(64), "relu")
    w2 = np.zeros((64, 64))
    for i in range(len(picks)):
        w2[2 * i, 2 * i] = 1.0
        w2[2 * i, 2 * i + 1] = -1.0  # row 2i reconstructs channel i (>= 0 part..)
        w2[2 * i + 1, 2 * i] = -1.0
        w2[2 * i + 1, 2 * i + 1] = 1.0
    l2 = Layer(w2, np.zeros(64), "relu")
    # after l2: unit 2i = relu(x_i), unit 2i+1 = relu(-x_i); x_i = u_{2i} - u_{2i+1}
    w3 = np.zeros((12, 64))
    b3 = np.zeros(12)

    def set_linear(row, coeffs, bias):
        for i, c in coeffs.items():
            w3[row, 2 * i] = c
            w3[row, 2 * i + 1] = -c
        b3[row] = bias

    target_sc = target_d / d_scale
    # steering mean for all 3 components (rows 0, 2, 4); positive steering
    # turns left, which decreases D
    for row in (0, 2, 4):
        set_linear(row, {1: kp + kd, 2: -kd}, -kp * target_sc)
    # torque mean rows 1, 3, 5: kv * (v_target_scaled - V_scaled)
    for row in (1, 3, 5):
        set_linear(row, {0: -kv}, kv * (v_target_kmh / 100.0))
    for row in range(6, 12):
        b3[row] = var_bias
    actor = DenseNet([l1, l2, Layer(w3, b3, "mdn_head")])
    critic = DenseNet([Layer(np.zeros((1, OBS_DIM)), np.zeros(1), "linear")])
    mixing = DenseNet([Layer(np.zeros((3, OBS_DIM)), np.zeros(3), "softmax")])
    return PolicyNets(actor, critic, mixing)
