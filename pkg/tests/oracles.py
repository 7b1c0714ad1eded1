"""Independent reference implementations shared by unit and acceptance tests."""

import numpy as np

from sparsepose import autodiff as ad
from sparsepose.model import forward, init_weights
from sparsepose.rotations import axis_angle_to_matrix, matrix_to_6d_t, recover_6d_t
from sparsepose.skeleton import PoseOutput, forward_kinematics_t
from sparsepose.training import WindowSampler, loss, prepare_clip


def random_rotations(rng, shape=(), max_angle=np.pi):
    axis = rng.normal(size=shape + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(0, max_angle, size=shape)
    return axis_angle_to_matrix(axis * angle[..., None])


def random_pose(rng, batch=(), max_angle=1.0):
    return PoseOutput(
        random_rotations(rng, batch, np.pi),
        random_rotations(rng, batch + (21,), max_angle),
        rng.normal(size=batch + (3,)),
    )


def quat_oracle(a):
    """Rotation matrix via the unit quaternion of an axis-angle vector."""
    theta = np.linalg.norm(a)
    if theta == 0:
        return np.eye(3)
    x, y, z = np.sin(theta / 2) * a / theta
    w = np.cos(theta / 2)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def homogeneous_fk(s, pose):
    """Recursive 4x4 transform oracle, one frame at a time."""

    def local(j):
        t = np.eye(4)
        if j == 0:
            t[:3, :3] = pose.global_orient
            t[:3, 3] = pose.root_pos
        else:
            t[:3, :3] = pose.local_rot[j - 1]
            t[:3, 3] = s.offsets[j]
        return t

    def world(j):
        if j == 0:
            return local(0)
        return world(int(s.parents[j])) @ local(j)

    return np.stack([world(j) for j in range(s.num_joints)])


def central_diff(fn, arrays, eps=1e-5):
    """Finite-difference gradient of scalar ``fn()`` w.r.t. each array (mutated in place)."""
    out = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + eps
            hi = fn()
            arr[i] = old - eps
            lo = fn()
            arr[i] = old
            grad[i] = (hi - lo) / (2 * eps)
        out.append(grad)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)


def grad_error(op, *arrays, seed=0):
    """Worst relative error between backprop and central differences for ``op``.

    The output is contracted with fixed random weights so every output entry
    contributes to the scalar being differentiated.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = None

    def scalar(tensors):
        nonlocal probe
        y = op(*tensors)
        if probe is None:
            probe = rng.normal(size=y.shape)
        return ad.sum(y * probe)

    tensors = [ad.Tensor(a, requires_grad=True) for a in arrays]
    ad.backward(scalar(tensors))
    numeric = central_diff(lambda: scalar([ad.Tensor(a) for a in arrays]).item(), arrays)
    worst = 0.0
    for t, n in zip(tensors, numeric):
        assert t.grad.shape == t.shape
        worst = max(worst, rel_err(t.grad, n))
    return worst


def primitive_cases(skel, seed=7):
    """(name, op, inputs) for every differentiable primitive."""
    r = np.random.default_rng(seed)
    kinked = r.normal(size=(20,))
    kinked[np.abs(kinked) < 0.05] = 0.3  # keep kinks out of the difference stencil
    y = r.normal(size=(5, 2))
    near_eye = np.eye(3)[None] + 0.1 * r.normal(size=(1, 3, 3))
    local = np.eye(3)[None, None] + 0.1 * r.normal(size=(1, 21, 3, 3))
    return [
        ("add-broadcast", ad.add, (r.normal(size=(3, 4)), r.normal(size=(4,)))),
        ("sub", ad.sub, (r.normal(size=(2, 3)), r.normal(size=(2, 1)))),
        ("mul", ad.mul, (r.normal(size=(3, 4)), r.normal(size=(3, 4)))),
        ("neg", lambda a: -a, (r.normal(size=(3,)),)),
        ("scalar-div", lambda a: a / 2.5, (r.normal(size=(3,)),)),
        ("matmul-batched", ad.matmul, (r.normal(size=(2, 3, 4)), r.normal(size=(4, 5)))),
        ("matmul-vector", ad.matmul, (r.normal(size=(5, 3, 3)), r.normal(size=(3,)))),
        ("transpose", lambda x: ad.transpose(x, (2, 0, 1)), (r.normal(size=(2, 3, 4)),)),
        ("reshape", lambda x: ad.reshape(x, (6, 2)), (r.normal(size=(3, 4)),)),
        ("concat", lambda a, b: ad.concat([a, b], axis=1), (r.normal(size=(2, 3)), r.normal(size=(2, 5)))),
        ("stack", lambda a, b: ad.stack([a, b], axis=1), (r.normal(size=(2, 3)), r.normal(size=(2, 3)))),
        ("slice", lambda x: x[:, 1:3], (r.normal(size=(4, 5)),)),
        ("fancy-index", lambda x: x[np.array([0, 2, 0])], (r.normal(size=(3, 2)),)),
        ("sum-axis", lambda t: ad.sum(t, axis=0), (r.normal(size=(3, 4)),)),
        ("mean-keepdims", lambda t: ad.mean(t, axis=1, keepdims=True), (r.normal(size=(3, 4)),)),
        ("softmax", lambda x: ad.softmax(x, axis=-1), (r.normal(size=(3, 5)),)),
        ("layer-norm", ad.layer_norm, (r.normal(size=(4, 6)), r.normal(size=(6,)), r.normal(size=(6,)))),
        ("relu", ad.relu, (kinked,)),
        ("gelu", ad.gelu, (kinked,)),
        ("abs", ad.abs, (kinked,)),
        ("cross", ad.cross, (r.normal(size=(4, 3)), r.normal(size=(4, 3)))),
        ("normalize", ad.normalize, (r.normal(size=(4, 3)),)),
        ("l1-loss", lambda a: ad.l1_loss(a, y), (r.normal(size=(5, 2)),)),
        ("l2-loss-sum", lambda a: ad.l2_loss(a, y), (r.normal(size=(5, 2)),)),
        ("l2-loss-mean", lambda a: ad.l2_loss(a, y, reduction="mean"), (r.normal(size=(5, 2)),)),
        ("linear", ad.linear, (r.normal(size=(3, 4)), r.normal(size=(4, 2)), r.normal(size=(2,)))),
        ("recover-6d", recover_6d_t, (r.normal(size=(3, 6)),)),
        ("matrix-to-6d", matrix_to_6d_t, (r.normal(size=(2, 3, 3)),)),
        ("forward-kinematics", lambda a, b: forward_kinematics_t(skel, a, b)[0], (near_eye, local)),
    ]


def gradcheck_model(skel, cfg, clip, no_stabilizer=False, per_tensor=4, seed=0, eps=1e-6):
    """Relative error of backprop vs central differences on the full training loss.

    ``per_tensor`` entries are sampled from each parameter; ``None`` checks all of them.
    """
    rng = np.random.default_rng(seed)
    w = init_weights(cfg, seed)
    for t in w.tensors():
        t.data[...] += rng.normal(scale=0.2, size=t.shape)
    sampler = WindowSampler([prepare_clip(clip, skel, cfg.dtype)], cfg.window)
    x, tg = sampler.batch(np.array([len(sampler) // 2]))

    def value():
        with ad.no_grad():
            return loss(forward(w, x), tg, skel, no_stabilizer=no_stabilizer)[0].item()

    w.zero_grad()
    total, _ = loss(forward(w, x), tg, skel, no_stabilizer=no_stabilizer)
    ad.backward(total)
    worst = 0.0
    for t in w.params.values():
        flat = t.data.reshape(-1)
        count = flat.size if per_tensor is None else min(per_tensor, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        grad = np.zeros_like(t.data) if t.grad is None else t.grad
        ana = grad.reshape(-1)[picks]
        num = np.empty_like(ana)
        for k, i in enumerate(picks):
            old = flat[i]
            flat[i] = old + eps
            hi = value()
            flat[i] = old - eps
            lo = value()
            flat[i] = old
            num[k] = (hi - lo) / (2 * eps)
        scale = max(np.abs(grad).max(), 1e-6)
        worst = max(worst, np.abs(ana - num).max() / scale)
    return worst
