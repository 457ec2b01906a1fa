"""Small numpy kernel for stateless many-to-one GRU networks.

A network is a stack of GRU layers whose last hidden state (after the final
time step) feeds a ReLU dense layer and an output head.  Optional auxiliary
inputs (e.g. the action of a DDPG critic) are concatenated with that hidden
state before the dense layer.

All weights live in one flat float64 vector so that optimizers, target-network
updates and checkpoints can treat a network as a single array.
"""
import json
import struct

import numpy as np

HEADS = ("softmax", "sigmoid", "linear")

_MAGIC = b"RACHFORGE-WEIGHTS"
_FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class GRUNetwork:
    """Stateless GRU network with a flat parameter vector.

    Parameters
    ----------
    n_inputs : int
        Width of one time-step input vector.
    n_outputs : int
        Width of the head.
    head : {"softmax", "sigmoid", "linear"}
    hidden : tuple of int
        Units of each GRU layer (default two layers of 128).
    dense : int
        ReLU units between the last GRU layer and the head.
    n_aux : int
        Width of auxiliary inputs joined to the last hidden state.
    seed : int or None
        Seed for the uniform(+-1/sqrt(fan_in)) initialisation.
    """

    def __init__(self, n_inputs, n_outputs, head="linear", hidden=(128, 128),
                 dense=128, n_aux=0, seed=None):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if len(hidden) < 1:
            raise ValueError("at least one GRU layer is required")
        self.n_inputs = int(n_inputs)
        self.n_outputs = int(n_outputs)
        self.head = head
        self.hidden = tuple(int(h) for h in hidden)
        self.dense = int(dense)
        self.n_aux = int(n_aux)
        self.seed = seed

        self._shapes = []
        d = self.n_inputs
        for i, h in enumerate(self.hidden):
            self._shapes += [(f"gru{i}.Wx", (d, 3 * h)), (f"gru{i}.Wh", (h, 3 * h)),
                             (f"gru{i}.bx", (3 * h,)), (f"gru{i}.bh", (3 * h,))]
            d = h
        self._shapes += [("dense.W", (d + self.n_aux, self.dense)), ("dense.b", (self.dense,)),
                         ("head.W", (self.dense, self.n_outputs)), ("head.b", (self.n_outputs,))]
        size = sum(int(np.prod(s)) for _, s in self._shapes)
        self.params = np.zeros(size)
        self.grad = np.zeros(size)
        self.w = self._views(self.params)
        self.g = self._views(self.grad)
        self._cache = None
        self.reset_parameters(seed)

    def _views(self, flat):
        out, i = {}, 0
        for name, shape in self._shapes:
            n = int(np.prod(shape))
            out[name] = flat[i:i + n].reshape(shape)
            i += n
        return out

    def __getstate__(self):
        # the per-layer views must alias the flat vectors again after unpickling
        state = self.__dict__.copy()
        del state["w"], state["g"]
        state["_cache"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self.w = self._views(self.params)
        self.g = self._views(self.grad)

    def reset_parameters(self, seed=None):
        rng = np.random.default_rng(seed)
        fan_in = {}
        d = self.n_inputs
        for i, h in enumerate(self.hidden):
            fan_in.update({f"gru{i}.Wx": h, f"gru{i}.Wh": h, f"gru{i}.bx": h, f"gru{i}.bh": h})
            d = h
        fan_in.update({"dense.W": d + self.n_aux, "dense.b": d + self.n_aux,
                       "head.W": self.dense, "head.b": self.dense})
        for name, shape in self._shapes:
            bound = 1.0 / np.sqrt(fan_in[name])
            self.w[name][...] = rng.uniform(-bound, bound, size=shape)

    @property
    def spec(self):
        return {"n_inputs": self.n_inputs, "n_outputs": self.n_outputs, "head": self.head,
                "hidden": list(self.hidden), "dense": self.dense, "n_aux": self.n_aux}

    def clone(self):
        other = GRUNetwork(seed=self.seed, **self.spec)
        other.params[...] = self.params
        return other

    # ------------------------------------------------------------------ forward
    def forward(self, X, aux=None):
        """Run the network on a batch of sequences.

        ``X`` has shape (batch, steps, n_inputs); the recurrent state starts at
        zero on every call.  Returns the head output of shape (batch, n_outputs).
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[2] != self.n_inputs:
            raise ShapeError(f"expected (batch, steps, {self.n_inputs}), got {X.shape}")
        B, T, _ = X.shape
        if self.n_aux:
            if aux is None:
                raise ShapeError("auxiliary input required")
            aux = np.asarray(aux, dtype=np.float64).reshape(B, self.n_aux)
        w = self.w
        layers = []
        inp = X
        for i, H in enumerate(self.hidden):
            Wh, bh = w[f"gru{i}.Wh"], w[f"gru{i}.bh"]
            gx = (inp.reshape(B * T, -1) @ w[f"gru{i}.Wx"] + w[f"gru{i}.bx"]).reshape(B, T, 3 * H)
            hs = np.zeros((B, T + 1, H))
            r_all = np.empty((B, T, H))
            z_all = np.empty((B, T, H))
            n_all = np.empty((B, T, H))
            ghn_all = np.empty((B, T, H))
            h = hs[:, 0]
            for t in range(T):
                gh = h @ Wh + bh
                g = gx[:, t]
                rz = sigmoid(g[:, :2 * H] + gh[:, :2 * H])
                r, z = rz[:, :H], rz[:, H:]
                ghn = gh[:, 2 * H:]
                n = np.tanh(g[:, 2 * H:] + r * ghn)
                h = n + z * (h - n)
                hs[:, t + 1] = h
                r_all[:, t], z_all[:, t], n_all[:, t], ghn_all[:, t] = r, z, n, ghn
            layers.append((inp, hs, r_all, z_all, n_all, ghn_all))
            inp = hs[:, 1:]
        last = inp[:, -1]
        feat = np.concatenate([last, aux], axis=1) if self.n_aux else last
        pre = feat @ w["dense.W"] + w["dense.b"]
        act = np.maximum(pre, 0.0)
        logits = act @ w["head.W"] + w["head.b"]
        if self.head == "softmax":
            out = softmax(logits)
        elif self.head == "sigmoid":
            out = sigmoid(logits)
        else:
            out = logits
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite network output")
        self._cache = (layers, feat, pre, act, out)
        return out

    __call__ = forward

    # ----------------------------------------------------------------- backward
    def backward(self, grad_output=None, grad_logits=None):
        """Backpropagate through time from the last forward pass.

        Pass either the gradient of the loss with respect to the head output or,
        for softmax/sigmoid heads, directly with respect to the pre-activation
        logits (numerically safer for log-likelihood losses).  Overwrites
        ``self.grad`` and returns the gradient with respect to ``aux`` (or None).
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        layers, feat, pre, act, out = self._cache
        w, g = self.w, self.g
        if grad_logits is None:
            go = np.asarray(grad_output, dtype=np.float64).reshape(out.shape)
            if self.head == "softmax":
                grad_logits = out * (go - (go * out).sum(axis=1, keepdims=True))
            elif self.head == "sigmoid":
                grad_logits = go * out * (1.0 - out)
            else:
                grad_logits = go
        dlog = np.asarray(grad_logits, dtype=np.float64).reshape(out.shape)
        g["head.W"][...] = act.T @ dlog
        g["head.b"][...] = dlog.sum(axis=0)
        dpre = (dlog @ w["head.W"].T) * (pre > 0)
        g["dense.W"][...] = feat.T @ dpre
        g["dense.b"][...] = dpre.sum(axis=0)
        dfeat = dpre @ w["dense.W"].T
        H_top = self.hidden[-1]
        d_aux = dfeat[:, H_top:] if self.n_aux else None

        B = dfeat.shape[0]
        d_seq = None  # gradient w.r.t. this layer's output sequence (from the layer above)
        for i in reversed(range(len(self.hidden))):
            H = self.hidden[i]
            inp, hs, r_all, z_all, n_all, ghn_all = layers[i]
            T = inp.shape[1]
            Wh = w[f"gru{i}.Wh"]
            dgx = np.empty((B, T, 3 * H))
            dgh = np.empty((B, T, 3 * H))
            if d_seq is None:
                dh = dfeat[:, :H_top].copy()
            else:
                dh = d_seq[:, -1].copy()
            for t in reversed(range(T)):
                if d_seq is not None and t < T - 1:
                    dh += d_seq[:, t]
                r, z, n, ghn = r_all[:, t], z_all[:, t], n_all[:, t], ghn_all[:, t]
                h_prev = hs[:, t]
                dn_pre = dh * (1.0 - z) * (1.0 - n * n)
                dz_pre = dh * (h_prev - n) * z * (1.0 - z)
                dr_pre = dn_pre * ghn * r * (1.0 - r)
                dgx[:, t, :H] = dr_pre
                dgx[:, t, H:2 * H] = dz_pre
                dgx[:, t, 2 * H:] = dn_pre
                dgh[:, t, :2 * H] = dgx[:, t, :2 * H]
                dgh[:, t, 2 * H:] = dn_pre * r
                dh = dh * z + dgh[:, t] @ Wh.T
            flat_dgx = dgx.reshape(B * T, 3 * H)
            flat_dgh = dgh.reshape(B * T, 3 * H)
            g[f"gru{i}.Wx"][...] = inp.reshape(B * T, -1).T @ flat_dgx
            g[f"gru{i}.bx"][...] = flat_dgx.sum(axis=0)
            g[f"gru{i}.Wh"][...] = hs[:, :-1].reshape(B * T, H).T @ flat_dgh
            g[f"gru{i}.bh"][...] = flat_dgh.sum(axis=0)
            if i > 0:
                d_seq = (flat_dgx @ w[f"gru{i}.Wx"].T).reshape(B, T, -1)
        return d_aux

    # ------------------------------------------------------------- persistence
    def save(self, path, seed=None, extra=None):
        header = {"version": _FORMAT_VERSION, "spec": self.spec,
                  "seed": self.seed if seed is None else seed, "size": int(self.params.size)}
        if extra:
            header.update(extra)
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path}: not a weight file")
            (n,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(n))
            if header.get("version") != _FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported weight file version {header.get('version')}")
            data = np.frombuffer(fh.read(), dtype="<f8")
        spec = header["spec"]
        net = cls(spec["n_inputs"], spec["n_outputs"], head=spec["head"],
                  hidden=tuple(spec["hidden"]), dense=spec["dense"], n_aux=spec["n_aux"],
                  seed=header.get("seed"))
        if data.size != net.params.size:
            raise ValueError(f"{path}: expected {net.params.size} weights, found {data.size}")
        net.params[...] = data
        return net


def read_header(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a weight file")
        (n,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(n))


# ---------------------------------------------------------------------- losses
def cross_entropy(probs, labels):
    """Mean negative log-likelihood and its gradient w.r.t. softmax logits."""
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    B = probs.shape[0]
    idx = np.arange(B)
    loss = -np.mean(np.log(np.maximum(probs[idx, labels], 1e-300)))
    grad = probs.copy()
    grad[idx, labels] -= 1.0
    return loss, grad / B


def squared_error(pred, target, weights=None):
    """0.5 * mean over the batch of the (optionally weighted) squared error."""
    diff = np.asarray(pred) - np.asarray(target)
    B = diff.shape[0]
    if weights is not None:
        wts = np.asarray(weights, dtype=np.float64).reshape((B,) + (1,) * (diff.ndim - 1))
    else:
        wts = 1.0
    loss = 0.5 * np.sum(wts * diff * diff) / B
    return loss, wts * diff / B


class Adam:
    """Adam optimizer over a flat parameter vector (updated in place)."""

    def __init__(self, size, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient")
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def state_dict(self):
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t}

    def load_state_dict(self, state):
        self.m[...] = state["m"]
        self.v[...] = state["v"]
        self.t = int(state["t"])


class SGD:
    """Plain gradient descent, kept as a drop-in alternative to Adam."""

    def __init__(self, size, lr=1e-4):
        self.lr = lr

    def step(self, params, grad):
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient")
        params -= self.lr * grad
        return params

    def state_dict(self):
        return {}

    def load_state_dict(self, state):
        pass


def make_optimizer(name, size, lr):
    if name == "adam":
        return Adam(size, lr=lr)
    if name == "sgd":
        return SGD(size, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


def soft_update(target, source, rate):
    """target <- rate * source + (1 - rate) * target, elementwise, in place."""
    if target.shape != source.shape:
        raise ShapeError("parameter shapes differ")
    target *= 1.0 - rate
    target += rate * source
    return target


def finite_difference_check(loss_fn, params, analytic, n_probes=100, h=1e-5, rng=None,
                            floor=1e-6):
    """Largest relative error between ``analytic`` and central differences.

    ``loss_fn()`` must evaluate the loss at the current contents of ``params``;
    probed entries are perturbed in place and restored.  The relative error of
    one probe is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(rng)
    idx = rng.choice(params.size, size=min(n_probes, params.size), replace=False)
    worst = 0.0
    for i in idx:
        old = params[i]
        params[i] = old + h
        up = loss_fn()
        params[i] = old - h
        down = loss_fn()
        params[i] = old
        num = (up - down) / (2 * h)
        err = abs(analytic[i] - num) / max(abs(analytic[i]), abs(num), floor)
        worst = max(worst, err)
    return worst
