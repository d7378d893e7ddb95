"""The two-stream enhancement network.

Input stems feed a stack of two-stream blocks (TSBs). The amplitude
stream runs frequency-transformation blocks (FTBs) around three 5x5
convolutions; the phase stream is two light convolutions with global
layer norm and no activation. At the end of each TSB the streams gate
each other through 1x1-conv tanh attention. Heads produce a sigmoid
amplitude mask and a unit-magnitude phase map, combined with the input
amplitude into the output spectrogram.

Ablation flags reproduce the standard configuration matrix: single
stream with a complex-mask head, FTBs replaced by 5x5 convolutions,
either or both communication directions removed, and activation or
normalization swaps in the streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ndtensor as nd
from .dsp import ComplexSpectrogram
from .ndtensor import Parameter, Tensor

PHASE_EPS = 1e-8


@dataclass
class PhasenConfig:
    num_bands: int = 257
    num_tsb: int = 3
    c_a: int = 96
    c_p: int = 48
    ftb_cr: int = 5
    ftb_conv1d_kernel: int = 9
    head_cr: int = 8
    bilstm_hidden: int = 300
    fc_widths: tuple = (600, 600)
    stream_a_kernel: tuple = (5, 5)
    stream_p_kernels: tuple = ((5, 5), (25, 1))
    stem_kernels: tuple = ((1, 7), (7, 1))
    # ablation flags
    disable_ftb: bool = False
    disable_a2p: bool = False
    disable_p2a: bool = False
    single_stream: bool = False
    stream_p_activation: str = "none"  # none | relu | tanh
    stream_a_norm: str = "bn"          # bn | gln
    stream_p_norm: str = "gln"         # gln | bn

    def __post_init__(self):
        if self.num_tsb < 1:
            raise ValueError("need at least one TSB")
        for name in ("c_a", "c_p", "ftb_cr", "head_cr", "bilstm_hidden", "num_bands"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.stream_p_activation not in ("none", "relu", "tanh"):
            raise ValueError(f"bad stream_p_activation {self.stream_p_activation!r}")
        if self.stream_a_norm not in ("bn", "gln") or self.stream_p_norm not in ("bn", "gln"):
            raise ValueError("norm kinds must be 'bn' or 'gln'")

    @classmethod
    def tiny(cls, num_bands: int = 257, **kw) -> "PhasenConfig":
        """Desk-scale preset used by the overfit acceptance run."""
        return cls(num_bands=num_bands, c_a=24, c_p=12, bilstm_hidden=64,
                   fc_widths=(128, 128), **kw)

    @classmethod
    def micro(cls, num_bands: int = 9, **kw) -> "PhasenConfig":
        """Smallest sensible config, for gradient checking."""
        return cls(num_bands=num_bands, c_a=4, c_p=2, ftb_cr=2, head_cr=2,
                   bilstm_hidden=3, fc_widths=(5, 5), **kw)

    def with_ablation(self, name: str) -> "PhasenConfig":
        flags = ABLATIONS.get(name)
        if flags is None:
            raise ValueError(
                f"unknown ablation {name!r}; valid: {', '.join(sorted(ABLATIONS))}")
        return replace(self, **flags)


# Ablation names follow the standard configuration matrix.
ABLATIONS = {
    "full": {},
    "baseline": {"single_stream": True, "disable_ftb": True,
                 "disable_a2p": True, "disable_p2a": True},
    "1strm": {"single_stream": True, "disable_a2p": True, "disable_p2a": True},
    "w/o-FTBs": {"disable_ftb": True},
    "w/o-A2PP2A": {"disable_a2p": True, "disable_p2a": True},
    "w/o-P2A": {"disable_p2a": True},
}


class PhasenModel:
    """Parameter collection plus forward pass."""

    def __init__(self, cfg: PhasenConfig, dtype=np.float32, seed: int = 0):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Parameter] = {}
        self.norm_states: dict[str, nd.NormState] = {}
        self._norm_kind: dict[str, str] = {}
        self.training = True
        self.bypass_norm = False  # test harness hook
        self._rng = np.random.default_rng(seed)
        self._build()

    # -- parameter registration ------------------------------------------

    def _param(self, name: str, data: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.params[name] = Parameter(name, data.astype(self.dtype))

    def _uniform(self, shape, fan_in: float) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return self._rng.uniform(-bound, bound, size=shape)

    def _add_conv2d(self, name, kh, kw, cin, cout):
        self._param(f"{name}.w", self._uniform((kh, kw, cin, cout), kh * kw * cin))
        self._param(f"{name}.b", np.zeros(cout))

    def _add_conv1d(self, name, k, cin, cout):
        self._param(f"{name}.w", self._uniform((k, cin, cout), k * cin))
        self._param(f"{name}.b", np.zeros(cout))

    def _add_fc(self, name, din, dout):
        self._param(f"{name}.w", self._uniform((din, dout), din))
        self._param(f"{name}.b", np.zeros(dout))

    def _add_norm(self, name, channels, kind):
        self._param(f"{name}.gamma", np.ones(channels))
        self._param(f"{name}.beta", np.zeros(channels))
        self._norm_kind[name] = kind
        if kind == "bn":
            self.norm_states[name] = nd.NormState(channels, dtype=self.dtype)

    def _add_lstm(self, name, din, hidden):
        h = hidden
        self._param(f"{name}.wx", self._uniform((din, 4 * h), h))
        self._param(f"{name}.wh", self._uniform((h, 4 * h), h))
        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0  # forget gate opens at init
        self._param(f"{name}.b", bias)

    # -- architecture ------------------------------------------------------

    def _build(self):
        cfg = self.cfg
        F = cfg.num_bands
        (k0h, k0w), (k1h, k1w) = cfg.stem_kernels

        self._add_conv2d("stem_a.0", k0h, k0w, 2, cfg.c_a)
        self._add_norm("stem_a.0.norm", cfg.c_a, cfg.stream_a_norm)
        self._add_conv2d("stem_a.1", k1h, k1w, cfg.c_a, cfg.c_a)
        self._add_norm("stem_a.1.norm", cfg.c_a, cfg.stream_a_norm)
        if not cfg.single_stream:
            self._add_conv2d("stem_p.0", k0h, k0w, 2, cfg.c_p)
            self._add_norm("stem_p.0.norm", cfg.c_p, cfg.stream_p_norm)
            self._add_conv2d("stem_p.1", k1h, k1w, cfg.c_p, cfg.c_p)
            self._add_norm("stem_p.1.norm", cfg.c_p, cfg.stream_p_norm)

        for i in range(cfg.num_tsb):
            for loc in ("in", "out"):
                self._add_ftb(f"tsb.{i}.ftb_{loc}")
            kh, kw = cfg.stream_a_kernel
            for j in range(3):
                self._add_conv2d(f"tsb.{i}.a.conv{j}", kh, kw, cfg.c_a, cfg.c_a)
                self._add_norm(f"tsb.{i}.a.conv{j}.norm", cfg.c_a, cfg.stream_a_norm)
            if not cfg.single_stream:
                for j, (pkh, pkw) in enumerate(cfg.stream_p_kernels):
                    self._add_norm(f"tsb.{i}.p.norm{j}", cfg.c_p, cfg.stream_p_norm)
                    self._add_conv2d(f"tsb.{i}.p.conv{j}", pkh, pkw, cfg.c_p, cfg.c_p)
                if not cfg.disable_p2a:
                    self._add_conv2d(f"tsb.{i}.comm_p2a", 1, 1, cfg.c_p, cfg.c_a)
                if not cfg.disable_a2p:
                    self._add_conv2d(f"tsb.{i}.comm_a2p", 1, 1, cfg.c_a, cfg.c_p)

        if cfg.single_stream:
            self._add_conv2d("head_c", 1, 1, cfg.c_a, 2)
        else:
            self._add_conv2d("head_a.reduce", 1, 1, cfg.c_a, cfg.head_cr)
            din = F * cfg.head_cr
            self._add_lstm("head_a.lstm.fwd", din, cfg.bilstm_hidden)
            self._add_lstm("head_a.lstm.bwd", din, cfg.bilstm_hidden)
            widths = [2 * cfg.bilstm_hidden, *cfg.fc_widths, F]
            for j in range(len(widths) - 1):
                self._add_fc(f"head_a.fc{j}", widths[j], widths[j + 1])
            self._add_conv2d("head_p", 1, 1, cfg.c_p, 2)

    def _add_ftb(self, prefix):
        cfg = self.cfg
        F = cfg.num_bands
        if cfg.disable_ftb:
            kh, kw = cfg.stream_a_kernel
            self._add_conv2d(f"{prefix}.rep", kh, kw, cfg.c_a, cfg.c_a)
            self._add_norm(f"{prefix}.rep.norm", cfg.c_a, cfg.stream_a_norm)
            return
        self._add_conv2d(f"{prefix}.attn2d", 1, 1, cfg.c_a, cfg.ftb_cr)
        self._add_norm(f"{prefix}.attn2d.norm", cfg.ftb_cr, cfg.stream_a_norm)
        self._add_conv1d(f"{prefix}.attn1d", cfg.ftb_conv1d_kernel, F * cfg.ftb_cr, F)
        self._add_norm(f"{prefix}.attn1d.norm", F, cfg.stream_a_norm)
        ftm = np.eye(F) + self._rng.uniform(-0.01, 0.01, size=(F, F))
        self._param(f"{prefix}.ftm", ftm)
        self._add_conv2d(f"{prefix}.fuse", 1, 1, 2 * cfg.c_a, cfg.c_a)
        self._add_norm(f"{prefix}.fuse.norm", cfg.c_a, cfg.stream_a_norm)

    # -- bookkeeping ---------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def train(self):
        self.training = True

    def eval(self):
        self.training = False

    def zero_grads(self):
        nd.zero_grads(self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All persistent arrays: parameters plus norm running stats."""
        out = {name: p.data for name, p in self.params.items()}
        for name, st in self.norm_states.items():
            out[f"{name}.running_mean"] = st.mean
            out[f"{name}.running_var"] = st.var
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = self.state_arrays()
        missing = set(expected) - set(arrays)
        if missing:
            raise ValueError(f"state missing arrays: {sorted(missing)[:5]} ...")
        for name, p in self.params.items():
            a = np.asarray(arrays[name], dtype=self.dtype)
            if a.shape != p.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {a.shape}, model {p.shape}")
            p.data = a.copy()
        for name, st in self.norm_states.items():
            st.mean = np.asarray(arrays[f"{name}.running_mean"], dtype=self.dtype).copy()
            st.var = np.asarray(arrays[f"{name}.running_var"], dtype=self.dtype).copy()

    # -- forward pieces --------------------------------------------------------

    def _conv2d(self, name, x):
        return nd.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"])

    def _conv1d(self, name, x):
        return nd.conv1d(x, self.params[f"{name}.w"], self.params[f"{name}.b"])

    def _fc(self, name, x):
        return nd.linear(x, self.params[f"{name}.w"], self.params[f"{name}.b"])

    def _norm(self, name, x):
        if self.bypass_norm:
            return x
        gamma = self.params[f"{name}.gamma"]
        beta = self.params[f"{name}.beta"]
        if self._norm_kind[name] == "bn":
            return nd.batch_norm(x, gamma, beta, self.norm_states[name],
                                 self.training)
        return nd.global_layer_norm(x, gamma, beta)

    def _stem_a(self, x):
        x = nd.relu(self._norm("stem_a.0.norm", self._conv2d("stem_a.0", x)))
        return nd.relu(self._norm("stem_a.1.norm", self._conv2d("stem_a.1", x)))

    def _stem_p(self, x):
        x = self._norm("stem_p.0.norm", self._conv2d("stem_p.0", x))
        return self._norm("stem_p.1.norm", self._conv2d("stem_p.1", x))

    def ftb_forward(self, prefix: str, x: Tensor) -> Tensor:
        cfg = self.cfg
        if cfg.disable_ftb:
            return nd.relu(self._norm(f"{prefix}.rep.norm",
                                      self._conv2d(f"{prefix}.rep", x)))
        T, F, C = x.shape
        att = nd.relu(self._norm(f"{prefix}.attn2d.norm",
                                 self._conv2d(f"{prefix}.attn2d", x)))
        att = att.reshape(T, F * cfg.ftb_cr)  # frequency-major packing
        att = nd.relu(self._norm(f"{prefix}.attn1d.norm",
                                 self._conv1d(f"{prefix}.attn1d", att)))
        s_a = x * att.reshape(T, F, 1)  # one attention map for all channels
        # per-timestep product with the F×F transformation matrix
        flat = s_a.permute(1, 0, 2).reshape(F, T * C)
        s_tr = (self.params[f"{prefix}.ftm"] @ flat).reshape(F, T, C).permute(1, 0, 2)
        fused = self._conv2d(f"{prefix}.fuse", nd.concat([s_tr, x], axis=2))
        return nd.relu(self._norm(f"{prefix}.fuse.norm", fused))

    def stream_a_forward(self, i: int, x: Tensor) -> Tensor:
        x = self.ftb_forward(f"tsb.{i}.ftb_in", x)
        for j in range(3):
            name = f"tsb.{i}.a.conv{j}"
            x = nd.relu(self._norm(f"{name}.norm", self._conv2d(name, x)))
        return self.ftb_forward(f"tsb.{i}.ftb_out", x)

    def stream_p_forward(self, i: int, x: Tensor) -> Tensor:
        act = {"none": None, "relu": nd.relu, "tanh": nd.tanh}[
            self.cfg.stream_p_activation]
        n = len(self.cfg.stream_p_kernels)
        for j in range(n):
            x = self._norm(f"tsb.{i}.p.norm{j}", x)
            x = self._conv2d(f"tsb.{i}.p.conv{j}", x)
            if act is not None and j < n - 1:
                x = act(x)
        return x

    def communicate(self, x1: Tensor, x2: Tensor, conv_name: str) -> Tensor:
        gate = nd.tanh(self._conv2d(conv_name, x2))
        if gate.shape != x1.shape:
            raise ValueError(
                f"communication gate shape {gate.shape} != target {x1.shape}")
        return x1 * gate

    def tsb_forward(self, i: int, a: Tensor, p: Tensor | None):
        cfg = self.cfg
        a4 = self.stream_a_forward(i, a)
        if cfg.single_stream:
            return a4, None
        p2 = self.stream_p_forward(i, p)
        a_next = (a4 if cfg.disable_p2a
                  else self.communicate(a4, p2, f"tsb.{i}.comm_p2a"))
        p_next = (p2 if cfg.disable_a2p
                  else self.communicate(p2, a4, f"tsb.{i}.comm_a2p"))
        return a_next, p_next

    def amplitude_head(self, a: Tensor) -> Tensor:
        T, F, _ = a.shape
        x = self._conv2d("head_a.reduce", a).reshape(T, F * self.cfg.head_cr)
        fwd = tuple(self.params[f"head_a.lstm.fwd.{k}"] for k in ("wx", "wh", "b"))
        bwd = tuple(self.params[f"head_a.lstm.bwd.{k}"] for k in ("wx", "wh", "b"))
        x = nd.bilstm(x, fwd, bwd)
        n_fc = len(self.cfg.fc_widths) + 1
        for j in range(n_fc - 1):
            x = nd.relu(self._fc(f"head_a.fc{j}", x))
        return nd.sigmoid(self._fc(f"head_a.fc{n_fc - 1}", x))

    def phase_head(self, p: Tensor) -> Tensor:
        y = self._conv2d("head_p", p)
        return unit_normalize(y)

    def forward(self, s_in):
        """Run the network; returns (mask, psi, s_out) tensors.

        In single-stream mode the mask/psi slots are None and s_out comes
        from a complex mask on the amplitude-stream features.
        """
        data = s_in.data if isinstance(s_in, ComplexSpectrogram) else np.asarray(s_in)
        if data.ndim != 3 or data.shape[2] != 2:
            raise ValueError(f"expected T×F×2 input, got {data.shape}")
        if data.shape[1] != self.cfg.num_bands:
            raise ValueError(
                f"input has {data.shape[1]} bands, model expects {self.cfg.num_bands}")
        x = Tensor(data.astype(self.dtype))
        T, F, _ = data.shape

        a = self._stem_a(x)
        p = None if self.cfg.single_stream else self._stem_p(x)
        for i in range(self.cfg.num_tsb):
            a, p = self.tsb_forward(i, a, p)

        in_re, in_im = x[..., 0], x[..., 1]
        if self.cfg.single_stream:
            cm = self._conv2d("head_c", a)
            cm_re, cm_im = cm[..., 0], cm[..., 1]
            out_re = in_re * cm_re - in_im * cm_im
            out_im = in_re * cm_im + in_im * cm_re
            s_out = nd.concat([out_re.reshape(T, F, 1),
                               out_im.reshape(T, F, 1)], axis=2)
            return None, None, s_out

        mask = self.amplitude_head(a)
        psi = self.phase_head(p)
        amp_in = np.hypot(data[..., 0], data[..., 1]).astype(self.dtype)
        scaled = mask * amp_in
        out_re = scaled * psi[..., 0]
        out_im = scaled * psi[..., 1]
        s_out = nd.concat([out_re.reshape(T, F, 1),
                           out_im.reshape(T, F, 1)], axis=2)
        return mask, psi, s_out


def unit_normalize(y: Tensor, eps: float = PHASE_EPS) -> Tensor:
    """Scale a T×F×2 tensor to unit magnitude per bin; bins whose magnitude
    is below eps become the constant (1, 0)."""
    T, F, _ = y.shape
    re, im = y[..., 0], y[..., 1]
    amp = nd.sqrt(re * re + im * im)
    denom = nd.clip_min(amp, eps)
    re_n, im_n = re / denom, im / denom
    degen = (amp.data < eps).astype(y.dtype)
    if degen.any():
        keep = 1.0 - degen
        re_n = re_n * keep + degen
        im_n = im_n * keep
    return nd.concat([re_n.reshape(T, F, 1), im_n.reshape(T, F, 1)], axis=2)


# -- FTM inspection --------------------------------------------------------------


def harmonic_template(num_bands: int, level: int) -> np.ndarray:
    """Indicator of rational harmonic relations f2 = (m/n) f1.

    `level` H draws m, n from {1, ..., H+1} with m != n, so H=1 gives the
    pure octave lines (ratios 2 and 1/2).
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    t = np.zeros((num_bands, num_bands))
    f1 = np.arange(num_bands)
    for m in range(1, level + 2):
        for n in range(1, level + 2):
            if m == n:
                continue
            f2 = np.rint(f1 * m / n).astype(int)
            ok = f2 < num_bands
            t[f1[ok], f2[ok]] = 1.0
    return t


def inspect_ftm(model: PhasenModel, tsb_index: int, which: str,
                levels=(1, 2, 3)) -> dict:
    """Energy map of one transformation matrix plus harmonic-template
    Pearson correlations (reported, not asserted)."""
    if which not in ("in", "out"):
        raise ValueError(f"which must be 'in' or 'out', got {which!r}")
    if not (0 <= tsb_index < model.cfg.num_tsb):
        raise ValueError(
            f"tsb index {tsb_index} out of range [0, {model.cfg.num_tsb})")
    name = f"tsb.{tsb_index}.ftb_{which}.ftm"
    if name not in model.params:
        raise ValueError("this configuration has no transformation matrices")
    energy = np.abs(model.params[name].data.astype(np.float64))
    F = model.cfg.num_bands
    templates = {h: harmonic_template(F, h) for h in levels}
    flat = energy.reshape(-1)
    corr = {}
    for h, t in templates.items():
        tf = t.reshape(-1)
        denom = flat.std() * tf.std()
        corr[h] = float(np.corrcoef(flat, tf)[0, 1]) if denom > 0 else 0.0
    return {"energy": energy, "templates": templates, "correlation": corr}
