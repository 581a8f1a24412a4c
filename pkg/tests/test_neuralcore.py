from dataclasses import dataclass

import numpy as np
import pytest
from scipy import stats

from smi import neuralcore as nc
from smi.errors import BudgetViolation, IoFailure, NonFinite, StaleModel

SMALL_ARCH = nc.ArchConfig(
    input_dim=12, encoder=(10,), hidden=8, classifier=(8,), predictor=(8,),
    param_budget=None)


@dataclass
class Traj:
    frames: np.ndarray
    label: int


def make_traj(arch, T=12, label=3, seed=0):
    rng = np.random.default_rng(seed)
    return Traj(rng.uniform(0, 1, (T, arch.input_dim)), label)


def rand_state(arch, seed=1, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return nc.HiddenState(
        rng.uniform(-0.5, 0.5, arch.hidden).astype(dtype),
        rng.uniform(-0.5, 0.5, arch.hidden).astype(dtype))


class TestInit:
    def test_deterministic(self):
        a = nc.init_params(SMALL_ARCH, 42, np.float64)
        b = nc.init_params(SMALL_ARCH, 42, np.float64)
        for (na, xa), (nb, xb) in zip(a.named_arrays(), b.named_arrays()):
            assert na == nb
            assert np.array_equal(xa, xb)

    def test_different_seed_differs(self):
        a = nc.init_params(SMALL_ARCH, 1)
        b = nc.init_params(SMALL_ARCH, 2)
        assert not np.array_equal(a.lstm_w, b.lstm_w)

    def test_default_param_count_exact(self):
        # exact summation: 77,312 (encoder) + 525,312 (LSTM)
        # + 35,089 (classifier) + 110,554 (predictor)
        arch = nc.ArchConfig()
        expected = 77_312 + 525_312 + 35_089 + 110_554
        assert expected == 748_267
        assert nc.param_count(arch) == expected
        params = nc.init_params(arch, 0)
        assert nc.count_params(params) == expected
        lo, hi = nc.DEFAULT_PARAM_BUDGET
        assert lo <= expected <= hi

    def test_small_hidden_violates_budget(self):
        with pytest.raises(BudgetViolation):
            nc.init_params(nc.ArchConfig(hidden=64), 0)

    def test_forget_gate_bias_one(self):
        p = nc.init_params(SMALL_ARCH, 0)
        h = SMALL_ARCH.hidden
        assert (p.lstm_b[h:2 * h] == 1.0).all()
        assert (p.lstm_b[:h] == 0.0).all()


class TestStep:
    def test_probs_on_simplex(self):
        p = nc.init_params(SMALL_ARCH, 3, np.float64)
        rng = np.random.default_rng(0)
        state = nc.zero_state(SMALL_ARCH.hidden, dtype=np.float64)
        for _ in range(20):
            frame = rng.uniform(0, 1, SMALL_ARCH.input_dim)
            state, probs, gauss = nc.step(frame, state, p)
            assert abs(probs.sum() - 1.0) < 1e-6
            assert (probs >= 0).all()

    def test_purity(self):
        p = nc.init_params(SMALL_ARCH, 4, np.float64)
        frame = np.full(SMALL_ARCH.input_dim, 0.3)
        st = nc.zero_state(SMALL_ARCH.hidden, dtype=np.float64)
        s1, pr1, g1 = nc.step(frame, st, p)
        s2, pr2, g2 = nc.step(frame, st, p)
        assert np.array_equal(pr1, pr2)
        assert np.array_equal(s1.h, s2.h)
        assert np.array_equal(g1.mean, g2.mean)

    def test_scale_floor(self):
        rng = np.random.default_rng(9)
        for seed in range(5):
            p = nc.init_params(SMALL_ARCH, seed, np.float64)
            st = rand_state(SMALL_ARCH, seed)
            _, _, gauss = nc.step(rng.uniform(0, 1, 12), st, p)
            assert (gauss.scale >= SMALL_ARCH.scale_floor).all()

    def test_hidden_state_bounded(self):
        p = nc.init_params(SMALL_ARCH, 5, np.float64)
        st = nc.zero_state(SMALL_ARCH.hidden, dtype=np.float64)
        rng = np.random.default_rng(2)
        for _ in range(50):
            st, _, _ = nc.step(rng.uniform(0, 1, 12), st, p)
        assert (np.abs(st.h) < 1.0).all()
        assert np.isfinite(st.c).all()


class TestSequenceLoss:
    def test_gamma_zero_is_cross_entropy_sum(self):
        p = nc.init_params(SMALL_ARCH, 7, np.float64)
        traj = make_traj(SMALL_ARCH, T=10, label=5, seed=3)
        st = nc.zero_state(SMALL_ARCH.hidden, dtype=np.float64)
        hyper = nc.TrainHyper(gamma=0.0)
        loss, _ = nc.sequence_loss(traj, p, hyper, st, (0, 10))
        # oracle: accumulate -ln p_c(label) step by step
        state, total = st, 0.0
        for t in range(10):
            state, probs, _ = nc.step(traj.frames[t], state, p)
            total += -np.log(probs[5])
        assert abs(loss - total) < 1e-9

    def test_uniform_classifier_gives_log17(self):
        p = nc.init_params(SMALL_ARCH, 8, np.float64)
        # zero the final classifier layer -> logits all zero -> uniform
        w, b = p.classifier[-1]
        p.classifier[-1] = (np.zeros_like(w), np.zeros_like(b))
        traj = make_traj(SMALL_ARCH, T=6, seed=4)
        loss, _ = nc.sequence_loss(traj, p, nc.TrainHyper(gamma=0.0),
                                   nc.zero_state(8, dtype=np.float64), (0, 6))
        assert abs(loss / 6 - np.log(17)) < 1e-9

    def test_exact_mean_closed_form_vs_bruteforce(self):
        # predictor mean == next obs, scale == s:
        # per-step term is 301 * ln(s * sqrt(2*pi)) for D=301; here D=12
        arch = SMALL_ARCH
        p = nc.init_params(arch, 11, np.float64)
        traj = make_traj(arch, T=5, seed=6)
        st = nc.zero_state(arch.hidden, dtype=np.float64)
        hyper = nc.TrainHyper(gamma=1.0)
        loss_full, _ = nc.sequence_loss(traj, p, hyper, st, (0, 5))
        loss_ce, _ = nc.sequence_loss(traj, p, nc.TrainHyper(gamma=0.0), st, (0, 5))
        gauss_term = loss_full - loss_ce
        # brute-force oracle: evaluate the diagonal Gaussian log-density
        # with scipy at every step that has a successor
        state, brute = st, 0.0
        for t in range(5):
            state, _, gauss = nc.step(traj.frames[t], state, p)
            if t + 1 < 5:
                brute += -stats.norm.logpdf(
                    traj.frames[t + 1], loc=gauss.mean, scale=gauss.scale).sum()
        assert abs(gauss_term - brute) < 1e-8

        # closed form when the mean is exact
        s = 0.7
        delta = np.zeros(arch.input_dim)
        term = (0.5 * np.log(2 * np.pi) + np.log(s)
                + 0.5 * (delta / s) ** 2).sum()
        assert abs(term - arch.input_dim * np.log(s * np.sqrt(2 * np.pi))) < 1e-12

    def test_interior_window_uses_next_frame_from_tail(self):
        arch = SMALL_ARCH
        p = nc.init_params(arch, 13, np.float64)
        traj = make_traj(arch, T=10, seed=8)
        st = nc.zero_state(arch.hidden, dtype=np.float64)
        hyper = nc.TrainHyper(gamma=0.5)
        # window ending inside the trajectory keeps its last predictor term
        loss_a, mid = nc.sequence_loss(traj, p, hyper, st, (0, 5))
        loss_b, _ = nc.sequence_loss(traj, p, hyper, mid, (5, 10))
        full, _ = nc.sequence_loss(traj, p, hyper, st, (0, 10))
        assert abs((loss_a + loss_b) - full) < 1e-9

    def test_empty_window(self):
        p = nc.init_params(SMALL_ARCH, 1, np.float64)
        traj = make_traj(SMALL_ARCH)
        st = rand_state(SMALL_ARCH)
        loss, out = nc.sequence_loss(traj, p, nc.TrainHyper(), st, (4, 4))
        assert loss == 0.0
        assert out is st


def rel_err(a, b, floor=1e-3):
    return abs(a - b) / max(abs(a), abs(b), floor)


class TestGradients:
    """Central finite differences are the oracle for every parameter group."""

    def setup_method(self):
        self.arch = SMALL_ARCH
        self.params = nc.init_params(self.arch, 17, np.float64)
        self.traj = make_traj(self.arch, T=12, label=4, seed=21)
        self.state = rand_state(self.arch, 5)
        self.hyper = nc.TrainHyper(gamma=0.02)
        self.window = (2, 9)

    def loss_at(self, params):
        loss, _ = nc.sequence_loss(self.traj, params, self.hyper,
                                   self.state, self.window)
        return loss

    def test_zero_length_window_zero_gradients(self):
        g = nc.gradients(self.traj, self.params, self.hyper, self.state, (3, 3))
        assert all((a == 0).all() for _, a in g.named_arrays())

    def test_finite_difference_coordinates(self):
        g = nc.gradients(self.traj, self.params, self.hyper,
                         self.state, self.window)
        gdict = dict(g.named_arrays())
        rng = np.random.default_rng(99)
        eps = 1e-4
        names = [n for n, _ in self.params.named_arrays()]
        checked = 0
        worst = 0.0
        for name in names:
            arr = dict(self.params.named_arrays())[name]
            k = max(1, min(24, arr.size))
            for flat in rng.choice(arr.size, size=k, replace=False):
                idx = np.unravel_index(int(flat), arr.shape)
                probe = self.params.copy()
                target = dict(probe.named_arrays())[name]
                orig = target[idx]
                target[idx] = orig + eps
                up = self.loss_at(probe)
                target[idx] = orig - eps
                down = self.loss_at(probe)
                target[idx] = orig
                fd = (up - down) / (2 * eps)
                err = rel_err(gdict[name][idx], fd)
                worst = max(worst, err)
                checked += 1
        assert checked >= 100
        assert worst < 1e-4, f"worst relative error {worst}"

    def test_finite_difference_directions(self):
        g = nc.gradients(self.traj, self.params, self.hyper,
                         self.state, self.window)
        gdict = dict(g.named_arrays())
        rng = np.random.default_rng(7)
        eps = 1e-5
        for trial in range(8):
            dirs = {n: rng.normal(size=a.shape) for n, a in self.params.named_arrays()}
            norm = np.sqrt(sum((d ** 2).sum() for d in dirs.values()))
            dirs = {n: d / norm for n, d in dirs.items()}
            analytic = sum((gdict[n] * d).sum() for n, d in dirs.items())

            def shifted(sign):
                probe = self.params.copy()
                for n, a in probe.named_arrays():
                    a += sign * eps * dirs[n]
                return self.loss_at(probe)

            fd = (shifted(+1) - shifted(-1)) / (2 * eps)
            assert rel_err(analytic, fd) < 1e-4

    def test_gamma_linearity(self):
        def grads_at(gamma):
            return dict(nc.gradients(
                self.traj, self.params, nc.TrainHyper(gamma=gamma),
                self.state, self.window).named_arrays())

        g0, g1, g2 = grads_at(0.0), grads_at(0.3), grads_at(0.6)
        for name in g0:
            lhs = g2[name] - g0[name]
            rhs = 2.0 * (g1[name] - g0[name])
            assert np.allclose(lhs, rhs, atol=1e-10)


class TestOptimizer:
    def test_zero_gradient_fixed_point(self):
        p = nc.init_params(SMALL_ARCH, 23, np.float64)
        zeros = ModelZeros(p)
        out, st = nc.optimizer_step(p, zeros, nc.AdamState(), nc.TrainHyper())
        for (_, a), (_, b) in zip(p.named_arrays(), out.named_arrays()):
            assert np.array_equal(a, b)
        assert st.t == 1

    def test_first_step_bias_corrected_magnitude(self):
        # constant unit gradient: after bias correction the first update is
        # -lr * 1 / (1 + eps) on every coordinate
        p = nc.init_params(SMALL_ARCH, 29, np.float64)
        ones = ModelZeros(p, fill=1.0)
        lr = 5e-4
        out, _ = nc.optimizer_step(p, ones, nc.AdamState(),
                                   nc.TrainHyper(learning_rate=lr))
        expected = lr / (1.0 + nc.ADAM_EPS)
        for (_, a), (_, b) in zip(p.named_arrays(), out.named_arrays()):
            assert np.allclose(a - b, expected, rtol=1e-12)

    def test_purity(self):
        p = nc.init_params(SMALL_ARCH, 31, np.float64)
        g = ModelZeros(p, fill=0.5)
        st = nc.AdamState()
        out1, st1 = nc.optimizer_step(p, g, st, nc.TrainHyper())
        out2, st2 = nc.optimizer_step(p, g, st, nc.TrainHyper())
        for (_, a), (_, b) in zip(out1.named_arrays(), out2.named_arrays()):
            assert np.array_equal(a, b)
        assert st1.t == st2.t == 1


def ModelZeros(p, fill=0.0):
    return nc.ModelParams(
        p.arch,
        [(np.full_like(w, fill), np.full_like(b, fill)) for w, b in p.encoder],
        np.full_like(p.lstm_w, fill), np.full_like(p.lstm_b, fill),
        [(np.full_like(w, fill), np.full_like(b, fill)) for w, b in p.classifier],
        [(np.full_like(w, fill), np.full_like(b, fill)) for w, b in p.predictor])


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        p = nc.init_params(SMALL_ARCH, 37)
        stem = tmp_path / "model"
        nc.save_checkpoint(stem, p, {"note": "test", "seed": 37})
        loaded, meta = nc.load_checkpoint(stem)
        assert meta["seed"] == 37
        for (na, a), (nb, b) in zip(p.named_arrays(), loaded.named_arrays()):
            assert na == nb
            assert np.array_equal(a.astype(np.float32), b)

    def test_stale_version(self, tmp_path):
        import json
        p = nc.init_params(SMALL_ARCH, 1)
        stem = tmp_path / "model"
        nc.save_checkpoint(stem, p)
        doc = json.loads((tmp_path / "model.json").read_text())
        doc["format_version"] = 99
        (tmp_path / "model.json").write_text(json.dumps(doc))
        with pytest.raises(StaleModel):
            nc.load_checkpoint(stem)

    def test_truncated_blob(self, tmp_path):
        p = nc.init_params(SMALL_ARCH, 1)
        stem = tmp_path / "model"
        nc.save_checkpoint(stem, p)
        blob = (tmp_path / "model.bin").read_bytes()
        (tmp_path / "model.bin").write_bytes(blob[:-8])
        with pytest.raises(IoFailure):
            nc.load_checkpoint(stem)

    def test_non_finite_rejected(self, tmp_path):
        p = nc.init_params(SMALL_ARCH, 1)
        p.lstm_w[0, 0] = np.inf
        stem = tmp_path / "model"
        nc.save_checkpoint(stem, p)
        with pytest.raises(IoFailure):
            nc.load_checkpoint(stem)


class TestToyLearning:
    """Loss decreases on a linearly separable two-class stream."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_loss_decreases(self, seed):
        arch = nc.ArchConfig(input_dim=6, encoder=(8,), hidden=8,
                             classifier=(8,), predictor=(8,),
                             param_budget=None)
        rng = np.random.default_rng(100 + seed)
        T, n = 30, 8
        trajs = []
        for k in range(n):
            label = k % 2
            base = 0.25 if label == 0 else 0.75
            obs = np.clip(base + rng.normal(0, 0.05, (T, 6)), 0, 1)
            trajs.append(Traj(obs, label))
        params = nc.init_params(arch, seed, np.float64)
        hyper = nc.TrainHyper(gamma=0.02, learning_rate=3e-3, seed=seed)
        opt = nc.AdamState()
        losses = []
        for epoch in range(15):
            total = 0.0
            for traj in trajs:
                st = nc.zero_state(arch.hidden, dtype=np.float64)
                loss, _ = nc.sequence_loss(traj, params, hyper, st, (0, T))
                g = nc.gradients(traj, params, hyper, st, (0, T))
                params, opt = nc.optimizer_step(params, g, opt, hyper)
                total += loss
            losses.append(total / n)
        assert losses[-1] < losses[0]
        assert np.isfinite(losses).all()
