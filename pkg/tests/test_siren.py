import numpy as np
import pytest

from sdfscat import difftape as dt
from sdfscat import siren
from sdfscat.errors import FormatError

from oracles import finite_difference


class TestInit:
    def test_deterministic(self):
        a = siren.init(siren.SirenConfig(), 42)
        b = siren.init(siren.SirenConfig(), 42)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            assert np.array_equal(ba, bb)

    def test_different_seeds_differ(self):
        a = siren.init(siren.SirenConfig(), 0)
        b = siren.init(siren.SirenConfig(), 1)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_parameter_count_default_config(self):
        # (2+1)*128 + 2*(128+1)*128 + (128+1)*1 for the 2-hidden-layer,
        # 128-feature network (the paper-scale ~33.5k configuration)
        params = siren.init(siren.SirenConfig(), 0)
        assert params.n_params == 33537

    def test_weight_bounds(self):
        cfg = siren.SirenConfig()
        params = siren.init(cfg, 7)
        shapes = cfg.layer_shapes()
        for l, (w, (fan_in, _)) in enumerate(zip(params.weights, shapes)):
            bound = 1.0 / fan_in if l == 0 else np.sqrt(6.0 / fan_in) / cfg.omega0
            assert np.all(np.abs(w) <= bound)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            siren.SirenConfig(hidden_layers=0)
        with pytest.raises(ValueError):
            siren.SirenConfig(omega0=0.0)


class TestEval:
    def test_zero_weights_constant_output(self):
        cfg = siren.SirenConfig(hidden_layers=1, hidden_features=4)
        params = siren.init(cfg, 0)
        for w in params.weights:
            w[:] = 0.0
        for b in params.biases:
            b[:] = 0.0
        params.biases[-1][:] = 0.75
        out = siren.evaluate(params, (0.3, -0.8))
        assert out.value == 0.75
        assert out.gradient == (0.0, 0.0)
        assert out.laplacian == 0.0

    def test_single_unit_sine(self):
        # one hidden unit arranged so eta(x, y) = sin(x)
        cfg = siren.SirenConfig(hidden_layers=1, hidden_features=1, omega0=1.0)
        params = siren.init(cfg, 0)
        params.weights[0][:] = [[1.0], [0.0]]
        params.biases[0][:] = 0.0
        params.weights[1][:] = [[np.pi / 2.0]]  # sin(sin(x) * pi/2) ... avoid
        # keep the middle layer as the identity-on-value trick is not exact;
        # instead bypass it: weight 1, bias pi/2 turns sin into ~cos. Use the
        # direct route: make the hidden layer transparent via small-angle is
        # inexact, so check against the composed closed form instead.
        params.biases[1][:] = 0.0
        params.weights[2][:] = [[1.0]]
        params.biases[2][:] = 0.0
        x = 0.6
        out = siren.evaluate(params, (x, 0.2))
        s = np.sin(x)
        inner = np.sin(np.pi / 2.0 * s)
        assert out.value == pytest.approx(inner, rel=1e-12)
        d_inner = np.cos(np.pi / 2.0 * s) * (np.pi / 2.0) * np.cos(x)
        assert out.gradient[0] == pytest.approx(d_inner, rel=1e-12)
        assert out.gradient[1] == 0.0

    def test_spatial_derivatives_match_fd(self):
        rng = np.random.default_rng(2)
        cfg = siren.SirenConfig(hidden_layers=1, hidden_features=8)
        for seed in range(5):
            params = siren.init(cfg, seed)
            x, y = rng.uniform(-1, 1, 2)
            out = siren.evaluate(params, (x, y))
            h = 1e-5
            fx = (siren.evaluate(params, (x + h, y)).value
                  - siren.evaluate(params, (x - h, y)).value) / (2 * h)
            fy = (siren.evaluate(params, (x, y + h)).value
                  - siren.evaluate(params, (x, y - h)).value) / (2 * h)
            lap = (
                siren.evaluate(params, (x + h, y)).value
                + siren.evaluate(params, (x - h, y)).value
                + siren.evaluate(params, (x, y + h)).value
                + siren.evaluate(params, (x, y - h)).value
                - 4 * siren.evaluate(params, (x, y)).value
            ) / (h * h)
            assert out.gradient[0] == pytest.approx(fx, rel=1e-5, abs=1e-8)
            assert out.gradient[1] == pytest.approx(fy, rel=1e-5, abs=1e-8)
            assert out.laplacian == pytest.approx(lap, rel=1e-4, abs=1e-4)

    def test_parameter_gradients_match_fd(self):
        """d(value)/dtheta, d(|grad|)/dtheta, d(lap)/dtheta on a 2x8 net."""
        cfg = siren.SirenConfig(hidden_layers=2, hidden_features=8)
        params = siren.init(cfg, 3)
        px = np.array([0.31, -0.44])
        py = np.array([-0.11, 0.62])
        tape = dt.Tape()

        def run(kind):
            tape.reset()
            bound = siren.BoundSiren(params, tape)
            v, gx, gy, lap = bound.eval_batch(px, py)
            if kind == "value":
                expr = dt.total(v)
            elif kind == "gradnorm":
                expr = dt.total(dt.sqrt(gx * gx + gy * gy))
            else:
                expr = dt.total(lap)
            return bound, expr

        for kind in ("value", "gradnorm", "lap"):
            bound, expr = run(kind)
            got = bound.gradient_flat(dt.backward(expr))
            arrays = []
            for w, b in zip(params.weights, params.biases):
                arrays.append(w)
                arrays.append(b)
            fd = finite_difference(
                lambda: float(dt.value_of(run(kind)[1])), arrays
            )
            fd_flat = np.concatenate([g.ravel() for g in fd])
            denom = max(1e-6, float(np.max(np.abs(fd_flat))))
            assert np.max(np.abs(got - fd_flat)) / denom <= 1e-5

    def test_batch_matches_single(self):
        params = siren.init(siren.SirenConfig(hidden_layers=1, hidden_features=8), 0)
        pts = np.random.default_rng(0).uniform(-1, 1, (10, 2))
        v, gx, gy, lap = siren.eval_batch(params, pts[:, 0], pts[:, 1])
        for i, (x, y) in enumerate(pts):
            single = siren.evaluate(params, (x, y))
            assert v[i] == pytest.approx(single.value, rel=1e-14)
            assert gx[i] == pytest.approx(single.gradient[0], rel=1e-12, abs=1e-14)
            assert lap[i] == pytest.approx(single.laplacian, rel=1e-12, abs=1e-13)

    def test_values_only_matches_eval_batch(self):
        params = siren.init(siren.SirenConfig(), 1)
        pts = np.random.default_rng(1).uniform(-1, 1, (50, 2))
        v, _, _, _ = siren.eval_batch(params, pts[:, 0], pts[:, 1])
        assert np.array_equal(siren.values_only(params, pts[:, 0], pts[:, 1]), v)


class TestLaplacianAgainstFullHessian:
    def test_trace_of_hessian(self):
        rng = np.random.default_rng(8)
        cfg = siren.SirenConfig(hidden_layers=1, hidden_features=6, omega0=5.0)
        failures = 0
        for trial in range(100):
            params = siren.init(cfg, trial)
            x, y = rng.uniform(-0.8, 0.8, 2)
            h = 3e-4
            f = lambda a, b: siren.evaluate(params, (a, b)).value
            dxx = (f(x + h, y) - 2 * f(x, y) + f(x - h, y)) / h**2
            dyy = (f(x, y + h) - 2 * f(x, y) + f(x, y - h)) / h**2
            lap = siren.evaluate(params, (x, y)).laplacian
            if abs(lap - (dxx + dyy)) > 1e-4 * max(1.0, abs(lap)):
                failures += 1
        assert failures == 0


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path):
        params = siren.init(siren.SirenConfig(hidden_layers=2, hidden_features=16), 5)
        path = tmp_path / "net.params"
        siren.save(params, path)
        loaded = siren.load(path)
        assert loaded.config == params.config
        for a, b in zip(params.weights, loaded.weights):
            assert np.array_equal(a, b)
        for a, b in zip(params.biases, loaded.biases):
            assert np.array_equal(a, b)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.params"
        path.write_text("nonsense header\n")
        with pytest.raises(FormatError) as exc:
            siren.load(path)
        assert exc.value.line == 1

    def test_truncated_file(self, tmp_path):
        params = siren.init(siren.SirenConfig(hidden_layers=1, hidden_features=4), 0)
        path = tmp_path / "trunc.params"
        siren.save(params, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(FormatError):
            siren.load(path)

    def test_wrong_value_count(self, tmp_path):
        params = siren.init(siren.SirenConfig(hidden_layers=1, hidden_features=4), 0)
        path = tmp_path / "short.params"
        siren.save(params, path)
        lines = path.read_text().splitlines()
        lines[1] = " ".join(lines[1].split()[:-1])  # drop one weight
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError) as exc:
            siren.load(path)
        assert exc.value.line == 2

    def test_bad_float(self, tmp_path):
        params = siren.init(siren.SirenConfig(hidden_layers=1, hidden_features=4), 0)
        path = tmp_path / "badfloat.params"
        siren.save(params, path)
        lines = path.read_text().splitlines()
        parts = lines[2].split()
        parts[0] = "oops"
        lines[2] = " ".join(parts)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError) as exc:
            siren.load(path)
        assert exc.value.line == 3


class TestFlatViews:
    def test_flat_round_trip(self):
        params = siren.init(siren.SirenConfig(hidden_layers=1, hidden_features=8), 0)
        flat = params.flat()
        assert flat.size == params.n_params
        again = params.with_flat(flat)
        for a, b in zip(params.weights, again.weights):
            assert np.array_equal(a, b)

    def test_with_flat_wrong_size(self):
        params = siren.init(siren.SirenConfig(hidden_layers=1, hidden_features=8), 0)
        with pytest.raises(ValueError):
            params.with_flat(np.zeros(params.n_params + 1))
