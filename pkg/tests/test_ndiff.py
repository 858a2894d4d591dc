import numpy as np
import pytest

from cdisent import ndiff
from cdisent.ndiff import (
    Activation,
    AdamState,
    CheckpointFormatError,
    MlpArch,
    NonFiniteError,
    ParamSet,
    ShapeError,
    Tensor,
    adam_step,
    backward,
    decode_checkpoint,
    encode_checkpoint,
    grad_check,
    init_mlp,
    load_checkpoint,
    mlp_forward,
    no_grad,
    save_checkpoint,
)


def make_mlp(seed=0, sizes=(3, 5, 2), dtype=np.float64):
    params = ParamSet(dtype)
    arch = MlpArch(sizes, Activation.TANH, "net")
    init_mlp(params, arch, np.random.default_rng(seed))
    return params, arch


class TestMlp:
    """Forward passes of the MLP helper."""

    def test_zero_weights_give_zero_output(self):
        params = ParamSet(np.float64)
        arch = MlpArch((3, 4, 2), Activation.TANH, "z")
        params.add(arch.weight(0), np.zeros((3, 4)))
        params.add(arch.bias(0), np.zeros(4))
        params.add(arch.weight(1), np.zeros((4, 2)))
        params.add(arch.bias(1), np.zeros(2))
        out = mlp_forward(params, np.random.default_rng(0).normal(size=(5, 3)), arch)
        assert np.array_equal(out.data, np.zeros((5, 2)))

    def test_identity_linear_layer(self):
        params = ParamSet(np.float64)
        arch = MlpArch((2, 2), Activation.TANH, "id")
        params.add(arch.weight(0), np.eye(2))
        params.add(arch.bias(0), np.zeros(2))
        out = mlp_forward(params, np.array([[1.0, 2.0]]), arch)
        assert np.array_equal(out.data, np.array([[1.0, 2.0]]))

    def test_forward_is_deterministic(self):
        params, arch = make_mlp(seed=3)
        x = np.random.default_rng(1).normal(size=(4, 3))
        first = mlp_forward(params, x, arch).data
        second = mlp_forward(params, x, arch).data
        assert first.tobytes() == second.tobytes()

    def test_shape_mismatch_raises(self):
        params, arch = make_mlp()
        with pytest.raises(ShapeError):
            mlp_forward(params, np.zeros((2, 4)), arch)

    def test_duplicate_parameter_name(self):
        params = ParamSet(np.float64)
        params.add("w", np.zeros(2))
        with pytest.raises(ValueError):
            params.add("w", np.zeros(2))


class TestBackward:
    """Reverse-mode gradients."""

    def test_linear_loss_gives_ones(self):
        params = ParamSet(np.float64)
        w = params.add("w", np.array([[1.0, -2.0], [0.5, 3.0]]))
        backward(ndiff.sum_(w), params)
        assert np.array_equal(params.grad("w"), np.ones((2, 2)))

    def test_quadratic_loss_gives_w(self):
        params = ParamSet(np.float64)
        value = np.array([0.3, -1.2, 2.5])
        w = params.add("w", value)
        backward(ndiff.sum_(ndiff.square(w)) * 0.5, params)
        assert np.allclose(params.grad("w"), value, atol=1e-15)

    def test_unused_parameter_gets_zero_gradient(self):
        params = ParamSet(np.float64)
        w = params.add("w", np.ones(2))
        params.add("unused", np.ones(3))
        backward(ndiff.sum_(w), params)
        assert np.array_equal(params.grad("unused"), np.zeros(3))

    def test_non_scalar_loss_raises(self):
        params = ParamSet(np.float64)
        w = params.add("w", np.ones(3))
        with pytest.raises(ShapeError):
            backward(w * 2.0, params)

    def test_mlp_mse_matches_finite_differences(self):
        params, arch = make_mlp(seed=5)
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))

        def loss(p):
            return ndiff.mean(ndiff.square(mlp_forward(p, x, arch) - y))

        assert grad_check(loss, params, 1e-3) < 1e-4

    def test_no_grad_skips_recording(self):
        params = ParamSet(np.float64)
        w = params.add("w", np.ones(2))
        with no_grad():
            out = w * 3.0
        assert not out.requires_grad

    def test_broadcast_gradients_are_summed(self):
        params = ParamSet(np.float64)
        b = params.add("b", np.zeros(3))
        x = Tensor(np.ones((4, 3)))
        backward(ndiff.sum_(x + b), params)
        assert np.array_equal(params.grad("b"), np.full(3, 4.0))


class TestNumericGuards:
    def test_non_finite_tensor_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([1.0, np.nan]))

    def test_log_of_zero_is_clamped(self):
        out = ndiff.log(Tensor(np.array([0.0, 1.0])))
        assert np.isfinite(out.data).all()
        assert out.data[1] == 0.0

    def test_overflow_raises(self):
        with pytest.raises(NonFiniteError):
            ndiff.exp(Tensor(np.array([1e4])))

    def test_matmul_inner_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            ndiff.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestGradCheck:
    """The finite-difference gradient checker."""

    def test_square_at_three(self):
        params = ParamSet(np.float64)
        params.add("w", np.array([3.0]))
        err = grad_check(lambda p: ndiff.sum_(ndiff.square(p["w"])), params, 1e-4)
        assert err < 1e-9

    def test_softplus_sum(self):
        params = ParamSet(np.float64)
        params.add("w", np.random.default_rng(0).normal(size=(3, 4)))
        err = grad_check(lambda p: ndiff.sum_(ndiff.softplus(p["w"])), params, 1e-4)
        assert err < 1e-5

    def test_scaled_gradient_is_detected(self):
        params = ParamSet(np.float64)
        value = np.array([1.5, -0.7, 2.0])
        params.add("w", value)
        wrong = {"w": 2.0 * (2.0 * value)}
        err = grad_check(lambda p: ndiff.sum_(ndiff.square(p["w"])), params, 1e-4, grads=wrong)
        assert err == pytest.approx(0.5, abs=1e-6)

    def test_nonpositive_eps_raises(self):
        params = ParamSet(np.float64)
        params.add("w", np.ones(1))
        with pytest.raises(ValueError):
            grad_check(lambda p: ndiff.sum_(p["w"]), params, 0.0)


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        params, _ = make_mlp(seed=1)
        before = params.state()
        params.zero_grad()
        state = AdamState.create(params, lr=0.1)
        adam_step(params, state)
        for name, value in before.items():
            assert np.array_equal(params.value(name), value)

    def test_first_step_moves_by_learning_rate(self):
        params = ParamSet(np.float64)
        params.add("w", np.array([0.0]))
        params.set_grad("w", np.array([1.0]))
        state = AdamState.create(params, lr=0.1)
        adam_step(params, state)
        assert params.value("w")[0] == pytest.approx(-0.1, rel=1e-6)
        assert state.t == 1

    def test_identical_runs_give_identical_trajectories(self):
        def run():
            params, arch = make_mlp(seed=4)
            x = np.random.default_rng(9).normal(size=(8, 3))
            state = AdamState.create(params, lr=0.05)
            for _ in range(5):
                backward(ndiff.mean(ndiff.square(mlp_forward(params, x, arch))), params)
                adam_step(params, state)
            return encode_checkpoint(params)

        assert run() == run()


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        params, _ = make_mlp(seed=2, dtype=np.float32)
        path = tmp_path / "model.cdpt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.names() == params.names()
        for name in params:
            assert loaded.value(name).tobytes() == params.value(name).tobytes()
        assert encode_checkpoint(loaded) == path.read_bytes()

    def test_bad_magic(self):
        payload = encode_checkpoint(make_mlp(dtype=np.float32)[0])
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(b"XXXX" + payload[4:])

    def test_truncated_payload(self):
        payload = encode_checkpoint(make_mlp(dtype=np.float32)[0])
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(payload[:-3])

    def test_unsupported_version(self):
        payload = bytearray(encode_checkpoint(make_mlp(dtype=np.float32)[0]))
        payload[4] = 99
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(bytes(payload))
