import numpy as np
import pytest
from scipy.integrate import quad

from partdiff.errors import ContractError, NumericalError
from partdiff.sde import DiffusionSchedule


@pytest.fixture
def schedule():
    return DiffusionSchedule(sigma=25.0, T=1.0)


def quadrature_variance(sigma, t):
    """Independent oracle: integrate g(s)^2 = sigma**(2s) numerically."""
    val, _ = quad(lambda s: sigma ** (2.0 * s), 0.0, t)
    return val


def test_kernel_variance_at_zero(schedule):
    assert schedule.kernel_variance(0.0) == 0.0


@pytest.mark.parametrize(
    "t,expected",
    [
        (1.0, 96.928),  # frozen from the quadrature oracle
        (0.5, 3.728),
    ],
)
def test_kernel_variance_matches_quadrature(schedule, t, expected):
    analytic = schedule.kernel_variance(t)
    assert analytic == pytest.approx(expected, abs=1e-3)
    assert analytic == pytest.approx(quadrature_variance(25.0, t), abs=1e-6)


def test_kernel_variance_monotone_on_grid(schedule):
    grid = np.linspace(0.0, 1.0, 1000)
    vals = schedule.kernel_variance(grid)
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) > 0)


def test_kernel_variance_rejects_out_of_range(schedule):
    with pytest.raises(ContractError):
        schedule.kernel_variance(-0.01)
    with pytest.raises(ContractError):
        schedule.kernel_variance(1.01)


def test_invalid_schedule_parameters():
    with pytest.raises(ContractError):
        DiffusionSchedule(sigma=1.0)
    with pytest.raises(ContractError):
        DiffusionSchedule(T=0.0)


def test_perturb_at_zero_is_identity(schedule):
    rng = np.random.default_rng(3)
    q0 = rng.standard_normal((4, 6))
    qt, z = schedule.perturb(q0, 0.0, rng)
    assert np.array_equal(qt, q0)
    assert z.shape == q0.shape


def test_perturb_variance_matches_kernel(schedule):
    # 1e5 per-coordinate draws at each time; chi-square concentration
    # puts the sample variance well within 5%
    rng = np.random.default_rng(11)
    q0 = np.zeros((16667, 6))
    for t in (0.25, 0.5, 0.75, 1.0):
        qt, _ = schedule.perturb(q0, t, rng)
        ratio = qt.var() / schedule.kernel_variance(t)
        assert abs(ratio - 1.0) < 0.05


def test_perturb_shift_independent_of_origin(schedule):
    rng_a = np.random.default_rng(5)
    rng_b = np.random.default_rng(5)
    q_a = np.zeros((2000, 6))
    q_b = np.full((2000, 6), 7.5)
    da = schedule.perturb(q_a, 0.6, rng_a)[0] - q_a
    db = schedule.perturb(q_b, 0.6, rng_b)[0] - q_b
    assert np.allclose(da, db, atol=1e-12)  # same stream, same displacement
    rng_c = np.random.default_rng(6)
    dc = schedule.perturb(q_b, 0.6, rng_c)[0] - q_b
    assert abs(dc.var() / da.var() - 1.0) < 0.05  # two-sample variance check


def test_perturb_deterministic_under_seed(schedule):
    q0 = np.ones((3, 6))
    out1 = schedule.perturb(q0, 0.7, np.random.default_rng(9))
    out2 = schedule.perturb(q0, 0.7, np.random.default_rng(9))
    assert np.array_equal(out1[0], out2[0])
    assert np.array_equal(out1[1], out2[1])


def test_perturb_rejects_nonfinite(schedule):
    with pytest.raises(NumericalError):
        schedule.perturb(np.array([[np.nan] * 6]), 0.5, np.random.default_rng(0))


def test_forward_simulation_equivalence(schedule):
    # Euler-Maruyama integration of dQ = sigma**t dW with 1e4 steps;
    # terminal variance must match the closed form within 5%.
    rng = np.random.default_rng(17)
    n_steps, n_paths = 10_000, 20_000
    dt = schedule.T / n_steps
    acc = np.zeros(n_paths)
    for k in range(n_steps):
        g = schedule.diffusion_coeff(k * dt)
        acc += g * np.sqrt(dt) * rng.standard_normal(n_paths)
    assert abs(acc.var() / schedule.kernel_variance(schedule.T) - 1.0) < 0.05


def test_prior_sample_statistics(schedule):
    rng = np.random.default_rng(23)
    draw = schedule.prior_sample(16667, rng)
    assert draw.shape == (16667, 6)
    assert abs(draw.var() / schedule.kernel_variance(1.0) - 1.0) < 0.05


def test_prior_sample_rejects_zero_parts(schedule):
    with pytest.raises(ContractError):
        schedule.prior_sample(0, np.random.default_rng(0))


def test_prior_sample_reproducible(schedule):
    a = schedule.prior_sample(5, np.random.default_rng(4))
    b = schedule.prior_sample(5, np.random.default_rng(4))
    assert np.array_equal(a, b)
