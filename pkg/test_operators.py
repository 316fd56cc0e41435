import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from base_operator import (
    AttentionConfig,
    HeadwiseOperator,
    RepresentativeOperator,
    attention_rank_diagnostic,
    extract_representatives,
    init_representatives_pool,
)
from core.coding_rate import coding_rate, coding_rate_gradient
from core.errors import ConfigError, DimensionMismatch
from core.experiments import diagonal_covariance_tokens, exact_self_expressed, svd_representatives
from core.linalg import inv_psd, softmax_cols, sym_eig
from core.subspaces import SubspaceBank
from operators import (
    OPERATOR_REGISTRY,
    AgentCbsa,
    ChannelCbsa,
    ExactCbsa,
    LinearCbsa,
    Mssa,
    SoftmaxCbsa,
    build_operator,
    cbsa_agent,
    cbsa_channel,
    cbsa_exact,
    cbsa_linear,
    cbsa_softmax,
    contract_exact,
    contract_softmax,
    frozen_residual_step,
    mssa,
    residual_step,
    run_cbsa,
    spectral_gate,
)

D, K, N, M, EPS = 12, 3, 16, 4, 0.5


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def cfg():
    return AttentionConfig(d=D, K=K, m=M, N=N, epsilon=EPS, kappa=1.0)


@pytest.fixture
def bank(rng):
    return SubspaceBank.random(D, K, rng)


@pytest.fixture
def z(rng):
    return rng.standard_normal((D, N))


def _self_cfg(cfg):
    return AttentionConfig(d=cfg.d, K=cfg.K, m=cfg.N, N=cfg.N, epsilon=cfg.epsilon, kappa=cfg.kappa)


# -- configuration and bank ---------------------------------------------------

def test_attention_config_validation():
    with pytest.raises(ConfigError):
        AttentionConfig(d=12, K=5, m=4, N=16)
    with pytest.raises(ConfigError):
        AttentionConfig(d=12, K=3, m=17, N=16)
    with pytest.raises(ConfigError):
        AttentionConfig(d=12, K=3, m=4, N=16, epsilon=0.0)
    assert AttentionConfig(d=12, K=3, m=4, N=16, kappa=-2.0).p == 4


def test_attention_config_for_input_defaults_m_to_p(z, bank):
    cfg = AttentionConfig.for_input(z, bank)
    assert (cfg.d, cfg.K, cfg.m, cfg.N) == (D, K, D // K, N)


def test_subspace_bank_invariants(rng):
    with pytest.raises(DimensionMismatch):
        SubspaceBank((np.eye(4)[:, :2], np.eye(4)[:, :2]))
    with pytest.raises(DimensionMismatch):
        SubspaceBank((np.eye(6)[:, :2], np.eye(6)[:, 2:4]))
    bank = SubspaceBank.random(8, 4, rng)
    assert bank.incoherence() < 1e-12
    perturbed = SubspaceBank(tuple(u + 1e-3 for u in bank.bases), tol=None)
    assert perturbed.incoherence() > 1e-4
    with pytest.raises(ValueError):
        bank.bases[0][0, 0] = 1.0


# -- pooling and extraction -----------------------------------------------------

def test_pool_examples(rng):
    z = rng.standard_normal((3, 5))
    assert_allclose(init_representatives_pool(z, 5), z)
    constant = np.tile(np.array([[1.0], [-2.0], [0.5]]), (1, 5))
    assert_allclose(init_representatives_pool(constant, 3), constant[:, :3])

    pooled = init_representatives_pool(z, 2)
    assert_allclose(pooled[:, 0], z[:, :3].mean(axis=1))
    assert_allclose(pooled[:, 1], z[:, 3:].mean(axis=1))

    with pytest.raises(DimensionMismatch):
        init_representatives_pool(z, 6)


def test_extraction_is_column_stochastic_and_satisfies_constraint(z, bank):
    reps = extract_representatives(z, init_representatives_pool(z, M), bank)
    for u, a, q_bar in zip(bank.bases, reps.coeffs, reps.projections):
        assert a.shape == (N, M)
        assert np.all(a >= 0)
        assert_allclose(a.sum(axis=0), np.ones(M), atol=1e-12)
        assert_allclose(q_bar, (u.T @ z) @ a, atol=1e-12)


def test_extraction_degenerate_cases(rng, bank):
    uniform = extract_representatives(rng.standard_normal((D, 5)), np.zeros((D, 3)), bank)
    for a in uniform.coeffs:
        assert_allclose(a, np.full((5, 3), 0.2))

    token = rng.standard_normal((D, 1))
    single = extract_representatives(token, rng.standard_normal((D, 3)), bank)
    for u, a, q_bar in zip(bank.bases, single.coeffs, single.projections):
        assert_allclose(a, np.ones((1, 3)))
        assert_allclose(q_bar, np.tile(u.T @ token, (1, 3)))


# -- contractions ---------------------------------------------------------------

def test_contract_exact_examples(rng, cfg):
    assert_allclose(contract_exact(np.zeros((4, 4)), cfg), np.zeros((4, 4)))
    unit = AttentionConfig(d=4, K=2, m=2, N=2, epsilon=1.0)
    assert_allclose(contract_exact(np.eye(2), unit), 0.5 * np.eye(2))

    q_bar = rng.standard_normal((4, 4))
    p, m = q_bar.shape
    scale = m * cfg.epsilon ** 2 / p
    assert_allclose(contract_exact(q_bar, cfg), scale * coding_rate_gradient(q_bar, cfg), atol=1e-10)


def test_contract_softmax_examples(rng):
    column = rng.standard_normal((4, 1))
    assert_allclose(contract_softmax(column), column)

    repeated = np.tile(column, (1, 3))
    assert_allclose(contract_softmax(repeated), repeated, atol=1e-14)

    q_bar = rng.standard_normal((4, 6))
    gram = q_bar.T @ q_bar
    weights = np.exp(gram - gram.max(axis=0)) / np.exp(gram - gram.max(axis=0)).sum(axis=0)
    assert_allclose(contract_softmax(q_bar), q_bar @ weights, atol=1e-12)


# -- full operators -------------------------------------------------------------

@pytest.mark.parametrize("fn", [cbsa_exact, cbsa_softmax, mssa, cbsa_linear, cbsa_channel, cbsa_agent])
def test_zero_tokens_map_to_zero(fn, cfg, bank):
    assert_allclose(fn(np.zeros((D, N)), bank, cfg), np.zeros((D, N)), atol=1e-15)


def test_exact_self_expressed_single_head(rng):
    d, n, eps = 5, 7, 0.5
    z = rng.standard_normal((d, n))
    cfg = AttentionConfig(d=d, K=1, m=n, N=n, epsilon=eps)
    bank = SubspaceBank.identity(d)
    out = ExactCbsa(cfg).run_with(z, bank, [z], [np.eye(n)]).output
    expected = z @ np.linalg.inv(np.eye(n) + d / (n * eps ** 2) * z.T @ z)
    assert_allclose(out, expected, atol=1e-10)


def test_exact_pipeline_and_gradient_identity(z, bank, cfg):
    result = ExactCbsa(cfg).run(z, bank)
    reps = result.representatives
    by_hand = np.zeros_like(z)
    via_gradient = np.zeros_like(z)
    for u, q_bar, a in zip(bank.bases, reps.projections, reps.coeffs):
        p, m = q_bar.shape
        alpha = p / (m * EPS ** 2)
        by_hand += u @ (q_bar @ inv_psd(np.eye(m) + alpha * q_bar.T @ q_bar)) @ a.T
        via_gradient += u @ ((m * EPS ** 2 / p) * coding_rate_gradient(q_bar, cfg)) @ a.T
    assert_allclose(result.output, by_hand, atol=1e-10)
    assert_allclose(result.output, via_gradient, atol=1e-9)
    assert_allclose(cbsa_exact(z, bank, cfg), result.output)


def test_softmax_matches_loop_form(z, bank, cfg):
    q0 = init_representatives_pool(z, M)
    expected = np.zeros_like(z)
    for u in bank.bases:
        z_bar, q0_bar = u.T @ z, u.T @ q0
        a = softmax_cols(z_bar.T @ q0_bar)
        q_bar = z_bar @ a
        expected += u @ (q_bar @ softmax_cols(q_bar.T @ q_bar)) @ a.T
    assert_allclose(cbsa_softmax(z, bank, cfg), expected, atol=1e-10)


def test_softmax_self_expressed_equals_mssa(z, bank, cfg):
    self_cfg = _self_cfg(cfg)
    out = SoftmaxCbsa(self_cfg).run_with(z, bank, bank.project(z), [np.eye(N)] * K).output
    assert_allclose(out, mssa(z, bank, cfg), atol=1e-10)


def test_mssa_single_token_reconstructs(rng, bank):
    token = rng.standard_normal((D, 1))
    cfg = AttentionConfig(d=D, K=K, m=1, N=1)
    assert_allclose(mssa(token, bank, cfg), token, atol=1e-12)


def test_linear_line_data_is_scaled_by_gate(rng):
    u = np.array([1.0, 2.0, 2.0]) / 3.0
    t = rng.standard_normal(10)
    z = np.outer(u, t)
    cfg = AttentionConfig(d=3, K=1, m=3, N=10, epsilon=EPS)
    out = cbsa_linear(z, SubspaceBank.identity(3), cfg)
    gain = EPS ** 2 / (EPS ** 2 + float(t @ t))
    assert_allclose(out, gain * z, atol=1e-12)


def test_linear_passes_null_directions_unchanged(rng):
    cfg = AttentionConfig(d=3, K=1, m=3, N=10, epsilon=EPS)
    op = LinearCbsa(cfg)
    z_bar = np.outer([1.0, 0.0, 0.0], rng.standard_normal(10))
    eig = sym_eig(z_bar @ z_bar.T)
    gate = (eig.eigenvectors * spectral_gate(eig.eigenvalues, EPS)) @ eig.eigenvectors.T
    assert_allclose(gate @ np.array([0.0, 1.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)
    assert_allclose(op.head(0, z_bar).output, gate @ z_bar, atol=1e-12)


def test_exact_with_svd_representatives_equals_linear(z, bank, cfg):
    q_bars, coeffs = svd_representatives(z, bank)
    exact = ExactCbsa(cfg).run_with(z, bank, q_bars, coeffs).output
    assert_allclose(exact, cbsa_linear(z, bank, cfg), atol=1e-8)


def test_svd_representatives_need_a_full_rank_side(rng, bank):
    with pytest.raises(DimensionMismatch):
        svd_representatives(rng.standard_normal((D, D // K - 1)), bank)


def test_exact_self_expressed_oracle_matches_explicit_inverse(z, bank, cfg):
    p = D // K
    expected = np.zeros_like(z)
    for u, z_bar in zip(bank.bases, bank.project(z)):
        expected += u @ z_bar @ np.linalg.inv(np.eye(N) + p / (N * EPS ** 2) * z_bar.T @ z_bar)
    assert_allclose(exact_self_expressed(z, bank, cfg), expected, atol=1e-10)


def test_channel_gain_limits(rng):
    cfg = AttentionConfig(d=3, K=1, m=3, N=6, epsilon=EPS)
    z = 1e-3 * rng.standard_normal((3, 6))
    z[0] *= 1e6
    head = ChannelCbsa(cfg).head(0, z)
    gains = head.output[:, 0] / z[:, 0]
    assert gains[0] < 1e-6
    assert_allclose(gains[1:], 1.0, atol=1e-4)


def test_channel_equals_linear_for_diagonal_covariance(rng, bank, cfg):
    z = diagonal_covariance_tokens(bank, N, rng)
    for z_bar in bank.project(z):
        cov = z_bar @ z_bar.T
        assert_allclose(cov - np.diag(np.diag(cov)), 0.0, atol=1e-12)
    assert_allclose(cbsa_channel(z, bank, cfg), cbsa_linear(z, bank, cfg), atol=1e-10)


def test_agent_pipeline(z, bank, cfg):
    result = AgentCbsa(cfg).run(z, bank)
    reps = result.representatives
    expected = sum(u @ q_bar @ a.T for u, q_bar, a in zip(bank.bases, reps.projections, reps.coeffs))
    assert_allclose(result.output, expected, atol=1e-12)
    assert_allclose(cbsa_agent(z, bank, cfg), result.output)

    identity = AgentCbsa(_self_cfg(cfg)).run_with(z, bank, bank.project(z), [np.eye(N)] * K)
    assert_allclose(identity.output, z, atol=1e-12)


# -- properties -----------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(OPERATOR_REGISTRY))
def test_head_contributions_stay_in_their_subspace(name, z, bank, cfg):
    result = run_cbsa(z, bank, cfg, name)
    for head in result.heads:
        u = bank.bases[head.index]
        contribution = u @ head.output
        residue = contribution - u @ (u.T @ contribution)
        assert np.linalg.norm(residue) < 1e-9


@pytest.mark.parametrize("name", ["exact", "softmax", "agent"])
def test_permutation_equivariance_with_self_pooling(name, rng, z, bank, cfg):
    self_cfg = _self_cfg(cfg)
    perm = rng.permutation(N)
    out = run_cbsa(z, bank, self_cfg, name).output
    permuted = run_cbsa(z[:, perm], bank, self_cfg, name).output
    assert_allclose(permuted, out[:, perm], atol=1e-10)


def test_spectral_gate_range_and_monotonicity():
    lam = np.array([0.0, 1e-3, 0.1, 1.0, 10.0, 1e6])
    gains = spectral_gate(lam, EPS)
    assert gains[0] == 1.0
    assert np.all(gains > 0) and np.all(gains <= 1.0)
    assert np.all(np.diff(gains) < 0)


def test_attention_rank_diagnostic(z, bank):
    assert attention_rank_diagnostic(np.eye(6)) == 6
    assert attention_rank_diagnostic(np.full((8, 3), 1.0 / 8.0)) == 1
    reps = extract_representatives(z, init_representatives_pool(z, M), bank)
    assert all(attention_rank_diagnostic(a) == M for a in reps.coeffs)


# -- residual step --------------------------------------------------------------

def test_residual_step_with_zero_kappa_is_identity(z, bank, cfg):
    still = AttentionConfig(d=D, K=K, m=M, N=N, epsilon=EPS, kappa=0.0)
    assert_array_equal(residual_step(z, bank, still, "softmax"), z)


def test_residual_step_accepts_every_selector(z, bank, cfg):
    expected = z - cfg.kappa * cbsa_softmax(z, bank, cfg)
    assert_allclose(residual_step(z, bank, cfg, "softmax"), expected)
    assert_allclose(residual_step(z, bank, cfg, SoftmaxCbsa), expected)
    assert_allclose(residual_step(z, bank, cfg, SoftmaxCbsa(cfg)), expected)
    assert_allclose(residual_step(z, bank, cfg, cbsa_softmax), expected)
    with pytest.raises(ConfigError):
        build_operator("unknown", cfg)


def _representative_rate(z, bank, coeffs, cfg):
    return sum(coding_rate((u.T @ z) @ a, cfg) for u, a in zip(bank.bases, coeffs))


@pytest.mark.parametrize("kappa,sign", [(1e-3, -1.0), (-1e-3, 1.0)])
def test_frozen_step_descends_or_ascends(kappa, sign):
    rng = np.random.default_rng(99)
    for _ in range(10):
        bank = SubspaceBank.random(D, K, rng)
        z = rng.standard_normal((D, N))
        cfg = AttentionConfig(d=D, K=K, m=M, N=N, epsilon=EPS, kappa=kappa)
        coeffs = extract_representatives(z, init_representatives_pool(z, M), bank).coeffs
        before = _representative_rate(z, bank, coeffs, cfg)
        after = _representative_rate(frozen_residual_step(z, bank, cfg, coeffs), bank, coeffs, cfg)
        assert np.sign(after - before) == sign


def test_frozen_step_requires_representative_operator(z, bank, cfg):
    with pytest.raises(ConfigError):
        residual_step(z, bank, cfg, "mssa", coeffs=[np.eye(N)] * K)


def test_workers_do_not_change_results(z, bank, cfg):
    for cls in (ExactCbsa, SoftmaxCbsa, Mssa, LinearCbsa):
        assert_array_equal(cls(cfg, workers=3)(z, bank), cls(cfg)(z, bank))


def test_shape_checks(z, bank, cfg):
    with pytest.raises(DimensionMismatch):
        cbsa_softmax(z[:, :5], bank, cfg)
    with pytest.raises(DimensionMismatch):
        cbsa_softmax(z, SubspaceBank.random(D, 4, np.random.default_rng(0)), cfg)


def test_out_bases_replace_back_projection(z, bank, cfg):
    swapped = tuple(reversed(bank.bases))
    result = Mssa(cfg, out_bases=swapped).run(z, bank)
    expected = sum(swapped[h.index] @ h.output for h in result.heads)
    assert_allclose(result.output, expected, atol=1e-12)


def test_every_registered_operator_has_one_concrete_hook():
    for name, cls in OPERATOR_REGISTRY.items():
        assert not getattr(cls, "__abstractmethods__", None), name
        if issubclass(cls, RepresentativeOperator):
            assert not hasattr(cls, "head"), name
        else:
            assert issubclass(cls, HeadwiseOperator), name
    with pytest.raises(TypeError):
        RepresentativeOperator(AttentionConfig(d=D, K=K, m=M, N=N))
