import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_ident.errors import CaseNotApplicable, DomainError, InvalidRegion, NoValidBetaFound
from spatial_ident.forge import (
    CONSTRUCTIONS,
    EquivalenceCertificate,
    bivariate_rho0_alternative,
    bivariate_rho0_parameters,
    car_fullyconnected_alternative,
    car_phi0_alternative,
    forge,
    leroux_equal_lambda_alternative,
    leroux_pars_alternative,
    leroux_rho0_alternative,
    lmc_alternative,
)
from spatial_ident.graph import complete_graph, ring_graph
from spatial_ident.mc import loglik, sample
from spatial_ident.models import (
    BivariateParams,
    CarSPParams,
    LerouxParams,
    LmcParams,
    car_joint_blocks,
    observed_moments,
)
from spatial_ident.specfun import CovFamily

from factories import hexagon, random_points


def car(**kw):
    base = dict(tau_u=1.0, tau_z=1.0, phi_u=0.3, phi_z=0.5, rho=0.4, sigma2_eps=0.5, beta=1.0)
    base.update(kw)
    return CarSPParams(**base)


def leroux(**kw):
    base = dict(sigma_u=1.0, sigma_z=1.0, lambda_u=0.4, lambda_z=0.4, rho=0.0, sigma2_eps=0.5, beta=1.0,
                lambda_uz=0.2)
    base.update(kw)
    return LerouxParams(**base)


def lmc(**kw):
    base = dict(a=(1.0, 0.5), b=(0.4, -0.3), phi=(1.0, 0.4), family=CovFamily.exponential(), sigma2_eps=0.5, beta=1.0)
    base.update(kw)
    return LmcParams(**base)


def biv(**kw):
    base = dict(sigma_u=1.2, sigma_z=0.8, psi_u=1.0, psi_z=1.0, psi_uz=1.0, rho=0.0, sigma2_eps=0.5, beta=1.0)
    base.update(kw)
    return BivariateParams(**base)


# CAR, phi_u = 0


def test_car_phi0_example():
    p = car(phi_u=0.0, rho=0.0, tau_u=2.0, tau_z=0.5)
    cert = car_phi0_alternative(p, ring_graph(6), delta=2.0, zeta=1)
    assert cert.alternative.rho == pytest.approx(math.sqrt(0.5))
    assert cert.alternative.beta == pytest.approx(p.beta - math.sqrt(p.tau_z / p.tau_u))
    assert cert.max_moment_discrepancy <= 1e-10
    assert cert.is_certificate


def test_car_phi0_degenerate_and_boundary():
    p = car(phi_u=0.0, rho=0.4)
    # zeta sqrt(delta - (1 - rho^2)) = rho  <=>  delta = 1
    cert = car_phi0_alternative(p, ring_graph(6), delta=1.0, zeta=1)
    assert cert.beta_gap < 1e-12 and not cert.is_certificate
    assert any("degenerate" in n for n in cert.notes)
    with pytest.raises(InvalidRegion):
        car_phi0_alternative(p, ring_graph(6), delta=1 - 0.4**2)
    with pytest.raises(CaseNotApplicable):
        car_phi0_alternative(car(), ring_graph(6))


@given(st.floats(0.3, 3), st.floats(0.3, 3), st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-3, 3),
       st.integers(3, 10))
@settings(max_examples=50, deadline=None)
def test_car_phi0_default_matches(tau_u, tau_z, phi_z, rho, beta, n):
    p = car(phi_u=0.0, tau_u=tau_u, tau_z=tau_z, phi_z=phi_z, rho=rho, beta=beta)
    cert = car_phi0_alternative(p, ring_graph(n))
    assert cert.is_certificate
    assert cert.max_moment_discrepancy <= 1e-8


# CAR, complete graph


def test_car_fullyconnected_identity_at_b1():
    cert = car_fullyconnected_alternative(car(), complete_graph(6), b=1.0)
    assert cert.alternative == cert.original and cert.beta_gap == 0.0
    assert not cert.is_certificate


def test_car_fullyconnected_example():
    W = complete_graph(6)
    cert = car_fullyconnected_alternative(car(), W, b=1.05)
    assert cert.beta_gap > 0
    assert cert.max_moment_discrepancy <= 1e-9
    # independent check through dense 12 x 12 inversion
    m0 = car_joint_blocks(cert.original, W).moments()
    m1 = car_joint_blocks(cert.alternative, W).moments()
    assert m0.max_abs_discrepancy(m1) <= 1e-9


def test_car_fullyconnected_default_reaches_target():
    cert = car_fullyconnected_alternative(car(), complete_graph(6))
    assert cert.beta_gap >= 0.1 and cert.is_certificate


def test_car_fullyconnected_invalid_region():
    with pytest.raises(InvalidRegion):
        car_fullyconnected_alternative(car(phi_u=0.5), complete_graph(6), b=2.5)
    with pytest.raises(CaseNotApplicable):
        car_fullyconnected_alternative(car(), ring_graph(6))


# Leroux


def test_leroux_equal_lambda_examples():
    W = ring_graph(6)
    p = leroux(rho=0.5, lambda_u=0.3, lambda_z=0.6, lambda_uz=0.6)
    cert = leroux_equal_lambda_alternative(p, W)
    assert cert.alternative.beta == pytest.approx(p.beta + 1.0)
    assert cert.max_moment_discrepancy <= 1e-14
    cert = leroux_equal_lambda_alternative(p.replace(rho=-0.3), W)
    assert cert.alternative.beta == pytest.approx(p.beta - 0.6)
    with pytest.raises(CaseNotApplicable):
        leroux_equal_lambda_alternative(p.replace(rho=0.0), W)


def test_leroux_rho0_case1():
    p = leroux()
    cert = leroux_rho0_alternative(p, ring_graph(6), case=1, rho_tilde=0.6)
    assert cert.alternative.sigma_u**2 == pytest.approx(p.sigma_u**2 / (1 - 0.36))
    assert cert.is_certificate and cert.max_moment_discrepancy <= 1e-12


def test_leroux_rho0_case2():
    p = leroux(lambda_u=0.5, lambda_z=0.0)
    cert = leroux_rho0_alternative(p, ring_graph(6), case=2, rho_tilde=0.5)
    assert cert.alternative.sigma2_eps == pytest.approx(p.sigma2_eps + 0.25 * p.sigma_u**2)
    assert cert.is_certificate and cert.max_moment_discrepancy <= 1e-12


def test_leroux_rho0_case3():
    p = leroux(lambda_u=0.0, lambda_z=0.6)
    cert = leroux_rho0_alternative(p, ring_graph(6), case=3)
    alt = cert.alternative
    assert alt.lambda_u == p.lambda_z and alt.rho == 1.0
    assert alt.sigma2_eps == pytest.approx(p.sigma_u**2 + p.sigma2_eps)
    assert cert.is_certificate and cert.max_moment_discrepancy <= 1e-12


def test_leroux_rho0_wrong_case():
    with pytest.raises(CaseNotApplicable):
        leroux_rho0_alternative(leroux(lambda_u=0.3, lambda_z=0.6), ring_graph(6))
    with pytest.raises(CaseNotApplicable):
        leroux_rho0_alternative(leroux(), ring_graph(6), case=3)


def test_leroux_pars_examples():
    W = ring_graph(6)
    p = leroux(lambda_uz=None, rho=0.2)
    cert = leroux_pars_alternative(p, W, rho_tilde=0.7)
    assert cert.is_certificate and cert.max_moment_discrepancy <= 1e-12
    alt = cert.alternative
    assert (1 - alt.rho**2) * alt.sigma_u**2 == pytest.approx((1 - p.rho**2) * p.sigma_u**2)
    q = leroux(lambda_uz=None, lambda_u=0.0, lambda_z=0.5)
    cert = leroux_pars_alternative(q, W)
    assert cert.alternative.rho == 1.0
    assert cert.alternative.sigma2_eps == pytest.approx(q.sigma_u**2 + q.sigma2_eps)
    assert cert.is_certificate
    with pytest.raises(CaseNotApplicable):
        leroux_pars_alternative(leroux(lambda_uz=None, lambda_u=0.3, lambda_z=0.6, rho=0.4), W)


# LMC


def test_lmc_examples():
    W = hexagon()
    p = lmc()
    cert = lmc_alternative(p, W, delta=1.0)
    assert cert.alternative.beta == pytest.approx(p.beta - 1.0)
    assert cert.beta_gap == pytest.approx(1.0)
    assert cert.max_moment_discrepancy <= 1e-12
    assert lmc_alternative(p, W, delta=-0.5).alternative.beta == pytest.approx(p.beta + 0.5)
    with pytest.raises(CaseNotApplicable):
        lmc_alternative(p, W, delta=0.0)


@given(st.floats(-5, 5).filter(lambda d: abs(d) > 1e-3), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_lmc_shift_any_delta(delta, seed):
    rng = np.random.default_rng(seed)
    W = random_points(5, rng)
    cert = lmc_alternative(lmc(), W, delta=delta)
    assert cert.max_moment_discrepancy <= 1e-12 * max(1.0, delta**2)


# bivariate, rho = 0


def test_bivariate_rho0_example():
    W = random_points(5, np.random.default_rng(9))
    p = biv()
    cert = bivariate_rho0_alternative(p, W, beta_tilde=p.beta + 0.3)
    t = bivariate_rho0_parameters(p, p.beta + 0.3)
    c = -0.3 * p.sigma_z
    assert t["sigma_u"] ** 2 == pytest.approx(p.sigma_u**2 + c * c)
    assert t["rho"] == pytest.approx(c / t["sigma_u"])
    assert cert.alternative.sigma_u == pytest.approx(t["sigma_u"])
    assert cert.is_certificate and cert.max_moment_discrepancy <= 1e-12


def test_bivariate_rho0_sanity_and_search_failure():
    W = random_points(5, np.random.default_rng(9))
    p = biv()
    cert = bivariate_rho0_alternative(p, W, beta_tilde=p.beta)
    assert cert.alternative == p and cert.beta_gap == 0.0
    with pytest.raises(NoValidBetaFound):
        bivariate_rho0_alternative(p, W, search_halfwidth=0.05, min_gap=0.1)
    with pytest.raises(CaseNotApplicable):
        bivariate_rho0_alternative(biv(psi_uz=2.0), W)


def test_bivariate_rho0_with_nonzero_rho():
    # the moment identity holds for any rho once the three ranges coincide
    W = random_points(5, np.random.default_rng(9))
    cert = bivariate_rho0_alternative(biv(rho=0.3), W)
    assert cert.is_certificate


# dispatch, serialisation and likelihood equality


def test_forge_dispatch_errors():
    with pytest.raises(CaseNotApplicable):
        forge(car(), ring_graph(6))
    with pytest.raises(CaseNotApplicable):
        forge(car(phi_u=0.0), ring_graph(6), "lmc")
    with pytest.raises(CaseNotApplicable):
        forge(car(phi_u=0.0), ring_graph(6), "nonsense")
    with pytest.raises(DomainError):
        forge(car(phi_u=0.0), ring_graph(6), "car_phi0", b=2.0)


def certificate_cases():
    return [
        ("car_phi0", car(phi_u=0.0), ring_graph(6)),
        ("car_fullyconnected", car(), complete_graph(6)),
        ("leroux_equal_lambda", leroux(rho=0.5, lambda_u=0.3, lambda_z=0.6, lambda_uz=0.6), ring_graph(6)),
        ("leroux_rho0", leroux(), ring_graph(6)),
        ("leroux_pars", leroux(lambda_uz=None, rho=0.3), ring_graph(6)),
        ("lmc", lmc(), hexagon()),
        ("bivariate_rho0", biv(), hexagon()),
    ]


def test_all_constructions_covered():
    assert {c[0] for c in certificate_cases()} == set(CONSTRUCTIONS)


@pytest.mark.parametrize("name,spec,W", certificate_cases(), ids=[c[0] for c in certificate_cases()])
def test_certificate_roundtrip_and_loglik(name, spec, W):
    cert = forge(spec, W, name)
    assert cert.is_certificate
    d = json.loads(json.dumps(cert.to_dict()))
    back = EquivalenceCertificate.from_dict(d, W)
    assert back.original == cert.original and back.alternative == cert.alternative
    assert back.max_moment_discrepancy == cert.max_moment_discrepancy
    # the two parameter sets give the same observed-data likelihood
    m0, m1 = observed_moments(cert.original, W), observed_moments(cert.alternative, W)
    assert m0.max_abs_discrepancy(m1) <= 1e-8
    data = sample(spec, W, 100, seed=5)
    assert abs(loglik(cert.original, data) - loglik(cert.alternative, data)) <= 1e-6
