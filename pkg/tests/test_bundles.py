import json

import numpy as np
import pytest

from pwreg.bundles import (PWBundle, algebraize_isomorphism, bundle_from_map, compose_morphisms, fiber_at,
                           map_from_bundle, orthogonal_complement, product_bundle, whitney_sum)
from pwreg.catalog import builtin_complex, make_oracle
from pwreg.errors import ComplexMismatch, InvalidCertificate, NotInjectiveOnFibers, OutsideDomain
from pwreg.pipeline import PiecewiseRegularMap, Target, approximate_complex
from pwreg.simplicial import complex_samples


def constant_matrix(M):
    M = np.asarray(M, dtype=float)[..., None]
    return lambda X: np.broadcast_to(M, (len(X),) + M.shape)


def rotation_field(X):
    """Rotation by the polar angle about the centroid: continuous on the circle complex."""
    th = np.arctan2(X[:, 1] - 1 / 3, X[:, 0] - 1 / 3)
    c, s = np.cos(th), np.sin(th)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)[..., None]


CANDIDATES = {
    "identity": constant_matrix(np.eye(2)),
    "first-axis": constant_matrix([[1, 0], [0, 0]]),
    "swap": constant_matrix([[0, 1], [1, 0]]),
    "rotate-45": constant_matrix([[np.sqrt(0.5), -np.sqrt(0.5)], [np.sqrt(0.5), np.sqrt(0.5)]]),
    "reflect": constant_matrix([[1, 0], [0, -1]]),
    "shear": constant_matrix([[1, 2], [0, 1]]),
    "seeded": constant_matrix(np.random.default_rng(7).normal(size=(2, 2))),
    "turning": rotation_field,
}


@pytest.fixture(scope="module")
def mobius():
    K = builtin_complex("triangle-boundary")
    pm = approximate_complex(K, make_oracle("mobius", "grassmann:R:2:1", K), 1e-2)
    return bundle_from_map(pm)


@pytest.fixture(scope="module")
def product(mobius):
    return product_bundle(mobius.complex, "R", 2, 1)


class TestWrappers:
    def test_round_trip(self, mobius):
        pm = map_from_bundle(mobius)
        assert json.dumps(bundle_from_map(pm).classifying.to_json(), sort_keys=True) == \
            json.dumps(pm.to_json(), sort_keys=True)

    def test_json(self, mobius):
        back = PWBundle.from_json(json.loads(json.dumps(mobius.to_json())))
        assert back.to_json() == mobius.to_json()

    def test_product_flag(self, mobius, product):
        assert product.is_product() and not mobius.is_product()

    def test_constant_map_recognized(self):
        K = builtin_complex("triangle")
        pm = approximate_complex(K, make_oracle("constant", "grassmann:C:2:1", K), 1e-3)
        assert bundle_from_map(pm).is_product()

    def test_missing_certificate(self, mobius):
        pm = mobius.classifying
        bare = PiecewiseRegularMap(pm.complex, pm.target, pm.per_simplex, pm.eps)
        with pytest.raises(InvalidCertificate):
            bundle_from_map(bare)

    def test_rank_per_component(self, mobius):
        assert mobius.rank_per_component() == {"0": 1}


class TestFibers:
    def test_product_constant(self, product):
        P = fiber_at(product, [0.5, 0.0]).proj.data
        Q = fiber_at(product, [0.0, 0.25]).proj.data
        assert np.array_equal(P, Q)

    def test_mobius_basepoint(self, mobius):
        # the Moebius oracle's line at the vertex (1, 0) is at angle atan2(-1/3, 2/3) / 2
        th = np.arctan2(-1 / 3, 2 / 3) / 2
        P = fiber_at(mobius, [1.0, 0.0]).proj.data[..., 0]
        e = np.array([np.cos(th), np.sin(th)])
        assert np.abs(P - np.outer(e, e)).max() < 1e-2

    def test_outside(self, mobius):
        with pytest.raises(OutsideDomain):
            fiber_at(mobius, [0.4, 0.4])


class TestComplement:
    def test_product_complement_is_product(self, product):
        c = orthogonal_complement(product)
        assert c.is_product() and c.r == 1

    def test_sum_identity_exact(self, mobius):
        c = orthogonal_complement(mobius)
        P, Pc = mobius.projections(), c.projections()
        for sid in P:
            a, b = P[sid], Pc[sid]
            for idx in np.ndindex(a.num.shape):
                i, j, comp = idx
                eye = a.den if (i == j and comp == 0) else a.den * 0
                assert a.num[idx] * b.den + b.num[idx] * a.den == eye * b.den

    def test_involution(self, mobius):
        cc = orthogonal_complement(orthogonal_complement(mobius))
        P, Q = mobius.projections(), cc.projections()
        assert all(P[s].equals(Q[s]) for s in P)
        _, X = complex_samples(mobius.complex, 16)
        assert np.abs(cc.classifying.evaluate(X) - mobius.classifying.evaluate(X)).max() < 1e-12

    def test_certificate_valid(self, mobius):
        assert orthogonal_complement(mobius).classifying.certificate.valid


class TestWhitneySum:
    def test_with_zero(self, mobius):
        K = mobius.complex
        zero = orthogonal_complement(product_bundle(K, "R", 1, 1))
        s = whitney_sum(mobius, zero)
        _, X = complex_samples(K, 8)
        P = s.classifying.evaluate(X)
        assert np.abs(P[:, :2, :2] - mobius.classifying.evaluate(X)).max() < 1e-12
        assert np.abs(P[:, 2:, :]).max() == 0 and np.abs(P[:, :, 2:]).max() == 0

    def test_rank_additivity(self, mobius):
        s = whitney_sum(mobius, mobius)
        _, X = complex_samples(mobius.complex, 16)
        tr = np.trace(s.classifying.evaluate(X)[..., 0], axis1=1, axis2=2)
        assert s.r == 2 and np.abs(tr - 2).max() < 1e-10

    def test_mismatch(self, mobius):
        other = product_bundle(builtin_complex("triangle"), "R", 2, 1)
        with pytest.raises(ComplexMismatch):
            whitney_sum(mobius, other)


class TestAlgebraizeIsomorphism:
    def test_identity_product(self, product):
        sigma = algebraize_isomorphism(product, product, constant_matrix(np.eye(2)))
        assert sigma.certificate["sigma_min"] >= 1 - 1e-6

    def test_identity_mobius(self, mobius):
        sigma = algebraize_isomorphism(mobius, mobius, constant_matrix(np.eye(2)))
        assert sigma.certificate["valid"] and sigma.certificate["sigma_min"] >= 0.9

    def test_composition_naturality(self, mobius):
        sigma = algebraize_isomorphism(mobius, mobius, constant_matrix(np.eye(2)))
        assert compose_morphisms(sigma, sigma) >= (1 - 1e-5) ** 2

    @pytest.mark.parametrize("name", sorted(CANDIDATES))
    def test_mobius_to_product_rejected(self, mobius, product, name):
        with pytest.raises(NotInjectiveOnFibers):
            algebraize_isomorphism(mobius, product, CANDIDATES[name])

    def test_rank_mismatch(self, mobius):
        two = whitney_sum(mobius, mobius)
        with pytest.raises((NotInjectiveOnFibers, ComplexMismatch)):
            algebraize_isomorphism(mobius, two, constant_matrix(np.eye(4, 2)))

    def test_morphism_json(self, product):
        sigma = algebraize_isomorphism(product, product, constant_matrix(np.eye(2)))
        obj = json.loads(json.dumps(sigma.to_json()))
        assert obj["certificate"]["valid"] and set(obj["per_simplex"]) == set(product.projections())

    def test_target_helper(self):
        assert Target.parse("grassmann:R:2:1").r == 1
