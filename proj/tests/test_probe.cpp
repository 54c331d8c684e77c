#include <doctest.h>

#include "opsys/probe.hpp"

using namespace opsys;

TEST_SUITE("probe") {

TEST_CASE("maximally entangled element is min-positive for catalog systems") {
    for (auto s : {make_Linf(2), make_Mat(2), make_W(2, 2), make_W(3, 2), make_E(3), make_U(2)}) {
        MaxEntangled me = me_element(s);
        CHECK(me.element.left.dim() == s->dim());
        CHECK(me.element.right.dual);
        MinVerdict v = min_positive(me.element);
        CHECK_MESSAGE(v.positive(), (s->name() + ": " + v.report));
    }
}

TEST_CASE("maximally entangled element of l-infinity_2 is the identity pairing") {
    SystemPtr s = make_Linf(2);
    TensorElement u = me_element(s).element;
    for (int i = 0; i < s->dim(); ++i)
        for (int j = 0; j < s->dim(); ++j) CHECK(std::abs(u.at(i, j)(0, 0) - cd(i == j ? 1.0 : 0.0)) == 0.0);
    // Below the identity pairing by any unit multiple is no longer min-positive
    CHECK(!min_positive(u.plus_unit(-0.2)).positive());
}

TEST_CASE("basis change invariance") {
    Rng rng(17);
    for (auto s : {make_W(2, 2), make_W(3, 2), make_E(3), make_U(2), make_Mat(3)}) {
        for (int t = 0; t < 5; ++t) {
            Eigen::MatrixXd G = random_basis_change(s->dim(), rng);
            CHECK(basis_change_defect(s, G) <= 1e-12);
        }
    }
}

TEST_CASE("pairing with state (x) evaluation at a positive element") {
    Rng rng(23);
    SystemPtr s = make_W(2, 2);
    for (int t = 0; t < 100; ++t) {
        Functional omega = random_state(s, rng);
        BlockMatrix p = random_positive_element(s, rng);
        double v = me_pairing(s, omega, p);
        // Oracle: the pairing collapses to omega(p) computed in the ambient algebra
        CHECK(v == doctest::Approx(omega(p).real()).epsilon(1e-10));
        CHECK(v >= -1e-12);
    }
}

TEST_CASE("factorization through the nuclear fast path is exact") {
    for (auto s : {make_Linf(4), make_Mat(3)}) {
        MaxInnerResult r = max_inner_nuclear_factor(me_element(s).element);
        REQUIRE(r.certified());
        FactorizationPair f = extract_factorization(s, r.certificate, 0.0);
        CHECK(f.phi_cp);
        CHECK(f.psi_cp);
        CHECK(f.max_basis_defect <= 1e-12);
        CHECK(f.bound_holds);
        CHECK(f.conditioning >= 1.0);
        // Oracle: psi(phi(x)) = x on random elements, evaluated through the ambient
        Rng rng(3);
        for (int t = 0; t < 10; ++t) {
            CVec c = random_complex(rng, s->dim(), 1);
            BlockMatrix x = s->reconstruct(c);
            CMat a = f.phi(x);
            BlockMatrix y = s->reconstruct(f.psi_coeffs(a));
            CHECK((y - x).norm() <= 1e-11 * std::max(1.0, x.norm()));
        }
    }
}

TEST_CASE("commutative factorization is diagonal") {
    SystemPtr s = make_Linf(3);
    MaxInnerResult r = max_inner_nuclear_factor(me_element(s).element);
    FactorizationPair f = extract_factorization(s, r.certificate, 0.0);
    for (const auto& q : f.phi.values) CHECK((q - CMat(q.diagonal().asDiagonal())).norm() <= 1e-14);
}

TEST_CASE("W(2,2): factorization from a search certificate at unit slack") {
    SystemPtr s = make_W(2, 2);
    const double eps = 1.05;
    SearchOptions so;
    so.eps_target = 1e-6;
    MaxInnerResult r = max_inner_search(me_element(s).element.plus_unit(eps), so);
    REQUIRE_MESSAGE(r.certified(), r.report);
    FactorizationPair f = extract_factorization(s, r.certificate, eps);
    CHECK(f.phi_cp);
    CHECK(f.psi_cp);
    Functional omega = faithful_state(s);
    for (int l = 0; l < s->dim(); ++l)
        CHECK(f.basis_defect[l] <= f.eps * std::abs(omega.values(l)) + 1e-7);
    CHECK(f.bound_holds);
}

TEST_CASE("W(2,2): small slack is refuted by the outer refuter") {
    SystemPtr s = make_W(2, 2);
    TensorElement u = me_element(s).element.plus_unit(1e-4);
    OuterResult o = max_outer_refute(u, 2);
    REQUIRE(o.refuted());
    CHECK(recheck_evidence(u, o.evidence));
    CHECK(o.evidence.value < -0.9);
}

TEST_CASE("tampered decompositions are rejected") {
    SystemPtr s = make_Mat(2);
    MaxInnerResult r = max_inner_nuclear_factor(me_element(s).element);
    MaxCertificate c = r.certificate;
    c.P[1](0, 0) += 1e-3;
    CHECK_THROWS_AS(extract_factorization(s, c, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(extract_factorization(make_Mat(3), r.certificate, 0.0), std::invalid_argument);
}

TEST_CASE("coincidence probe with a nuclear factor certifies everything") {
    ProbeOptions opt;
    opt.levels = 2;
    opt.samples = 10;
    opt.seed = 9;
    for (auto [l, r] : {std::pair{"W:3,2", "Mat:2"}, std::pair{"E:3", "Mat:3"}, std::pair{"Linf:4", "U:2"}}) {
        ProbeReport rep = coincidence_probe(parse_factor(l), parse_factor(r), opt);
        CHECK(rep.certified == 10);
        CHECK(rep.refuted == 0);
        CHECK(rep.refuted_certified == 0);
        for (const auto& smp : rep.samples) CHECK(smp.residual <= 1e-10);
    }
}

TEST_CASE("probe report is reproducible and serializes") {
    ProbeOptions opt;
    opt.samples = 4;
    opt.seed = 4;
    opt.search.ranks = {3};
    opt.search.restarts = 1;
    opt.search.rounds = 4;
    opt.outer.rounds = 6;
    ProbeReport a = coincidence_probe(parse_factor("W:2,2"), parse_factor("W:2,2"), opt);
    ProbeReport b = coincidence_probe(parse_factor("W:2,2"), parse_factor("W:2,2"), opt);
    CHECK(a.certified + a.refuted + a.undecided == 4);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(a.refuted_certified == 0);
    CHECK(to_json(a)["samples"].size() == 4);
}

}
