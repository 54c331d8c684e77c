#include <doctest.h>

#include "opsys/tensor.hpp"

using namespace opsys;
using sdp::Status;

namespace {

CMat dense_of(const BlockMatrix& b) { return b.dense(); }

// Block-diagonal dense realization built from the dense basis matrices, no block bookkeeping
double dense_min_eigenvalue(const TensorElement& u) {
    const auto& s = *u.left.system;
    const auto& t = *u.right.system;
    int size = u.level * s.ambient().total() * t.ambient().total();
    CMat m = CMat::Zero(size, size);
    for (int i = 0; i < s.dim(); ++i)
        for (int j = 0; j < t.dim(); ++j) m += kron(u.at(i, j), kron(dense_of(s.basis()[i]), dense_of(t.basis()[j])));
    return min_eigenvalue(m);
}

std::vector<CMat> positive_sample(const OperatorSystem& s, int q, Rng& rng, double push) {
    std::vector<CMat> x = random_level_element(s, q, rng);
    double lmin = min_eigenvalue(realize_level(s, x));
    x[0] += (push - lmin) * CMat::Identity(q, q);
    return x;
}

// x^*(P (x) Q)x for random PSD P in M_p(S), Q in M_q(T) and a random X: a max-cone element by construction
TensorElement constructed_max(const Factor& l, const Factor& r, int n, int p, int q, Rng& rng) {
    MaxCertificate c;
    c.p = p;
    c.q = q;
    c.P = positive_sample(*l.system, p, rng, 0.0);
    c.Q = positive_sample(*r.system, q, rng, 0.0);
    c.X = random_complex(rng, p * q, n);
    return reconstruct(c, l, r);
}

TensorElement max_entangled(const SystemPtr& s) {
    TensorElement u = TensorElement::zero(concrete(s), dual_of(s), 1);
    for (int i = 0; i < s->dim(); ++i) u.at(i, i) = CMat::Identity(1, 1);
    return u;
}

bool is_diagonal(const CMat& m) { return (m - CMat(m.diagonal().asDiagonal())).norm() < 1e-14; }

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("unit tensor unit is min-positive") {
    for (auto s : {make_W(2, 2), make_E(3), make_U(2)})
        for (int n = 1; n <= 2; ++n) CHECK(min_positive(TensorElement::unit(concrete(s), concrete(make_Mat(2)), n)).positive());
}

TEST_CASE("min_positive agrees with the dense realization on 500 random elements") {
    Rng rng(11);
    std::vector<std::pair<SystemPtr, SystemPtr>> pairs{{make_W(2, 2), make_Mat(2)},
                                                       {make_E(3), make_Linf(2)},
                                                       {make_U(2), make_W(3, 2)},
                                                       {make_F(2), make_Mat(2)},
                                                       {make_E(2), make_E(2)}};
    int agree = 0, positives = 0;
    for (int k = 0; k < 500; ++k) {
        auto [s, t] = pairs[k % pairs.size()];
        int n = 1 + (k / 5) % 2;
        TensorElement u = random_tensor_element(concrete(s), concrete(t), n, rng);
        double lmin = dense_min_eigenvalue(u);
        // shift around the boundary so both verdicts occur
        double shift = -lmin + uniform(rng, -0.5, 0.5);
        u = u.plus_unit(shift);
        bool oracle = lmin + shift >= 0.0;
        MinVerdict v = min_positive(u);
        agree += v.positive() == oracle;
        positives += oracle;
        if (!v.positive()) {
            // the witness is a unit vector with a negative expectation in its block
            BlockMatrix r = realize(u);
            const CMat& blk = r.blocks[v.witness_block];
            CHECK(v.witness.dot(blk * v.witness).real() < 0.0);
        }
    }
    CHECK(agree == 500);
    CHECK(positives > 100);
    CHECK(positives < 400);
}

TEST_CASE("sum of w_k (x) b_k is min-positive iff every b_k is a contraction") {
    Rng rng(5);
    for (int m = 1; m <= 4; ++m) {
        SystemPtr w = make_W(m < 2 ? 2 : m, 2);
        int groups = w->dim() - 1;
        for (int trial = 0; trial < 20; ++trial) {
            TensorElement u = TensorElement::zero(concrete(w), concrete(make_Mat(3)), 1);
            // coefficient of w_0 (x) t_j picks out b_0 = I
            u.at(0, 0) = CMat::Identity(1, 1);
            double worst = 0.0;
            std::vector<CMat> bs;
            for (int k = 0; k < groups; ++k) {
                CMat b = random_hermitian(rng, 3);
                double nb = Eigen::SelfAdjointEigenSolver<CMat>(b).eigenvalues().cwiseAbs().maxCoeff();
                double target = uniform(rng, 0.8, 1.2);
                b *= target / nb;
                worst = std::max(worst, target);
                bs.push_back(b);
            }
            // b = sum_j c_j t_j in the Mat:3 basis
            SystemPtr m3 = make_Mat(3);
            for (int k = 0; k < groups; ++k) {
                CVec c = m3->project(BlockMatrix(std::vector<CMat>{bs[k]}));
                for (int j = 0; j < m3->dim(); ++j) u.at(k + 1, j) = CMat::Constant(1, 1, c(j));
            }
            if (std::abs(worst - 1.0) < 1e-6) continue;
            CHECK(min_positive(u).positive() == (worst <= 1.0));
        }
    }
}

TEST_CASE("sums of products of positives are min-positive") {
    Rng rng(8);
    for (auto [s, t] : {std::pair{make_W(3, 2), make_E(3)}, std::pair{make_U(2), make_F(2)}}) {
        for (int trial = 0; trial < 10; ++trial) {
            TensorElement u = TensorElement::zero(concrete(s), concrete(t), 2);
            for (int r = 0; r < 3; ++r) {
                auto a = positive_sample(*s, 2, rng, 0.0);
                auto b = positive_sample(*t, 1, rng, 0.0);
                for (int i = 0; i < s->dim(); ++i)
                    for (int j = 0; j < t->dim(); ++j) u.at(i, j) += a[i] * b[j](0, 0);
            }
            CHECK(min_positive(u).positive());
        }
    }
}

TEST_CASE("nuclear-factor certificate for the unit") {
    SystemPtr s = make_W(2, 2);
    TensorElement u = TensorElement::unit(concrete(s), concrete(make_Mat(3)), 1);
    MaxInnerResult r = max_inner_nuclear_factor(u);
    REQUIRE(r.certified());
    CHECK(r.residual <= 1e-14);
    CHECK(r.certificate.eps == 0.0);
    // P is the identity of M_3 placed on the unit of W
    CHECK((r.certificate.P[0] - CMat::Identity(3, 3)).norm() < 1e-14);
    for (int i = 1; i < s->dim(); ++i) CHECK(r.certificate.P[i].norm() < 1e-14);
}

TEST_CASE("nuclear-factor certificates reconstruct random min-positive elements") {
    Rng rng(21);
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        int n = 1 + trial % 2;
        SystemPtr t = trial % 3 == 0 ? make_Mat(3) : trial % 3 == 1 ? make_Linf(4) : make_algebra(AmbientAlgebra({1, 2}));
        TensorElement u = random_min_positive(concrete(make_W(2, 2)), concrete(t), n, uniform(rng, 0.0, 0.2), rng);
        MaxInnerResult r = max_inner_nuclear_factor(u);
        REQUIRE(r.certified());
        CertificateCheck chk = verify_certificate(u, r.certificate, 1e-10);
        CHECK(chk.valid);
        worst = std::max(worst, chk.residual);
        // max is inside min
        CHECK(min_positive(u).positive());
        // mirrored orientation
        MaxInnerResult m = max_inner_nuclear_factor(u.swapped());
        REQUIRE(m.certified());
        CHECK(verify_certificate(u.swapped(), m.certificate, 1e-10).valid);
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("l-infinity factor gives a diagonal certificate with p = q = m") {
    Rng rng(4);
    int m = 4;
    TensorElement u = random_min_positive(concrete(make_E(3)), concrete(make_Linf(m)), 1, 0.1, rng);
    MaxInnerResult r = max_inner_nuclear_factor(u);
    REQUIRE(r.certified());
    CHECK(r.certificate.p == m);
    CHECK(r.certificate.q == m);
    for (const auto& q : r.certificate.Q) CHECK(is_diagonal(q));
}

TEST_CASE("negative margin is rejected") {
    Rng rng(6);
    TensorElement u = random_min_positive(concrete(make_U(2)), concrete(make_Mat(2)), 1, -0.1, rng);
    CHECK(max_inner_nuclear_factor(u).outcome == InnerOutcome::Rejected);
    CHECK(max_inner_search(u).outcome == InnerOutcome::Rejected);
}

TEST_CASE("tampered certificates fail verification") {
    Rng rng(9);
    TensorElement u = random_min_positive(concrete(make_E(3)), concrete(make_Mat(2)), 2, 0.1, rng);
    MaxCertificate c = max_inner_nuclear_factor(u).certificate;
    REQUIRE(verify_certificate(u, c).valid);
    MaxCertificate bad = c;
    bad.P[1] *= 1.1;
    CHECK(verify_certificate(u, bad).reason.find("reconstruction") != std::string::npos);
    bad = c;
    bad.Q[0] -= 5.0 * CMat::Identity(bad.q, bad.q);
    CHECK(verify_certificate(u, bad).reason.find("right factor not positive") != std::string::npos);
    bad = c;
    bad.X = CMat::Zero(1, 1);
    CHECK(verify_certificate(u, bad).reason == "shape");
}

TEST_CASE("unit slack adds a direct summand") {
    Rng rng(10);
    TensorElement u = random_min_positive(concrete(make_W(2, 2)), concrete(make_Mat(2)), 2, 0.05, rng);
    MaxCertificate c = max_inner_nuclear_factor(u).certificate;
    MaxCertificate s = add_unit_slack(c, u.left, u.right, 2, 0.25);
    CHECK(s.eps == doctest::Approx(c.eps + 0.25));
    CHECK(verify_certificate(u, s).valid);
    CHECK(verify_certificate(u.plus_unit(0.25), add_unit_slack(c, u.left, u.right, 2, 0.0)).valid == false);
}

TEST_CASE("maximally entangled element of l-infinity 2 is found with eps = 0") {
    TensorElement me = max_entangled(make_Linf(2));
    REQUIRE(min_positive(me).positive());
    MaxInnerResult r = max_inner_search(me);
    REQUIRE(r.certified());
    CHECK(r.certificate.eps == 0.0);
    CHECK(r.residual < 1e-10);
}

TEST_CASE("dual factor: cp maps give min-positive elements, perturbed ones do not") {
    Rng rng(12);
    SystemPtr s = make_W(2, 2), t = make_E(2);
    for (int trial = 0; trial < 5; ++trial) {
        // u in S (x) T* from a cp map S -> M_d per block is the same data as a positive functional matrix
        TensorElement u = TensorElement::zero(concrete(s), dual_of(t), 1);
        FunctionalMatrix f = random_positive_functional(t, 1, rng);
        for (int j = 0; j < t->dim(); ++j) u.at(0, j) = f.values[j];
        CHECK(min_positive(u).positive());
        TensorElement v = u;
        v.at(0, 0) *= -1.0;
        MinVerdict mv = min_positive(v);
        CHECK(mv.status == Status::Infeasible);
        OuterResult o = max_outer_refute(v, 1);
        REQUIRE(o.refuted());
        CHECK(o.evidence.kind == "dual-witness");
        CHECK(evaluate_functional(o.evidence.omega, v) < 0.0);
        CHECK(evaluate_functional(o.evidence.omega, u) >= -1e-9);
    }
}

TEST_CASE("search certifies constructed max-cone elements") {
    Rng rng(14);
    OuterOptions oo;
    oo.rounds = 8;
    for (int trial = 0; trial < 3; ++trial) {
        TensorElement u = constructed_max(concrete(make_E(2)), concrete(make_E(2)), 1, 2, 2, rng).plus_unit(0.05);
        SearchOptions so;
        so.seed = trial + 1;
        MaxInnerResult r = max_inner_search(u, so);
        CAPTURE(r.report);
        CHECK(r.certified());
        if (r.certified()) {
            CHECK(verify_certificate(u, r.certificate).valid);
            CHECK(min_positive(u).positive());
        }
        // holds a certificate by construction, so it must not be refuted
        CHECK_FALSE(max_outer_refute(u, 2, oo).refuted());
    }
}

TEST_CASE("outer refutation") {
    SystemPtr e = make_E(3);
    TensorElement unit = TensorElement::unit(concrete(e), concrete(e), 1);
    CHECK_FALSE(max_outer_refute(unit, 2).refuted());
    TensorElement bad = unit.plus_unit(-1.5);
    OuterResult o = max_outer_refute(bad, 3);
    REQUIRE(o.refuted());
    CHECK(o.evidence.kind == "vector-state");
    CHECK(o.evidence.cp_level == 1);
    CHECK(o.evidence.value == doctest::Approx(-0.5));
    CHECK(recheck_evidence(bad, o.evidence));
    // nuclear factor: min-positive elements are exactly not refutable
    Rng rng(2);
    TensorElement u = random_min_positive(concrete(e), concrete(make_Mat(2)), 2, 0.0, rng);
    OuterResult x = max_outer_refute(u, 2);
    CHECK_FALSE(x.refuted());
    CHECK(x.exact);
}

TEST_CASE("json round trips") {
    Rng rng(15);
    TensorElement u = random_min_positive(concrete(make_W(3, 2)), concrete(make_Mat(2)), 2, 0.1, rng);
    TensorElement v = tensor_element_from_json(nlohmann::json::parse(to_json(u).dump()));
    CHECK(v.left.name() == u.left.name());
    for (size_t k = 0; k < u.coeffs.size(); ++k) CHECK((u.coeffs[k] - v.coeffs[k]).norm() == 0.0);
    MaxCertificate c = max_inner_nuclear_factor(u).certificate;
    MaxCertificate d = max_certificate_from_json(nlohmann::json::parse(to_json(c).dump()));
    CHECK(verify_certificate(u, d, 1e-10).valid);
    TensorElement me = max_entangled(make_U(2));
    CHECK(tensor_element_from_json(to_json(me)).right.dual);
    OuterEvidence ev;
    ev.kind = "functional";
    ev.omega = {CMat::Identity(2, 2)};
    ev.cp_level = 2;
    OuterEvidence ew = outer_evidence_from_json(nlohmann::json::parse(to_json(ev).dump()));
    CHECK(ew.cp_level == 2);
    CHECK((ew.omega[0] - ev.omega[0]).norm() == 0.0);
}

TEST_CASE("NP sampler") {
    for (auto [n, k] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{2, 3}}) {
        NpRefutation r = np_sample_refute(NpElement::unit(n, k), {1, 2, 3, 4}, 25, 1);
        CHECK_FALSE(r.refuted);
        CHECK(r.checked == 101);
    }
    NpElement u = NpElement::unit(2, 2);
    u.c[0][0] = CMat::Constant(1, 1, -2.0);
    NpRefutation r = np_sample_refute(u, {2}, 10, 1);
    REQUIRE(r.refuted);
    CHECK(r.checked == 1);
    CHECK(r.min_eigenvalue == doctest::Approx(-1.0));
    // order-k unitaries
    Rng rng(3);
    CMat v = random_order_k_unitary(rng, 3, 3);
    CHECK((v * v * v - CMat::Identity(3, 3)).norm() < 1e-12);
    // broken conjugate symmetry is a precondition failure
    NpElement w = NpElement::unit(1, 3);
    w.c[0][0] = CMat::Constant(1, 1, 1.0);
    CHECK_THROWS(np_sample_refute(w));
}

TEST_CASE("NP elements from W tuples are never refuted") {
    Rng rng(16);
    for (auto [n, k] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{2, 3}}) {
        NpElement u = np_from_W(n, k, 2, rng);
        CHECK(u.is_self_adjoint());
        CHECK_FALSE(np_sample_refute(u, {1, 2, 3}, 40, 5).refuted);
    }
}

}  // TEST_SUITE
