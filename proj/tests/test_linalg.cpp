#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "opsys/linalg.hpp"
#include "opsys/random.hpp"

using namespace opsys;

namespace {

RVec sorted_eigs(const CMat& m) {
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

RVec sorted_eigs(const RMat& m) {
    Eigen::SelfAdjointEigenSolver<RMat> es((m + m.transpose()) / 2.0, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("psd_check on identity and diag(1,-1)") {
    CHECK(psd_check(CMat::Identity(3, 3)).positive);
    CMat d = CMat::Zero(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = -1.0;
    PsdResult r = psd_check(d);
    REQUIRE_FALSE(r.positive);
    CHECK(std::abs(std::abs(r.witness(1)) - 1.0) < 1e-12);
    CHECK(std::abs(r.witness(0)) < 1e-12);
}

TEST_CASE("psd_check accepts Gram matrices and its witnesses are honest") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        CMat r = random_complex(rng, 5, 5);
        CHECK(psd_check(CMat(r * r.adjoint())).positive);
        CMat h = random_hermitian(rng, 5);
        PsdResult p = psd_check(h);
        if (!p.positive) {
            double rq = (p.witness.adjoint() * h * p.witness)(0, 0).real();
            CHECK(rq < -p.threshold);
        } else {
            CHECK(min_eigenvalue(h) >= -p.threshold);
        }
    }
}

TEST_CASE("psd_check rejects non-self-adjoint input") {
    CMat m = CMat::Zero(2, 2);
    m(0, 1) = 1.0;
    CHECK_THROWS_AS(psd_check(m), std::invalid_argument);
}

TEST_CASE("moore_penrose_sqrt_inverse examples") {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = 4.0;
    SqrtInverse s = moore_penrose_sqrt_inverse(m);
    CHECK(std::abs(s.support.blocks[0](0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(s.support.blocks[0](1, 1)) < 1e-12);
    CHECK(std::abs(s.inverse.blocks[0](0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(s.inverse.blocks[0](1, 1)) < 1e-12);

    SqrtInverse id = moore_penrose_sqrt_inverse(CMat(CMat::Identity(3, 3)));
    CHECK((id.support.blocks[0] - CMat::Identity(3, 3)).norm() < 1e-12);
    CHECK((id.inverse.blocks[0] - CMat::Identity(3, 3)).norm() < 1e-12);

    CMat neg = -CMat::Identity(2, 2);
    CHECK_THROWS_AS(moore_penrose_sqrt_inverse(neg), std::invalid_argument);
}

TEST_CASE("moore_penrose identities on random rank-2 PSD matrices") {
    Rng rng(5);
    for (int t = 0; t < 30; ++t) {
        CMat m = random_psd(rng, 4, 2);
        SqrtInverse s = moore_penrose_sqrt_inverse(m);
        const CMat& P = s.support.blocks[0];
        const CMat& D = s.inverse.blocks[0];
        const CMat& R = s.sqrt.blocks[0];
        double scale = std::max(1.0, m.norm());
        CHECK((R * D - P).norm() < 1e-10 * scale);
        CHECK((D * R - P).norm() < 1e-10 * scale);
        CHECK((P * P - P).norm() < 1e-10);
        CHECK((P - P.adjoint()).norm() < 1e-12);
        CHECK((R * R - m).norm() < 1e-10 * scale);
        CHECK(std::abs(P.trace().real() - 2.0) < 1e-9);
    }
}

TEST_CASE("tensor_shuffle swaps elementary tensors and is an involution") {
    CMat e11 = CMat::Zero(2, 2), e22 = CMat::Zero(3, 3);
    e11(0, 0) = 1.0;
    e22(1, 1) = 1.0;
    CMat x = kron(e11, e22);
    CHECK((tensor_shuffle(x, 2, 3) - kron(e22, e11)).norm() < 1e-15);

    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        CMat h = random_hermitian(rng, 6);
        CMat s = tensor_shuffle(h, 2, 3);
        CHECK((tensor_shuffle(s, 3, 2) - h).norm() < 1e-14);
        CHECK((sorted_eigs(h) - sorted_eigs(s)).norm() < 1e-12);
        CMat a = random_complex(rng, 2, 2), b = random_complex(rng, 3, 3);
        CHECK((tensor_shuffle(kron(a, b), 2, 3) - kron(b, a)).norm() < 1e-13);
    }
    CHECK_THROWS_AS(tensor_shuffle(CMat::Identity(5, 5), 2, 3), std::invalid_argument);
}

TEST_CASE("matrix_units_gram") {
    CHECK((matrix_units_gram(1) - CMat::Identity(1, 1)).norm() < 1e-15);
    RVec ev = sorted_eigs(matrix_units_gram(2));
    CHECK(std::abs(ev(3) - 2.0) < 1e-12);
    CHECK(ev.head(3).cwiseAbs().maxCoeff() < 1e-12);
    for (int d = 1; d <= 6; ++d) {
        CMat e = matrix_units_gram(d);
        CVec x = CVec::Zero(d * d);
        for (int i = 0; i < d; ++i) x(i * d + i) = 1.0;
        CHECK(std::abs((x.adjoint() * e * x)(0, 0) - cd(d * d, 0)) < 1e-12);
        // Block (p,q) is the matrix unit e_pq
        for (int p = 0; p < d; ++p)
            for (int q = 0; q < d; ++q) {
                CMat blk = e.block(p * d, q * d, d, d);
                CMat unit = CMat::Zero(d, d);
                unit(p, q) = 1.0;
                CHECK((blk - unit).norm() == 0.0);
            }
        CHECK(psd_check(e).positive);
    }
}

TEST_CASE("hermitian_to_real doubles the spectrum") {
    CMat y(2, 2);
    y << 0.0, cd(0, 1), cd(0, -1), 0.0;
    RVec ev = sorted_eigs(hermitian_to_real(y));
    CHECK((ev - (RVec(4) << -1, -1, 1, 1).finished()).norm() < 1e-12);

    Rng rng(9);
    for (int t = 0; t < 30; ++t) {
        int d = 1 + t % 5;
        CMat h = random_hermitian(rng, d);
        RVec a = sorted_eigs(h);
        RVec doubled(2 * d);
        for (int i = 0; i < d; ++i) doubled(2 * i) = doubled(2 * i + 1) = a(i);
        CHECK((sorted_eigs(hermitian_to_real(h)) - doubled).norm() < 1e-12);
        CHECK((real_to_hermitian(hermitian_to_real(h)) - h).norm() < 1e-14);
        CMat p = random_psd(rng, d);
        CHECK(psd_check(hermitian_to_real(p).cast<cd>()).positive);
    }
    // real input: two copies of the same spectrum
    CMat r = CMat::Zero(2, 2);
    r(0, 0) = 3.0;
    r(1, 1) = -2.0;
    RVec er = sorted_eigs(hermitian_to_real(r));
    CHECK((er - (RVec(4) << -2, -2, 3, 3).finished()).norm() < 1e-12);
}

TEST_CASE("BlockMatrix JSON round trip keeps every entry") {
    Rng rng(1);
    BlockMatrix m(std::vector<CMat>{random_complex(rng, 2, 2), random_complex(rng, 1, 1), random_complex(rng, 3, 3)});
    BlockMatrix back = block_matrix_from_json(to_json(m));
    CHECK((back - m).frobenius() == 0.0);
    nlohmann::json j = to_json(m);
    CHECK(j["dims"] == nlohmann::json::array({2, 1, 3}));
    j["dims"][0] = 3;
    CHECK_THROWS(block_matrix_from_json(j));
}

TEST_CASE("block arithmetic and adjoints") {
    AmbientAlgebra a({2, 1});
    BlockMatrix id = BlockMatrix::identity(a);
    CHECK(id.total() == 3);
    CHECK(id.is_self_adjoint());
    CHECK(std::abs(inner(id, id) - cd(3, 0)) < 1e-15);
    CHECK((BlockMatrix::from_dense(a, id.dense()) - id).frobenius() == 0.0);
    CHECK_THROWS(id + BlockMatrix::identity(AmbientAlgebra({3})));
}

}
