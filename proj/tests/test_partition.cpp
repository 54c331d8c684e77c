#include <doctest.h>

#include "opsys/partition.hpp"

using namespace opsys;

TEST_SUITE("partition") {

TEST_CASE("random instances solve and verify") {
    Rng rng(7);
    int solved = 0;
    for (int trial = 0; trial < 40; ++trial) {
        AmbientAlgebra a = random_algebra(6, 3, rng);
        int m = 1 + trial % 3;
        PartitionInstance inst = random_partition_instance(a, m, 0.01, rng);
        REQUIRE(inst.margin >= 0.01 - 1e-12);
        PartitionCertificate cert = solve_partition(inst);
        PartitionVerdict v = verify_partition(inst, cert);
        CHECK_MESSAGE(v.valid, v.reason());
        CHECK(v.unit_residual <= 1e-10);
        CHECK(v.reconstruction_residual <= 1e-8);
        CHECK(v.max_contraction <= 1.0 - cert.eps + 1e-12);
        CHECK(cert.n <= a.total());
        solved += v.valid;
    }
    CHECK(solved == 40);
}

TEST_CASE("certificate maps to a max certificate of sum w_k (x) b_k") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        AmbientAlgebra a = random_algebra(5, 2, rng);
        PartitionInstance inst = random_partition_instance(a, 2, 0.05, rng);
        PartitionCertificate cert = solve_partition(inst);
        PartitionMaxResult r = partition_to_max_certificate(cert, inst);
        CHECK_MESSAGE(r.ok, r.report);
        CHECK(r.residual <= 1e-8);
        CHECK(r.tuple_min_eigenvalue >= -1e-10);
        CHECK(min_positive(r.element).positive());
    }
}

TEST_CASE("commuting diagonal case stays in l-infinity") {
    AmbientAlgebra a({1, 1, 1});
    std::vector<BlockMatrix> b;
    b.push_back(BlockMatrix(std::vector<CMat>{CMat::Constant(1, 1, 0.5), CMat::Constant(1, 1, -0.9),
                                              CMat::Constant(1, 1, 0.0)}));
    b.push_back(BlockMatrix(std::vector<CMat>{CMat::Constant(1, 1, -0.2), CMat::Constant(1, 1, 0.7),
                                              CMat::Constant(1, 1, 0.99)}));
    PartitionInstance inst = make_partition_instance(a, b);
    CHECK(inst.margin == doctest::Approx(0.01));
    PartitionCertificate cert = solve_partition(inst);
    CHECK(verify_partition(inst, cert).valid);
    CHECK(cert.n == 3);
    // Each a_ii is a projection onto one point; off-diagonal entries vanish
    for (int i = 0; i < cert.n; ++i)
        for (int j = 0; j < cert.n; ++j) {
            BlockMatrix e = cert.entry(i, j);
            if (i != j) CHECK(e.frobenius() <= 1e-10);
            else CHECK((e * e - e).frobenius() <= 1e-10);
        }
}

TEST_CASE("verifier rejects tampered certificates") {
    Rng rng(3);
    AmbientAlgebra a({2, 1});
    PartitionInstance inst = random_partition_instance(a, 2, 0.1, rng);
    PartitionCertificate cert = solve_partition(inst);
    REQUIRE(verify_partition(inst, cert).valid);

    PartitionCertificate bad = cert;
    bad.a.blocks[0](0, 0) += 1e-6;
    CHECK(verify_partition(inst, bad).reason().find("unit-sum") != std::string::npos);

    bad = cert;
    bad.C[0] *= 1.0 / (1.0 - cert.eps) * 1.5;
    PartitionVerdict v = verify_partition(inst, bad);
    CHECK(!v.valid);
    CHECK(v.reason().find("contraction") != std::string::npos);

    bad = cert;
    bad.C[1](0, 0) += 1e-4;
    CHECK(verify_partition(inst, bad).reason().find("reconstruction") != std::string::npos);

    bad = cert;
    bad.C.pop_back();
    CHECK(verify_partition(inst, bad).reason() == "shape");

    // Flipping one summand breaks positivity (and the unit sum)
    bad = cert;
    bad.a.blocks[1] = -bad.a.blocks[1];
    CHECK(verify_partition(inst, bad).reason().find("psd") != std::string::npos);
}

TEST_CASE("non-strict input is refused") {
    AmbientAlgebra a({2});
    std::vector<BlockMatrix> b{BlockMatrix(std::vector<CMat>{CMat::Identity(2, 2)})};
    PartitionInstance inst = make_partition_instance(a, b);
    CHECK(inst.margin == doctest::Approx(0.0));
    CHECK_THROWS_AS(solve_partition(inst), std::invalid_argument);
    CMat nh = CMat::Zero(2, 2);
    nh(0, 1) = 0.5;
    CHECK_THROWS_AS(make_partition_instance(a, {BlockMatrix(std::vector<CMat>{nh})}), std::invalid_argument);
}

TEST_CASE("json round trip") {
    Rng rng(5);
    PartitionInstance inst = random_partition_instance(AmbientAlgebra({2, 2}), 2, 0.1, rng);
    PartitionCertificate cert = solve_partition(inst);
    PartitionInstance inst2 = partition_instance_from_json(nlohmann::json::parse(to_json(inst).dump()));
    PartitionCertificate cert2 = partition_certificate_from_json(nlohmann::json::parse(to_json(cert).dump()));
    CHECK(inst2.algebra == inst.algebra);
    CHECK(inst2.margin == doctest::Approx(inst.margin));
    CHECK(verify_partition(inst2, cert2).valid);
}

}
