#pragma once

#include <string>
#include <vector>

#include "opsys/tensor.hpp"

namespace opsys {

// Self-adjoint strict contractions b_1..b_m in a direct sum of matrix algebras
struct PartitionInstance {
    AmbientAlgebra algebra;
    std::vector<BlockMatrix> b;
    double margin = 0.0;  // spectra of every b_k lie in [-1 + margin, 1 - margin]
    unsigned long long seed = 0;
};

// min_k (1 - ||b_k||); throws on non-self-adjoint input
double partition_margin(const std::vector<BlockMatrix>& b);
PartitionInstance make_partition_instance(const AmbientAlgebra& a, std::vector<BlockMatrix> b);
// Each b_k scaled to norm 1 - delta_k with delta_k uniform in [margin, 0.5]
PartitionInstance random_partition_instance(const AmbientAlgebra& a, int m, double margin, Rng& rng);
// Direct sum of random blocks with total size at most max_total and at most max_blocks summands
AmbientAlgebra random_algebra(int max_total, int max_blocks, Rng& rng);

// [a_ij] in M_n(A), realized per summand on C^n (x) C^{d}; b_k = sum_ij C_k(i,j) a_ij
struct PartitionCertificate {
    int n = 0;
    BlockMatrix a;
    std::vector<CMat> C;
    double eps = 0.0;

    BlockMatrix entry(int i, int j) const;
};

struct PartitionVerdict {
    bool valid = false;
    std::vector<std::string> reasons;  // "shape", "unit-sum", "psd", "contraction", "reconstruction"
    double unit_residual = 0.0;
    double reconstruction_residual = 0.0;
    double max_contraction = 0.0;
    double min_eigenvalue = 0.0;
    std::string reason() const;
};

PartitionCertificate solve_partition(const PartitionInstance& inst);
PartitionVerdict verify_partition(const PartitionInstance& inst, const PartitionCertificate& cert);

// sum_k w_k (x) b_k with b_0 = 1, as an element of W(2,m) (x) A (the left factor pads m = 1 to 2)
TensorElement partition_element(const PartitionInstance& inst);

struct PartitionMaxResult {
    bool ok = false;
    MaxCertificate certificate;
    TensorElement element;
    double residual = 0.0;
    double tuple_min_eigenvalue = 0.0;  // of (I + C_1, I - C_1, ..., I + C_m, I - C_m)
    std::string report;
};
// x^*(W (x) [a_ij])x with W = I (x) w_0 + sum_k C_k (x) w_k and x = sum_i e_i (x) e_i
PartitionMaxResult partition_to_max_certificate(const PartitionCertificate& cert, const PartitionInstance& inst);

nlohmann::json to_json(const PartitionInstance& inst);
PartitionInstance partition_instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PartitionCertificate& c);
PartitionCertificate partition_certificate_from_json(const nlohmann::json& j);

}  // namespace opsys
