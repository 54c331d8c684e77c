#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace opsys {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Default tolerances shared by every module
inline constexpr double kTolPsd = 1e-9;
inline constexpr double kTolEq = 1e-10;
inline constexpr double kTolFeas = 1e-8;
inline constexpr double kTolVerify = 1e-6;
inline constexpr double kPinvCutoff = 1e-10;

// Block sizes of a finite-dimensional C*-algebra
struct AmbientAlgebra {
    std::vector<int> dims;

    AmbientAlgebra() = default;
    explicit AmbientAlgebra(std::vector<int> d);

    int blocks() const { return static_cast<int>(dims.size()); }
    int total() const;
    int offset(int b) const;
    bool operator==(const AmbientAlgebra& o) const { return dims == o.dims; }
    bool operator!=(const AmbientAlgebra& o) const { return dims != o.dims; }
};

// Element of a direct sum of full matrix algebras
class BlockMatrix {
public:
    std::vector<CMat> blocks;

    BlockMatrix() = default;
    explicit BlockMatrix(const AmbientAlgebra& a);
    explicit BlockMatrix(std::vector<CMat> b) : blocks(std::move(b)) {}

    static BlockMatrix zero(const AmbientAlgebra& a);
    static BlockMatrix identity(const AmbientAlgebra& a);
    // Block-diagonal matrix split according to the ambient dims
    static BlockMatrix from_dense(const AmbientAlgebra& a, const CMat& m);

    AmbientAlgebra ambient() const;
    int total() const;
    CMat dense() const;

    BlockMatrix adjoint() const;
    bool is_self_adjoint(double tol = kTolEq) const;
    double norm() const;  // operator norm
    double frobenius() const;

    BlockMatrix operator+(const BlockMatrix& o) const;
    BlockMatrix operator-(const BlockMatrix& o) const;
    BlockMatrix operator*(const BlockMatrix& o) const;
    BlockMatrix operator*(cd s) const;
    BlockMatrix& operator+=(const BlockMatrix& o);

    // Flatten all entries, block after block, row-major
    CVec vectorize() const;
};

// Hermitian inner product sum_ij conj(a_ij) b_ij over all blocks
cd inner(const BlockMatrix& a, const BlockMatrix& b);

struct PsdResult {
    bool positive = false;
    double min_eigenvalue = 0.0;
    double threshold = 0.0;
    int witness_block = -1;
    CVec witness;  // unit vector in the offending block
};

// Spectral positivity test; threshold is tol * max|eigenvalue| when relative
PsdResult psd_check(const BlockMatrix& m, double tol = kTolPsd, bool relative = true);
PsdResult psd_check(const CMat& m, double tol = kTolPsd, bool relative = true);

// Smallest eigenvalue over all blocks of a self-adjoint element
double min_eigenvalue(const BlockMatrix& m);
double min_eigenvalue(const CMat& m);

struct SqrtInverse {
    BlockMatrix support;   // P
    BlockMatrix inverse;   // D, with M^{1/2} D = P
    BlockMatrix sqrt;      // M^{1/2}
};

SqrtInverse moore_penrose_sqrt_inverse(const BlockMatrix& m, double cutoff = kPinvCutoff,
                                       double tol = kTolPsd);
SqrtInverse moore_penrose_sqrt_inverse(const CMat& m, double cutoff = kPinvCutoff,
                                       double tol = kTolPsd);

// Conjugation by the swap C^a (x) C^b -> C^b (x) C^a
CMat tensor_shuffle(const CMat& x, int a, int b);

// [e_pq]_{p,q} in M_d(M_d)
CMat matrix_units_gram(int d);

// [[Re, -Im], [Im, Re]]
RMat hermitian_to_real(const CMat& m);
// Inverse of the embedding after averaging the redundant copies
CMat real_to_hermitian(const RMat& r);

// Kronecker product of dense complex matrices
// Real basis of the Hermitian q x q matrices: e_ii, then e_ij + e_ji and i(e_ij - e_ji) for i < j
std::vector<CMat> hermitian_basis(int q);
CMat kron(const CMat& a, const CMat& b);

CMat hermitian_part(const CMat& m);

// Matrix JSON schema {"dims": [...], "blocks": [[[ [re,im], ... ]]]}
nlohmann::json to_json(const BlockMatrix& m);
BlockMatrix block_matrix_from_json(const nlohmann::json& j);
nlohmann::json cmat_to_json(const CMat& m);
CMat cmat_from_json(const nlohmann::json& j);
nlohmann::json cvec_to_json(const CVec& v);
CVec cvec_from_json(const nlohmann::json& j);

}  // namespace opsys
