#pragma once

#include <memory>
#include <string>
#include <vector>

#include "opsys/linalg.hpp"
#include "opsys/random.hpp"

namespace opsys {

struct CoordsResult {
    bool member = false;
    CVec coeffs;
    double distance = 0.0;  // residual of the least-squares fit
};

// Concrete operator system: span of a self-adjoint basis inside an ambient algebra.
// Catalog bases consist of self-adjoint elements with the unit first, so real
// coefficient vectors are exactly the self-adjoint elements.
class OperatorSystem {
public:
    OperatorSystem(std::string name, AmbientAlgebra ambient, std::vector<BlockMatrix> basis,
                   std::string convention = "");

    const std::string& name() const { return name_; }
    const AmbientAlgebra& ambient() const { return ambient_; }
    const std::vector<BlockMatrix>& basis() const { return basis_; }
    const std::string& convention() const { return convention_; }
    int dim() const { return static_cast<int>(basis_.size()); }
    // All of the ambient algebra
    bool is_full_algebra() const;

    BlockMatrix reconstruct(const CVec& coeffs) const;
    CoordsResult coords(const BlockMatrix& x, double tol = kTolEq) const;
    // Coordinates without the membership test
    CVec project(const BlockMatrix& x) const;

    // Matrix unit e_ab in ambient block b, expressed in the basis (full algebras only)
    CVec matrix_unit_coords(int block, int a, int b) const;

private:
    std::string name_;
    AmbientAlgebra ambient_;
    std::vector<BlockMatrix> basis_;
    std::string convention_;
    CMat basis_columns_;
    Eigen::ColPivHouseholderQR<CMat> qr_;
};

using SystemPtr = std::shared_ptr<const OperatorSystem>;

// Element of M_q(S) written as sum_l X_l (x) s_l; block b of the ambient realization is
// sum_l kron(X_l, s_l^b) on C^q (x) C^{d_b}
BlockMatrix realize_level(const OperatorSystem& s, const std::vector<CMat>& coeffs);
// Inverse of realize_level; empty when some entry leaves the span
std::vector<CMat> level_coords(const OperatorSystem& s, const BlockMatrix& x, int q, double tol = kTolEq);
// Random self-adjoint element of M_q(S) (Hermitian coefficient matrices)
std::vector<CMat> random_level_element(const OperatorSystem& s, int q, Rng& rng);

struct KernelSubspace {
    AmbientAlgebra host;
    std::vector<BlockMatrix> basis;
    std::string name;
};

SystemPtr make_W(int n, int k);
SystemPtr make_E(int n);
SystemPtr make_U(int n);
SystemPtr make_F(int n);
SystemPtr make_Linf(int m);
SystemPtr make_Mat(int d);
// The whole algebra of a direct sum of matrix blocks
SystemPtr make_algebra(const AmbientAlgebra& a);
KernelSubspace make_J(int n);

// Checks of the kernel invariants: *-closed, unit outside, no nonzero positive element on a sampled net
struct KernelCheck {
    bool self_adjoint = false;
    bool unit_outside = false;
    bool no_positive = false;
};
KernelCheck check_kernel(const KernelSubspace& j, int samples, unsigned long long seed);

// Names "W:n,k", "E:n", "U:n", "F:n", "Linf:m", "Mat:d", "Alg:d1+d2+..."
SystemPtr parse_system(const std::string& spec);
std::string describe_ambient(const AmbientAlgebra& a);

// W(2,n) sitting diagonally in F_n, with the diagonal compression onto its range
struct PolyhedralEmbedding {
    int n = 0;
    SystemPtr source;  // W(2,n) in l-infinity of size 2n
    SystemPtr target;  // F_n in M_{2n}
    BlockMatrix embed(const BlockMatrix& w) const;
    BlockMatrix expectation(const BlockMatrix& x) const;
    // Amplification to M_p(M_{2n}), realized on C^p (x) C^{2n}
    CMat expectation_level(const CMat& x_level, int p) const;
};
PolyhedralEmbedding embed_W_in_F(int n);

}  // namespace opsys
