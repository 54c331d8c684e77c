#pragma once

#include <string>
#include <vector>

#include "opsys/catalog.hpp"
#include "opsys/sdp.hpp"

namespace opsys {

// Linear functional stored as its values on the basis of the system
struct Functional {
    SystemPtr system;
    CVec values;

    cd operator()(const BlockMatrix& x) const;
    // f* = f; on a self-adjoint basis this means real values
    bool is_self_adjoint(double tol = kTolEq) const;
};

// Functional from an ambient density: s -> sum_b tr(rho_b s_b)
Functional functional_from_density(const SystemPtr& s, const BlockMatrix& rho);
// Normalized ambient trace restricted to S
Functional faithful_state(const SystemPtr& s);

// p x p matrix of functionals, stored per basis element: values[l] = [f_ij(s_l)]
struct FunctionalMatrix {
    SystemPtr system;
    int p = 0;
    std::vector<CMat> values;

    Functional entry(int i, int j) const;
    CMat operator()(const BlockMatrix& x) const;
    // [f_ij(x_kl)] for x = sum_l X_l (x) s_l in M_q(S), indexed (k,i),(l,j)
    CMat apply_level(const std::vector<CMat>& x) const;
    // sum_ij f_ij(x_ij) for x in M_p(S)
    cd pair(const std::vector<CMat>& x) const;
    bool is_self_adjoint(double tol = kTolEq) const;
};

// Induced map of a Choi matrix: Phi(x)_ij = sum_b sum_ab (x_b)_ab C_b(a p + i, b p + j)
CMat apply_choi(const std::vector<CMat>& choi, const BlockMatrix& x, int p);
FunctionalMatrix functional_matrix_from_choi(const SystemPtr& s, const std::vector<CMat>& choi, int p);

struct DualVerdict {
    sdp::Status status = sdp::Status::Inconclusive;  // Feasible = positive, Infeasible = not positive
    std::vector<CMat> choi;     // one PSD block per ambient summand, size d_b p
    std::vector<CMat> witness;  // positive element of M_p(S) as coefficient matrices
    CMat witness_image;         // [f_ij(witness_kl)], not PSD
    double witness_eigenvalue = 0.0;
    std::string report;

    bool positive() const { return status == sdp::Status::Feasible; }
};

DualVerdict dual_positive(const FunctionalMatrix& f, const sdp::SolverOptions& opt = {});

// Known non-positive instance built from a positive one: returns F - c G with G = faithful
// state (x) I_p, chosen so that sum_ij f_ij(x0_ij) = -delta for a positive x0 on the
// boundary of M_p(S)^+
struct NegativeInstance {
    FunctionalMatrix f;
    std::vector<CMat> x0;
};
NegativeInstance perturbed_negative(const FunctionalMatrix& f, Rng& rng, double delta);

// Random positive functional matrix from a random PSD Choi matrix on the ambient
FunctionalMatrix random_positive_functional(const SystemPtr& s, int p, Rng& rng);

// ---- quotients ----

struct QuotientSystem {
    AmbientAlgebra host;
    KernelSubspace kernel;
    std::string name;
};
// M_n / J_n
QuotientSystem make_MJ(int n);

struct QuotientVerdict {
    sdp::Status status = sdp::Status::Inconclusive;  // Feasible = positive lift exists
    BlockMatrix lift;       // representative + eps unit + j, PSD
    std::vector<CMat> j;    // kernel coefficients: j = sum_m J_m (x) k_m
    std::string report;
};

// Level-n representative lives in M_n(host), block b acting on C^n (x) C^{d_b}
QuotientVerdict quotient_positive(const QuotientSystem& q, const BlockMatrix& rep, int level, double eps,
                                  const sdp::SolverOptions& opt = {});

// Archimedean verdict: eps* = inf { eps >= 0 : rep + eps unit has a positive lift }
struct ArchimedeanVerdict {
    bool decided = false;
    double eps_star = 0.0;
    double lo = 0.0, hi = 0.0;  // bisection bracket: infeasible at lo (or lo = 0), feasible at hi
    double margin = 0.0;        // max t with rep - t unit liftable
    QuotientVerdict certificate;  // PSD lift of rep + certificate_eps unit
    double certificate_eps = 0.0;
    std::string report;

    bool positive(double tol = 1e-8) const { return decided && eps_star <= tol; }
};
ArchimedeanVerdict quotient_archimedean(const QuotientSystem& q, const BlockMatrix& rep, int level,
                                        double resolution = 1e-8, const sdp::SolverOptions& opt = {});

// ---- E_n and M_n / J_n ----

// <A, B> = sum_ij A_ij conj(B_ij); the transpose variant pairs A with B^T
cd pairing(const CMat& a, const CMat& b, bool transpose = false);
// Matrix of functionals on E_n induced by [B_kl] in M_L(M_n)
FunctionalMatrix functionals_from_cosets(const SystemPtr& e, const CMat& b_level, int level, bool transpose);

struct PairingDisagreement {
    int sample = 0;
    int level = 0;
    bool dual_positive = false;
    double eps_star = 0.0;
    double margin = 0.0;
};
struct PairingReport {
    int n = 0;
    bool transpose = false;
    int compared = 0;
    int agreed = 0;
    int inconclusive = 0;
    int positives = 0;  // samples the dual side accepted
    std::vector<PairingDisagreement> disagreements;
    double rate() const { return compared ? static_cast<double>(agreed) / compared : 0.0; }
};
PairingReport pairing_crosscheck(int n, int max_level, int samples, unsigned long long seed, bool transpose = false);

// ---- approximate extension ----

struct ExtensionResult {
    sdp::Status status = sdp::Status::Inconclusive;
    FunctionalMatrix psi;        // cp map on the larger system
    double residual = 0.0;       // max_l |phi(s_l) - psi(s_l)| on the smaller basis
    double sampled_distance = 0.0;  // lower estimate of the level-d distance
    bool recertified = false;
    std::string report;
};
// phi on S1, S1 and S2 in the same ambient algebra
ExtensionResult approx_extension(const FunctionalMatrix& phi, const SystemPtr& larger, double eps,
                                 unsigned long long seed = 1, const sdp::SolverOptions& opt = {});

}  // namespace opsys
