#pragma once

#include <limits>
#include <string>
#include <vector>

#include "opsys/dual.hpp"

namespace opsys {

// Tensor factor: a concrete system, or the dual of one written in the dual basis delta_i
struct Factor {
    SystemPtr system;
    bool dual = false;

    int dim() const { return system->dim(); }
    std::string name() const;
    // Coordinates of the Archimedean unit: e_0, or the faithful state values for a dual
    CVec unit() const;
    bool full_algebra() const { return !dual && system->is_full_algebra(); }
};
Factor concrete(SystemPtr s);
Factor dual_of(SystemPtr s);
// Accepts a system name, optionally suffixed with '*' for the dual
Factor parse_factor(const std::string& spec);

// Membership of sum_l Y_l (x) f_l in M_r(F)^+
struct ConeCheck {
    sdp::Status status = sdp::Status::Inconclusive;
    double min_eigenvalue = 0.0;  // concrete factors only
    std::string report;
    bool positive() const { return status == sdp::Status::Feasible; }
};
ConeCheck factor_positive(const Factor& f, const std::vector<CMat>& coeffs, const sdp::SolverOptions& opt = {});

// u = sum_ij C_ij (x) s_i (x) t_j in M_n(S (x) T); coeffs[i * dim T + j] = C_ij
struct TensorElement {
    Factor left, right;
    int level = 1;
    std::vector<CMat> coeffs;

    CMat& at(int i, int j) { return coeffs[i * right.dim() + j]; }
    const CMat& at(int i, int j) const { return coeffs[i * right.dim() + j]; }

    static TensorElement zero(const Factor& l, const Factor& r, int n);
    static TensorElement unit(const Factor& l, const Factor& r, int n);
    // u + eps (1 (x) 1) I_n
    TensorElement plus_unit(double eps) const;
    // Flip of the factors, C_ij -> C_ji
    TensorElement swapped() const;
    bool is_self_adjoint(double tol = kTolEq) const;
    double norm() const;
};

// Ambient realization for two concrete factors: block (b, c) acts on C^n (x) C^{d_b} (x) C^{e_c}
BlockMatrix realize(const TensorElement& u);
// Random self-adjoint element with Hermitian coefficients
TensorElement random_tensor_element(const Factor& l, const Factor& r, int n, Rng& rng);
// Random element shifted by a unit multiple so that its min margin equals `margin`
TensorElement random_min_positive(const Factor& l, const Factor& r, int n, double margin, Rng& rng);

struct MinVerdict {
    sdp::Status status = sdp::Status::Inconclusive;  // Feasible = positive
    double min_eigenvalue = 0.0;  // concrete pairs
    CVec witness;                 // concrete pairs: eigenvector of the failing block
    int witness_block = -1;
    DualVerdict dual;             // one dual factor: verdict of the failing (or last) block
    std::string report;
    bool positive() const { return status == sdp::Status::Feasible; }
};
MinVerdict min_positive(const TensorElement& u, const sdp::SolverOptions& opt = {});

// X^*(P (x) Q) X = u + eps (1 (x) 1) I_n with P in M_p(S)^+, Q in M_q(T)^+; rows of X are a q + b
struct MaxCertificate {
    int p = 0, q = 0;
    std::vector<CMat> P;
    std::vector<CMat> Q;
    CMat X;
    double eps = 0.0;
    std::string method;
};

TensorElement reconstruct(const MaxCertificate& c, const Factor& l, const Factor& r);
// Adds delta (1 (x) 1) I_n as a direct summand, raising eps by delta
MaxCertificate add_unit_slack(const MaxCertificate& c, const Factor& l, const Factor& r, int n, double delta);

struct CertificateCheck {
    bool valid = false;
    double residual = 0.0;
    bool left_positive = false;
    bool right_positive = false;
    std::string reason;
};
CertificateCheck verify_certificate(const TensorElement& u, const MaxCertificate& c, double tol = 1e-8,
                                    const sdp::SolverOptions& opt = {});

enum class InnerOutcome { Certified, NotFound, Rejected };
std::string to_string(InnerOutcome o);

struct MaxInnerResult {
    InnerOutcome outcome = InnerOutcome::NotFound;
    MaxCertificate certificate;
    double best_eps = std::numeric_limits<double>::infinity();  // smallest slack reached
    double residual = 0.0;
    std::string report;
    bool certified() const { return outcome == InnerOutcome::Certified; }
};

// Exact certificate when one factor is a full algebra (M_d, l-infinity, direct sums)
MaxInnerResult max_inner_nuclear_factor(const TensorElement& u, const sdp::SolverOptions& opt = {});

struct SearchOptions {
    std::vector<int> ranks;          // left ranks p; empty = {n, 2n, 3n} capped at dim S dim T
    int restarts = 3;
    int rounds = 12;
    std::vector<double> eps_schedule;  // empty = 1e-2, 1e-3, ..., 1e-8
    double eps_target = 1e-2;        // largest slack accepted as a certificate
    unsigned long long seed = 1;
    sdp::SolverOptions sdp;
};
std::vector<double> default_eps_schedule();

// Alternating search over P and the Gram block B in M_{pn}(T)^+; NotFound is inconclusive
MaxInnerResult max_inner_search(const TensorElement& u, const SearchOptions& opt = {});

// f(v) = sum_ij Re tr(Omega_ij V_ij)
struct OuterEvidence {
    std::string kind;           // "vector-state", "dual-witness" or "functional"
    std::vector<CMat> omega;
    double value = 0.0;         // f(u) / f(unit)
    int cp_level = 0;
    double min_generator_value = 0.0;  // smallest normalized value on max-cone generators tried
    int generators = 0;
    std::string verification;
};

enum class OuterOutcome { Refuted, NoRefutation };
struct OuterResult {
    OuterOutcome outcome = OuterOutcome::NoRefutation;
    bool exact = false;  // NoRefutation that is a theorem (min = max, or the LP has no separating f)
    OuterEvidence evidence;
    std::string report;
    bool refuted() const { return outcome == OuterOutcome::Refuted; }
};

struct OuterOptions {
    int rounds = 25;
    int restarts = 3;
    int alternations = 6;
    double box = 1e3;
    unsigned long long seed = 1;
    bool full_algebra_shortcut = true;  // off: run the cutting planes even when min = max is known
    sdp::SolverOptions sdp;
};

double evaluate_functional(const std::vector<CMat>& omega, const TensorElement& v);
OuterResult max_outer_refute(const TensorElement& u, int L, const OuterOptions& opt = {});
// Re-check of stored evidence: f(u) < 0 and f >= 0 on fresh max-cone generators up to its level
bool recheck_evidence(const TensorElement& u, const OuterEvidence& e, const OuterOptions& opt = {});

// ---- NP(n,k): span of lambda(g_i^j) in the group algebra of the free product of n copies of Z_k ----

struct NpElement {
    int n = 0, k = 0, d = 1;      // d = matrix level of the coefficients
    CMat c0;                      // coefficient of the unit
    std::vector<std::vector<CMat>> c;  // c[i][j - 1] for lambda(g_i^j), j = 1..k-1

    static NpElement unit(int n, int k, int d = 1);
    bool is_self_adjoint(double tol = kTolEq) const;
    CMat evaluate(const std::vector<CMat>& unitaries) const;
};

struct NpRefutation {
    bool refuted = false;
    int checked = 0;
    std::vector<CMat> representation;  // U_i with U_i^k = I
    double min_eigenvalue = 0.0;
    std::string report;
};

// Order-k unitary V diag(omega^r) V^* with Haar V
CMat random_order_k_unitary(Rng& rng, int dim, int k);
NpRefutation np_sample_refute(const NpElement& u, const std::vector<int>& dims = {1, 2, 3, 4}, int samples = 250,
                              unsigned long long seed = 1);
// Positive element built from a W(n,k) (x) M_d tuple A_{i,r} >= 0 with equal block sums
NpElement np_from_W(int n, int k, int d, Rng& rng);

nlohmann::json to_json(const TensorElement& u);
TensorElement tensor_element_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaxCertificate& c);
MaxCertificate max_certificate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OuterEvidence& e);
OuterEvidence outer_evidence_from_json(const nlohmann::json& j);

}  // namespace opsys
