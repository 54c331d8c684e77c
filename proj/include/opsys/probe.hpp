#pragma once

#include <string>
#include <vector>

#include "opsys/tensor.hpp"

namespace opsys {

// sum_i s_i (x) delta_i in S (x) S*
struct MaxEntangled {
    SystemPtr system;
    TensorElement element;
};
MaxEntangled me_element(const SystemPtr& s);

// Same system with basis s'_i = sum_k G(i,k) s_k; G real, invertible, first row e_0
SystemPtr rebase(const SystemPtr& s, const Eigen::MatrixXd& G);
// Random well-conditioned G with first row e_0
Eigen::MatrixXd random_basis_change(int dim, Rng& rng);
// Max entry of the ME element of rebase(s, G) transported back to the coordinates of s, minus the identity
double basis_change_defect(const SystemPtr& s, const Eigen::MatrixXd& G);
// (omega (x) ev_p)(ME) = sum_i omega(s_i) delta_i(p)
double me_pairing(const SystemPtr& s, const Functional& omega, const BlockMatrix& p);
// Random state from a random ambient density, and random positive element of S
Functional random_state(const SystemPtr& s, Rng& rng);
BlockMatrix random_positive_element(const SystemPtr& s, Rng& rng);

// phi(s_l) = Q^l in M_q; psi(A) = X^*(P (x) A)X with P realized in M_p(ambient)
struct FactorizationPair {
    SystemPtr system;
    FunctionalMatrix phi;
    std::vector<CMat> psi_P;  // coefficients of P in M_p(S)
    CMat psi_X;               // p q x 1
    double eps = 0.0;  // total unit slack
    bool phi_cp = false;
    bool psi_cp = false;
    double psi_min_eigenvalue = 0.0;
    std::vector<double> basis_defect;  // ||psi(phi(s_l)) - s_l||
    double max_basis_defect = 0.0;
    double conditioning = 0.0;         // estimate of sup ||coords(s)||_1 over the unit ball
    double sampled_defect = 0.0;       // largest defect over sampled unit-ball elements
    bool bound_holds = false;          // sampled defects <= conditioning * max basis defect
    std::string report;

    CVec psi_coeffs(const CMat& A) const;
};

// c certifies me + eps (1 (x) delta) with its own slack c.eps on top; the pair then carries eps + c.eps.
// Throws std::invalid_argument when the certificate does not verify
FactorizationPair extract_factorization(const SystemPtr& s, const MaxCertificate& c, double eps,
                                        unsigned long long seed = 1);
// Multi-start estimate of the coordinates-map norm (unit ball in operator norm to l1); `extra` are
// additional coefficient vectors folded into the maximum
double coordinates_norm(const OperatorSystem& s, Rng& rng, int starts = 16, int steps = 150,
                        const std::vector<CVec>& extra = {});

// Certificate for u itself (eps = 0): the nuclear fast path, or a search on u minus half its min margin
MaxInnerResult certify_max(const TensorElement& u, const SearchOptions& opt = {});

enum class ProbeStatus { Certified, Refuted, Undecided };
std::string to_string(ProbeStatus s);

struct ProbeSample {
    int index = 0;
    int level = 1;
    unsigned long long seed = 0;
    ProbeStatus status = ProbeStatus::Undecided;
    std::string method;  // nuclear-factor, search, outer
    double eps = 0.0;
    double residual = 0.0;
    bool outer_run = false;
    bool outer_refuted = false;
    bool outer_exact = false;
    double outer_value = 0.0;
    MaxCertificate certificate;
};

struct ProbeOptions {
    int levels = 2;
    int samples = 20;
    unsigned long long seed = 1;
    double margin = 1e-3;           // min margin of sampled elements
    bool outer_on_certified = true;  // run the refuter on certified elements as a consistency check
    SearchOptions search;
    OuterOptions outer;
};

struct ProbeReport {
    std::string left, right;
    ProbeOptions options;
    std::vector<ProbeSample> samples;
    int certified = 0, refuted = 0, undecided = 0;
    int refuted_certified = 0;  // refutations of certified elements; nonzero means a bug
};

ProbeReport coincidence_probe(const Factor& l, const Factor& r, const ProbeOptions& opt);
nlohmann::json to_json(const ProbeReport& r, bool with_certificates = false);

}  // namespace opsys
