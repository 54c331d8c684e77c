#pragma once

#include <string>
#include <utility>
#include <vector>

#include "opsys/linalg.hpp"

namespace opsys::sdp {

enum class Status { Feasible, Infeasible, Unbounded, Inconclusive };
std::string to_string(Status s);

struct SolverOptions {
    double tol_feas = kTolFeas;
    double tol_psd = kTolPsd;
    double ipm_tol = 1e-10;
    int max_iterations = 120;
    double box = 1e4;  // bound on whitened variables, keeps the dual side compact
};

// F(z) = F0 + sum_i z_i F_i, Hermitian; positivity is imposed through hermitian_to_real
struct LmiBlock {
    CMat F0;
    std::vector<std::pair<int, CMat>> terms;
};

// Find real z with A z = b and every block F(z) >= 0
struct LmiProblem {
    int nvars = 0;
    std::vector<LmiBlock> blocks;
    std::vector<std::pair<std::vector<std::pair<int, double>>, double>> equalities;

    int add_vars(int count);
    LmiBlock& add_block(int size);
    void add_equality(std::vector<std::pair<int, double>> terms, double rhs);
    CMat evaluate(int block, const RVec& z) const;
};

struct LmiOutcome {
    Status status = Status::Inconclusive;
    RVec z;                       // assignment (feasible) or best iterate
    double margin = 0.0;          // max t with F(z) >= t I, or objective value
    std::vector<CMat> witness;    // PSD duals per block when infeasible
    double witness_value = 0.0;   // sum <F0, Y> < 0 for a valid witness
    double witness_residual = 0.0;
    int iterations = 0;
    std::string report;
};

// max t subject to F_b(z) >= t I; verdict from the sign of t
LmiOutcome solve_lmi(const LmiProblem& p, const SolverOptions& opt = {});
// max c^T z subject to F_b(z) >= 0
LmiOutcome maximize_lmi(const LmiProblem& p, const RVec& c, const SolverOptions& opt = {});

// Variables are PSD blocks (real symmetric or complex Hermitian) and free scalars,
// flattened into one real parameter vector
struct PsdVariable {
    int size = 0;
    bool complex = false;
};

enum class ConstraintKind { Equal, GreaterEqual };

struct AffineConstraint {
    std::vector<std::pair<int, double>> terms;
    double rhs = 0.0;
    ConstraintKind kind = ConstraintKind::Equal;
};

class FeasibilityProblem {
public:
    std::vector<PsdVariable> variables;
    int free_scalars = 0;
    std::vector<AffineConstraint> constraints;

    int add_psd(int size, bool complex = false);
    int add_free(int count = 1);  // index of the first new parameter
    int num_params() const;
    int offset(int var) const;
    int free_offset() const;

    // Parameter indices that hold the entry (i,j) of a variable
    int entry(int var, int i, int j, bool imag = false) const;
    // Coefficients of Re tr(A X_var) on the parameter vector
    std::vector<std::pair<int, double>> trace_terms(int var, const CMat& a) const;
    void add_equal(std::vector<std::pair<int, double>> terms, double rhs);
    void add_greater_equal(std::vector<std::pair<int, double>> terms, double rhs);

    CMat value(int var, const RVec& params) const;
    LmiProblem to_lmi() const;
};

struct FeasibilityOutcome {
    Status status = Status::Inconclusive;
    RVec assignment;
    double margin = 0.0;
    std::vector<CMat> witness;  // one per PSD variable, then one 1x1 per inequality
    double witness_value = 0.0;
    double residual = 0.0;
    double min_eigenvalue = 0.0;
    std::string report;
};

FeasibilityOutcome solve_feasibility(const FeasibilityProblem& p, const SolverOptions& opt = {});
// direction is a linear functional on the parameter vector
FeasibilityOutcome maximize_margin(const FeasibilityProblem& p, const RVec& direction,
                                   const SolverOptions& opt = {});

// Independent re-check of an assignment: constraint residual and PSD margin
struct Verification {
    bool ok = false;
    double residual = 0.0;
    double min_eigenvalue = 0.0;
};
Verification verify_assignment(const FeasibilityProblem& p, const RVec& params, double tol_feas = kTolFeas,
                               double tol_psd = kTolPsd);

nlohmann::json to_json(const FeasibilityProblem& p);
FeasibilityProblem feasibility_problem_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LmiProblem& p);
LmiProblem lmi_problem_from_json(const nlohmann::json& j);

}  // namespace opsys::sdp
