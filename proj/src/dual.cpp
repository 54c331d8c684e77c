#include "opsys/dual.hpp"

#include <sstream>

namespace opsys {

using sdp::Status;

cd Functional::operator()(const BlockMatrix& x) const {
    CoordsResult c = system->coords(x);
    if (!c.member) throw std::invalid_argument("functional applied outside its system");
    return (c.coeffs.array() * values.array()).sum();
}

bool Functional::is_self_adjoint(double tol) const {
    return values.imag().cwiseAbs().maxCoeff() <= tol * std::max(1.0, values.cwiseAbs().maxCoeff());
}

Functional functional_from_density(const SystemPtr& s, const BlockMatrix& rho) {
    Functional f{s, CVec(s->dim())};
    for (int l = 0; l < s->dim(); ++l) {
        cd v = 0.0;
        for (int b = 0; b < s->ambient().blocks(); ++b) v += (rho.blocks[b] * s->basis()[l].blocks[b]).trace();
        f.values(l) = v;
    }
    return f;
}

Functional faithful_state(const SystemPtr& s) {
    BlockMatrix rho = BlockMatrix::identity(s->ambient()) * cd(1.0 / s->ambient().total(), 0.0);
    return functional_from_density(s, rho);
}

Functional FunctionalMatrix::entry(int i, int j) const {
    Functional f{system, CVec(system->dim())};
    for (int l = 0; l < system->dim(); ++l) f.values(l) = values[l](i, j);
    return f;
}

CMat FunctionalMatrix::operator()(const BlockMatrix& x) const {
    CoordsResult c = system->coords(x);
    if (!c.member) throw std::invalid_argument("functional matrix applied outside its system");
    CMat out = CMat::Zero(p, p);
    for (int l = 0; l < system->dim(); ++l) out += c.coeffs(l) * values[l];
    return out;
}

CMat FunctionalMatrix::apply_level(const std::vector<CMat>& x) const {
    int q = static_cast<int>(x[0].rows());
    CMat out = CMat::Zero(q * p, q * p);
    for (int l = 0; l < system->dim(); ++l) out += kron(x[l], values[l]);
    return out;
}

cd FunctionalMatrix::pair(const std::vector<CMat>& x) const {
    cd v = 0.0;
    for (int l = 0; l < system->dim(); ++l) v += x[l].cwiseProduct(values[l]).sum();
    return v;
}

bool FunctionalMatrix::is_self_adjoint(double tol) const {
    for (const auto& v : values)
        if ((v - v.adjoint()).cwiseAbs().maxCoeff() > tol * std::max(1.0, v.cwiseAbs().maxCoeff())) return false;
    return true;
}

CMat apply_choi(const std::vector<CMat>& choi, const BlockMatrix& x, int p) {
    CMat out = CMat::Zero(p, p);
    for (size_t b = 0; b < choi.size(); ++b) {
        const CMat& xb = x.blocks[b];
        int d = static_cast<int>(xb.rows());
        for (int a = 0; a < d; ++a)
            for (int c = 0; c < d; ++c)
                if (xb(a, c) != 0.0) out += xb(a, c) * choi[b].block(a * p, c * p, p, p);
    }
    return out;
}

FunctionalMatrix functional_matrix_from_choi(const SystemPtr& s, const std::vector<CMat>& choi, int p) {
    FunctionalMatrix f{s, p, {}};
    for (const auto& b : s->basis()) f.values.push_back(apply_choi(choi, b, p));
    return f;
}

namespace {

// Positive x in M_p(S) minimizing sum_ij f_ij(x_ij) over trace-one elements
bool find_witness(const FunctionalMatrix& f, const sdp::SolverOptions& opt, DualVerdict& out) {
    const OperatorSystem& s = *f.system;
    const int p = f.p;
    std::vector<CMat> herm = hermitian_basis(p);
    const int per = static_cast<int>(herm.size());
    sdp::LmiProblem lp;
    lp.add_vars(per * s.dim());
    std::vector<std::pair<int, double>> norm;
    RVec c(lp.nvars);
    for (int b = 0; b < s.ambient().blocks(); ++b) {
        int d = s.ambient().dims[b];
        sdp::LmiBlock& blk = lp.add_block(p * d);
        for (int l = 0; l < s.dim(); ++l)
            for (int k = 0; k < per; ++k) blk.terms.emplace_back(l * per + k, kron(herm[k], s.basis()[l].blocks[b]));
    }
    for (int l = 0; l < s.dim(); ++l) {
        double tr = 0.0;
        for (int b = 0; b < s.ambient().blocks(); ++b) tr += s.basis()[l].blocks[b].trace().real();
        for (int k = 0; k < per; ++k) {
            double t = herm[k].trace().real() * tr;
            if (t != 0.0) norm.emplace_back(l * per + k, t);
            c(l * per + k) = -herm[k].cwiseProduct(f.values[l]).sum().real();
        }
    }
    lp.add_equality(norm, 1.0);
    sdp::LmiOutcome o = sdp::maximize_lmi(lp, c, opt);
    if (o.status != Status::Feasible || o.margin <= opt.tol_feas) return false;
    std::vector<CMat> x(s.dim(), CMat::Zero(p, p));
    for (int l = 0; l < s.dim(); ++l)
        for (int k = 0; k < per; ++k) x[l] += o.z(l * per + k) * herm[k];
    if (!psd_check(realize_level(s, x)).positive) return false;
    CMat img = hermitian_part(f.apply_level(x));
    PsdResult r = psd_check(img);
    if (r.positive) return false;
    out.witness = x;
    out.witness_image = img;
    out.witness_eigenvalue = r.min_eigenvalue;
    return true;
}

}  // namespace

DualVerdict dual_positive(const FunctionalMatrix& f, const sdp::SolverOptions& opt) {
    DualVerdict out;
    const OperatorSystem& s = *f.system;
    const int p = f.p;
    std::ostringstream rep;
    if (!f.is_self_adjoint()) {
        // cp maps are self-adjoint; the worst basis element shifted into the cone is the witness
        int worst = 0;
        double defect = -1.0;
        for (int l = 0; l < s.dim(); ++l) {
            double d = (f.values[l] - f.values[l].adjoint()).norm();
            if (d > defect) defect = d, worst = l;
        }
        std::vector<CMat> x(s.dim(), CMat::Zero(1, 1));
        x[worst](0, 0) = 1.0;
        if (worst != 0) x[0](0, 0) += s.basis()[worst].norm();
        out.status = Status::Infeasible;
        out.witness = x;
        out.witness_image = f.apply_level(x);
        out.witness_eigenvalue = -defect;
        out.report = "functional matrix is not self-adjoint";
        return out;
    }
    sdp::FeasibilityProblem fp;
    std::vector<int> vars;
    for (int b = 0; b < s.ambient().blocks(); ++b) vars.push_back(fp.add_psd(s.ambient().dims[b] * p, true));
    for (int l = 0; l < s.dim(); ++l) {
        for (int i = 0; i < p; ++i)
            for (int j = i; j < p; ++j) {
                std::vector<std::pair<int, double>> re, im;
                for (int b = 0; b < s.ambient().blocks(); ++b) {
                    const CMat& sb = s.basis()[l].blocks[b];
                    int d = static_cast<int>(sb.rows());
                    CMat a = CMat::Zero(d * p, d * p);
                    for (int x = 0; x < d; ++x)
                        for (int y = 0; y < d; ++y) a(y * p + j, x * p + i) = sb(x, y);
                    auto tr = fp.trace_terms(vars[b], a);
                    re.insert(re.end(), tr.begin(), tr.end());
                    if (i != j) {
                        auto ti = fp.trace_terms(vars[b], CMat(cd(0, -1) * a));
                        im.insert(im.end(), ti.begin(), ti.end());
                    }
                }
                fp.add_equal(re, f.values[l](i, j).real());
                if (i != j) fp.add_equal(im, f.values[l](i, j).imag());
            }
    }
    sdp::FeasibilityOutcome o = sdp::solve_feasibility(fp, opt);
    rep << "choi feasibility: " << sdp::to_string(o.status) << " (" << o.report << ")";
    if (o.status == Status::Feasible) {
        for (size_t b = 0; b < vars.size(); ++b) out.choi.push_back(fp.value(vars[b], o.assignment));
        out.status = Status::Feasible;
        out.report = rep.str();
        return out;
    }
    bool found = find_witness(f, opt, out);
    if (found) {
        out.status = Status::Infeasible;
        rep << "; witness eigenvalue " << out.witness_eigenvalue;
    } else {
        out.status = Status::Inconclusive;
        rep << "; no confirmed witness";
    }
    out.report = rep.str();
    return out;
}

NegativeInstance perturbed_negative(const FunctionalMatrix& f, Rng& rng, double delta) {
    const OperatorSystem& s = *f.system;
    std::vector<CMat> x = random_level_element(s, f.p, rng);
    double lmin = min_eigenvalue(realize_level(s, x));
    x[0] -= lmin * CMat::Identity(f.p, f.p);
    Functional w = faithful_state(f.system);
    FunctionalMatrix g{f.system, f.p, {}};
    for (int l = 0; l < s.dim(); ++l) g.values.push_back(w.values(l) * CMat::Identity(f.p, f.p));
    double fx = f.pair(x).real(), gx = g.pair(x).real();
    double c = (fx + delta) / gx;
    NegativeInstance out{FunctionalMatrix{f.system, f.p, {}}, x};
    for (int l = 0; l < s.dim(); ++l) out.f.values.push_back(f.values[l] - c * g.values[l]);
    return out;
}

FunctionalMatrix random_positive_functional(const SystemPtr& s, int p, Rng& rng) {
    std::vector<CMat> choi;
    for (int d : s->ambient().dims) choi.push_back(random_psd(rng, d * p));
    return functional_matrix_from_choi(s, choi, p);
}

// ---- quotients ----

QuotientSystem make_MJ(int n) {
    QuotientSystem q;
    q.kernel = make_J(n);
    q.host = q.kernel.host;
    q.name = "M_" + std::to_string(n) + "/J_" + std::to_string(n);
    return q;
}

namespace {

// rep + eps unit + sum_m Y_m (x) k_m, with an optional -t unit column
sdp::LmiProblem quotient_lmi(const QuotientSystem& q, const BlockMatrix& rep, int level, double eps, bool with_t,
                             int& t_index) {
    std::vector<CMat> herm = hermitian_basis(level);
    const int per = static_cast<int>(herm.size());
    const int nk = static_cast<int>(q.kernel.basis.size());
    sdp::LmiProblem lp;
    lp.add_vars(per * nk);
    t_index = with_t ? lp.add_vars(1) : -1;
    for (int b = 0; b < q.host.blocks(); ++b) {
        int d = q.host.dims[b];
        if (rep.blocks[b].rows() != level * d) throw std::invalid_argument("quotient representative has the wrong size");
        sdp::LmiBlock& blk = lp.add_block(level * d);
        blk.F0 = hermitian_part(rep.blocks[b]) + eps * CMat::Identity(level * d, level * d);
        for (int m = 0; m < nk; ++m)
            for (int k = 0; k < per; ++k) blk.terms.emplace_back(m * per + k, kron(herm[k], q.kernel.basis[m].blocks[b]));
        if (with_t) blk.terms.emplace_back(t_index, -CMat::Identity(level * d, level * d));
    }
    return lp;
}

std::vector<CMat> kernel_coeffs(const QuotientSystem& q, int level, const RVec& z) {
    std::vector<CMat> herm = hermitian_basis(level);
    const int per = static_cast<int>(herm.size());
    std::vector<CMat> j;
    for (size_t m = 0; m < q.kernel.basis.size(); ++m) {
        CMat y = CMat::Zero(level, level);
        for (int k = 0; k < per; ++k) y += z(m * per + k) * herm[k];
        j.push_back(y);
    }
    return j;
}

}  // namespace

QuotientVerdict quotient_positive(const QuotientSystem& q, const BlockMatrix& rep, int level, double eps,
                                  const sdp::SolverOptions& opt) {
    int t_index;
    sdp::LmiProblem lp = quotient_lmi(q, rep, level, eps, false, t_index);
    sdp::LmiOutcome o = sdp::solve_lmi(lp, opt);
    QuotientVerdict v;
    v.status = o.status;
    v.report = o.report;
    if (o.status == Status::Feasible) {
        std::vector<CMat> blocks;
        for (int b = 0; b < q.host.blocks(); ++b) blocks.push_back(lp.evaluate(b, o.z));
        v.lift = BlockMatrix(blocks);
        v.j = kernel_coeffs(q, level, o.z);
    }
    return v;
}

ArchimedeanVerdict quotient_archimedean(const QuotientSystem& q, const BlockMatrix& rep, int level,
                                        double resolution, const sdp::SolverOptions& opt) {
    ArchimedeanVerdict v;
    int t_index;
    sdp::LmiProblem lp = quotient_lmi(q, rep, level, 0.0, true, t_index);
    RVec c = RVec::Zero(lp.nvars);
    c(t_index) = 1.0;
    sdp::LmiOutcome m = sdp::maximize_lmi(lp, c, opt);
    std::ostringstream rep_s;
    if (m.status != Status::Feasible) {
        v.report = "margin problem " + sdp::to_string(m.status) + ": " + m.report;
        return v;
    }
    v.margin = m.margin;
    double guess = std::max(0.0, -m.margin);
    rep_s << "margin " << m.margin;
    // Confirm the margin estimate by bisection inside a small bracket
    double lo = std::max(0.0, guess - 1e-6), hi = guess + 1e-6;
    QuotientVerdict at_hi = quotient_positive(q, rep, level, hi, opt);
    if (at_hi.status != Status::Feasible) {
        v.report = rep_s.str() + "; bracket top not feasible: " + at_hi.report;
        return v;
    }
    QuotientVerdict at_lo = quotient_positive(q, rep, level, lo, opt);
    if (at_lo.status == Status::Feasible) {
        if (lo > 0.0) {
            v.report = rep_s.str() + "; bracket bottom unexpectedly feasible";
            return v;
        }
        v.decided = true;
        v.eps_star = 0.0;
        v.lo = v.hi = 0.0;
        v.certificate = at_lo;
        v.certificate_eps = 0.0;
        v.report = rep_s.str() + "; positive at eps = 0";
        return v;
    }
    if (at_lo.status == Status::Inconclusive && lo > 0.0) {
        v.report = rep_s.str() + "; bracket bottom inconclusive";
        return v;
    }
    int steps = 0;
    while (hi - lo > resolution && steps < 60) {
        double mid = 0.5 * (lo + hi);
        QuotientVerdict r = quotient_positive(q, rep, level, mid, opt);
        if (r.status == Status::Feasible) {
            hi = mid;
            at_hi = r;
        } else {
            lo = mid;
        }
        ++steps;
    }
    v.decided = true;
    v.lo = lo;
    v.hi = hi;
    v.eps_star = hi;
    v.certificate = at_hi;
    // Move the lift off the boundary so it passes an exact PSD check
    double lmin = min_eigenvalue(at_hi.lift);
    v.certificate_eps = hi;
    if (lmin < 0.0) {
        v.certificate_eps -= lmin;
        v.certificate.lift = v.certificate.lift + BlockMatrix::identity(v.certificate.lift.ambient()) * cd(-lmin, 0.0);
    }
    rep_s << "; eps* in [" << lo << ", " << hi << "] after " << steps << " bisection steps";
    v.report = rep_s.str();
    return v;
}

// ---- E_n and M_n / J_n ----

cd pairing(const CMat& a, const CMat& b, bool transpose) {
    const CMat bb = transpose ? CMat(b.transpose()) : b;
    return a.cwiseProduct(bb.conjugate()).sum();
}

FunctionalMatrix functionals_from_cosets(const SystemPtr& e, const CMat& b_level, int level, bool transpose) {
    int n = e->ambient().dims[0];
    FunctionalMatrix f{e, level, {}};
    for (const auto& s : e->basis()) {
        CMat v(level, level);
        for (int k = 0; k < level; ++k)
            for (int l = 0; l < level; ++l) v(k, l) = pairing(s.blocks[0], b_level.block(k * n, l * n, n, n), transpose);
        f.values.push_back(v);
    }
    return f;
}

PairingReport pairing_crosscheck(int n, int max_level, int samples, unsigned long long seed, bool transpose) {
    PairingReport r;
    r.n = n;
    r.transpose = transpose;
    SystemPtr e = make_E(n);
    QuotientSystem q = make_MJ(n);
    for (int s = 0; s < samples; ++s) {
        for (int level = 1; level <= max_level; ++level) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s) * 16 + level));
            int dim = level * n;
            // Recentre on the quotient boundary so both verdicts occur
            CMat h = random_hermitian(rng, dim);
            int t_index;
            sdp::LmiProblem lp = quotient_lmi(q, BlockMatrix(std::vector<CMat>{h}), level, 0.0, true, t_index);
            RVec c = RVec::Zero(lp.nvars);
            c(t_index) = 1.0;
            sdp::LmiOutcome m = sdp::maximize_lmi(lp, c);
            if (m.status != Status::Feasible) {
                ++r.inconclusive;
                continue;
            }
            double shift = -m.margin + uniform(rng, -0.3, 0.3) * h.norm() / std::sqrt(static_cast<double>(dim));
            CMat b = h + shift * CMat::Identity(dim, dim);
            DualVerdict dv = dual_positive(functionals_from_cosets(e, b, level, transpose));
            ArchimedeanVerdict av = quotient_archimedean(q, BlockMatrix(std::vector<CMat>{b}), level);
            if (dv.status == Status::Inconclusive || !av.decided) {
                ++r.inconclusive;
                continue;
            }
            ++r.compared;
            bool qp = av.positive(1e-7);
            if (dv.positive()) ++r.positives;
            if (qp == dv.positive()) {
                ++r.agreed;
            } else {
                r.disagreements.push_back({s, level, dv.positive(), av.eps_star, av.margin});
            }
        }
    }
    return r;
}

// ---- approximate extension ----

ExtensionResult approx_extension(const FunctionalMatrix& phi, const SystemPtr& larger, double eps,
                                 unsigned long long seed, const sdp::SolverOptions& opt) {
    ExtensionResult out;
    const OperatorSystem& s1 = *phi.system;
    if (larger->ambient() != s1.ambient()) throw std::invalid_argument("approx_extension: systems in different ambients");
    for (const auto& b : s1.basis())
        if (!larger->coords(b).member) throw std::invalid_argument("approx_extension: smaller system not contained");
    DualVerdict dv = dual_positive(phi, opt);
    if (!dv.positive()) {
        out.status = dv.status;
        out.report = "input map not certified cp: " + dv.report;
        return out;
    }
    const int p = phi.p;
    out.psi = functional_matrix_from_choi(larger, dv.choi, p);
    for (int l = 0; l < s1.dim(); ++l)
        out.residual = std::max(out.residual, (phi.values[l] - apply_choi(dv.choi, s1.basis()[l], p)).cwiseAbs().maxCoeff());
    // Sampled level-p norm of phi - psi on unit-norm elements of M_p(S1)
    Rng rng(seed);
    for (int t = 0; t < 200; ++t) {
        std::vector<CMat> x;
        for (int l = 0; l < s1.dim(); ++l) x.push_back(random_complex(rng, p, p));
        double nrm = realize_level(s1, x).norm();
        if (nrm == 0.0) continue;
        CMat diff = CMat::Zero(p * p, p * p);
        for (int l = 0; l < s1.dim(); ++l)
            diff += kron(x[l] / nrm, phi.values[l] - apply_choi(dv.choi, s1.basis()[l], p));
        Eigen::JacobiSVD<CMat> svd(diff);
        out.sampled_distance = std::max(out.sampled_distance, svd.singularValues()(0));
    }
    out.recertified = dual_positive(out.psi, opt).positive();
    out.status = (out.recertified && out.sampled_distance <= eps) ? Status::Feasible : Status::Inconclusive;
    std::ostringstream rep;
    rep << "residual " << out.residual << ", sampled level-" << p << " distance " << out.sampled_distance
        << ", re-certified " << (out.recertified ? "yes" : "no");
    out.report = rep.str();
    return out;
}

}  // namespace opsys
