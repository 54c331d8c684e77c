#include "opsys/tensor.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <numbers>
#include <sstream>

namespace opsys {

using sdp::Status;

std::string Factor::name() const { return system->name() + (dual ? "*" : ""); }

CVec Factor::unit() const {
    if (!dual) {
        CVec e = CVec::Zero(dim());
        e(0) = 1.0;
        return e;
    }
    return faithful_state(system).values;
}

Factor concrete(SystemPtr s) { return Factor{std::move(s), false}; }
Factor dual_of(SystemPtr s) { return Factor{std::move(s), true}; }

Factor parse_factor(const std::string& spec) {
    if (!spec.empty() && spec.back() == '*') return dual_of(parse_system(spec.substr(0, spec.size() - 1)));
    return concrete(parse_system(spec));
}

ConeCheck factor_positive(const Factor& f, const std::vector<CMat>& coeffs, const sdp::SolverOptions& opt) {
    if (static_cast<int>(coeffs.size()) != f.dim()) throw std::invalid_argument("factor element has the wrong length");
    ConeCheck c;
    if (!f.dual) {
        PsdResult r = psd_check(realize_level(*f.system, coeffs), opt.tol_psd);
        c.min_eigenvalue = r.min_eigenvalue;
        c.status = r.positive ? Status::Feasible : Status::Infeasible;
        std::ostringstream s;
        s << "min eigenvalue " << r.min_eigenvalue;
        c.report = s.str();
        return c;
    }
    FunctionalMatrix m{f.system, static_cast<int>(coeffs[0].rows()), coeffs};
    DualVerdict v = dual_positive(m, opt);
    c.status = v.status;
    c.min_eigenvalue = v.witness_eigenvalue;
    c.report = v.report;
    return c;
}

// ---- tensor elements ----

TensorElement TensorElement::zero(const Factor& l, const Factor& r, int n) {
    if (n < 1) throw std::invalid_argument("level must be positive");
    TensorElement u{l, r, n, {}};
    u.coeffs.assign(static_cast<size_t>(l.dim()) * r.dim(), CMat::Zero(n, n));
    return u;
}

TensorElement TensorElement::unit(const Factor& l, const Factor& r, int n) { return zero(l, r, n).plus_unit(1.0); }

TensorElement TensorElement::plus_unit(double eps) const {
    TensorElement u = *this;
    CVec a = left.unit(), b = right.unit();
    CMat id = CMat::Identity(level, level);
    for (int i = 0; i < left.dim(); ++i)
        for (int j = 0; j < right.dim(); ++j) {
            double w = (a(i) * b(j)).real();
            if (w != 0.0) u.at(i, j) += eps * w * id;
        }
    return u;
}

TensorElement TensorElement::swapped() const {
    TensorElement u = zero(right, left, level);
    for (int i = 0; i < left.dim(); ++i)
        for (int j = 0; j < right.dim(); ++j) u.at(j, i) = at(i, j);
    return u;
}

bool TensorElement::is_self_adjoint(double tol) const {
    for (const auto& c : coeffs)
        if ((c - c.adjoint()).norm() > tol * std::max(1.0, c.norm())) return false;
    return true;
}

double TensorElement::norm() const {
    double s = 0.0;
    for (const auto& c : coeffs) s += c.squaredNorm();
    return std::sqrt(s);
}

BlockMatrix realize(const TensorElement& u) {
    if (u.left.dual || u.right.dual) throw std::invalid_argument("realize needs two concrete factors");
    const OperatorSystem& s = *u.left.system;
    const OperatorSystem& t = *u.right.system;
    std::vector<CMat> blocks;
    for (int b = 0; b < s.ambient().blocks(); ++b)
        for (int c = 0; c < t.ambient().blocks(); ++c) {
            int size = u.level * s.ambient().dims[b] * t.ambient().dims[c];
            CMat m = CMat::Zero(size, size);
            for (int i = 0; i < s.dim(); ++i) {
                const CMat& si = s.basis()[i].blocks[b];
                if (si.cwiseAbs().maxCoeff() == 0.0) continue;
                for (int j = 0; j < t.dim(); ++j) {
                    const CMat& cij = u.at(i, j);
                    const CMat& tj = t.basis()[j].blocks[c];
                    if (cij.cwiseAbs().maxCoeff() == 0.0 || tj.cwiseAbs().maxCoeff() == 0.0) continue;
                    m += kron(cij, kron(si, tj));
                }
            }
            blocks.push_back(m);
        }
    return BlockMatrix(blocks);
}

TensorElement random_tensor_element(const Factor& l, const Factor& r, int n, Rng& rng) {
    TensorElement u = TensorElement::zero(l, r, n);
    for (auto& c : u.coeffs) c = random_hermitian(rng, n);
    return u;
}

TensorElement random_min_positive(const Factor& l, const Factor& r, int n, double margin, Rng& rng) {
    if (l.dual || r.dual) throw std::invalid_argument("random_min_positive needs concrete factors");
    TensorElement u = random_tensor_element(l, r, n, rng);
    double lmin = min_eigenvalue(realize(u));
    return u.plus_unit(margin - lmin);
}

// ---- minimal cone ----

namespace {

// Functional matrix over the dual side for ambient block b of the concrete left factor
FunctionalMatrix right_dual_block(const TensorElement& u, int b) {
    const OperatorSystem& s = *u.left.system;
    int d = s.ambient().dims[b];
    FunctionalMatrix f{u.right.system, u.level * d, {}};
    for (int j = 0; j < u.right.dim(); ++j) {
        CMat v = CMat::Zero(u.level * d, u.level * d);
        for (int i = 0; i < s.dim(); ++i) {
            const CMat& si = s.basis()[i].blocks[b];
            if (si.cwiseAbs().maxCoeff() == 0.0) continue;
            v += kron(u.at(i, j), si);
        }
        f.values.push_back(v);
    }
    return f;
}

}  // namespace

MinVerdict min_positive(const TensorElement& u, const sdp::SolverOptions& opt) {
    MinVerdict out;
    if (static_cast<int>(u.coeffs.size()) != u.left.dim() * u.right.dim())
        throw std::invalid_argument("tensor element has the wrong number of coefficients");
    if (u.left.dual && u.right.dual) throw std::invalid_argument("min_positive needs at least one concrete factor");
    if (u.left.dual) return min_positive(u.swapped(), opt);
    std::ostringstream rep;
    if (!u.right.dual) {
        PsdResult r = psd_check(realize(u), opt.tol_psd);
        out.min_eigenvalue = r.min_eigenvalue;
        out.status = r.positive ? Status::Feasible : Status::Infeasible;
        if (!r.positive) {
            out.witness = r.witness;
            out.witness_block = r.witness_block;
        }
        rep << "ambient min eigenvalue " << r.min_eigenvalue;
        out.report = rep.str();
        return out;
    }
    // S (x)min T*: block b of S turns u into a matrix of functionals on T
    out.status = Status::Feasible;
    for (int b = 0; b < u.left.system->ambient().blocks(); ++b) {
        DualVerdict v = dual_positive(right_dual_block(u, b), opt);
        rep << "block " << b << ": " << sdp::to_string(v.status) << "; ";
        if (v.status == Status::Feasible) continue;
        out.dual = v;
        out.witness_block = b;
        out.status = v.status;
        if (v.status == Status::Infeasible) break;
    }
    out.report = rep.str();
    return out;
}

// ---- certificates ----

TensorElement reconstruct(const MaxCertificate& c, const Factor& l, const Factor& r) {
    int n = static_cast<int>(c.X.cols());
    TensorElement u = TensorElement::zero(l, r, n);
    CMat xa = c.X.adjoint();
    for (int i = 0; i < l.dim(); ++i) {
        if (c.P[i].cwiseAbs().maxCoeff() == 0.0) continue;
        for (int j = 0; j < r.dim(); ++j) {
            if (c.Q[j].cwiseAbs().maxCoeff() == 0.0) continue;
            u.at(i, j) = xa * kron(c.P[i], c.Q[j]) * c.X;
        }
    }
    return u;
}

MaxCertificate add_unit_slack(const MaxCertificate& c, const Factor& l, const Factor& r, int n, double delta) {
    MaxCertificate o;
    o.p = c.p + n;
    o.q = c.q + 1;
    CVec a = l.unit(), b = r.unit();
    for (int i = 0; i < l.dim(); ++i) {
        CMat m = CMat::Zero(o.p, o.p);
        m.topLeftCorner(c.p, c.p) = c.P[i];
        m.bottomRightCorner(n, n) = a(i) * CMat::Identity(n, n);
        o.P.push_back(m);
    }
    for (int j = 0; j < r.dim(); ++j) {
        CMat m = CMat::Zero(o.q, o.q);
        m.topLeftCorner(c.q, c.q) = c.Q[j];
        m(c.q, c.q) = delta * b(j);
        o.Q.push_back(m);
    }
    o.X = CMat::Zero(static_cast<Eigen::Index>(o.p) * o.q, n);
    for (int a1 = 0; a1 < c.p; ++a1)
        for (int b1 = 0; b1 < c.q; ++b1) o.X.row(a1 * o.q + b1) = c.X.row(a1 * c.q + b1);
    for (int k = 0; k < n; ++k) o.X((c.p + k) * o.q + c.q, k) = 1.0;
    o.eps = c.eps + delta;
    o.method = c.method + (delta != 0.0 ? "+slack" : "");
    return o;
}

CertificateCheck verify_certificate(const TensorElement& u, const MaxCertificate& c, double tol,
                                    const sdp::SolverOptions& opt) {
    CertificateCheck out;
    std::vector<std::string> reasons;
    int n = u.level;
    bool shape = static_cast<int>(c.P.size()) == u.left.dim() && static_cast<int>(c.Q.size()) == u.right.dim() &&
                 c.X.rows() == static_cast<Eigen::Index>(c.p) * c.q && c.X.cols() == n;
    for (const auto& m : c.P) shape = shape && m.rows() == c.p && m.cols() == c.p;
    for (const auto& m : c.Q) shape = shape && m.rows() == c.q && m.cols() == c.q;
    if (!shape) {
        out.reason = "shape";
        out.residual = std::numeric_limits<double>::infinity();
        return out;
    }
    TensorElement target = u.plus_unit(c.eps);
    TensorElement rec = reconstruct(c, u.left, u.right);
    for (size_t k = 0; k < rec.coeffs.size(); ++k)
        out.residual = std::max(out.residual, (rec.coeffs[k] - target.coeffs[k]).norm());
    if (out.residual > tol * std::max(1.0, u.norm())) reasons.push_back("reconstruction");
    out.left_positive = factor_positive(u.left, c.P, opt).positive();
    out.right_positive = factor_positive(u.right, c.Q, opt).positive();
    if (!out.left_positive) reasons.push_back("left factor not positive");
    if (!out.right_positive) reasons.push_back("right factor not positive");
    if (c.eps < -tol) reasons.push_back("negative slack");
    out.valid = reasons.empty();
    for (size_t k = 0; k < reasons.size(); ++k) out.reason += (k ? ", " : "") + reasons[k];
    return out;
}

std::string to_string(InnerOutcome o) {
    switch (o) {
        case InnerOutcome::Certified: return "certified";
        case InnerOutcome::NotFound: return "not_found";
        case InnerOutcome::Rejected: return "rejected";
    }
    return "?";
}

namespace {

// Same certificate for the flipped element
MaxCertificate swap_certificate(const MaxCertificate& c) {
    MaxCertificate o;
    o.p = c.q;
    o.q = c.p;
    o.P = c.Q;
    o.Q = c.P;
    o.X = CMat::Zero(c.X.rows(), c.X.cols());
    for (int a = 0; a < c.p; ++a)
        for (int b = 0; b < c.q; ++b) o.X.row(b * c.p + a) = c.X.row(a * c.q + b);
    o.eps = c.eps;
    o.method = c.method;
    return o;
}

// Right factor a full algebra with summands of size e_g: P_g = sum_j C_ij (x) t_j^g,
// Q = matrix-unit Gram, X e_k = sum_{g,a} e_{(k,ga)} (x) e_{ga}
MaxInnerResult fast_right(const TensorElement& u, const sdp::SolverOptions& opt) {
    MaxInnerResult out;
    const OperatorSystem& t = *u.right.system;
    const AmbientAlgebra& amb = t.ambient();
    const int n = u.level, E = amb.total();
    std::ostringstream rep;

    MaxCertificate c;
    c.p = n * E;
    c.q = E;
    c.method = "nuclear-factor";
    for (int i = 0; i < u.left.dim(); ++i) {
        CMat m = CMat::Zero(c.p, c.p);
        for (int g = 0; g < amb.blocks(); ++g) {
            int e = amb.dims[g], off = n * amb.offset(g);
            for (int j = 0; j < t.dim(); ++j) {
                const CMat& tj = t.basis()[j].blocks[g];
                if (tj.cwiseAbs().maxCoeff() == 0.0) continue;
                m.block(off, off, n * e, n * e) += kron(u.at(i, j), tj);
            }
        }
        c.P.push_back(m);
    }
    c.Q.assign(t.dim(), CMat::Zero(E, E));
    for (int g = 0; g < amb.blocks(); ++g) {
        int off = amb.offset(g);
        for (int a = 0; a < amb.dims[g]; ++a)
            for (int b = 0; b < amb.dims[g]; ++b) {
                CVec w = t.matrix_unit_coords(g, a, b);
                for (int j = 0; j < t.dim(); ++j) c.Q[j](off + a, off + b) = w(j);
            }
    }
    c.X = CMat::Zero(static_cast<Eigen::Index>(c.p) * c.q, n);
    for (int g = 0; g < amb.blocks(); ++g) {
        int e = amb.dims[g], off = amb.offset(g);
        for (int k = 0; k < n; ++k)
            for (int a = 0; a < e; ++a) c.X((n * off + k * e + a) * E + off + a, k) = 1.0;
    }

    // The shuffle P is the min-realization of u up to a unitary, so its positivity is min positivity
    if (!u.left.dual) {
        PsdResult r = psd_check(realize_level(*u.left.system, c.P), opt.tol_psd);
        out.best_eps = std::max(0.0, -r.min_eigenvalue);
        if (!r.positive) {
            out.outcome = InnerOutcome::Rejected;
            rep << "min margin " << r.min_eigenvalue << " below tolerance";
            out.report = rep.str();
            return out;
        }
        if (r.min_eigenvalue < 0.0) {
            c.eps = -r.min_eigenvalue;
            c.P[0] += c.eps * CMat::Identity(c.p, c.p);
        }
    } else {
        ConeCheck pc = factor_positive(u.left, c.P, opt);
        if (!pc.positive()) {
            out.outcome = pc.status == Status::Infeasible ? InnerOutcome::Rejected : InnerOutcome::NotFound;
            out.report = "shuffled element not positive on the dual side: " + pc.report;
            return out;
        }
        out.best_eps = 0.0;
    }
    CertificateCheck chk = verify_certificate(u, c, 1e-9, opt);
    out.residual = chk.residual;
    out.certificate = c;
    out.best_eps = c.eps;
    out.outcome = chk.valid ? InnerOutcome::Certified : InnerOutcome::NotFound;
    rep << "nuclear factor " << u.right.name() << ": p = " << c.p << ", q = " << c.q << ", eps = " << c.eps
        << ", residual " << chk.residual;
    if (!chk.valid) rep << " (" << chk.reason << ")";
    out.report = rep.str();
    return out;
}

// ---- parametrized cone elements inside an LMI ----

// Element of M_r(F)^+; coefficient l equals sum over terms[l] of z_{first + v} G
struct ConeVar {
    int first = 0, count = 0, r = 0;
    std::vector<std::vector<std::pair<int, CMat>>> terms;
    std::vector<double> trace;  // trace of the realization (or Choi matrix) per variable

    std::vector<CMat> value(const RVec& z) const {
        std::vector<CMat> out(terms.size(), CMat::Zero(r, r));
        for (size_t l = 0; l < terms.size(); ++l)
            for (const auto& [v, g] : terms[l]) out[l] += z(first + v) * g;
        for (auto& m : out) m = hermitian_part(m);
        return out;
    }
};

ConeVar add_cone_var(sdp::LmiProblem& lp, const Factor& f, int r) {
    ConeVar cv;
    cv.r = r;
    const OperatorSystem& s = *f.system;
    cv.terms.resize(s.dim());
    if (!f.dual) {
        std::vector<CMat> herm = hermitian_basis(r);
        const int per = r * r;
        cv.count = per * s.dim();
        cv.first = lp.add_vars(cv.count);
        cv.trace.assign(cv.count, 0.0);
        for (int l = 0; l < s.dim(); ++l) {
            double tr = 0.0;
            for (const auto& b : s.basis()[l].blocks) tr += b.trace().real();
            for (int k = 0; k < per; ++k) {
                cv.terms[l].emplace_back(l * per + k, herm[k]);
                cv.trace[l * per + k] = herm[k].trace().real() * tr;
            }
        }
        for (int b = 0; b < s.ambient().blocks(); ++b) {
            sdp::LmiBlock& blk = lp.add_block(r * s.ambient().dims[b]);
            for (int l = 0; l < s.dim(); ++l) {
                const CMat& sb = s.basis()[l].blocks[b];
                if (sb.cwiseAbs().maxCoeff() == 0.0) continue;
                for (int k = 0; k < per; ++k) blk.terms.emplace_back(cv.first + l * per + k, kron(herm[k], sb));
            }
        }
        return cv;
    }
    // Dual factor: one Choi block per ambient summand, Y_l = Phi(s_l)
    int total = 0;
    for (int d : s.ambient().dims) total += (d * r) * (d * r);
    cv.count = total;
    cv.first = lp.add_vars(total);
    cv.trace.assign(total, 0.0);
    int off = 0;
    for (int b = 0; b < s.ambient().blocks(); ++b) {
        int d = s.ambient().dims[b], m = d * r;
        std::vector<CMat> hb = hermitian_basis(m);
        sdp::LmiBlock& blk = lp.add_block(m);
        for (int k = 0; k < m * m; ++k) {
            blk.terms.emplace_back(cv.first + off + k, hb[k]);
            cv.trace[off + k] = hb[k].trace().real();
            for (int l = 0; l < s.dim(); ++l) {
                const CMat& sb = s.basis()[l].blocks[b];
                CMat g = CMat::Zero(r, r);
                for (int a = 0; a < d; ++a)
                    for (int c = 0; c < d; ++c)
                        if (sb(a, c) != 0.0) g += sb(a, c) * hb[k].block(a * r, c * r, r, r);
                if (g.cwiseAbs().maxCoeff() != 0.0) cv.terms[l].emplace_back(off + k, g);
            }
        }
        off += m * m;
    }
    return cv;
}

// sum_{a,a'} A(a,a') B[a,a'] with B cut into n x n blocks
CMat pair_blocks(const CMat& a, const CMat& b, int n) {
    CMat out = CMat::Zero(n, n);
    for (int x = 0; x < a.rows(); ++x)
        for (int y = 0; y < a.cols(); ++y)
            if (a(x, y) != 0.0) out += a(x, y) * b.block(x * n, y * n, n, n);
    return out;
}

// Max-cone generator sum_{a,a'} P_{aa'} (x) B[a,a'] for P in M_p(S)^+, B in M_{pn}(T)^+
TensorElement generator(const Factor& l, const Factor& r, int n, const std::vector<CMat>& P,
                        const std::vector<CMat>& B) {
    TensorElement v = TensorElement::zero(l, r, n);
    for (int i = 0; i < l.dim(); ++i)
        for (int j = 0; j < r.dim(); ++j) v.at(i, j) = pair_blocks(P[i], B[j], n);
    return v;
}

MaxCertificate generator_certificate(const std::vector<CMat>& P, const std::vector<CMat>& B, int n, double eps) {
    MaxCertificate c;
    c.p = static_cast<int>(P[0].rows());
    c.q = c.p * n;
    c.P = P;
    c.Q = B;
    c.X = CMat::Zero(static_cast<Eigen::Index>(c.p) * c.q, n);
    for (int a = 0; a < c.p; ++a)
        for (int k = 0; k < n; ++k) c.X(a * c.q + a * n + k, k) = 1.0;
    c.eps = eps;
    c.method = "alternating-search";
    return c;
}

inline int row_index(int i, int j, int k, int l, int dimT, int n) { return ((i * dimT + j) * n + k) * n + l; }

// Generator entries as a linear function of the cone variable, with the other factor fixed
CMat generator_map(const std::vector<CMat>& fixed, const ConeVar& cv, bool fixed_left, int dimS, int dimT, int n) {
    CMat m = CMat::Zero(static_cast<Eigen::Index>(dimS) * dimT * n * n, cv.count);
    for (int i = 0; i < dimS; ++i)
        for (int j = 0; j < dimT; ++j) {
            const auto& vterms = fixed_left ? cv.terms[j] : cv.terms[i];
            const CMat& f = fixed_left ? fixed[i] : fixed[j];
            if (f.cwiseAbs().maxCoeff() == 0.0) continue;
            for (const auto& [v, g] : vterms) {
                CMat pb = fixed_left ? pair_blocks(f, g, n) : pair_blocks(g, f, n);
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) m(row_index(i, j, k, l, dimT, n), v) += pb(k, l);
            }
        }
    return m;
}

std::vector<CMat> random_positive(const Factor& f, int r, Rng& rng, bool boundary) {
    if (f.dual) {
        std::vector<CMat> v = random_positive_functional(f.system, r, rng).values;
        double s = 0.0;
        for (const auto& m : v) s = std::max(s, m.norm());
        for (auto& m : v) m /= std::max(s, 1e-12);
        return v;
    }
    std::vector<CMat> v = random_level_element(*f.system, r, rng);
    double lmin = min_eigenvalue(realize_level(*f.system, v));
    v[0] += (boundary ? -lmin : -lmin + uniform(rng, 0.1, 1.0)) * CMat::Identity(r, r);
    return v;
}

struct StepResult {
    bool ok = false;
    std::vector<CMat> value;
    double s = std::numeric_limits<double>::infinity();
    std::string report;
};

// min s with u + s unit = generator(P, B), one side fixed
StepResult search_step(const TensorElement& u, const std::vector<CMat>& fixed, bool fixed_left, int p,
                       const sdp::SolverOptions& opt) {
    const int n = u.level, dimS = u.left.dim(), dimT = u.right.dim();
    sdp::LmiProblem lp;
    ConeVar cv = add_cone_var(lp, fixed_left ? u.right : u.left, fixed_left ? p * n : p);
    int sv = lp.add_vars(1);
    CMat m = generator_map(fixed, cv, fixed_left, dimS, dimT, n);
    CVec a = u.left.unit(), b = u.right.unit();
    for (int i = 0; i < dimS; ++i)
        for (int j = 0; j < dimT; ++j) {
            double w = (a(i) * b(j)).real();
            for (int k = 0; k < n; ++k)
                for (int l = k; l < n; ++l) {
                    int row = row_index(i, j, k, l, dimT, n);
                    std::vector<std::pair<int, double>> re, im;
                    for (int v = 0; v < cv.count; ++v) {
                        cd e = m(row, v);
                        if (std::abs(e.real()) > 1e-15) re.emplace_back(cv.first + v, e.real());
                        if (std::abs(e.imag()) > 1e-15) im.emplace_back(cv.first + v, e.imag());
                    }
                    if (k == l && w != 0.0) re.emplace_back(sv, -w);
                    lp.add_equality(re, u.at(i, j)(k, l).real());
                    if (k != l) lp.add_equality(im, u.at(i, j)(k, l).imag());
                }
        }
    RVec c = RVec::Zero(lp.nvars);
    c(sv) = -1.0;
    sdp::LmiOutcome o = sdp::maximize_lmi(lp, c, opt);
    StepResult out;
    out.report = sdp::to_string(o.status) + ": " + o.report;
    if (o.status != Status::Feasible) return out;
    out.ok = true;
    out.value = cv.value(o.z);
    out.s = o.z(sv);
    return out;
}

}  // namespace

MaxInnerResult max_inner_nuclear_factor(const TensorElement& u, const sdp::SolverOptions& opt) {
    if (u.right.full_algebra()) return fast_right(u, opt);
    if (u.left.full_algebra()) {
        MaxInnerResult r = fast_right(u.swapped(), opt);
        r.certificate = swap_certificate(r.certificate);
        if (r.certified()) {
            CertificateCheck chk = verify_certificate(u, r.certificate, 1e-9, opt);
            r.residual = chk.residual;
            if (!chk.valid) r.outcome = InnerOutcome::NotFound, r.report += "; swapped check failed: " + chk.reason;
        }
        return r;
    }
    throw std::invalid_argument("max_inner_nuclear_factor needs a full-algebra factor");
}

std::vector<double> default_eps_schedule() { return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}; }

MaxInnerResult max_inner_search(const TensorElement& u, const SearchOptions& opt) {
    MaxInnerResult out;
    std::ostringstream rep;
    MinVerdict mv = min_positive(u, opt.sdp);
    if (!mv.positive()) {
        out.outcome = InnerOutcome::Rejected;
        out.report = "precondition: not min-positive (" + mv.report + ")";
        return out;
    }
    if (u.left.full_algebra() || u.right.full_algebra()) {
        out = max_inner_nuclear_factor(u, opt.sdp);
        out.report = "fast path: " + out.report;
        return out;
    }
    const int n = u.level, dimS = u.left.dim(), dimT = u.right.dim();
    const int cap = dimS * dimT;
    std::vector<int> ranks = opt.ranks;
    if (ranks.empty()) {
        int p0 = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dimS)) - 1e-9));
        ranks = {p0, p0 + 1, 2 * p0};
    }
    std::vector<double> schedule = opt.eps_schedule.empty() ? default_eps_schedule() : opt.eps_schedule;
    std::sort(schedule.begin(), schedule.end(), std::greater<>());
    const double floor_eps = schedule.back();

    Rng rng(opt.seed);
    double best = std::numeric_limits<double>::infinity();
    MaxCertificate best_cert;
    int best_rank = 0;
    for (int p : ranks) {
        if (p > cap) continue;
        for (int rs = 0; rs < opt.restarts && best > floor_eps; ++rs) {
            std::vector<CMat> P = random_positive(u.left, p, rng, false);
            double prev = std::numeric_limits<double>::infinity();
            for (int round = 0; round < opt.rounds; ++round) {
                StepResult sb = search_step(u, P, true, p, opt.sdp);
                if (!sb.ok) break;
                StepResult sp = search_step(u, sb.value, false, p, opt.sdp);
                std::vector<CMat> B = sb.value;
                double s = sb.s;
                if (sp.ok && sp.s <= sb.s) P = sp.value, s = sp.s;
                MaxCertificate c = generator_certificate(P, B, n, s);
                if (s < 0.0) c = add_unit_slack(c, u.left, u.right, n, -s);
                CertificateCheck chk = verify_certificate(u, c, 1e-8, opt.sdp);
                if (chk.valid && s < best) {
                    best = s;
                    best_cert = c;
                    best_rank = p;
                }
                if (std::getenv("OPSYS_SEARCH_TRACE"))
                    std::fprintf(stderr, "rank %d restart %d round %d: s_B %.6g s_P %.6g check %s %.3g\n", p, rs,
                                 round, sb.s, sp.ok ? sp.s : NAN, chk.reason.c_str(), chk.residual);
                if (s <= floor_eps || prev - s < 1e-7 * std::max(1.0, std::abs(s))) break;
                prev = s;
                // Rescale so that the two factors stay balanced
                double np = 0.0, nb = 0.0;
                for (const auto& m : P) np = std::max(np, m.norm());
                for (const auto& m : B) nb = std::max(nb, m.norm());
                if (np > 0.0 && nb > 0.0) {
                    double f = std::sqrt(nb / np);
                    for (auto& m : P) m *= f;
                }
            }
        }
    }
    out.best_eps = best;
    if (!std::isfinite(best)) {
        out.outcome = InnerOutcome::NotFound;
        rep << "no feasible decomposition at ranks";
        for (int p : ranks) rep << " " << p;
        out.report = rep.str();
        return out;
    }
    double target = 0.0;
    if (best > 0.0) {
        target = std::numeric_limits<double>::infinity();
        for (double e : schedule)
            if (e >= best) target = std::min(target, e);
    }
    if (target > opt.eps_target) {
        out.outcome = InnerOutcome::NotFound;
        rep << "best slack " << best << " at rank " << best_rank << " exceeds the target " << opt.eps_target;
        out.report = rep.str();
        return out;
    }
    MaxCertificate c = add_unit_slack(best_cert, u.left, u.right, n, target - best_cert.eps);
    CertificateCheck chk = verify_certificate(u, c, 1e-8, opt.sdp);
    out.certificate = c;
    out.residual = chk.residual;
    out.outcome = chk.valid ? InnerOutcome::Certified : InnerOutcome::NotFound;
    rep << "alternating search: best slack " << best << " at rank " << best_rank << ", certificate eps " << c.eps
        << ", residual " << chk.residual;
    if (!chk.valid) rep << " (" << chk.reason << ")";
    out.report = rep.str();
    return out;
}

// ---- outer refutation ----

double evaluate_functional(const std::vector<CMat>& omega, const TensorElement& v) {
    double s = 0.0;
    for (size_t k = 0; k < omega.size(); ++k) s += (omega[k] * v.coeffs[k]).trace().real();
    return s;
}

namespace {

// Omega with Re tr(Omega V) = sum over (a,a') of A(a,a') conj(H_a) M H_{a'}^T, where eta = (a, k, c)
CMat vector_kernel(const CVec& eta, const CMat& a, const CMat& m, int n) {
    int r = static_cast<int>(a.rows()), d = static_cast<int>(m.rows());
    CMat g = CMat::Zero(n, n);
    for (int x = 0; x < r; ++x)
        for (int y = 0; y < r; ++y) {
            if (a(x, y) == 0.0) continue;
            CMat hx(n, d), hy(n, d);
            for (int k = 0; k < n; ++k)
                for (int c = 0; c < d; ++c) {
                    hx(k, c) = eta((x * n + k) * d + c);
                    hy(k, c) = eta((y * n + k) * d + c);
                }
            g += a(x, y) * (hx.conjugate() * m * hy.transpose());
        }
    return g.transpose();
}

// Functional from a failed min check; it is positive on the whole min cone
bool min_refutation(const TensorElement& u, const MinVerdict& mv, OuterEvidence& ev) {
    const int n = u.level;
    const OperatorSystem& s = *u.left.system;
    ev.omega.assign(u.coeffs.size(), CMat::Zero(n, n));
    if (!u.right.dual) {
        const OperatorSystem& t = *u.right.system;
        int bt = t.ambient().blocks();
        int b = mv.witness_block / bt, c = mv.witness_block % bt;
        CMat one = CMat::Identity(1, 1);
        for (int i = 0; i < s.dim(); ++i)
            for (int j = 0; j < t.dim(); ++j)
                ev.omega[i * t.dim() + j] =
                    vector_kernel(mv.witness, one, kron(s.basis()[i].blocks[b], t.basis()[j].blocks[c]), n);
        ev.kind = "vector-state";
    } else {
        if (mv.dual.witness.empty()) return false;
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(mv.dual.witness_image));
        CVec eta = es.eigenvectors().col(0);
        int b = mv.witness_block;
        for (int i = 0; i < s.dim(); ++i)
            for (int j = 0; j < u.right.dim(); ++j)
                ev.omega[i * u.right.dim() + j] =
                    vector_kernel(eta, mv.dual.witness[j], s.basis()[i].blocks[b], n);
        ev.kind = "dual-witness";
    }
    double unit = evaluate_functional(ev.omega, TensorElement::unit(u.left, u.right, n));
    if (unit <= 0.0) return false;
    for (auto& m : ev.omega) m /= unit;
    ev.value = evaluate_functional(ev.omega, u);
    ev.cp_level = 1;
    ev.verification = "positive on the whole min cone (" + mv.report + ")";
    return ev.value < 0.0;
}

// Smallest f-value over normalized generators of rank p, by alternating SDPs
double separate(const TensorElement& shape, const std::vector<CMat>& omega, int p, int restarts, int alternations,
                Rng& rng, const sdp::SolverOptions& opt, TensorElement* best_v) {
    const int n = shape.level, dimS = shape.left.dim(), dimT = shape.right.dim();
    double best = std::numeric_limits<double>::infinity();
    for (int rs = 0; rs < restarts; ++rs) {
        std::vector<CMat> P = random_positive(shape.left, p, rng, true);
        std::vector<CMat> B;
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 2 * alternations; ++it) {
            bool fixed_left = it % 2 == 0;
            sdp::LmiProblem lp;
            ConeVar cv = add_cone_var(lp, fixed_left ? shape.right : shape.left, fixed_left ? p * n : p);
            CMat m = generator_map(fixed_left ? P : B, cv, fixed_left, dimS, dimT, n);
            RVec c = RVec::Zero(lp.nvars);
            for (int i = 0; i < dimS; ++i)
                for (int j = 0; j < dimT; ++j) {
                    const CMat& om = omega[i * dimT + j];
                    for (int k = 0; k < n; ++k)
                        for (int l = 0; l < n; ++l) {
                            int row = row_index(i, j, k, l, dimT, n);
                            for (int v = 0; v < cv.count; ++v) c(cv.first + v) -= (om(l, k) * m(row, v)).real();
                        }
                }
            std::vector<std::pair<int, double>> norm;
            for (int v = 0; v < cv.count; ++v)
                if (cv.trace[v] != 0.0) norm.emplace_back(cv.first + v, cv.trace[v]);
            lp.add_equality(norm, 1.0);
            sdp::LmiOutcome o = sdp::maximize_lmi(lp, c, opt);
            if (o.status != Status::Feasible) break;
            if (fixed_left) B = cv.value(o.z);
            else P = cv.value(o.z);
            TensorElement v = generator(shape.left, shape.right, n, P, B);
            double scale = v.norm();
            if (scale <= 0.0) break;
            double val = evaluate_functional(omega, v) / scale;
            if (val < best) {
                best = val;
                if (best_v) {
                    *best_v = v;
                    for (auto& x : best_v->coeffs) x /= scale;
                }
            }
            if (it % 2 == 1) {
                if (prev - val < 1e-9) break;
                prev = val;
            }
        }
    }
    return best;
}

}  // namespace

OuterResult max_outer_refute(const TensorElement& u, int L, const OuterOptions& opt) {
    OuterResult out;
    std::ostringstream rep;
    if (L < 1) throw std::invalid_argument("cp level must be positive");
    const int n = u.level, dimS = u.left.dim(), dimT = u.right.dim();
    MinVerdict mv = min_positive(u, opt.sdp);
    if (mv.status == Status::Infeasible) {
        OuterEvidence ev;
        TensorElement w = u.left.dual ? u.swapped() : u;
        MinVerdict mw = u.left.dual ? min_positive(w, opt.sdp) : mv;
        if (min_refutation(w, mw, ev)) {
            if (u.left.dual) {
                std::vector<CMat> om(ev.omega.size());
                for (int i = 0; i < dimS; ++i)
                    for (int j = 0; j < dimT; ++j) om[i * dimT + j] = ev.omega[j * dimS + i];
                ev.omega = om;
            }
            out.outcome = OuterOutcome::Refuted;
            out.evidence = ev;
            out.report = "refuted at level 1 by a " + ev.kind;
            return out;
        }
    }
    if (opt.full_algebra_shortcut && mv.positive() && (u.left.full_algebra() || u.right.full_algebra())) {
        out.exact = true;
        out.report = "min and max cones coincide with a full-algebra factor";
        return out;
    }

    // Cutting planes: f in a box, f(unit) = 1, f >= 0 on the generators found so far
    std::vector<CMat> herm = hermitian_basis(n);
    const int per = n * n, nv = dimS * dimT * per;
    Rng rng(opt.seed);
    std::vector<TensorElement> cuts;
    for (int c = 0; c < 2 * dimS * dimT; ++c) {
        std::vector<CMat> P = random_positive(u.left, n, rng, true);
        std::vector<CMat> t = random_positive(u.right, 1, rng, true);
        TensorElement v = TensorElement::zero(u.left, u.right, n);
        for (int i = 0; i < dimS; ++i)
            for (int j = 0; j < dimT; ++j) v.at(i, j) = P[i] * t[j](0, 0);
        double s = v.norm();
        if (s > 0.0) {
            for (auto& x : v.coeffs) x /= s;
            cuts.push_back(v);
        }
    }
    auto linear = [&](const TensorElement& v) {
        RVec row(nv);
        for (int ij = 0; ij < dimS * dimT; ++ij)
            for (int k = 0; k < per; ++k) row(ij * per + k) = (herm[k] * v.coeffs[ij]).trace().real();
        return row;
    };
    TensorElement unit = TensorElement::unit(u.left, u.right, n);
    RVec lu = linear(u), lunit = linear(unit);
    double min_generator = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opt.rounds; ++round) {
        sdp::LmiProblem lp;
        lp.add_vars(nv);
        for (const auto& v : cuts) {
            RVec row = linear(v);
            sdp::LmiBlock& blk = lp.add_block(1);
            for (int k = 0; k < nv; ++k)
                if (row(k) != 0.0) blk.terms.emplace_back(k, CMat::Constant(1, 1, row(k)));
        }
        for (int k = 0; k < nv; ++k) {
            sdp::LmiBlock& lo = lp.add_block(1);
            lo.F0(0, 0) = opt.box;
            lo.terms.emplace_back(k, CMat::Constant(1, 1, 1.0));
            sdp::LmiBlock& hi = lp.add_block(1);
            hi.F0(0, 0) = opt.box;
            hi.terms.emplace_back(k, CMat::Constant(1, 1, -1.0));
        }
        std::vector<std::pair<int, double>> norm;
        for (int k = 0; k < nv; ++k)
            if (lunit(k) != 0.0) norm.emplace_back(k, lunit(k));
        lp.add_equality(norm, 1.0);
        sdp::LmiOutcome o = sdp::maximize_lmi(lp, -lu, opt.sdp);
        if (o.status != Status::Feasible) {
            rep << "separating LP " << sdp::to_string(o.status) << " at round " << round << "; ";
            break;
        }
        std::vector<CMat> omega(dimS * dimT, CMat::Zero(n, n));
        for (int ij = 0; ij < dimS * dimT; ++ij)
            for (int k = 0; k < per; ++k) omega[ij] += o.z(ij * per + k) * herm[k];
        double value = evaluate_functional(omega, u);
        if (value >= -1e-7) {
            rep << "no separating functional over " << cuts.size() << " generators (f(u) >= " << value << ")";
            out.report = rep.str();
            return out;
        }
        bool cut = false;
        min_generator = std::numeric_limits<double>::infinity();
        for (int p = 1; p <= L; ++p) {
            TensorElement v;
            double val = separate(u, omega, p, opt.restarts, opt.alternations, rng, opt.sdp, &v);
            min_generator = std::min(min_generator, val);
            if (val < -1e-8) {
                cuts.push_back(v);
                cut = true;
            }
        }
        if (!cut) {
            out.outcome = OuterOutcome::Refuted;
            out.evidence.kind = "functional";
            out.evidence.omega = omega;
            out.evidence.value = value;
            out.evidence.cp_level = L;
            out.evidence.min_generator_value = min_generator;
            out.evidence.generators = static_cast<int>(cuts.size());
            std::ostringstream v;
            v << "alternating separation at ranks 1.." << L << " with " << opt.restarts
              << " restarts found no generator below " << min_generator;
            out.evidence.verification = v.str();
            rep << "refuted at level " << L << ": f(u) = " << value << " after " << round + 1 << " rounds";
            out.report = rep.str();
            return out;
        }
    }
    rep << "budget exhausted with " << cuts.size() << " generators";
    out.report = rep.str();
    return out;
}

bool recheck_evidence(const TensorElement& u, const OuterEvidence& e, const OuterOptions& opt) {
    if (static_cast<int>(e.omega.size()) != u.left.dim() * u.right.dim()) return false;
    double unit = evaluate_functional(e.omega, TensorElement::unit(u.left, u.right, u.level));
    if (unit <= 0.0 || evaluate_functional(e.omega, u) >= 0.0) return false;
    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    for (int p = 1; p <= std::max(1, e.cp_level); ++p)
        if (separate(u, e.omega, p, opt.restarts, opt.alternations, rng, opt.sdp, nullptr) < -1e-8) return false;
    return true;
}

// ---- NP(n,k) ----

NpElement NpElement::unit(int n, int k, int d) {
    NpElement u;
    u.n = n;
    u.k = k;
    u.d = d;
    u.c0 = CMat::Identity(d, d);
    u.c.assign(n, std::vector<CMat>(k - 1, CMat::Zero(d, d)));
    return u;
}

bool NpElement::is_self_adjoint(double tol) const {
    if ((c0 - c0.adjoint()).norm() > tol * std::max(1.0, c0.norm())) return false;
    for (const auto& ci : c)
        for (int j = 1; j < k; ++j) {
            const CMat& a = ci[j - 1];
            const CMat& b = ci[k - j - 1];
            if ((a.adjoint() - b).norm() > tol * std::max(1.0, a.norm())) return false;
        }
    return true;
}

CMat NpElement::evaluate(const std::vector<CMat>& unitaries) const {
    int m = static_cast<int>(unitaries[0].rows());
    CMat out = kron(c0, CMat::Identity(m, m));
    for (int i = 0; i < n; ++i) {
        CMat power = CMat::Identity(m, m);
        for (int j = 1; j < k; ++j) {
            power = power * unitaries[i];
            out += kron(c[i][j - 1], power);
        }
    }
    return out;
}

CMat random_order_k_unitary(Rng& rng, int dim, int k) {
    CMat v = haar_unitary(rng, dim);
    std::uniform_int_distribution<int> pick(0, k - 1);
    CVec diag(dim);
    for (int a = 0; a < dim; ++a) diag(a) = std::polar(1.0, 2.0 * std::numbers::pi * pick(rng) / k);
    return v * diag.asDiagonal() * v.adjoint();
}

NpRefutation np_sample_refute(const NpElement& u, const std::vector<int>& dims, int samples,
                              unsigned long long seed) {
    if (!u.is_self_adjoint()) throw std::invalid_argument("NP element is not self-adjoint");
    NpRefutation out;
    auto check = [&](const std::vector<CMat>& rep) {
        CMat m = hermitian_part(u.evaluate(rep));
        double lmin = min_eigenvalue(m);
        ++out.checked;
        out.min_eigenvalue = out.checked == 1 ? lmin : std::min(out.min_eigenvalue, lmin);
        double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        if (lmin < -kTolPsd * scale) {
            out.refuted = true;
            out.representation = rep;
            std::ostringstream s;
            s << "refuted in dimension " << rep[0].rows() << " with eigenvalue " << lmin;
            out.report = s.str();
            return true;
        }
        return false;
    };
    // The trivial representation g_i -> 1 is always checked first
    if (check(std::vector<CMat>(u.n, CMat::Identity(1, 1)))) return out;
    Rng rng(seed);
    for (int d : dims)
        for (int s = 0; s < samples; ++s) {
            std::vector<CMat> rep;
            for (int i = 0; i < u.n; ++i) rep.push_back(random_order_k_unitary(rng, d, u.k));
            if (check(rep)) return out;
        }
    std::ostringstream s;
    s << "unrefuted over " << out.checked << " representations (one-sided)";
    out.report = s.str();
    return out;
}

NpElement np_from_W(int n, int k, int d, Rng& rng) {
    // A_{i,r} = S^{1/2} G_{i,r} S^{1/2} with each (G_{i,r})_r summing to I
    CMat s = random_psd(rng, d) + CMat::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<CMat> es(s);
    CMat root = es.operatorSqrt();
    NpElement u = NpElement::unit(n, k, d);
    u.c0 = n * s / static_cast<double>(k);
    for (int i = 0; i < n; ++i) {
        std::vector<CMat> r;
        CMat total = CMat::Zero(d, d);
        for (int a = 0; a < k; ++a) {
            r.push_back(random_psd(rng, d) + 0.1 * CMat::Identity(d, d));
            total += r.back();
        }
        Eigen::SelfAdjointEigenSolver<CMat> et(total);
        CMat inv = et.operatorInverseSqrt();
        for (int j = 1; j < k; ++j) {
            CMat cij = CMat::Zero(d, d);
            for (int a = 0; a < k; ++a) {
                CMat air = root * (inv * r[a] * inv) * root;
                cij += std::polar(1.0, -2.0 * std::numbers::pi * j * a / k) * air;
            }
            u.c[i][j - 1] = cij / static_cast<double>(k);
        }
    }
    return u;
}

// ---- serialization ----

nlohmann::json to_json(const TensorElement& u) {
    nlohmann::json j;
    j["left"] = u.left.name();
    j["right"] = u.right.name();
    j["level"] = u.level;
    j["coeffs"] = nlohmann::json::array();
    for (const auto& c : u.coeffs) j["coeffs"].push_back(cmat_to_json(c));
    return j;
}

TensorElement tensor_element_from_json(const nlohmann::json& j) {
    TensorElement u = TensorElement::zero(parse_factor(j.at("left").get<std::string>()),
                                          parse_factor(j.at("right").get<std::string>()), j.at("level").get<int>());
    const auto& c = j.at("coeffs");
    if (c.size() != u.coeffs.size()) throw std::invalid_argument("coefficient count does not match the factors");
    for (size_t k = 0; k < c.size(); ++k) {
        u.coeffs[k] = cmat_from_json(c[k]);
        if (u.coeffs[k].rows() != u.level || u.coeffs[k].cols() != u.level)
            throw std::invalid_argument("coefficient " + std::to_string(k) + " has the wrong size");
    }
    return u;
}

nlohmann::json to_json(const MaxCertificate& c) {
    nlohmann::json j;
    j["p"] = c.p;
    j["q"] = c.q;
    j["eps"] = c.eps;
    j["method"] = c.method;
    j["P"] = nlohmann::json::array();
    for (const auto& m : c.P) j["P"].push_back(cmat_to_json(m));
    j["Q"] = nlohmann::json::array();
    for (const auto& m : c.Q) j["Q"].push_back(cmat_to_json(m));
    j["X"] = cmat_to_json(c.X);
    return j;
}

MaxCertificate max_certificate_from_json(const nlohmann::json& j) {
    MaxCertificate c;
    c.p = j.at("p").get<int>();
    c.q = j.at("q").get<int>();
    c.eps = j.at("eps").get<double>();
    c.method = j.value("method", "");
    for (const auto& m : j.at("P")) c.P.push_back(cmat_from_json(m));
    for (const auto& m : j.at("Q")) c.Q.push_back(cmat_from_json(m));
    c.X = cmat_from_json(j.at("X"));
    return c;
}

nlohmann::json to_json(const OuterEvidence& e) {
    nlohmann::json j;
    j["kind"] = e.kind;
    j["value"] = e.value;
    j["cp_level"] = e.cp_level;
    j["min_generator_value"] = e.min_generator_value;
    j["generators"] = e.generators;
    j["verification"] = e.verification;
    j["omega"] = nlohmann::json::array();
    for (const auto& m : e.omega) j["omega"].push_back(cmat_to_json(m));
    return j;
}

OuterEvidence outer_evidence_from_json(const nlohmann::json& j) {
    OuterEvidence e;
    e.kind = j.at("kind").get<std::string>();
    e.value = j.at("value").get<double>();
    e.cp_level = j.at("cp_level").get<int>();
    e.min_generator_value = j.value("min_generator_value", 0.0);
    e.generators = j.value("generators", 0);
    e.verification = j.value("verification", "");
    for (const auto& m : j.at("omega")) e.omega.push_back(cmat_from_json(m));
    return e;
}

}  // namespace opsys
