#include "opsys/probe.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opsys {

MaxEntangled me_element(const SystemPtr& s) {
    TensorElement u = TensorElement::zero(concrete(s), dual_of(s), 1);
    for (int i = 0; i < s->dim(); ++i) u.at(i, i)(0, 0) = 1.0;
    return {s, u};
}

SystemPtr rebase(const SystemPtr& s, const Eigen::MatrixXd& G) {
    const int d = s->dim();
    if (G.rows() != d || G.cols() != d) throw std::invalid_argument("basis change has the wrong size");
    std::vector<BlockMatrix> basis;
    for (int i = 0; i < d; ++i) {
        BlockMatrix x = BlockMatrix::zero(s->ambient());
        for (int k = 0; k < d; ++k)
            if (G(i, k) != 0.0) x += s->basis()[k] * cd(G(i, k), 0.0);
        basis.push_back(x);
    }
    return std::make_shared<OperatorSystem>(s->name() + "'", s->ambient(), basis, "rebased " + s->name());
}

Eigen::MatrixXd random_basis_change(int dim, Rng& rng) {
    std::normal_distribution<double> g(0.0, 0.3);
    for (;;) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Identity(dim, dim);
        for (int i = 1; i < dim; ++i)
            for (int k = 0; k < dim; ++k) G(i, k) += g(rng);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
        const auto& sv = svd.singularValues();
        if (sv(dim - 1) > 0.0 && sv(0) / sv(dim - 1) < 50.0) return G;
    }
}

double basis_change_defect(const SystemPtr& s, const Eigen::MatrixXd& G) {
    SystemPtr t = rebase(s, G);
    const int d = s->dim();
    // ME of t is the identity in its own coordinates; move it back to those of s
    CMat A(d, d), B(d, d);
    for (int i = 0; i < d; ++i) A.col(i) = s->project(t->basis()[i]);
    for (int l = 0; l < d; ++l) B.col(l) = t->project(s->basis()[l]);
    return (A * B - CMat::Identity(d, d)).cwiseAbs().maxCoeff();
}

double me_pairing(const SystemPtr& s, const Functional& omega, const BlockMatrix& p) {
    CVec c = s->project(p);
    return (omega.values.array() * c.array()).sum().real();
}

Functional random_state(const SystemPtr& s, Rng& rng) {
    BlockMatrix rho(s->ambient());
    double tr = 0.0;
    for (auto& blk : rho.blocks) {
        blk = random_psd(rng, static_cast<int>(blk.rows()));
        tr += blk.trace().real();
    }
    return functional_from_density(s, rho * cd(1.0 / tr, 0.0));
}

BlockMatrix random_positive_element(const SystemPtr& s, Rng& rng) {
    std::normal_distribution<double> g;
    CVec c(s->dim());
    for (int i = 0; i < s->dim(); ++i) c(i) = g(rng);
    BlockMatrix x = s->reconstruct(c);
    PsdResult r = psd_check(x);
    return x + BlockMatrix::identity(s->ambient()) * cd(-r.min_eigenvalue + uniform(rng, 0.0, 0.1), 0.0);
}

CVec FactorizationPair::psi_coeffs(const CMat& A) const {
    CVec out(system->dim());
    for (int i = 0; i < system->dim(); ++i) out(i) = (psi_X.adjoint() * kron(psi_P[i], A) * psi_X)(0, 0);
    return out;
}

double coordinates_norm(const OperatorSystem& s, Rng& rng, int starts, int steps, const std::vector<CVec>& extra) {
    auto ratio = [&](const CVec& c) {
        double n = s.reconstruct(c).norm();
        return n > 0.0 ? c.cwiseAbs().sum() / n : 0.0;
    };
    double best = 0.0;
    for (const auto& c : extra) best = std::max(best, ratio(c));
    for (int st = 0; st < starts; ++st) {
        CVec c = random_complex(rng, s.dim(), 1);
        double val = ratio(c), step = 0.5 * c.norm();
        for (int it = 0; it < steps && step > 1e-9; ++it) {
            CVec trial = c + step * random_complex(rng, s.dim(), 1) / std::sqrt(2.0 * s.dim());
            double v = ratio(trial);
            if (v > val) {
                c = trial;
                val = v;
            } else {
                step *= 0.9;
            }
        }
        best = std::max(best, val);
    }
    return best;
}

FactorizationPair extract_factorization(const SystemPtr& s, const MaxCertificate& c, double eps, unsigned long long seed) {
    if (c.P.size() != static_cast<size_t>(s->dim()) || c.X.cols() != 1)
        throw std::invalid_argument("factorization needs a level-1 certificate over the system");
    TensorElement u = me_element(s).element.plus_unit(eps);
    CertificateCheck chk = verify_certificate(u, c, 1e-8);
    if (!chk.valid) throw std::invalid_argument("decomposition does not verify: " + chk.reason);

    FactorizationPair f;
    f.system = s;
    f.eps = eps + c.eps;
    f.phi = FunctionalMatrix{s, c.q, c.Q};
    f.psi_P = c.P;
    f.psi_X = c.X;
    f.phi_cp = dual_positive(f.phi).positive();
    PsdResult pr = psd_check(realize_level(*s, c.P));
    f.psi_cp = pr.positive;
    f.psi_min_eigenvalue = pr.min_eigenvalue;

    const int d = s->dim();
    // Composition on the basis, as coefficient columns
    CMat comp(d, d);
    for (int l = 0; l < d; ++l) comp.col(l) = f.psi_coeffs(c.Q[l]);
    CMat defect = comp - CMat::Identity(d, d);
    for (int l = 0; l < d; ++l) {
        f.basis_defect.push_back(s->reconstruct(defect.col(l)).norm());
        f.max_basis_defect = std::max(f.max_basis_defect, f.basis_defect.back());
    }

    Rng rng(seed);
    std::vector<CVec> samples;
    for (int t = 0; t < 50; ++t) {
        CVec x = random_complex(rng, d, 1);
        samples.push_back(x / s->reconstruct(x).norm());
    }
    f.conditioning = coordinates_norm(*s, rng, 16, 150, samples);
    for (const auto& x : samples) f.sampled_defect = std::max(f.sampled_defect, s->reconstruct(defect * x).norm());
    f.bound_holds = f.sampled_defect <= f.conditioning * f.max_basis_defect * (1.0 + 1e-9) + 1e-14;

    std::ostringstream rep;
    rep << s->name() << ": p = " << c.p << ", q = " << c.q << ", eps = " << f.eps << ", max basis defect "
        << f.max_basis_defect << ", C ~ " << f.conditioning << ", sampled defect " << f.sampled_defect;
    f.report = rep.str();
    return f;
}

MaxInnerResult certify_max(const TensorElement& u, const SearchOptions& opt) {
    if (u.left.full_algebra() || u.right.full_algebra()) return max_inner_nuclear_factor(u, opt.sdp);
    MaxInnerResult out;
    if (u.left.dual || u.right.dual) {
        out.report = "exact certification needs a min margin; dual factors give none";
        return out;
    }
    MinVerdict mv = min_positive(u, opt.sdp);
    if (!mv.positive() || mv.min_eigenvalue <= 0.0) {
        out.outcome = InnerOutcome::Rejected;
        out.report = "no strict min margin (" + mv.report + ")";
        return out;
    }
    // Search on u - (margin/2) 1, then spend the remaining margin as unit slack
    const double half = mv.min_eigenvalue / 2.0;
    SearchOptions so = opt;
    so.eps_target = half;
    if (so.eps_schedule.empty()) so.eps_schedule = default_eps_schedule();
    so.eps_schedule.erase(std::remove_if(so.eps_schedule.begin(), so.eps_schedule.end(),
                                         [&](double e) { return e > half; }),
                          so.eps_schedule.end());
    if (so.eps_schedule.empty()) so.eps_schedule = {half};
    MaxInnerResult m = max_inner_search(u.plus_unit(-half), so);
    out.best_eps = std::max(0.0, m.best_eps - half);
    out.report = m.report;
    if (!m.certified() || m.certificate.eps > half) return out;
    MaxCertificate c = m.certificate;
    if (half - c.eps > 0.0) c = add_unit_slack(c, u.left, u.right, u.level, half - c.eps);
    c.eps = 0.0;
    CertificateCheck chk = verify_certificate(u, c, 1e-8, opt.sdp);
    if (!chk.valid) {
        out.report += "; folded certificate rejected: " + chk.reason;
        return out;
    }
    out.outcome = InnerOutcome::Certified;
    out.certificate = c;
    out.residual = chk.residual;
    out.best_eps = 0.0;
    return out;
}

std::string to_string(ProbeStatus s) {
    switch (s) {
        case ProbeStatus::Certified: return "certified";
        case ProbeStatus::Refuted: return "refuted";
        case ProbeStatus::Undecided: return "undecided";
    }
    return "undecided";
}

ProbeReport coincidence_probe(const Factor& l, const Factor& r, const ProbeOptions& opt) {
    if (opt.levels < 1 || opt.samples < 0) throw std::invalid_argument("probe needs levels >= 1 and samples >= 0");
    ProbeReport rep;
    rep.left = l.name();
    rep.right = r.name();
    rep.options = opt;
    for (int i = 0; i < opt.samples; ++i) {
        ProbeSample smp;
        smp.index = i;
        smp.level = 1 + i % opt.levels;
        smp.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(i));
        Rng rng(smp.seed);
        TensorElement u = random_min_positive(l, r, smp.level, opt.margin, rng);

        SearchOptions so = opt.search;
        so.seed = smp.seed;
        MaxInnerResult m = certify_max(u, so);
        if (m.certified()) {
            smp.status = ProbeStatus::Certified;
            smp.method = m.certificate.method;
            smp.residual = m.residual;
            smp.certificate = m.certificate;
        } else {
            smp.eps = m.best_eps;
        }

        if (smp.status != ProbeStatus::Certified || opt.outer_on_certified) {
            OuterOptions oo = opt.outer;
            oo.seed = smp.seed;
            OuterResult o = max_outer_refute(u, opt.levels, oo);
            smp.outer_run = true;
            smp.outer_refuted = o.refuted() && recheck_evidence(u, o.evidence, oo);
            smp.outer_exact = o.exact;
            smp.outer_value = o.evidence.value;
            if (smp.outer_refuted) {
                if (smp.status == ProbeStatus::Certified) {
                    ++rep.refuted_certified;
                } else {
                    smp.status = ProbeStatus::Refuted;
                    smp.method = "outer";
                }
            }
        }
        switch (smp.status) {
            case ProbeStatus::Certified: ++rep.certified; break;
            case ProbeStatus::Refuted: ++rep.refuted; break;
            case ProbeStatus::Undecided: ++rep.undecided; break;
        }
        rep.samples.push_back(std::move(smp));
    }
    return rep;
}

nlohmann::json to_json(const ProbeReport& r, bool with_certificates) {
    nlohmann::json j;
    j["left"] = r.left;
    j["right"] = r.right;
    j["levels"] = r.options.levels;
    j["samples_requested"] = r.options.samples;
    j["seed"] = r.options.seed;
    j["margin"] = r.options.margin;
    j["counts"] = {{"certified", r.certified}, {"refuted", r.refuted}, {"undecided", r.undecided}};
    j["refuted_certified"] = r.refuted_certified;
    j["samples"] = nlohmann::json::array();
    for (const auto& s : r.samples) {
        nlohmann::json e{{"index", s.index},       {"level", s.level},         {"seed", s.seed},
                         {"status", to_string(s.status)}, {"method", s.method}, {"eps", s.eps},
                         {"residual", s.residual}, {"outer_run", s.outer_run}, {"outer_refuted", s.outer_refuted},
                         {"outer_exact", s.outer_exact}, {"outer_value", s.outer_value}};
        if (with_certificates && s.status == ProbeStatus::Certified) e["certificate"] = to_json(s.certificate);
        j["samples"].push_back(e);
    }
    return j;
}

}  // namespace opsys
