#include "opsys/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace opsys::sdp {

std::string to_string(Status s) {
    switch (s) {
        case Status::Feasible: return "feasible";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::Inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

int LmiProblem::add_vars(int count) {
    int first = nvars;
    nvars += count;
    return first;
}

LmiBlock& LmiProblem::add_block(int size) {
    blocks.push_back(LmiBlock{CMat::Zero(size, size), {}});
    return blocks.back();
}

void LmiProblem::add_equality(std::vector<std::pair<int, double>> terms, double rhs) {
    equalities.emplace_back(std::move(terms), rhs);
}

CMat LmiProblem::evaluate(int block, const RVec& z) const {
    const LmiBlock& b = blocks[block];
    CMat f = b.F0;
    for (const auto& [i, m] : b.terms) f += z(i) * m;
    return f;
}

namespace {

// (D) max b^T y  s.t.  C_k - sum_i y_i A_ki >= 0,  c_lp - A_lp y >= 0
struct Sdp {
    std::vector<RMat> C;
    std::vector<RMat> Avec;             // per block, column i = vec(A_i)
    std::vector<std::vector<int>> nz;   // nonzero columns per block
    RVec c_lp;
    RMat A_lp;
    RVec b;
    int m = 0;
};

struct IpmResult {
    bool converged = false;
    RVec y;
    std::vector<RMat> X, Z;
    RVec x_lp, z_lp;
    double pobj = 0.0, dobj = 0.0;
    double pinf = 0.0, dinf = 0.0, gap = 0.0;
    int iterations = 0;
};

RMat unvec(const Eigen::Ref<const RVec>& v, int s) {
    return Eigen::Map<const RMat>(v.data(), s, s);
}

double step_to_boundary(const RMat& x, const RMat& dx) {
    int s = static_cast<int>(x.rows());
    if (s == 1) return dx(0, 0) < 0 ? -x(0, 0) / dx(0, 0) : std::numeric_limits<double>::infinity();
    Eigen::LLT<RMat> llt(x);
    if (llt.info() != Eigen::Success) return 0.0;
    RMat l = llt.matrixL();
    RMat t = l.triangularView<Eigen::Lower>().solve(dx);
    RMat m = l.triangularView<Eigen::Lower>().solve(t.transpose());
    m = (m + m.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<RMat> es(m, Eigen::EigenvaluesOnly);
    double lmin = es.eigenvalues()(0);
    return lmin >= 0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

double lp_step(const RVec& x, const RVec& dx) {
    double a = std::numeric_limits<double>::infinity();
    for (int i = 0; i < x.size(); ++i)
        if (dx(i) < 0) a = std::min(a, -x(i) / dx(i));
    return a;
}

RMat spd_inverse(const RMat& z) {
    Eigen::LLT<RMat> llt(z);
    RMat inv = llt.solve(RMat::Identity(z.rows(), z.cols()));
    return (inv + inv.transpose()) / 2.0;
}

// Infeasible primal-dual path following, HKM direction with Mehrotra correction
IpmResult ipm(const Sdp& p, double tol, int max_iter) {
    const int nb = static_cast<int>(p.C.size());
    const int m = p.m;
    const int nlp = static_cast<int>(p.c_lp.size());
    IpmResult r;

    double normC = 0.0, maxA = 0.0;
    int ntot = nlp;
    for (int k = 0; k < nb; ++k) {
        normC += p.C[k].squaredNorm();
        ntot += static_cast<int>(p.C[k].rows());
        for (int j : p.nz[k]) maxA = std::max(maxA, p.Avec[k].col(j).norm());
    }
    normC = std::sqrt(normC + p.c_lp.squaredNorm());
    double normb = p.b.norm();
    double xi = std::max({10.0, std::sqrt(static_cast<double>(ntot)), 10.0 * normb});
    double eta = std::max({10.0, std::sqrt(static_cast<double>(ntot)), normC, maxA});

    r.X.resize(nb);
    r.Z.resize(nb);
    for (int k = 0; k < nb; ++k) {
        int s = static_cast<int>(p.C[k].rows());
        r.X[k] = xi * RMat::Identity(s, s);
        r.Z[k] = eta * RMat::Identity(s, s);
    }
    r.x_lp = RVec::Constant(nlp, xi);
    r.z_lp = RVec::Constant(nlp, eta);
    r.y = RVec::Zero(m);

    auto apply_A = [&](const std::vector<RMat>& mats, const RVec& v_lp) {
        RVec out = RVec::Zero(m);
        for (int k = 0; k < nb; ++k) {
            Eigen::Map<const RVec> vm(mats[k].data(), mats[k].size());
            out.noalias() += p.Avec[k].transpose() * vm;
        }
        if (nlp > 0) out.noalias() += p.A_lp.transpose() * v_lp;
        return out;
    };
    auto dual_combo = [&](int k, const RVec& y) {
        int s = static_cast<int>(p.C[k].rows());
        RVec v = p.Avec[k] * y;
        return unvec(v, s);
    };

    int stall = 0, since_best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    IpmResult best;
    for (int it = 0; it < max_iter; ++it) {
        r.iterations = it;
        std::vector<RMat> zinv(nb), rd(nb);
        double xz = r.x_lp.dot(r.z_lp);
        double pobj = p.c_lp.dot(r.x_lp);
        double rdn = 0.0;
        for (int k = 0; k < nb; ++k) {
            zinv[k] = spd_inverse(r.Z[k]);
            rd[k] = p.C[k] - dual_combo(k, r.y) - r.Z[k];
            rd[k] = (rd[k] + rd[k].transpose()) / 2.0;
            rdn += rd[k].squaredNorm();
            xz += (r.X[k].cwiseProduct(r.Z[k])).sum();
            pobj += (p.C[k].cwiseProduct(r.X[k])).sum();
        }
        RVec rd_lp = p.c_lp - (nlp > 0 ? RVec(p.A_lp * r.y) : RVec::Zero(0)) - r.z_lp;
        rdn = std::sqrt(rdn + rd_lp.squaredNorm());
        RVec rp = p.b - apply_A(r.X, r.x_lp);
        double mu = xz / ntot;
        double dobj = p.b.dot(r.y);
        r.pobj = pobj;
        r.dobj = dobj;
        r.pinf = rp.norm() / (1.0 + normb);
        r.dinf = rdn / (1.0 + normC);
        r.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        if (std::getenv("OPSYS_IPM_TRACE"))
            std::fprintf(stderr, "it %d pobj %.6e dobj %.6e pinf %.2e dinf %.2e gap %.2e mu %.2e\n", it, pobj, dobj, r.pinf, r.dinf, r.gap, mu);
        if (r.pinf < tol && r.dinf < tol && r.gap < tol) {
            r.converged = true;
            break;
        }
        // Late iterations can lose accuracy; keep the best point seen
        double score = std::max({r.pinf, r.dinf, r.gap});
        if (score < 0.5 * best_score) {
            best_score = score;
            best = r;
            since_best = 0;
        } else if (++since_best >= 12) {
            break;
        }

        // Schur complement M_ij = <A_i, X A_j Z^{-1}>
        RMat M = RMat::Zero(m, m);
        for (int k = 0; k < nb; ++k) {
            int s = static_cast<int>(p.C[k].rows());
            const auto& cols = p.nz[k];
            if (cols.empty()) continue;
            RMat W(s * s, static_cast<int>(cols.size()));
            RMat Asub(s * s, static_cast<int>(cols.size()));
            for (size_t q = 0; q < cols.size(); ++q) {
                RMat a = unvec(p.Avec[k].col(cols[q]), s);
                RMat w = r.X[k] * a * zinv[k];
                W.col(q) = Eigen::Map<RVec>(w.data(), s * s);
                Asub.col(q) = p.Avec[k].col(cols[q]);
            }
            RMat mk = Asub.transpose() * W;
            for (size_t a = 0; a < cols.size(); ++a)
                for (size_t c = 0; c < cols.size(); ++c) M(cols[a], cols[c]) += mk(a, c);
        }
        RVec dratio;
        if (nlp > 0) {
            dratio = r.x_lp.cwiseQuotient(r.z_lp);
            M.noalias() += p.A_lp.transpose() * dratio.asDiagonal() * p.A_lp;
        }
        M = (M + M.transpose()) / 2.0;
        Eigen::LLT<RMat> chol(M);
        bool use_ldlt = chol.info() != Eigen::Success;
        Eigen::LDLT<RMat> ldlt;
        if (use_ldlt) {
            double reg = 1e-14 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
            ldlt.compute(M + reg * RMat::Identity(m, m));
        }
        auto solveM = [&](const RVec& rhs) -> RVec { return use_ldlt ? RVec(ldlt.solve(rhs)) : RVec(chol.solve(rhs)); };

        // Direction for targets T (SDP) and t (LP): dX = T - X dZ Z^{-1}, dx = t - x dz / z
        auto direction = [&](const std::vector<RMat>& T, const RVec& t_lp, RVec& dy, std::vector<RMat>& dX,
                             std::vector<RMat>& dZ, RVec& dx_lp, RVec& dz_lp) {
            std::vector<RMat> mats(nb);
            for (int k = 0; k < nb; ++k) mats[k] = T[k] - r.X[k] * rd[k] * zinv[k];
            RVec lpv;
            if (nlp > 0) lpv = t_lp - dratio.cwiseProduct(rd_lp);
            RVec rhs = rp - apply_A(mats, lpv);
            dy = solveM(rhs);
            dX.resize(nb);
            dZ.resize(nb);
            for (int k = 0; k < nb; ++k) {
                dZ[k] = rd[k] - dual_combo(k, dy);
                dZ[k] = (dZ[k] + dZ[k].transpose()) / 2.0;
                RMat d = T[k] - r.X[k] * dZ[k] * zinv[k];
                dX[k] = (d + d.transpose()) / 2.0;
            }
            if (nlp > 0) {
                dz_lp = rd_lp - p.A_lp * dy;
                dx_lp = t_lp - dratio.cwiseProduct(dz_lp);
            }
        };
        auto steps = [&](const std::vector<RMat>& dX, const std::vector<RMat>& dZ, const RVec& dx_lp,
                         const RVec& dz_lp, double& ap, double& ad) {
            ap = std::numeric_limits<double>::infinity();
            ad = ap;
            for (int k = 0; k < nb; ++k) {
                ap = std::min(ap, step_to_boundary(r.X[k], dX[k]));
                ad = std::min(ad, step_to_boundary(r.Z[k], dZ[k]));
            }
            if (nlp > 0) {
                ap = std::min(ap, lp_step(r.x_lp, dx_lp));
                ad = std::min(ad, lp_step(r.z_lp, dz_lp));
            }
        };

        std::vector<RMat> T(nb);
        for (int k = 0; k < nb; ++k) T[k] = -r.X[k];
        RVec t_lp = -r.x_lp;
        RVec dy, dx_lp, dz_lp;
        std::vector<RMat> dX, dZ;
        direction(T, t_lp, dy, dX, dZ, dx_lp, dz_lp);
        double ap, ad;
        steps(dX, dZ, dx_lp, dz_lp, ap, ad);
        ap = std::min(1.0, ap);
        ad = std::min(1.0, ad);
        double mu_aff = 0.0;
        for (int k = 0; k < nb; ++k) mu_aff += ((r.X[k] + ap * dX[k]).cwiseProduct(r.Z[k] + ad * dZ[k])).sum();
        if (nlp > 0) mu_aff += (r.x_lp + ap * dx_lp).dot(r.z_lp + ad * dz_lp);
        mu_aff /= ntot;
        double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

        for (int k = 0; k < nb; ++k) T[k] = sigma * mu * zinv[k] - r.X[k] - dX[k] * dZ[k] * zinv[k];
        if (nlp > 0)
            t_lp = (sigma * mu) * r.z_lp.cwiseInverse() - r.x_lp - dx_lp.cwiseProduct(dz_lp).cwiseQuotient(r.z_lp);
        direction(T, t_lp, dy, dX, dZ, dx_lp, dz_lp);
        steps(dX, dZ, dx_lp, dz_lp, ap, ad);
        const double gamma = 0.95;
        ap = std::min(1.0, gamma * ap);
        ad = std::min(1.0, gamma * ad);
        if (!std::isfinite(ap) || !std::isfinite(ad)) break;

        for (int k = 0; k < nb; ++k) {
            r.X[k] += ap * dX[k];
            r.Z[k] += ad * dZ[k];
        }
        if (nlp > 0) {
            r.x_lp += ap * dx_lp;
            r.z_lp += ad * dz_lp;
        }
        r.y += ad * dy;
        if (!r.y.allFinite()) break;
        if (std::getenv("OPSYS_IPM_TRACE")) std::fprintf(stderr, "   ap %.3e ad %.3e sigma %.3e\n", ap, ad, sigma);
        stall = (ap < 1e-9 && ad < 1e-9) ? stall + 1 : 0;
        if (stall >= 3) break;
    }
    if (!r.converged && best_score < std::max({r.pinf, r.dinf, r.gap})) {
        int iters = r.iterations;
        r = best;
        r.iterations = iters;
    }
    // Near-converged points are accepted at a looser tolerance
    if (!r.converged && std::max({r.pinf, r.dinf, r.gap}) < std::max(tol, 1e-8)) r.converged = true;
    return r;
}

// Problem after equality elimination and removal of inert directions:
// F_b(z) = G_b0 + sum_j u_j H_bj with z = z0 + T u
struct Reduced {
    bool consistent = true;
    double eq_residual = 0.0;
    RVec z0;
    RMat T;                         // nvars x r
    RMat N;                         // nullspace basis, nvars x k
    RMat dropped;                   // inert directions inside the nullspace, k x (k - r)
    std::vector<bool> embedded;     // block uses the real embedding
    std::vector<RMat> G0;
    std::vector<std::vector<RMat>> H;
    std::vector<double> scale;
};

RMat real_form(const CMat& m, bool embed) {
    return embed ? hermitian_to_real(m) : RMat(m.real());
}

Reduced reduce(const LmiProblem& p) {
    Reduced red;
    const int n = p.nvars;
    const int E = static_cast<int>(p.equalities.size());
    if (E > 0) {
        RMat A = RMat::Zero(E, n);
        RVec b(E);
        for (int e = 0; e < E; ++e) {
            for (const auto& [i, c] : p.equalities[e].first) A(e, i) += c;
            b(e) = p.equalities[e].second;
        }
        Eigen::CompleteOrthogonalDecomposition<RMat> cod(A);
        cod.setThreshold(1e-12);
        red.z0 = cod.solve(b);
        red.eq_residual = (A * red.z0 - b).norm() / std::max(1.0, b.norm());
        red.consistent = red.eq_residual <= 1e-9;
        Eigen::ColPivHouseholderQR<RMat> qr(A.transpose());
        qr.setThreshold(1e-12);
        int rank = static_cast<int>(qr.rank());
        RMat Q = qr.householderQ();
        red.N = Q.rightCols(n - rank);
    } else {
        red.z0 = RVec::Zero(n);
        red.N = RMat::Identity(n, n);
    }
    const int k = static_cast<int>(red.N.cols());
    const int nb = static_cast<int>(p.blocks.size());
    red.embedded.resize(nb);
    std::vector<RMat> G0(nb);
    std::vector<std::vector<RMat>> Gi(nb);
    int rows = 0;
    for (int b = 0; b < nb; ++b) {
        const LmiBlock& blk = p.blocks[b];
        bool cplx = blk.F0.imag().cwiseAbs().maxCoeff() > 0.0;
        for (const auto& t : blk.terms) cplx = cplx || t.second.imag().cwiseAbs().maxCoeff() > 0.0;
        red.embedded[b] = cplx;
        int s = static_cast<int>(blk.F0.rows()) * (cplx ? 2 : 1);
        G0[b] = real_form(blk.F0, cplx);
        Gi[b].assign(k, RMat::Zero(s, s));
        for (const auto& [j, mat] : blk.terms) {
            RMat rf = real_form(mat, cplx);
            G0[b] += red.z0(j) * rf;
            for (int i = 0; i < k; ++i) {
                double c = red.N(j, i);
                if (c != 0.0) Gi[b][i] += c * rf;
            }
        }
        rows += s * s;
    }
    // Whitening: orthonormal combinations of the nullspace directions
    RMat K(rows, k);
    int off = 0;
    for (int b = 0; b < nb; ++b) {
        int s = static_cast<int>(G0[b].rows());
        for (int i = 0; i < k; ++i) K.block(off, i, s * s, 1) = Eigen::Map<const RVec>(Gi[b][i].data(), s * s);
        off += s * s;
    }
    int r = 0;
    RMat V;
    RVec sv;
    if (k > 0 && rows > 0) {
        Eigen::BDCSVD<RMat> svd(K, Eigen::ComputeFullV);
        sv = svd.singularValues();
        double smax = sv.size() > 0 ? sv(0) : 0.0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv(i) > 1e-10 * smax && sv(i) > 1e-14) ++r;
        V = svd.matrixV();
        red.dropped = V.rightCols(k - r);
    } else {
        red.dropped = RMat::Identity(k, k);
    }
    red.T = RMat::Zero(n, r);
    if (r > 0) red.T = red.N * V.leftCols(r) * sv.head(r).cwiseInverse().asDiagonal();
    red.G0 = G0;
    red.H.assign(nb, {});
    red.scale.assign(nb, 1.0);
    off = 0;
    for (int b = 0; b < nb; ++b) {
        int s = static_cast<int>(G0[b].rows());
        double mx = G0[b].norm();
        // H = K V_r / sigma computed from K itself, so the model matches the original exactly
        for (int j = 0; j < r; ++j) {
            RVec col = K.block(off, 0, s * s, k) * (V.col(j) / sv(j));
            red.H[b].push_back(unvec(col, s));
            mx = std::max(mx, red.H[b].back().norm());
        }
        red.scale[b] = mx > 0 ? 1.0 / mx : 1.0;
        off += s * s;
    }
    return red;
}

// Relative PSD margin of every block at z
bool blocks_psd(const LmiProblem& p, const RVec& z, double tol, double& worst) {
    worst = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int b = 0; b < static_cast<int>(p.blocks.size()); ++b) {
        CMat f = hermitian_part(p.evaluate(b, z));
        double scale = std::max(1.0, f.norm());
        double lmin = min_eigenvalue(f);
        worst = std::min(worst, lmin / scale);
        if (lmin < -tol * scale) ok = false;
    }
    return ok;
}

double equality_residual(const LmiProblem& p, const RVec& z) {
    double res = 0.0;
    for (const auto& [terms, rhs] : p.equalities) {
        double v = 0.0, scale = std::max(1.0, std::abs(rhs));
        for (const auto& [i, c] : terms) {
            v += c * z(i);
            scale = std::max(scale, std::abs(c * z(i)));
        }
        res = std::max(res, std::abs(v - rhs) / scale);
    }
    return res;
}

Sdp build_sdp(const Reduced& red, bool with_t, double box) {
    Sdp s;
    const int nb = static_cast<int>(red.G0.size());
    const int r = static_cast<int>(red.T.cols());
    s.m = r + (with_t ? 1 : 0);
    for (int b = 0; b < nb; ++b) {
        int sz = static_cast<int>(red.G0[b].rows());
        double rho = red.scale[b];
        s.C.push_back(rho * red.G0[b]);
        RMat Av = RMat::Zero(sz * sz, s.m);
        std::vector<int> nz;
        for (int j = 0; j < r; ++j) {
            RMat a = -rho * red.H[b][j];
            if (a.cwiseAbs().maxCoeff() > 0) {
                Av.col(j) = Eigen::Map<RVec>(a.data(), sz * sz);
                nz.push_back(j);
            }
        }
        if (with_t) {
            RMat id = RMat::Identity(sz, sz);
            Av.col(r) = Eigen::Map<RVec>(id.data(), sz * sz);
            nz.push_back(r);
        }
        s.Avec.push_back(Av);
        s.nz.push_back(nz);
    }
    int nlp = 2 * r + (with_t ? 1 : 0);
    s.c_lp = RVec::Constant(nlp, box);
    s.A_lp = RMat::Zero(nlp, s.m);
    for (int j = 0; j < r; ++j) {
        s.A_lp(2 * j, j) = 1.0;
        s.A_lp(2 * j + 1, j) = -1.0;
    }
    if (with_t) {
        s.c_lp(nlp - 1) = 1.0;  // t <= 1 on the rescaled blocks
        s.A_lp(nlp - 1, r) = 1.0;
    }
    s.b = RVec::Zero(s.m);
    return s;
}

void attach_witness(const LmiProblem& p, const Reduced& red, const IpmResult& ipm_r, LmiOutcome& out) {
    const int nb = static_cast<int>(p.blocks.size());
    out.witness.clear();
    double ynorm = 0.0;
    for (int b = 0; b < nb; ++b) {
        RMat y = red.scale[b] * ipm_r.X[b];
        // <H2R(F), Y> = Re tr(F Yc) with Yc = 2 real_to_hermitian(Y)
        CMat yc = red.embedded[b] ? CMat(2.0 * real_to_hermitian(y)) : CMat(y.cast<cd>());
        ynorm += yc.squaredNorm();
        out.witness.push_back(yc);
    }
    ynorm = std::sqrt(ynorm);
    if (ynorm == 0.0) return;
    for (auto& w : out.witness) w /= ynorm;
    // g_j = sum_b Re tr(F_bj Y_b), projected onto the equality nullspace
    RVec g = RVec::Zero(p.nvars);
    double value = 0.0;
    for (int b = 0; b < nb; ++b) {
        const LmiBlock& blk = p.blocks[b];
        value += (blk.F0 * out.witness[b]).trace().real();
        for (const auto& [j, mat] : blk.terms) g(j) += (mat * out.witness[b]).trace().real();
    }
    value += g.dot(red.z0);
    out.witness_value = value;
    out.witness_residual = red.N.cols() > 0 ? (red.N.transpose() * g).norm() : 0.0;
}

bool witness_valid(const LmiOutcome& o, double tol) {
    if (o.witness.empty()) return false;
    for (const auto& w : o.witness)
        if (min_eigenvalue(w) < -1e-9) return false;
    return o.witness_value < -tol && o.witness_residual <= std::max(1e-7, 1e-3 * std::abs(o.witness_value));
}

}  // namespace

LmiOutcome solve_lmi(const LmiProblem& p, const SolverOptions& opt) {
    LmiOutcome out;
    Reduced red = reduce(p);
    if (!red.consistent) {
        out.status = Status::Infeasible;
        out.z = red.z0;
        out.margin = -red.eq_residual;
        out.report = "affine constraints inconsistent, residual " + std::to_string(red.eq_residual);
        return out;
    }
    const int r = static_cast<int>(red.T.cols());
    if (p.blocks.empty()) {
        out.status = Status::Feasible;
        out.z = red.z0;
        out.report = "no conic blocks";
        return out;
    }
    Sdp s = build_sdp(red, true, opt.box);
    s.b(r) = 1.0;
    IpmResult res = ipm(s, opt.ipm_tol, opt.max_iterations);
    out.iterations = res.iterations;
    RVec u = res.y.head(r);
    out.z = red.z0 + red.T * u;
    out.margin = res.y(r);

    double worst;
    bool psd = blocks_psd(p, out.z, opt.tol_feas, worst);
    double eqres = equality_residual(p, out.z);
    std::ostringstream rep;
    rep << "ipm iterations " << res.iterations << ", t* " << out.margin << ", pinf " << res.pinf << ", dinf "
        << res.dinf << ", gap " << res.gap;
    if (psd && eqres <= opt.tol_feas) {
        out.status = Status::Feasible;
        out.report = rep.str();
        return out;
    }
    attach_witness(p, red, res, out);
    rep << ", witness value " << out.witness_value << ", witness residual " << out.witness_residual;
    out.report = rep.str();
    bool decided = res.converged || (res.pinf < 1e-7 && res.gap < 1e-6);
    if (decided && out.margin < -opt.tol_feas && witness_valid(out, opt.tol_feas)) {
        out.status = Status::Infeasible;
    } else {
        out.status = Status::Inconclusive;
    }
    return out;
}

LmiOutcome maximize_lmi(const LmiProblem& p, const RVec& c, const SolverOptions& opt) {
    if (c.size() != p.nvars) throw std::invalid_argument("maximize_lmi: objective size mismatch");
    LmiOutcome phase1 = solve_lmi(p, opt);
    if (phase1.status != Status::Feasible) return phase1;
    Reduced red = reduce(p);
    const int r = static_cast<int>(red.T.cols());
    LmiOutcome out;
    // Directions the blocks do not see leave the objective unbounded
    RVec cn = red.N.transpose() * c;
    if (red.dropped.cols() > 0) {
        double leak = (red.dropped.transpose() * cn).norm();
        if (leak > 1e-9 * std::max(1.0, c.norm())) {
            out.status = Status::Unbounded;
            out.z = phase1.z;
            out.report = "objective moves along directions free of every constraint";
            return out;
        }
    }
    RVec bu = red.T.transpose() * c;
    double bn = bu.norm();
    if (r == 0 || bn == 0.0) {
        out = phase1;
        out.margin = c.dot(phase1.z);
        return out;
    }
    Sdp s = build_sdp(red, false, opt.box);
    s.b = bu / bn;
    IpmResult res = ipm(s, opt.ipm_tol, opt.max_iterations);
    out.iterations = res.iterations;
    RVec u = res.y;
    out.z = red.z0 + red.T * u;
    out.margin = c.dot(out.z);
    std::ostringstream rep;
    rep << "ipm iterations " << res.iterations << ", objective " << out.margin << ", pinf " << res.pinf
        << ", dinf " << res.dinf << ", gap " << res.gap;
    if (u.size() > 0 && u.cwiseAbs().maxCoeff() >= 0.999 * opt.box) {
        out.status = Status::Unbounded;
        out.report = rep.str() + ", variable bound active";
        return out;
    }
    double worst;
    bool psd = blocks_psd(p, out.z, std::max(opt.tol_feas, 1e-7), worst);
    if (psd && equality_residual(p, out.z) <= opt.tol_feas) {
        out.status = Status::Feasible;
    } else if (c.dot(phase1.z) >= out.margin - 1e-9) {
        out = phase1;
        out.margin = c.dot(phase1.z);
        out.status = Status::Feasible;
        rep << ", fell back to the phase one point";
    } else {
        out.status = Status::Inconclusive;
        rep << ", worst relative eigenvalue " << worst << ", equality residual " << equality_residual(p, out.z);
    }
    out.report = rep.str();
    return out;
}

// ---- FeasibilityProblem ----

int FeasibilityProblem::add_psd(int size, bool complex) {
    if (free_scalars > 0) throw std::logic_error("add PSD variables before free scalars");
    variables.push_back(PsdVariable{size, complex});
    return static_cast<int>(variables.size()) - 1;
}

int FeasibilityProblem::add_free(int count) {
    int first = num_params();
    free_scalars += count;
    return first;
}

static int var_params(const PsdVariable& v) {
    return v.complex ? v.size * v.size : v.size * (v.size + 1) / 2;
}

int FeasibilityProblem::offset(int var) const {
    int o = 0;
    for (int i = 0; i < var; ++i) o += var_params(variables[i]);
    return o;
}

int FeasibilityProblem::free_offset() const { return offset(static_cast<int>(variables.size())); }

int FeasibilityProblem::num_params() const { return free_offset() + free_scalars; }

// Layout: real blocks store the upper triangle row by row; complex blocks store the
// real diagonal followed by (Re, Im) of each upper entry
int FeasibilityProblem::entry(int var, int i, int j, bool imag) const {
    const PsdVariable& v = variables[var];
    if (i > j) std::swap(i, j);
    int base = offset(var);
    int s = v.size;
    if (!v.complex) {
        if (imag) throw std::invalid_argument("real variable has no imaginary part");
        return base + i * s - i * (i - 1) / 2 + (j - i);
    }
    if (i == j) {
        if (imag) throw std::invalid_argument("diagonal is real");
        return base + i;
    }
    int idx = 0;
    for (int a = 0; a < i; ++a) idx += s - a - 1;
    idx += j - i - 1;
    return base + s + 2 * idx + (imag ? 1 : 0);
}

std::vector<std::pair<int, double>> FeasibilityProblem::trace_terms(int var, const CMat& a) const {
    const PsdVariable& v = variables[var];
    std::vector<std::pair<int, double>> t;
    for (int i = 0; i < v.size; ++i) {
        for (int j = i; j < v.size; ++j) {
            if (i == j) {
                t.emplace_back(entry(var, i, i), a(i, i).real());
            } else {
                t.emplace_back(entry(var, i, j), (a(i, j) + a(j, i)).real());
                if (v.complex) t.emplace_back(entry(var, i, j, true), a(i, j).imag() - a(j, i).imag());
            }
        }
    }
    return t;
}

void FeasibilityProblem::add_equal(std::vector<std::pair<int, double>> terms, double rhs) {
    constraints.push_back(AffineConstraint{std::move(terms), rhs, ConstraintKind::Equal});
}

void FeasibilityProblem::add_greater_equal(std::vector<std::pair<int, double>> terms, double rhs) {
    constraints.push_back(AffineConstraint{std::move(terms), rhs, ConstraintKind::GreaterEqual});
}

CMat FeasibilityProblem::value(int var, const RVec& params) const {
    const PsdVariable& v = variables[var];
    CMat x(v.size, v.size);
    for (int i = 0; i < v.size; ++i) {
        for (int j = i; j < v.size; ++j) {
            cd e = params(entry(var, i, j));
            if (v.complex && i != j) e += cd(0.0, params(entry(var, i, j, true)));
            x(i, j) = e;
            x(j, i) = std::conj(e);
        }
    }
    return x;
}

LmiProblem FeasibilityProblem::to_lmi() const {
    LmiProblem p;
    p.add_vars(num_params());
    for (int var = 0; var < static_cast<int>(variables.size()); ++var) {
        const PsdVariable& v = variables[var];
        LmiBlock& blk = p.add_block(v.size);
        for (int i = 0; i < v.size; ++i) {
            for (int j = i; j < v.size; ++j) {
                CMat e = CMat::Zero(v.size, v.size);
                e(i, j) = 1.0;
                e(j, i) = 1.0;
                blk.terms.emplace_back(entry(var, i, j), e);
                if (v.complex && i != j) {
                    CMat f = CMat::Zero(v.size, v.size);
                    f(i, j) = cd(0.0, 1.0);
                    f(j, i) = cd(0.0, -1.0);
                    blk.terms.emplace_back(entry(var, i, j, true), f);
                }
            }
        }
    }
    for (const auto& c : constraints) {
        if (c.kind == ConstraintKind::Equal) {
            p.add_equality(c.terms, c.rhs);
        } else {
            LmiBlock& blk = p.add_block(1);
            blk.F0(0, 0) = -c.rhs;
            for (const auto& [i, coef] : c.terms) blk.terms.emplace_back(i, CMat::Constant(1, 1, coef));
        }
    }
    return p;
}

Verification verify_assignment(const FeasibilityProblem& p, const RVec& params, double tol_feas, double tol_psd) {
    Verification v;
    v.min_eigenvalue = std::numeric_limits<double>::infinity();
    bool ok = params.size() == p.num_params();
    if (!ok) return v;
    for (int var = 0; var < static_cast<int>(p.variables.size()); ++var) {
        CMat x = p.value(var, params);
        PsdResult r = psd_check(x, tol_psd);
        double scale = std::max(1.0, x.norm());
        v.min_eigenvalue = std::min(v.min_eigenvalue, r.min_eigenvalue / scale);
        if (r.min_eigenvalue < -std::max(r.threshold, tol_feas * scale)) ok = false;
    }
    for (const auto& c : p.constraints) {
        double val = 0.0, scale = std::max(1.0, std::abs(c.rhs));
        for (const auto& [i, coef] : c.terms) {
            val += coef * params(i);
            scale = std::max(scale, std::abs(coef * params(i)));
        }
        double res = c.kind == ConstraintKind::Equal ? std::abs(val - c.rhs) : std::max(0.0, c.rhs - val);
        v.residual = std::max(v.residual, res / scale);
    }
    if (v.residual > tol_feas) ok = false;
    if (!std::isfinite(v.min_eigenvalue)) v.min_eigenvalue = 0.0;
    v.ok = ok;
    return v;
}

static FeasibilityOutcome from_lmi(const FeasibilityProblem& p, const LmiOutcome& o, const SolverOptions& opt) {
    FeasibilityOutcome f;
    f.status = o.status;
    f.assignment = o.z;
    f.margin = o.margin;
    f.witness = o.witness;
    f.witness_value = o.witness_value;
    f.report = o.report;
    if (o.z.size() == p.num_params()) {
        Verification v = verify_assignment(p, o.z, opt.tol_feas, opt.tol_psd);
        f.residual = v.residual;
        f.min_eigenvalue = v.min_eigenvalue;
        // Never report a feasible verdict the independent check does not confirm
        if (f.status == Status::Feasible && !v.ok) {
            f.status = Status::Inconclusive;
            f.report += ", re-verification failed";
        }
    }
    return f;
}

FeasibilityOutcome solve_feasibility(const FeasibilityProblem& p, const SolverOptions& opt) {
    return from_lmi(p, solve_lmi(p.to_lmi(), opt), opt);
}

FeasibilityOutcome maximize_margin(const FeasibilityProblem& p, const RVec& direction, const SolverOptions& opt) {
    if (direction.size() != p.num_params()) throw std::invalid_argument("maximize_margin: direction size mismatch");
    SolverOptions relaxed = opt;
    return from_lmi(p, maximize_lmi(p.to_lmi(), direction, opt), relaxed);
}

// ---- JSON ----

nlohmann::json to_json(const FeasibilityProblem& p) {
    nlohmann::json j;
    j["variables"] = nlohmann::json::array();
    for (const auto& v : p.variables) j["variables"].push_back({{"size", v.size}, {"complex", v.complex}});
    j["free_scalars"] = p.free_scalars;
    j["constraints"] = nlohmann::json::array();
    for (const auto& c : p.constraints) {
        nlohmann::json t = nlohmann::json::array();
        for (const auto& [i, coef] : c.terms) t.push_back({i, coef});
        j["constraints"].push_back(
            {{"kind", c.kind == ConstraintKind::Equal ? "eq" : "geq"}, {"terms", t}, {"rhs", c.rhs}});
    }
    return j;
}

FeasibilityProblem feasibility_problem_from_json(const nlohmann::json& j) {
    FeasibilityProblem p;
    for (const auto& v : j.at("variables")) p.add_psd(v.at("size").get<int>(), v.at("complex").get<bool>());
    p.add_free(j.at("free_scalars").get<int>());
    for (const auto& c : j.at("constraints")) {
        std::vector<std::pair<int, double>> terms;
        for (const auto& t : c.at("terms")) {
            int idx = t[0].get<int>();
            if (idx < 0 || idx >= p.num_params()) throw std::invalid_argument("constraint term index out of range");
            terms.emplace_back(idx, t[1].get<double>());
        }
        std::string kind = c.at("kind").get<std::string>();
        if (kind == "eq") p.add_equal(terms, c.at("rhs").get<double>());
        else if (kind == "geq") p.add_greater_equal(terms, c.at("rhs").get<double>());
        else throw std::invalid_argument("unknown constraint kind " + kind);
    }
    return p;
}

nlohmann::json to_json(const LmiProblem& p) {
    nlohmann::json j;
    j["nvars"] = p.nvars;
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : p.blocks) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& [i, m] : b.terms) terms.push_back({{"var", i}, {"matrix", cmat_to_json(m)}});
        j["blocks"].push_back({{"F0", cmat_to_json(b.F0)}, {"terms", terms}});
    }
    j["equalities"] = nlohmann::json::array();
    for (const auto& [terms, rhs] : p.equalities) {
        nlohmann::json t = nlohmann::json::array();
        for (const auto& [i, c] : terms) t.push_back({i, c});
        j["equalities"].push_back({{"terms", t}, {"rhs", rhs}});
    }
    return j;
}

LmiProblem lmi_problem_from_json(const nlohmann::json& j) {
    LmiProblem p;
    p.add_vars(j.at("nvars").get<int>());
    for (const auto& b : j.at("blocks")) {
        CMat f0 = cmat_from_json(b.at("F0"));
        LmiBlock& blk = p.add_block(static_cast<int>(f0.rows()));
        blk.F0 = f0;
        for (const auto& t : b.at("terms")) blk.terms.emplace_back(t.at("var").get<int>(), cmat_from_json(t.at("matrix")));
    }
    for (const auto& e : j.at("equalities")) {
        std::vector<std::pair<int, double>> terms;
        for (const auto& t : e.at("terms")) terms.emplace_back(t[0].get<int>(), t[1].get<double>());
        p.add_equality(terms, e.at("rhs").get<double>());
    }
    return p;
}

}  // namespace opsys::sdp
