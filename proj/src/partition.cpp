#include "opsys/partition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opsys {

namespace {

double spectral_radius(const CMat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double operator_norm(const CMat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<CMat> svd(m);
    return svd.singularValues()(0);
}

// Left factor W(2,m'); m = 1 is padded with a zero second contraction
SystemPtr left_system(int m) { return make_W(std::max(m, 2), 2); }

}  // namespace

double partition_margin(const std::vector<BlockMatrix>& b) {
    double worst = 0.0;
    for (const auto& x : b) {
        if (!x.is_self_adjoint()) throw std::invalid_argument("partition input must be self-adjoint");
        for (const auto& blk : x.blocks) worst = std::max(worst, spectral_radius(blk));
    }
    return 1.0 - worst;
}

PartitionInstance make_partition_instance(const AmbientAlgebra& a, std::vector<BlockMatrix> b) {
    if (b.empty()) throw std::invalid_argument("partition instance needs at least one element");
    for (const auto& x : b)
        if (x.ambient() != a) throw std::invalid_argument("partition element lives in a different algebra");
    PartitionInstance inst{a, std::move(b), 0.0, 0};
    inst.margin = partition_margin(inst.b);
    return inst;
}

AmbientAlgebra random_algebra(int max_total, int max_blocks, Rng& rng) {
    std::uniform_int_distribution<int> nblocks(1, max_blocks);
    int blocks = std::min(nblocks(rng), max_total);
    std::vector<int> dims(blocks, 1);
    int budget = std::uniform_int_distribution<int>(blocks, max_total)(rng) - blocks;
    std::uniform_int_distribution<int> pick(0, blocks - 1);
    for (; budget > 0; --budget) ++dims[pick(rng)];
    return AmbientAlgebra(dims);
}

PartitionInstance random_partition_instance(const AmbientAlgebra& a, int m, double margin, Rng& rng) {
    std::vector<BlockMatrix> b;
    for (int k = 0; k < m; ++k) {
        BlockMatrix x(a);
        for (auto& blk : x.blocks) blk = random_hermitian(rng, static_cast<int>(blk.rows()));
        double r = 0.0;
        for (const auto& blk : x.blocks) r = std::max(r, spectral_radius(blk));
        double target = 1.0 - uniform(rng, margin, std::max(margin, 0.5));
        if (r > 0.0) x = x * cd(target / r, 0.0);
        b.push_back(x);
    }
    return make_partition_instance(a, std::move(b));
}

BlockMatrix PartitionCertificate::entry(int i, int j) const {
    BlockMatrix out;
    for (const auto& blk : a.blocks) {
        int d = static_cast<int>(blk.rows()) / n;
        out.blocks.push_back(blk.block(i * d, j * d, d, d));
    }
    return out;
}

std::string PartitionVerdict::reason() const {
    std::string s;
    for (size_t k = 0; k < reasons.size(); ++k) s += (k ? ", " : "") + reasons[k];
    return s;
}

PartitionVerdict verify_partition(const PartitionInstance& inst, const PartitionCertificate& cert) {
    PartitionVerdict v;
    const int n = cert.n, m = static_cast<int>(inst.b.size());
    bool shape = n > 0 && static_cast<int>(cert.C.size()) == m &&
                 static_cast<int>(cert.a.blocks.size()) == inst.algebra.blocks();
    for (int b = 0; shape && b < inst.algebra.blocks(); ++b)
        shape = cert.a.blocks[b].rows() == n * inst.algebra.dims[b] && cert.a.blocks[b].cols() == n * inst.algebra.dims[b];
    for (const auto& c : cert.C) shape = shape && c.rows() == n && c.cols() == n;
    if (!shape) {
        v.reasons.push_back("shape");
        return v;
    }
    BlockMatrix sum(inst.algebra);
    for (int i = 0; i < n; ++i) sum += cert.entry(i, i);
    v.unit_residual = (sum - BlockMatrix::identity(inst.algebra)).frobenius();
    if (v.unit_residual > 1e-10) v.reasons.push_back("unit-sum");

    bool selfadj = cert.a.is_self_adjoint();
    if (selfadj) {
        PsdResult p = psd_check(cert.a);
        v.min_eigenvalue = p.min_eigenvalue;
        if (!p.positive) v.reasons.push_back("psd");
    } else {
        v.reasons.push_back("psd");
    }

    for (const auto& c : cert.C) v.max_contraction = std::max(v.max_contraction, operator_norm(c));
    if (v.max_contraction > 1.0 - cert.eps + 1e-12 || v.max_contraction >= 1.0) v.reasons.push_back("contraction");

    for (int k = 0; k < m; ++k) {
        BlockMatrix r = inst.b[k] * cd(-1.0, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (cert.C[k](i, j) != 0.0) r += cert.entry(i, j) * cert.C[k](i, j);
        v.reconstruction_residual = std::max(v.reconstruction_residual, r.frobenius());
    }
    if (v.reconstruction_residual > 1e-8) v.reasons.push_back("reconstruction");
    v.valid = v.reasons.empty();
    return v;
}

TensorElement partition_element(const PartitionInstance& inst) {
    const int m = static_cast<int>(inst.b.size());
    SystemPtr w = left_system(m);
    SystemPtr alg = make_algebra(inst.algebra);
    TensorElement u = TensorElement::zero(concrete(w), concrete(alg), 1);
    CVec unit = alg->project(BlockMatrix::identity(inst.algebra));
    for (int j = 0; j < alg->dim(); ++j) u.at(0, j)(0, 0) = unit(j);
    for (int k = 0; k < m; ++k) {
        CVec c = alg->project(inst.b[k]);
        for (int j = 0; j < alg->dim(); ++j) u.at(k + 1, j)(0, 0) = c(j);
    }
    return u;
}

namespace {

struct BlockPiece {
    int n = 0;
    std::vector<CMat> C;               // m strict contractions, n x n
    std::vector<std::vector<CMat>> a;  // a[i][j], d x d
};

// One summand M_d: shuffle certificate, then compress to the support of C'_0
BlockPiece solve_block(const std::vector<CMat>& b, double eps) {
    const int m = static_cast<int>(b.size());
    const int d = static_cast<int>(b[0].rows());
    const int mp = std::max(m, 2);
    SystemPtr w = make_W(mp, 2);
    SystemPtr t = make_Mat(d);
    TensorElement u = TensorElement::zero(concrete(w), concrete(t), 1);
    u.at(0, 0)(0, 0) = 1.0;
    for (int k = 0; k < m; ++k) {
        CVec c = t->project(BlockMatrix(std::vector<CMat>{b[k] / (1.0 - eps)}));
        for (int j = 0; j < t->dim(); ++j) u.at(k + 1, j)(0, 0) = c(j);
    }
    MaxInnerResult r = max_inner_nuclear_factor(u);
    if (!r.certified() || r.certificate.eps != 0.0)
        throw std::runtime_error("partition block: element is not strictly min-positive (" + r.report + ")");
    const MaxCertificate& c = r.certificate;
    const CMat& c0 = c.P[0];
    for (int k = 1; k <= m; ++k) {
        if (!psd_check(CMat(c0 - c.P[k])).positive || !psd_check(CMat(c0 + c.P[k])).positive)
            throw std::runtime_error("partition block: -C_0 <= C_k <= C_0 fails");
    }
    SqrtInverse si = moore_penrose_sqrt_inverse(c0);
    const CMat& dinv = si.inverse.blocks[0];
    const CMat& root = si.sqrt.blocks[0];
    const int p = c.p, q = c.q;
    CVec y = kron(root, CMat::Identity(q, q)) * c.X.col(0);
    // a_ij = x_i^* Q x_j realized in M_d
    std::vector<CMat> qreal;
    for (int j = 0; j < t->dim(); ++j) qreal.push_back(t->basis()[j].blocks[0]);
    BlockPiece out;
    out.n = p;
    out.a.assign(p, std::vector<CMat>(p, CMat::Zero(d, d)));
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            CVec xi = y.segment(i * q, q), xj = y.segment(j * q, q);
            for (int l = 0; l < t->dim(); ++l) {
                cd coef = xi.dot(c.Q[l] * xj);
                if (coef != 0.0) out.a[i][j] += coef * qreal[l];
            }
        }
    for (int k = 1; k <= m; ++k) out.C.push_back((1.0 - eps) * (dinv * c.P[k] * dinv));
    return out;
}

}  // namespace

PartitionCertificate solve_partition(const PartitionInstance& inst) {
    const double margin = partition_margin(inst.b);
    if (!(margin > 0.0)) throw std::invalid_argument("partition instance needs strict contractions (margin <= 0)");
    const int m = static_cast<int>(inst.b.size());
    std::vector<double> tries{std::min(margin / 2.0, 1e-3), margin / 2.0};
    std::string last;
    for (double eps : tries) {
        try {
            std::vector<BlockPiece> pieces;
            for (int b = 0; b < inst.algebra.blocks(); ++b) {
                std::vector<CMat> bs;
                for (const auto& x : inst.b) bs.push_back(x.blocks[b]);
                pieces.push_back(solve_block(bs, eps));
            }
            // Block-diagonal concatenation; a_ij vanishes across summands
            PartitionCertificate cert;
            cert.eps = eps;
            for (const auto& pc : pieces) cert.n += pc.n;
            cert.C.assign(m, CMat::Zero(cert.n, cert.n));
            std::vector<CMat> ablocks;
            int off = 0;
            for (int b = 0; b < inst.algebra.blocks(); ++b) {
                const BlockPiece& pc = pieces[b];
                int d = inst.algebra.dims[b];
                for (int k = 0; k < m; ++k) cert.C[k].block(off, off, pc.n, pc.n) = pc.C[k];
                CMat ab = CMat::Zero(cert.n * d, cert.n * d);
                for (int i = 0; i < pc.n; ++i)
                    for (int j = 0; j < pc.n; ++j) ab.block((off + i) * d, (off + j) * d, d, d) = pc.a[i][j];
                ablocks.push_back(ab);
                off += pc.n;
            }
            cert.a = BlockMatrix(ablocks);
            PartitionVerdict v = verify_partition(inst, cert);
            if (v.valid) return cert;
            last = "verifier rejected the assembled certificate: " + v.reason();
        } catch (const std::runtime_error& e) {
            last = e.what();
        }
    }
    throw std::runtime_error("solve_partition failed: " + last);
}

PartitionMaxResult partition_to_max_certificate(const PartitionCertificate& cert, const PartitionInstance& inst) {
    PartitionMaxResult out;
    PartitionVerdict v = verify_partition(inst, cert);
    if (!v.valid) {
        out.report = "invalid certificate: " + v.reason();
        return out;
    }
    const int n = cert.n, m = static_cast<int>(inst.b.size());
    SystemPtr w = left_system(m);
    SystemPtr alg = make_algebra(inst.algebra);
    out.element = partition_element(inst);
    MaxCertificate c;
    c.p = n;
    c.q = n;
    c.method = "partition";
    c.P.assign(w->dim(), CMat::Zero(n, n));
    c.P[0] = CMat::Identity(n, n);
    for (int k = 0; k < m; ++k) c.P[k + 1] = cert.C[k];
    // Tuple form (I + C_1, I - C_1, ...): the realization of W in M_n(l-infinity)
    PsdResult tuple = psd_check(realize_level(*w, c.P));
    out.tuple_min_eigenvalue = tuple.min_eigenvalue;
    std::vector<CMat> qa = level_coords(*alg, cert.a, n);
    if (qa.empty()) {
        out.report = "entries of [a_ij] leave the algebra";
        return out;
    }
    c.Q = qa;
    c.X = CMat::Zero(static_cast<Eigen::Index>(n) * n, 1);
    for (int i = 0; i < n; ++i) c.X(i * n + i, 0) = 1.0;
    out.certificate = c;
    if (!tuple.positive) {
        out.report = "W tuple is not positive";
        return out;
    }
    CertificateCheck chk = verify_certificate(out.element, c, 1e-8);
    out.residual = chk.residual;
    out.ok = chk.valid;
    std::ostringstream rep;
    rep << "tuple min eigenvalue " << tuple.min_eigenvalue << ", reconstruction residual " << chk.residual;
    if (!chk.valid) rep << " (" << chk.reason << ")";
    out.report = rep.str();
    return out;
}

nlohmann::json to_json(const PartitionInstance& inst) {
    nlohmann::json j;
    j["algebra"] = inst.algebra.dims;
    j["margin"] = inst.margin;
    j["seed"] = inst.seed;
    j["b"] = nlohmann::json::array();
    for (const auto& x : inst.b) j["b"].push_back(to_json(x));
    return j;
}

PartitionInstance partition_instance_from_json(const nlohmann::json& j) {
    AmbientAlgebra a(j.at("algebra").get<std::vector<int>>());
    std::vector<BlockMatrix> b;
    for (const auto& x : j.at("b")) b.push_back(block_matrix_from_json(x));
    PartitionInstance inst = make_partition_instance(a, std::move(b));
    inst.seed = j.value("seed", 0ULL);
    return inst;
}

nlohmann::json to_json(const PartitionCertificate& c) {
    nlohmann::json j;
    j["n"] = c.n;
    j["eps"] = c.eps;
    j["a"] = to_json(c.a);
    j["C"] = nlohmann::json::array();
    for (const auto& m : c.C) j["C"].push_back(cmat_to_json(m));
    return j;
}

PartitionCertificate partition_certificate_from_json(const nlohmann::json& j) {
    PartitionCertificate c;
    c.n = j.at("n").get<int>();
    c.eps = j.at("eps").get<double>();
    c.a = block_matrix_from_json(j.at("a"));
    for (const auto& m : j.at("C")) c.C.push_back(cmat_from_json(m));
    return c;
}

}  // namespace opsys
