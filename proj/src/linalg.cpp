#include "opsys/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace opsys {

AmbientAlgebra::AmbientAlgebra(std::vector<int> d) : dims(std::move(d)) {
    for (int x : dims) {
        if (x <= 0) throw std::invalid_argument("ambient block size must be positive");
    }
}

int AmbientAlgebra::total() const {
    return std::accumulate(dims.begin(), dims.end(), 0);
}

int AmbientAlgebra::offset(int b) const {
    return std::accumulate(dims.begin(), dims.begin() + b, 0);
}

BlockMatrix::BlockMatrix(const AmbientAlgebra& a) {
    for (int d : a.dims) blocks.push_back(CMat::Zero(d, d));
}

BlockMatrix BlockMatrix::zero(const AmbientAlgebra& a) { return BlockMatrix(a); }

BlockMatrix BlockMatrix::identity(const AmbientAlgebra& a) {
    BlockMatrix m(a);
    for (auto& b : m.blocks) b.setIdentity();
    return m;
}

BlockMatrix BlockMatrix::from_dense(const AmbientAlgebra& a, const CMat& m) {
    if (m.rows() != a.total() || m.cols() != a.total())
        throw std::invalid_argument("dense matrix does not match ambient");
    BlockMatrix r(a);
    int off = 0;
    for (int b = 0; b < a.blocks(); ++b) {
        r.blocks[b] = m.block(off, off, a.dims[b], a.dims[b]);
        off += a.dims[b];
    }
    return r;
}

AmbientAlgebra BlockMatrix::ambient() const {
    std::vector<int> d;
    for (const auto& b : blocks) d.push_back(static_cast<int>(b.rows()));
    return AmbientAlgebra(d);
}

int BlockMatrix::total() const {
    int t = 0;
    for (const auto& b : blocks) t += static_cast<int>(b.rows());
    return t;
}

CMat BlockMatrix::dense() const {
    int n = total();
    CMat m = CMat::Zero(n, n);
    int off = 0;
    for (const auto& b : blocks) {
        m.block(off, off, b.rows(), b.cols()) = b;
        off += static_cast<int>(b.rows());
    }
    return m;
}

BlockMatrix BlockMatrix::adjoint() const {
    BlockMatrix r = *this;
    for (auto& b : r.blocks) b = b.adjoint().eval();
    return r;
}

bool BlockMatrix::is_self_adjoint(double tol) const {
    double scale = std::max(1.0, frobenius());
    for (const auto& b : blocks) {
        if ((b - b.adjoint()).norm() > tol * scale) return false;
    }
    return true;
}

double BlockMatrix::norm() const {
    double n = 0.0;
    for (const auto& b : blocks) {
        if (b.size() == 0) continue;
        Eigen::JacobiSVD<CMat> svd(b);
        n = std::max(n, svd.singularValues()(0));
    }
    return n;
}

double BlockMatrix::frobenius() const {
    double s = 0.0;
    for (const auto& b : blocks) s += b.squaredNorm();
    return std::sqrt(s);
}

static void check_same(const BlockMatrix& a, const BlockMatrix& b) {
    if (a.blocks.size() != b.blocks.size()) throw std::invalid_argument("ambient mismatch");
    for (size_t i = 0; i < a.blocks.size(); ++i) {
        if (a.blocks[i].rows() != b.blocks[i].rows())
            throw std::invalid_argument("ambient mismatch");
    }
}

BlockMatrix BlockMatrix::operator+(const BlockMatrix& o) const {
    check_same(*this, o);
    BlockMatrix r = *this;
    for (size_t i = 0; i < blocks.size(); ++i) r.blocks[i] += o.blocks[i];
    return r;
}

BlockMatrix BlockMatrix::operator-(const BlockMatrix& o) const {
    check_same(*this, o);
    BlockMatrix r = *this;
    for (size_t i = 0; i < blocks.size(); ++i) r.blocks[i] -= o.blocks[i];
    return r;
}

BlockMatrix BlockMatrix::operator*(const BlockMatrix& o) const {
    check_same(*this, o);
    BlockMatrix r = *this;
    for (size_t i = 0; i < blocks.size(); ++i) r.blocks[i] = blocks[i] * o.blocks[i];
    return r;
}

BlockMatrix BlockMatrix::operator*(cd s) const {
    BlockMatrix r = *this;
    for (auto& b : r.blocks) b *= s;
    return r;
}

BlockMatrix& BlockMatrix::operator+=(const BlockMatrix& o) {
    check_same(*this, o);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i] += o.blocks[i];
    return *this;
}

CVec BlockMatrix::vectorize() const {
    int n = 0;
    for (const auto& b : blocks) n += static_cast<int>(b.size());
    CVec v(n);
    int k = 0;
    for (const auto& b : blocks) {
        for (int i = 0; i < b.rows(); ++i)
            for (int j = 0; j < b.cols(); ++j) v(k++) = b(i, j);
    }
    return v;
}

cd inner(const BlockMatrix& a, const BlockMatrix& b) {
    check_same(a, b);
    cd s = 0.0;
    for (size_t i = 0; i < a.blocks.size(); ++i) s += (a.blocks[i].conjugate().cwiseProduct(b.blocks[i])).sum();
    return s;
}

CMat hermitian_part(const CMat& m) { return (m + m.adjoint()) / 2.0; }

static void require_self_adjoint(const CMat& m) {
    double scale = std::max(1.0, m.norm());
    if ((m - m.adjoint()).norm() > 1e-8 * scale)
        throw std::invalid_argument("matrix is not self-adjoint");
}

PsdResult psd_check(const CMat& m, double tol, bool relative) {
    BlockMatrix b(std::vector<CMat>{m});
    return psd_check(b, tol, relative);
}

PsdResult psd_check(const BlockMatrix& m, double tol, bool relative) {
    PsdResult r;
    r.positive = true;
    double maxabs = 0.0;
    double minev = std::numeric_limits<double>::infinity();
    int minblock = -1;
    CVec minvec;
    for (size_t b = 0; b < m.blocks.size(); ++b) {
        const CMat& blk = m.blocks[b];
        if (blk.size() == 0) continue;
        require_self_adjoint(blk);
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(blk));
        const RVec& ev = es.eigenvalues();
        maxabs = std::max({maxabs, std::abs(ev(0)), std::abs(ev(ev.size() - 1))});
        if (ev(0) < minev) {
            minev = ev(0);
            minblock = static_cast<int>(b);
            minvec = es.eigenvectors().col(0);
        }
    }
    if (minblock < 0) {
        r.min_eigenvalue = 0.0;
        return r;
    }
    r.min_eigenvalue = minev;
    r.threshold = relative ? tol * maxabs : tol;
    if (minev < -r.threshold) {
        r.positive = false;
        r.witness_block = minblock;
        r.witness = minvec;
    }
    return r;
}

double min_eigenvalue(const CMat& m) {
    if (m.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

double min_eigenvalue(const BlockMatrix& m) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& b : m.blocks) v = std::min(v, min_eigenvalue(b));
    return v;
}

SqrtInverse moore_penrose_sqrt_inverse(const CMat& m, double cutoff, double tol) {
    auto r = moore_penrose_sqrt_inverse(BlockMatrix(std::vector<CMat>{m}), cutoff, tol);
    return r;
}

SqrtInverse moore_penrose_sqrt_inverse(const BlockMatrix& m, double cutoff, double tol) {
    SqrtInverse out{m, m, m};
    double maxev = 0.0;
    std::vector<Eigen::SelfAdjointEigenSolver<CMat>> solvers;
    for (const auto& b : m.blocks) {
        require_self_adjoint(b);
        solvers.emplace_back(hermitian_part(b));
        if (b.size() > 0) maxev = std::max(maxev, solvers.back().eigenvalues().cwiseAbs().maxCoeff());
    }
    for (size_t k = 0; k < m.blocks.size(); ++k) {
        const auto& es = solvers[k];
        int d = static_cast<int>(m.blocks[k].rows());
        if (d == 0) continue;
        const RVec& ev = es.eigenvalues();
        if (ev(0) < -tol * std::max(maxev, 1e-300))
            throw std::invalid_argument("moore_penrose_sqrt_inverse: matrix has a negative eigenvalue");
        RVec p(d), s(d), dinv(d);
        for (int i = 0; i < d; ++i) {
            bool keep = ev(i) > cutoff * maxev && ev(i) > 0.0;
            p(i) = keep ? 1.0 : 0.0;
            s(i) = keep ? std::sqrt(ev(i)) : 0.0;
            dinv(i) = keep ? 1.0 / std::sqrt(ev(i)) : 0.0;
        }
        const CMat& v = es.eigenvectors();
        out.support.blocks[k] = v * p.cast<cd>().asDiagonal() * v.adjoint();
        out.sqrt.blocks[k] = v * s.cast<cd>().asDiagonal() * v.adjoint();
        out.inverse.blocks[k] = v * dinv.cast<cd>().asDiagonal() * v.adjoint();
    }
    return out;
}

CMat tensor_shuffle(const CMat& x, int a, int b) {
    if (a <= 0 || b <= 0 || x.rows() != a * b || x.cols() != a * b)
        throw std::invalid_argument("tensor_shuffle: size is not a*b");
    CMat y(a * b, a * b);
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
            for (int k = 0; k < a; ++k)
                for (int l = 0; l < b; ++l) y(j * a + i, l * a + k) = x(i * b + j, k * b + l);
    return y;
}

CMat matrix_units_gram(int d) {
    if (d < 1) throw std::invalid_argument("matrix_units_gram: d must be positive");
    CMat e = CMat::Zero(d * d, d * d);
    for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q) e(p * d + p, q * d + q) = 1.0;
    return e;
}

RMat hermitian_to_real(const CMat& m) {
    int s = static_cast<int>(m.rows());
    RMat r(2 * s, 2 * s);
    r.topLeftCorner(s, s) = m.real();
    r.topRightCorner(s, s) = -m.imag();
    r.bottomLeftCorner(s, s) = m.imag();
    r.bottomRightCorner(s, s) = m.real();
    return r;
}

CMat real_to_hermitian(const RMat& r) {
    int s = static_cast<int>(r.rows()) / 2;
    RMat re = (r.topLeftCorner(s, s) + r.bottomRightCorner(s, s)) / 2.0;
    RMat im = (r.bottomLeftCorner(s, s) - r.topRightCorner(s, s)) / 2.0;
    CMat m(s, s);
    m.real() = re;
    m.imag() = im;
    return m;
}

// Hermitian basis of M_q: diagonal units, then e_ij + e_ji and i(e_ij - e_ji)
std::vector<CMat> hermitian_basis(int q) {
    std::vector<CMat> out;
    for (int i = 0; i < q; ++i) {
        CMat e = CMat::Zero(q, q);
        e(i, i) = 1.0;
        out.push_back(e);
    }
    for (int i = 0; i < q; ++i)
        for (int j = i + 1; j < q; ++j) {
            CMat e = CMat::Zero(q, q);
            e(i, j) = e(j, i) = 1.0;
            out.push_back(e);
            CMat f = CMat::Zero(q, q);
            f(i, j) = cd(0, 1);
            f(j, i) = cd(0, -1);
            out.push_back(f);
        }
    return out;
}

CMat kron(const CMat& a, const CMat& b) {
    CMat r(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return r;
}

nlohmann::json cmat_to_json(const CMat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
        rows.push_back(row);
    }
    return rows;
}

CMat cmat_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("matrix must be an array of rows");
    int r = static_cast<int>(j.size());
    int c = r == 0 ? 0 : static_cast<int>(j[0].size());
    CMat m(r, c);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(j[i].size()) != c) throw std::invalid_argument("ragged matrix rows");
        for (int k = 0; k < c; ++k) {
            const auto& e = j[i][k];
            if (e.is_number()) {
                m(i, k) = cd(e.get<double>(), 0.0);
            } else {
                if (!e.is_array() || e.size() != 2) throw std::invalid_argument("entry must be [re, im]");
                m(i, k) = cd(e[0].get<double>(), e[1].get<double>());
            }
        }
    }
    return m;
}

nlohmann::json cvec_to_json(const CVec& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back({v(i).real(), v(i).imag()});
    return a;
}

CVec cvec_from_json(const nlohmann::json& j) {
    CVec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_number()) v(i) = j[i].get<double>();
        else v(i) = cd(j[i][0].get<double>(), j[i][1].get<double>());
    }
    return v;
}

nlohmann::json to_json(const BlockMatrix& m) {
    nlohmann::json j;
    j["dims"] = m.ambient().dims;
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : m.blocks) j["blocks"].push_back(cmat_to_json(b));
    return j;
}

BlockMatrix block_matrix_from_json(const nlohmann::json& j) {
    if (!j.contains("dims") || !j.contains("blocks")) throw std::invalid_argument("matrix JSON needs dims and blocks");
    std::vector<int> dims = j["dims"].get<std::vector<int>>();
    if (dims.size() != j["blocks"].size()) throw std::invalid_argument("dims and blocks disagree");
    BlockMatrix m;
    for (size_t b = 0; b < dims.size(); ++b) {
        CMat blk = cmat_from_json(j["blocks"][b]);
        if (blk.rows() != dims[b] || blk.cols() != dims[b]) throw std::invalid_argument("block size disagrees with dims");
        m.blocks.push_back(blk);
    }
    return m;
}

}  // namespace opsys
