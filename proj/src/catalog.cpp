#include "opsys/catalog.hpp"

#include <regex>
#include <sstream>

#include "opsys/random.hpp"

namespace opsys {

OperatorSystem::OperatorSystem(std::string name, AmbientAlgebra ambient, std::vector<BlockMatrix> basis,
                               std::string convention)
    : name_(std::move(name)), ambient_(std::move(ambient)), basis_(std::move(basis)),
      convention_(std::move(convention)) {
    if (basis_.empty()) throw std::invalid_argument("operator system needs a basis");
    for (const auto& b : basis_) {
        if (b.ambient() != ambient_) throw std::invalid_argument("basis element outside the ambient algebra");
    }
    if ((basis_[0] - BlockMatrix::identity(ambient_)).frobenius() > kTolEq)
        throw std::invalid_argument("first basis element must be the unit");
    int rows = static_cast<int>(basis_[0].vectorize().size());
    basis_columns_.resize(rows, dim());
    for (int i = 0; i < dim(); ++i) basis_columns_.col(i) = basis_[i].vectorize();
    qr_.compute(basis_columns_);
    qr_.setThreshold(1e-12);
    if (qr_.rank() != dim()) throw std::invalid_argument("basis is linearly dependent");
    for (const auto& b : basis_) {
        if (!coords(b.adjoint()).member) throw std::invalid_argument("span is not closed under adjoint");
    }
}

bool OperatorSystem::is_full_algebra() const {
    int full = 0;
    for (int d : ambient_.dims) full += d * d;
    return full == dim();
}

BlockMatrix OperatorSystem::reconstruct(const CVec& coeffs) const {
    if (coeffs.size() != dim()) throw std::invalid_argument("coefficient vector has the wrong length");
    BlockMatrix x(ambient_);
    for (int i = 0; i < dim(); ++i) x += basis_[i] * coeffs(i);
    return x;
}

CVec OperatorSystem::project(const BlockMatrix& x) const {
    if (x.ambient() != ambient_) throw std::invalid_argument("element lives in a different ambient algebra");
    return qr_.solve(x.vectorize());
}

CoordsResult OperatorSystem::coords(const BlockMatrix& x, double tol) const {
    CoordsResult r;
    CVec v = x.vectorize();
    r.coeffs = project(x);
    r.distance = (basis_columns_ * r.coeffs - v).norm();
    r.member = r.distance <= tol * std::max(1.0, v.norm());
    return r;
}

CVec OperatorSystem::matrix_unit_coords(int block, int a, int b) const {
    BlockMatrix e(ambient_);
    e.blocks[block](a, b) = 1.0;
    CoordsResult r = coords(e);
    if (!r.member) throw std::invalid_argument("matrix unit is not in " + name_);
    return r.coeffs;
}

BlockMatrix realize_level(const OperatorSystem& s, const std::vector<CMat>& coeffs) {
    if (static_cast<int>(coeffs.size()) != s.dim()) throw std::invalid_argument("realize_level: need one matrix per basis element");
    int q = static_cast<int>(coeffs[0].rows());
    std::vector<CMat> blocks;
    for (int b = 0; b < s.ambient().blocks(); ++b) {
        int d = s.ambient().dims[b];
        CMat m = CMat::Zero(q * d, q * d);
        for (int l = 0; l < s.dim(); ++l) m += kron(coeffs[l], s.basis()[l].blocks[b]);
        blocks.push_back(m);
    }
    return BlockMatrix(blocks);
}

std::vector<CMat> level_coords(const OperatorSystem& s, const BlockMatrix& x, int q, double tol) {
    std::vector<CMat> out(s.dim(), CMat::Zero(q, q));
    for (int k = 0; k < q; ++k)
        for (int l = 0; l < q; ++l) {
            BlockMatrix e(s.ambient());
            for (int b = 0; b < s.ambient().blocks(); ++b) {
                int d = s.ambient().dims[b];
                e.blocks[b] = x.blocks[b].block(k * d, l * d, d, d);
            }
            CoordsResult r = s.coords(e, tol);
            if (!r.member) return {};
            for (int m = 0; m < s.dim(); ++m) out[m](k, l) = r.coeffs(m);
        }
    return out;
}

std::vector<CMat> random_level_element(const OperatorSystem& s, int q, Rng& rng) {
    std::vector<CMat> out;
    for (int l = 0; l < s.dim(); ++l) out.push_back(random_hermitian(rng, q));
    return out;
}

namespace {

BlockMatrix single(const AmbientAlgebra& a, int block, int i, int j, cd v) {
    BlockMatrix m(a);
    m.blocks[block](i, j) += v;
    return m;
}

// Self-adjoint pair spanning e_ij, e_ji
void add_offdiagonal(std::vector<BlockMatrix>& basis, const AmbientAlgebra& a, int block, int i, int j) {
    basis.push_back(single(a, block, i, j, 1.0) + single(a, block, j, i, 1.0));
    basis.push_back(single(a, block, i, j, cd(0.0, 1.0)) + single(a, block, j, i, cd(0.0, -1.0)));
}

}  // namespace

SystemPtr make_W(int n, int k) {
    if (n < 2 || k < 2) throw std::invalid_argument("W(n,k) needs n, k >= 2");
    AmbientAlgebra a(std::vector<int>(n * k, 1));
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int i = 0; i < n; ++i)
        for (int j = 1; j < k; ++j) basis.push_back(single(a, i * k, 0, 0, 1.0) + single(a, i * k + j, 0, 0, -1.0));
    std::ostringstream name;
    name << "W:" << n << "," << k;
    return std::make_shared<OperatorSystem>(
        name.str(), a, basis,
        "w0 = all ones; then for each group i and j = 1..k-1 the vector e(i,0) - e(i,j)");
}

SystemPtr make_E(int n) {
    if (n < 2) throw std::invalid_argument("E(n) needs n >= 2");
    AmbientAlgebra a({n});
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) add_offdiagonal(basis, a, 0, i, j);
    return std::make_shared<OperatorSystem>("E:" + std::to_string(n), a, basis,
                                            "unit; then e_ij + e_ji, i(e_ij - e_ji) for i < j");
}

SystemPtr make_U(int n) {
    if (n < 2) throw std::invalid_argument("U(n) needs n >= 2");
    AmbientAlgebra a(std::vector<int>(n, 2));
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int b = 0; b < n; ++b) add_offdiagonal(basis, a, b, 0, 1);
    return std::make_shared<OperatorSystem>("U:" + std::to_string(n), a, basis,
                                            "unit; then e_12 + e_21, i(e_12 - e_21) in each M_2 summand");
}

SystemPtr make_F(int n) {
    if (n < 2) throw std::invalid_argument("F(n) needs n >= 2");
    AmbientAlgebra a({2 * n});
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int i = 1; i < n; ++i) basis.push_back(single(a, 0, 0, 0, 1.0) + single(a, 0, i, i, -1.0));
    for (int i = n + 1; i < 2 * n; ++i) basis.push_back(single(a, 0, n, n, 1.0) + single(a, 0, i, i, -1.0));
    for (int i = 0; i < 2 * n; ++i)
        for (int j = i + 1; j < 2 * n; ++j) add_offdiagonal(basis, a, 0, i, j);
    return std::make_shared<OperatorSystem>(
        "F:" + std::to_string(n), a, basis,
        "unit; e_11 - e_ii within the first half; e_(n+1)(n+1) - e_ii within the second half; "
        "then e_ij + e_ji, i(e_ij - e_ji) for i < j");
}

SystemPtr make_Linf(int m) {
    if (m < 1) throw std::invalid_argument("Linf(m) needs m >= 1");
    AmbientAlgebra a(std::vector<int>(m, 1));
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int i = 1; i < m; ++i) basis.push_back(single(a, i, 0, 0, 1.0));
    return std::make_shared<OperatorSystem>("Linf:" + std::to_string(m), a, basis, "unit; then e_2, ..., e_m");
}

SystemPtr make_Mat(int d) {
    if (d < 1) throw std::invalid_argument("Mat(d) needs d >= 1");
    AmbientAlgebra a({d});
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int i = 1; i < d; ++i) basis.push_back(single(a, 0, i, i, 1.0));
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) add_offdiagonal(basis, a, 0, i, j);
    return std::make_shared<OperatorSystem>("Mat:" + std::to_string(d), a, basis,
                                            "unit; e_ii for i >= 2; then e_ij + e_ji, i(e_ij - e_ji) for i < j");
}

SystemPtr make_algebra(const AmbientAlgebra& a) {
    std::vector<BlockMatrix> basis{BlockMatrix::identity(a)};
    for (int b = 0; b < a.blocks(); ++b)
        for (int i = 0; i < a.dims[b]; ++i)
            if (b || i) basis.push_back(single(a, b, i, i, 1.0));
    for (int b = 0; b < a.blocks(); ++b)
        for (int i = 0; i < a.dims[b]; ++i)
            for (int j = i + 1; j < a.dims[b]; ++j) add_offdiagonal(basis, a, b, i, j);
    std::ostringstream name;
    name << "Alg:";
    for (int b = 0; b < a.blocks(); ++b) name << (b ? "+" : "") << a.dims[b];
    return std::make_shared<OperatorSystem>(name.str(), a, basis,
                                            "unit; diagonal units except the first; then e_ij + e_ji, "
                                            "i(e_ij - e_ji) for i < j in each summand");
}

KernelSubspace make_J(int n) {
    if (n < 2) throw std::invalid_argument("J(n) needs n >= 2");
    KernelSubspace j;
    j.host = AmbientAlgebra({n});
    j.name = "J:" + std::to_string(n);
    for (int i = 1; i < n; ++i) j.basis.push_back(single(j.host, 0, 0, 0, 1.0) + single(j.host, 0, i, i, -1.0));
    return j;
}

KernelCheck check_kernel(const KernelSubspace& j, int samples, unsigned long long seed) {
    KernelCheck c;
    c.self_adjoint = true;
    for (const auto& b : j.basis) c.self_adjoint = c.self_adjoint && b.is_self_adjoint();
    int rows = static_cast<int>(BlockMatrix::identity(j.host).vectorize().size());
    CMat cols(rows, static_cast<int>(j.basis.size()));
    for (size_t i = 0; i < j.basis.size(); ++i) cols.col(i) = j.basis[i].vectorize();
    CVec unit = BlockMatrix::identity(j.host).vectorize();
    CVec fit = cols.colPivHouseholderQr().solve(unit);
    c.unit_outside = (cols * fit - unit).norm() > 1e-6;
    Rng rng(seed);
    c.no_positive = true;
    for (int s = 0; s < samples; ++s) {
        BlockMatrix x(j.host);
        for (const auto& b : j.basis) x += b * cd(uniform(rng, -1.0, 1.0), 0.0);
        if (x.frobenius() < 1e-9) continue;
        if (psd_check(x).positive) c.no_positive = false;
    }
    return c;
}

SystemPtr parse_system(const std::string& spec) {
    static const std::regex one(R"(^(E|U|F|Linf|Mat):([0-9]+)$)");
    static const std::regex two(R"(^W:([0-9]+),([0-9]+)$)");
    static const std::regex alg(R"(^Alg:([0-9]+(\+[0-9]+)*)$)");
    std::smatch m;
    if (std::regex_match(spec, m, alg)) {
        std::vector<int> dims;
        std::stringstream in(m[1].str());
        std::string part;
        while (std::getline(in, part, '+')) dims.push_back(std::stoi(part));
        return make_algebra(AmbientAlgebra(dims));
    }
    if (std::regex_match(spec, m, two)) return make_W(std::stoi(m[1]), std::stoi(m[2]));
    if (std::regex_match(spec, m, one)) {
        int n = std::stoi(m[2]);
        std::string kind = m[1];
        if (kind == "E") return make_E(n);
        if (kind == "U") return make_U(n);
        if (kind == "F") return make_F(n);
        if (kind == "Linf") return make_Linf(n);
        return make_Mat(n);
    }
    throw std::invalid_argument("unknown system name '" + spec + "' (expected W:n,k E:n U:n F:n Linf:m Mat:d Alg:d1+d2+...)");
}

std::string describe_ambient(const AmbientAlgebra& a) {
    bool scalar = true;
    for (int d : a.dims) scalar = scalar && d == 1;
    if (scalar) return "l^inf_" + std::to_string(a.blocks());
    std::ostringstream s;
    for (int b = 0; b < a.blocks(); ++b) s << (b ? " (+) " : "") << "M_" << a.dims[b];
    return s.str();
}

BlockMatrix PolyhedralEmbedding::embed(const BlockMatrix& w) const {
    if (w.ambient() != source->ambient()) throw std::invalid_argument("embed expects an element of l^inf_2n");
    BlockMatrix x(target->ambient());
    for (int i = 0; i < 2 * n; ++i) x.blocks[0](i, i) = w.blocks[i](0, 0);
    return x;
}

BlockMatrix PolyhedralEmbedding::expectation(const BlockMatrix& x) const {
    BlockMatrix y(target->ambient());
    y.blocks[0].diagonal() = x.blocks[0].diagonal();
    return y;
}

CMat PolyhedralEmbedding::expectation_level(const CMat& x, int p) const {
    int m = 2 * n;
    if (x.rows() != p * m) throw std::invalid_argument("expectation_level: size mismatch");
    CMat y = CMat::Zero(p * m, p * m);
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b)
            for (int i = 0; i < m; ++i) y(a * m + i, b * m + i) = x(a * m + i, b * m + i);
    return y;
}

PolyhedralEmbedding embed_W_in_F(int n) {
    PolyhedralEmbedding e;
    e.n = n;
    e.source = make_W(2, n);
    e.target = make_F(n);
    return e;
}

}  // namespace opsys
