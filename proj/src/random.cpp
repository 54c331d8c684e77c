#include "opsys/random.hpp"

#include <cmath>

namespace opsys {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    return u(rng);
}

CMat random_complex(Rng& rng, int rows, int cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            double re = g(rng);
            double im = g(rng);
            m(i, j) = cd(re, im) / std::sqrt(2.0);
        }
    return m;
}

CMat random_hermitian(Rng& rng, int d) {
    CMat g = random_complex(rng, d, d);
    return (g + g.adjoint()) / 2.0;
}

CMat random_psd(Rng& rng, int d, int rank) {
    if (rank < 0) rank = d;
    CMat r = random_complex(rng, d, rank);
    return r * r.adjoint();
}

CMat haar_unitary(Rng& rng, int d) {
    CMat g = random_complex(rng, d, d);
    Eigen::HouseholderQR<CMat> qr(g);
    CMat q = qr.householderQ();
    CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Fix the phases so the distribution is Haar
    for (int i = 0; i < d; ++i) {
        cd di = r(i, i);
        double a = std::abs(di);
        if (a > 0) q.col(i) *= di / a;
    }
    return q;
}

CVec random_unit_vector(Rng& rng, int d) {
    CVec v = random_complex(rng, d, 1).col(0);
    return v / v.norm();
}

}  // namespace opsys
