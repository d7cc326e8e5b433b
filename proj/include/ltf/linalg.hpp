// Small dense kernels shared by the panel estimators.
#ifndef LTF_LINALG_HPP
#define LTF_LINALG_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace ltf::linalg {

/// Subtracts the cluster mean from every row. `cluster[i]` is in [0, n_clusters).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
demean_by_cluster(const Eigen::MatrixBase<Derived>& x, std::span<const int> cluster, int n_clusters) {
    using Scalar = typename Derived::Scalar;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Mat sums = Mat::Zero(n_clusters, x.cols());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> counts = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n_clusters);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        sums.row(cluster[i]) += x.row(i);
        counts(cluster[i]) += Scalar(1);
    }
    Mat out = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) -= sums.row(cluster[i]) / counts(cluster[i]);
    return out;
}

/// Sum over clusters of (X_g' u_g)(X_g' u_g)'.
template <typename DerivedX, typename DerivedU>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic>
cluster_meat(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedU>& u,
             std::span<const int> cluster, int n_clusters) {
    using Scalar = typename DerivedX::Scalar;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Mat scores = Mat::Zero(n_clusters, x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) scores.row(cluster[i]) += u(i) * x.row(i);
    return scores.transpose() * scores;
}

/// Sum over rows of u_i^2 x_i x_i' (the HC0 meat).
template <typename DerivedX, typename DerivedU>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic>
hc_meat(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedU>& u) {
    return x.transpose() * u.cwiseAbs2().asDiagonal() * x;
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& sym) {
    if (sym.rows() == 0) return typename Derived::Scalar(0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(
        sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double normal_two_sided_p(double z) {
    if (std::isnan(z)) return 1.0;
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

/// Columns kept by a rank-revealing QR, in ascending order.
template <typename Derived>
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixBase<Derived>& x, double rel_tol = 1e-10) {
    std::vector<Eigen::Index> keep;
    if (x.cols() == 0 || x.rows() == 0) return keep;
    Eigen::ColPivHouseholderQR<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>> qr(x);
    qr.setThreshold(rel_tol);
    const auto rank = qr.rank();
    for (Eigen::Index k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()(k));
    std::sort(keep.begin(), keep.end());
    return keep;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
select_columns(const Eigen::MatrixBase<Derived>& x, const std::vector<Eigen::Index>& cols) {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(x.rows(),
                                                                               static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
    return out;
}

}  // namespace ltf::linalg

#endif  // LTF_LINALG_HPP
