#include "gymgrid/nn/init.hpp"

#include <Eigen/QR>

namespace gymgrid::nn {

template <typename T>
void orthogonal_init(Tensor<T>& weight, double gain, Rng& rng) {
  const Eigen::Index rows = weight.shape().n;
  const auto cols = static_cast<Eigen::Index>(weight.shape().sample_size());
  if (rows == 0 || cols == 0) return;
  const bool tall = rows > cols;
  const Eigen::Index big = tall ? rows : cols;
  const Eigen::Index small = tall ? cols : rows;

  Eigen::MatrixXd a(big, small);
  for (Eigen::Index j = 0; j < small; ++j)
    for (Eigen::Index i = 0; i < big; ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
  // Sign fix makes the decomposition unique, so the draw is uniform.
  for (Eigen::Index j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;

  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = tall ? q(i, j) : q(j, i);
      weight[static_cast<std::size_t>(i * cols + j)] = static_cast<T>(gain * v);
    }
}

template void orthogonal_init(Tensor<float>&, double, Rng&);
template void orthogonal_init(Tensor<double>&, double, Rng&);

}  // namespace gymgrid::nn
