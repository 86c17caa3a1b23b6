#include "osr/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>

namespace osr {

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << " x ";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
  MatMap ma(a, trans_a ? static_cast<Eigen::Index>(k) : static_cast<Eigen::Index>(m),
            trans_a ? static_cast<Eigen::Index>(m) : static_cast<Eigen::Index>(k));
  MatMap mb(b, trans_b ? static_cast<Eigen::Index>(n) : static_cast<Eigen::Index>(k),
            trans_b ? static_cast<Eigen::Index>(k) : static_cast<Eigen::Index>(n));
  MutMap mc(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (trans_a && trans_b) {
    if (accumulate)
      mc.noalias() += ma.transpose() * mb.transpose();
    else
      mc.noalias() = ma.transpose() * mb.transpose();
  } else if (trans_a) {
    if (accumulate)
      mc.noalias() += ma.transpose() * mb;
    else
      mc.noalias() = ma.transpose() * mb;
  } else if (trans_b) {
    if (accumulate)
      mc.noalias() += ma * mb.transpose();
    else
      mc.noalias() = ma * mb.transpose();
  } else {
    if (accumulate)
      mc.noalias() += ma * mb;
    else
      mc.noalias() = ma * mb;
  }
}

}  // namespace osr
