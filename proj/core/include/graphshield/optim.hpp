#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace gshield {

// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
template <class Mat>
class Adam {
 public:
  explicit Adam(const Mat& like)
      : m_(Mat::Zero(like.rows(), like.cols())), v_(Mat::Zero(like.rows(), like.cols())) {}

  void step(Mat& param, const Mat& grad, double lr) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    param.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  Mat m_, v_;
  int t_ = 0;
};

class AdamScalar {
 public:
  void step(double& param, double grad, double lr) {
    ++t_;
    m_ = 0.9 * m_ + 0.1 * grad;
    v_ = 0.999 * v_ + 0.001 * grad * grad;
    const double bc1 = 1.0 - std::pow(0.9, t_);
    const double bc2 = 1.0 - std::pow(0.999, t_);
    param -= lr * (m_ / bc1) / (std::sqrt(v_ / bc2) + 1e-8);
  }

 private:
  double m_ = 0.0, v_ = 0.0;
  int t_ = 0;
};

}  // namespace gshield
