// Local cost models: value / gradient / Hessian-times-matrix oracles for
// the quadratic and logistic-regression families, plus the diagonal
// quadratic benchmark construction.
#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "ipgd/linalg.hpp"

namespace ipgd {

/// Abstract local cost f^i. Oracle calls are pure; instances are immutable
/// after construction and safe to share across agent threads.
class CostModel {
 public:
  virtual ~CostModel() = default;

  virtual Eigen::Index dim() const = 0;
  /// Number of data points backing this cost; 0 when the cost has no
  /// per-point structure (mini-batching then unsupported).
  virtual Eigen::Index n_points() const { return 0; }

  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
  virtual Mat hess_mat(const Vec& x, const Mat& m) const = 0;

  virtual Vec hess_vec(const Vec& x, const Vec& v) const {
    return hess_mat(x, v);
  }

  /// Exact upper bound on lambda_max of the local Hessian, when cheap.
  virtual std::optional<double> lambda_max_bound() const { return {}; }

  // Restrictions to a subset of local points (un-rescaled partial sums).
  virtual double value_batch(const Vec&, const std::vector<Eigen::Index>&) const {
    throw ConfigError("cost has no per-point structure");
  }
  virtual Vec gradient_batch(const Vec&, const std::vector<Eigen::Index>&) const {
    throw ConfigError("cost has no per-point structure");
  }
  virtual Mat hess_mat_batch(const Vec&, const Mat&,
                             const std::vector<Eigen::Index>&) const {
    throw ConfigError("cost has no per-point structure");
  }

 protected:
  void check_dim(const Vec& x) const {
    if (x.size() != dim()) throw ConfigError("cost: dimension mismatch");
  }
};

/// f(x) = 1/2 x^T (A^T A) x - b^T x + c, with A the agent's rows of a data
/// matrix. The Hessian A^T A is cached; a purely diagonal Hessian (the
/// noisy-quadratic construction) takes an O(d^2) fast path in hess_mat.
class QuadraticCost final : public CostModel {
 public:
  explicit QuadraticCost(Mat factor, Vec b = Vec(), double c = 0.0)
      : factor_(std::move(factor)),
        b_(b.size() ? std::move(b) : Vec::Zero(factor_.cols())),
        c_(c),
        hessian_(factor_.transpose() * factor_) {
    if (b_.size() != factor_.cols())
      throw ConfigError("QuadraticCost: b dimension mismatch");
    Mat off = hessian_;
    off.diagonal().setZero();
    diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  }

  Eigen::Index dim() const override { return factor_.cols(); }
  Eigen::Index n_points() const override { return factor_.rows(); }

  const Mat& hessian() const { return hessian_; }
  const Mat& factor() const { return factor_; }

  double value(const Vec& x) const override {
    check_dim(x);
    if (diagonal_)
      return 0.5 * hessian_.diagonal().dot(x.cwiseProduct(x)) - b_.dot(x) + c_;
    return 0.5 * x.dot(hessian_ * x) - b_.dot(x) + c_;
  }

  Vec gradient(const Vec& x) const override {
    check_dim(x);
    if (diagonal_) return hessian_.diagonal().cwiseProduct(x) - b_;
    return hessian_ * x - b_;
  }

  Mat hess_mat(const Vec& x, const Mat& m) const override {
    check_dim(x);
    if (diagonal_) return hessian_.diagonal().asDiagonal() * m;
    return hessian_ * m;
  }

  Vec hess_vec(const Vec& x, const Vec& v) const override {
    check_dim(x);
    if (diagonal_) return hessian_.diagonal().cwiseProduct(v);
    return hessian_ * v;
  }

  std::optional<double> lambda_max_bound() const override {
    if (diagonal_) return hessian_.diagonal().maxCoeff();
    return {};
  }

  double value_batch(const Vec& x,
                     const std::vector<Eigen::Index>& idx) const override {
    check_dim(x);
    double v = 0.0;
    const double share = static_cast<double>(idx.size()) / factor_.rows();
    for (auto r : idx) {
      const double ax = factor_.row(r).dot(x);
      v += 0.5 * ax * ax;
    }
    return v - share * b_.dot(x) + share * c_;
  }

  Vec gradient_batch(const Vec& x,
                     const std::vector<Eigen::Index>& idx) const override {
    check_dim(x);
    Vec g = Vec::Zero(dim());
    for (auto r : idx) g += factor_.row(r).transpose() * factor_.row(r).dot(x);
    g -= (static_cast<double>(idx.size()) / factor_.rows()) * b_;
    return g;
  }

  Mat hess_mat_batch(const Vec& x, const Mat& m,
                     const std::vector<Eigen::Index>& idx) const override {
    check_dim(x);
    Mat out = Mat::Zero(dim(), m.cols());
    for (auto r : idx)
      out += factor_.row(r).transpose() * (factor_.row(r) * m);
    return out;
  }

 private:
  Mat factor_;
  Vec b_;
  double c_;
  Mat hessian_;
  bool diagonal_ = false;
};

/// f(x) = 1/2 x^T diag(h) x with only the diagonal stored; backs the
/// diagonal benchmark at sizes where a dense cached Hessian would not fit.
class DiagonalQuadraticCost final : public CostModel {
 public:
  explicit DiagonalQuadraticCost(Vec diag) : diag_(std::move(diag)) {
    if ((diag_.array() < 0).any())
      throw ConfigError("DiagonalQuadraticCost: negative curvature entry");
  }

  Eigen::Index dim() const override { return diag_.size(); }
  const Vec& diag() const { return diag_; }

  double value(const Vec& x) const override {
    check_dim(x);
    return 0.5 * diag_.dot(x.cwiseProduct(x));
  }

  Vec gradient(const Vec& x) const override {
    check_dim(x);
    return diag_.cwiseProduct(x);
  }

  Mat hess_mat(const Vec& x, const Mat& m) const override {
    check_dim(x);
    return diag_.asDiagonal() * m;
  }

  Vec hess_vec(const Vec& x, const Vec& v) const override {
    check_dim(x);
    return diag_.cwiseProduct(v);
  }

  std::optional<double> lambda_max_bound() const override {
    return diag_.maxCoeff();
  }

 private:
  Vec diag_;
};

/// Binary logistic regression with +-1 labels:
///   f(x) = scale * sum_k log(1 + exp(-b_k a_k^T x)).
/// `scale` defaults to 1 (plain negative log-likelihood); experiment
/// configurations may normalize the aggregate with it.
class LogisticCost final : public CostModel {
 public:
  LogisticCost(Mat features, Vec labels, double scale = 1.0)
      : a_(std::move(features)), b_(std::move(labels)), scale_(scale) {
    if (a_.rows() != b_.size())
      throw ConfigError("LogisticCost: label count mismatch");
    for (Eigen::Index k = 0; k < b_.size(); ++k)
      if (b_[k] != 1.0 && b_[k] != -1.0)
        throw ConfigError("LogisticCost: labels must be +-1");
  }

  Eigen::Index dim() const override { return a_.cols(); }
  Eigen::Index n_points() const override { return a_.rows(); }
  double scale() const { return scale_; }
  const Mat& features() const { return a_; }
  const Vec& labels() const { return b_; }

  double value(const Vec& x) const override {
    check_dim(x);
    const Vec z = a_ * x;
    double v = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) v += softplus(-b_[k] * z[k]);
    return scale_ * v;
  }

  Vec gradient(const Vec& x) const override {
    check_dim(x);
    const Vec z = a_ * x;
    Vec w(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k)
      w[k] = -b_[k] * sigmoid(-b_[k] * z[k]);
    return scale_ * (a_.transpose() * w);
  }

  Mat hess_mat(const Vec& x, const Mat& m) const override {
    check_dim(x);
    const Vec z = a_ * x;
    Vec w(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      const double s = sigmoid(z[k]);
      w[k] = s * (1.0 - s);  // label-independent curvature
    }
    return scale_ * (a_.transpose() * (w.asDiagonal() * (a_ * m)));
  }

  double value_batch(const Vec& x,
                     const std::vector<Eigen::Index>& idx) const override {
    check_dim(x);
    double v = 0.0;
    for (auto k : idx) v += softplus(-b_[k] * a_.row(k).dot(x));
    return scale_ * v;
  }

  Vec gradient_batch(const Vec& x,
                     const std::vector<Eigen::Index>& idx) const override {
    check_dim(x);
    Vec g = Vec::Zero(dim());
    for (auto k : idx)
      g -= b_[k] * sigmoid(-b_[k] * a_.row(k).dot(x)) * a_.row(k).transpose();
    return scale_ * g;
  }

  Mat hess_mat_batch(const Vec& x, const Mat& m,
                     const std::vector<Eigen::Index>& idx) const override {
    check_dim(x);
    Mat out = Mat::Zero(dim(), m.cols());
    for (auto k : idx) {
      const double s = sigmoid(a_.row(k).dot(x));
      out += (s * (1.0 - s)) * a_.row(k).transpose() * (a_.row(k) * m);
    }
    return scale_ * out;
  }

  static double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }

  static double softplus(double t) {
    if (t > 0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
  }

 private:
  Mat a_;
  Vec b_;
  double scale_;
};

/// Diagonal quadratic benchmark: aggregate Hessian diag(1, 1/2, ..., 1/d),
/// rows of the square-root factor split contiguously among m agents.
inline std::vector<std::shared_ptr<CostModel>> nqm_build(Eigen::Index d,
                                                         int m) {
  if (m <= 0 || d % m != 0)
    throw ConfigError("nqm_build: m must divide d");
  const Eigen::Index rows = d / m;
  std::vector<std::shared_ptr<CostModel>> agents;
  agents.reserve(m);
  for (int i = 0; i < m; ++i) {
    Vec diag = Vec::Zero(d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index j = i * rows + r;
      diag[j] = 1.0 / static_cast<double>(j + 1);
    }
    agents.push_back(std::make_shared<DiagonalQuadraticCost>(std::move(diag)));
  }
  return agents;
}

inline Vec nqm_hessian_diagonal(Eigen::Index d) {
  Vec h(d);
  for (Eigen::Index j = 0; j < d; ++j) h[j] = 1.0 / static_cast<double>(j + 1);
  return h;
}

/// Contiguous row split of a quadratic's factor among m agents; the agent
/// Hessians sum exactly to the unpartitioned one.
inline std::vector<std::shared_ptr<CostModel>> split_quadratic(
    const Mat& factor, int m, const Vec& b = Vec(), double c = 0.0) {
  if (m <= 0 || factor.rows() % m != 0)
    throw ConfigError("split_quadratic: m must divide the row count");
  const Eigen::Index rows = factor.rows() / m;
  std::vector<std::shared_ptr<CostModel>> agents;
  Vec bm = b.size() ? Vec(b / m) : Vec();
  for (int i = 0; i < m; ++i)
    agents.push_back(std::make_shared<QuadraticCost>(
        Mat(factor.middleRows(i * rows, rows)), bm, c / m));
  return agents;
}

}  // namespace ipgd
