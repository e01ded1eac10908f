// Per-agent round computation: local gradient and preconditioner
// residuals, with optional mini-batch subsampling.
#pragma once

#include <algorithm>
#include <memory>
#include <utility>
#include <vector>

#include "ipgd/costs.hpp"
#include "ipgd/linalg.hpp"

namespace ipgd {

constexpr Eigen::Index kFullBatch = 0;

/// One agent's round output: local gradient g^i and residual matrix whose
/// column j is R^i_j. Only d + d^2 scalars leave the agent per round.
struct AgentReply {
  Vec gradient;
  Mat residuals;
};

/// Whether mini-batch rounds recompute residuals on the sampled batch or
/// on the full local data (the gradient is always batched).
enum class ResidualMode { kSameBatch, kFullBatch };

class AgentState {
 public:
  AgentState(int id, std::shared_ptr<const CostModel> cost, SeededRng rng,
             int m_total, double beta, Eigen::Index batch_size = kFullBatch,
             ResidualMode residual_mode = ResidualMode::kSameBatch)
      : id_(id),
        cost_(std::move(cost)),
        rng_(std::move(rng)),
        m_total_(m_total),
        beta_(beta),
        batch_size_(batch_size),
        residual_mode_(residual_mode) {
    if (beta_ < 0) throw ConfigError("agent: beta must be >= 0");
    if (m_total_ <= 0) throw ConfigError("agent: m_total must be positive");
    if (batch_size_ != kFullBatch && batch_size_ > cost_->n_points())
      throw ConfigError("agent: batch_size exceeds local point count");
  }

  int id() const { return id_; }
  const CostModel& cost() const { return *cost_; }
  double beta() const { return beta_; }
  int m_total() const { return m_total_; }

  /// Full local gradient, or a batch gradient rescaled by n_i/batch so its
  /// expectation matches the full one.
  Vec compute_gradient(const Vec& x) {
    if (batch_size_ == kFullBatch) return cost_->gradient(x);
    const auto idx = sample_batch();
    return rescale() * cost_->gradient_batch(x, idx);
  }

  /// Column j: (hess f^i(x) + (beta/m) I) k_j - (1/m) e_j.
  Mat compute_residuals(const Vec& x, const Mat& k) const {
    Mat r = cost_->hess_mat(x, k);
    r += (beta_ / m_total_) * k;
    r.diagonal().array() -= 1.0 / m_total_;
    return r;
  }

  /// Steps 2-3 of a round: gradient and residuals against the broadcast
  /// (x, K). Mini-batch mode uses one shared sample for both unless
  /// configured for full-batch residuals.
  AgentReply run_round(const Vec& x, const Mat& k) {
    AgentReply reply;
    if (batch_size_ == kFullBatch) {
      reply.gradient = cost_->gradient(x);
      reply.residuals = compute_residuals(x, k);
      return reply;
    }
    const auto idx = sample_batch();
    const double s = rescale();
    reply.gradient = s * cost_->gradient_batch(x, idx);
    if (residual_mode_ == ResidualMode::kSameBatch) {
      reply.residuals = s * cost_->hess_mat_batch(x, k, idx);
      reply.residuals += (beta_ / m_total_) * k;
      reply.residuals.diagonal().array() -= 1.0 / m_total_;
    } else {
      reply.residuals = compute_residuals(x, k);
    }
    return reply;
  }

  /// Aggregate cost evaluation round (line searches, trace metrics).
  double local_value(const Vec& x) const { return cost_->value(x); }

 private:
  // Without replacement, fresh each round (partial Fisher-Yates).
  std::vector<Eigen::Index> sample_batch() {
    const Eigen::Index n = cost_->n_points();
    std::vector<Eigen::Index> pool(n);
    for (Eigen::Index i = 0; i < n; ++i) pool[i] = i;
    std::vector<Eigen::Index> out(batch_size_);
    for (Eigen::Index i = 0; i < batch_size_; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng_.below(n - i));
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

  double rescale() const {
    return static_cast<double>(cost_->n_points()) / batch_size_;
  }

  int id_;
  std::shared_ptr<const CostModel> cost_;
  SeededRng rng_;
  int m_total_;
  double beta_;
  Eigen::Index batch_size_;
  ResidualMode residual_mode_;
};

/// Fan-out one round to all agents and fan-in replies summed in agent-id
/// order (summation order is part of the reproducibility contract).
inline AgentReply aggregate_round(std::vector<AgentState>& agents,
                                  const Vec& x, const Mat& k) {
  AgentReply sum;
  sum.gradient = Vec::Zero(x.size());
  sum.residuals = Mat::Zero(k.rows(), k.cols());
  for (auto& a : agents) {
    AgentReply r = a.run_round(x, k);
    sum.gradient += r.gradient;
    sum.residuals += r.residuals;
  }
  return sum;
}

inline Vec aggregate_gradient(std::vector<AgentState>& agents, const Vec& x) {
  Vec g = Vec::Zero(x.size());
  for (auto& a : agents) g += a.compute_gradient(x);
  return g;
}

inline double aggregate_value(const std::vector<AgentState>& agents,
                              const Vec& x) {
  double v = 0.0;
  for (const auto& a : agents) v += a.local_value(x);
  return v;
}

}  // namespace ipgd
