// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catsg/errors.hpp"

/// Small dense-network toolkit: layers with explicit backward passes,
/// flat parameter views and first-order optimizers. Column-major batches:
/// one sample per column.
namespace catsg::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct ParamView {
  std::string name;
  S* value = nullptr;
  S* grad = nullptr;
  Eigen::Index size = 0;
};

template <typename S>
inline S sigmoid(S z) {
  return z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

/// Numerically stable binary cross-entropy on a logit.
template <typename S>
inline S bce_with_logit(S z, S target) {
  return std::max(z, S(0)) - z * target + std::log1p(std::exp(-std::abs(z)));
}

template <typename S>
class Dense {
 public:
  Mat<S> W, dW;
  Vec<S> b, db;

  Dense() = default;
  Dense(int in, int out) : W(Mat<S>::Zero(out, in)), dW(Mat<S>::Zero(out, in)),
                           b(Vec<S>::Zero(out)), db(Vec<S>::Zero(out)) {}

  int in() const { return static_cast<int>(W.cols()); }
  int out() const { return static_cast<int>(W.rows()); }

  void init(std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in() + out()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = static_cast<S>(u(rng));
    b.setZero();
  }

  Mat<S> forward(const Mat<S>& x) const { return (W * x).colwise() + b; }

  Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
    dW.noalias() += dy * x.transpose();
    db += dy.rowwise().sum();
    return W.transpose() * dy;
  }

  void zero_grad() {
    dW.setZero();
    db.setZero();
  }

  void collect(std::vector<ParamView<S>>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", W.data(), dW.data(), W.size()});
    out.push_back({prefix + ".b", b.data(), db.data(), b.size()});
  }
};

/// Perceptron with ReLU between layers and a linear (logit) output.
template <typename S>
class Mlp {
 public:
  struct Cache {
    std::vector<Mat<S>> inputs;  // input to each layer
    std::vector<Mat<S>> pre;     // pre-activation of each hidden layer
  };

  Mlp() = default;
  explicit Mlp(const std::vector<int>& sizes) {
    if (sizes.size() < 2) throw ConfigError("Mlp needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      if (sizes[i] <= 0 || sizes[i + 1] <= 0) throw ConfigError("Mlp layer sizes must be > 0");
      layers_.emplace_back(sizes[i], sizes[i + 1]);
    }
  }

  void init(std::mt19937_64& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }
  std::size_t depth() const { return layers_.size(); }
  std::vector<Dense<S>>& layers() { return layers_; }
  const std::vector<Dense<S>>& layers() const { return layers_; }

  Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
    if (x.rows() != in())
      throw DimensionMismatch("Mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(in()));
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    Mat<S> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      Mat<S> z = layers_[i].forward(h);
      if (i + 1 == layers_.size()) return z;
      if (cache) cache->pre.push_back(z);
      h = z.cwiseMax(S(0));
    }
    return h;
  }

  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Mat<S> backward(const Cache& cache, const Mat<S>& d_logits) {
    Mat<S> d = d_logits;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      d = layers_[i].backward(cache.inputs[i], d);
      if (i > 0) d = d.cwiseProduct((cache.pre[i - 1].array() > S(0)).template cast<S>().matrix());
    }
    return d;
  }

  void zero_grad() {
    for (auto& l : layers_) l.zero_grad();
  }

  void collect(std::vector<ParamView<S>>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(out, prefix + "." + std::to_string(i));
  }

 private:
  std::vector<Dense<S>> layers_;
};

struct OptimizerConfig {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kSgd;
  double lr = 0.05;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename S>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<ParamView<S>>& params, double grad_scale = 1.0) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(static_cast<std::size_t>(p.size), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.size), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& p = params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (Eigen::Index i = 0; i < p.size; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        double g = static_cast<double>(p.grad[i]) * grad_scale +
                   cfg_.weight_decay * static_cast<double>(p.value[i]);
        double update;
        if (cfg_.kind == OptimizerConfig::Kind::kSgd) {
          m[ui] = cfg_.momentum * m[ui] + g;
          update = cfg_.lr * m[ui];
        } else {
          m[ui] = cfg_.beta1 * m[ui] + (1.0 - cfg_.beta1) * g;
          v[ui] = cfg_.beta2 * v[ui] + (1.0 - cfg_.beta2) * g * g;
          update = cfg_.lr * (m[ui] / bc1) / (std::sqrt(v[ui] / bc2) + cfg_.eps);
        }
        p.value[i] = static_cast<S>(static_cast<double>(p.value[i]) - update);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

/// Copies parameter values between two models with identical layouts.
template <typename To, typename From>
inline void copy_params(const std::vector<ParamView<From>>& src,
                        const std::vector<ParamView<To>>& dst) {
  if (src.size() != dst.size()) throw DimensionMismatch("parameter layouts differ");
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (src[k].size != dst[k].size) throw DimensionMismatch("parameter " + src[k].name + " differs");
    for (Eigen::Index i = 0; i < src[k].size; ++i) dst[k].value[i] = static_cast<To>(src[k].value[i]);
  }
}

}  // namespace catsg::nn
