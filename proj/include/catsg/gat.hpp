// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catsg/dynamicgraph.hpp"
#include "catsg/errors.hpp"
#include "catsg/hash.hpp"
#include "catsg/nn.hpp"
#include "catsg/ontology.hpp"

namespace catsg {

/// Message-passing view of a window: node features plus directed message
/// edges src -> dst sorted by destination. Relation and temporal edges are
/// used in both directions; every node gets a self loop.
struct GraphInput {
  Eigen::MatrixXd x;
  std::vector<int> src, dst, type;
};

inline int temporal_edge_type(const Ontology& onto) { return onto.num_predicates(); }
inline int self_edge_type(const Ontology& onto) { return onto.num_predicates() + 1; }
inline int num_edge_types(const Ontology& onto) { return onto.num_predicates() + 2; }

inline GraphInput make_graph_input(const DynamicSceneGraph& g, bool spatial,
                                   const Ontology& onto = Ontology::default_instance()) {
  GraphInput in;
  in.x = encode_features(g, spatial, onto.num_classes());
  std::vector<std::tuple<int, int, int>> e;  // (dst, src, type)
  for (const auto& r : g.relation_edges) {
    e.emplace_back(r.dst, r.src, r.type);
    e.emplace_back(r.src, r.dst, r.type);
  }
  const int tt = temporal_edge_type(onto);
  for (const auto& t : g.temporal_edges) {
    e.emplace_back(t.dst, t.src, tt);
    e.emplace_back(t.src, t.dst, tt);
  }
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) e.emplace_back(i, i, self_edge_type(onto));
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  for (const auto& [d, s, t] : e) {
    in.dst.push_back(d);
    in.src.push_back(s);
    in.type.push_back(t);
  }
  return in;
}

struct GatConfig {
  int in_dim = kNumClasses + 3;
  int hidden = 64;
  int heads = 4;
  int num_classes = kNumPhases;
  int edge_types = kNumSemanticPredicates + 3;
  double negative_slope = 0.2;

  void validate() const {
    if (in_dim <= 0 || hidden <= 0 || heads <= 0 || num_classes <= 0 || edge_types <= 0)
      throw ConfigError("graph classifier sizes must be positive");
    if (hidden % heads != 0) throw ConfigError("hidden width must be divisible by head count");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GatConfig, in_dim, hidden, heads, num_classes,
                                                edge_types, negative_slope)

/// Attention layer with dynamic (post-nonlinearity) scoring:
///   score(j->i) = a_h . leaky_relu(Wl h_j + Wr h_i + E[type])
///   out_i       = sum_j softmax_j(score) * Wl h_j + bias
/// Heads are contiguous slices of the hidden width and are concatenated.
/// Node states are columns (hidden x nodes).
template <typename S>
class GatLayer {
 public:
  nn::Mat<S> Wl, Wr, E, dWl, dWr, dE;  // Wl, Wr: H x F; E: H x T
  nn::Vec<S> a, bias, da, dbias;

  struct Cache {
    nn::Mat<S> x, xl, xr, g, alpha;  // g: H x edges, alpha: heads x edges
  };

  GatLayer() = default;
  GatLayer(int in, int hidden, int heads, int edge_types, double slope)
      : Wl(nn::Mat<S>::Zero(hidden, in)), Wr(nn::Mat<S>::Zero(hidden, in)),
        E(nn::Mat<S>::Zero(hidden, edge_types)), dWl(Wl), dWr(Wr), dE(E),
        a(nn::Vec<S>::Zero(hidden)), bias(nn::Vec<S>::Zero(hidden)), da(a), dbias(bias),
        heads_(heads), slope_(static_cast<S>(slope)) {}

  int heads() const { return heads_; }
  int head_dim() const { return static_cast<int>(Wl.rows()) / heads_; }

  void init(std::mt19937_64& rng) {
    auto fill = [&](nn::Mat<S>& m, double bound) {
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
    };
    const double bw = std::sqrt(6.0 / static_cast<double>(Wl.rows() + Wl.cols()));
    fill(Wl, bw);
    fill(Wr, bw);
    fill(E, 0.1);
    const double ba = std::sqrt(6.0 / (head_dim() + 1.0));
    std::uniform_real_distribution<double> u(-ba, ba);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = static_cast<S>(u(rng));
    bias.setZero();
  }

  nn::Mat<S> forward(const nn::Mat<S>& x, const GraphInput& gi, Cache& c) const {
    const Eigen::Index n = x.cols(), m = static_cast<Eigen::Index>(gi.src.size());
    const int hd = head_dim();
    c.x = x;
    c.xl.noalias() = Wl * x;
    c.xr.noalias() = Wr * x;
    c.g.resize(Wl.rows(), m);
    c.alpha.resize(heads_, m);
    for (Eigen::Index e = 0; e < m; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      c.g.col(e) = c.xl.col(gi.src[ue]) + c.xr.col(gi.dst[ue]) + E.col(gi.type[ue]);
      const S* g = c.g.col(e).data();
      for (int h = 0; h < heads_; ++h) {
        S acc = 0;
        for (int k = h * hd; k < (h + 1) * hd; ++k) acc += a[k] * (g[k] > 0 ? g[k] : slope_ * g[k]);
        c.alpha(h, e) = acc;  // raw score until normalized below
      }
    }
    nn::Mat<S> out = bias.replicate(1, n);
    for (Eigen::Index lo = 0; lo < m;) {
      Eigen::Index hi = lo;
      const int d = gi.dst[static_cast<std::size_t>(lo)];
      while (hi < m && gi.dst[static_cast<std::size_t>(hi)] == d) ++hi;
      for (int h = 0; h < heads_; ++h) {
        S mx = c.alpha(h, lo);
        for (Eigen::Index e = lo; e < hi; ++e) mx = std::max(mx, c.alpha(h, e));
        S z = 0;
        for (Eigen::Index e = lo; e < hi; ++e) z += (c.alpha(h, e) = std::exp(c.alpha(h, e) - mx));
        for (Eigen::Index e = lo; e < hi; ++e) {
          c.alpha(h, e) /= z;
          out.col(d).segment(h * hd, hd) +=
              c.alpha(h, e) * c.xl.col(gi.src[static_cast<std::size_t>(e)]).segment(h * hd, hd);
        }
      }
      lo = hi;
    }
    return out;
  }

  /// Accumulates parameter gradients and returns d loss / d x.
  nn::Mat<S> backward(const Cache& c, const GraphInput& gi, const nn::Mat<S>& dout) {
    const Eigen::Index m = static_cast<Eigen::Index>(gi.src.size());
    const int hd = head_dim();
    dbias += dout.rowwise().sum();
    nn::Mat<S> dxl = nn::Mat<S>::Zero(c.xl.rows(), c.xl.cols());
    nn::Mat<S> dxr = nn::Mat<S>::Zero(c.xr.rows(), c.xr.cols());
    nn::Mat<S> dalpha(heads_, m);
    for (Eigen::Index e = 0; e < m; ++e) {
      const auto s = gi.src[static_cast<std::size_t>(e)], d = gi.dst[static_cast<std::size_t>(e)];
      for (int h = 0; h < heads_; ++h) {
        dalpha(h, e) = dout.col(d).segment(h * hd, hd).dot(c.xl.col(s).segment(h * hd, hd));
        dxl.col(s).segment(h * hd, hd) += c.alpha(h, e) * dout.col(d).segment(h * hd, hd);
      }
    }
    for (Eigen::Index lo = 0; lo < m;) {
      Eigen::Index hi = lo;
      const int d = gi.dst[static_cast<std::size_t>(lo)];
      while (hi < m && gi.dst[static_cast<std::size_t>(hi)] == d) ++hi;
      for (int h = 0; h < heads_; ++h) {
        S dot = 0;
        for (Eigen::Index e = lo; e < hi; ++e) dot += c.alpha(h, e) * dalpha(h, e);
        for (Eigen::Index e = lo; e < hi; ++e) {
          const S ds = c.alpha(h, e) * (dalpha(h, e) - dot);
          const auto s = gi.src[static_cast<std::size_t>(e)];
          const int t = gi.type[static_cast<std::size_t>(e)];
          const S* g = c.g.col(e).data();
          S* pxl = dxl.col(s).data();
          S* pxr = dxr.col(d).data();
          S* pe = dE.col(t).data();
          for (int k = h * hd; k < (h + 1) * hd; ++k) {
            const S v = g[k];
            da[k] += ds * (v > 0 ? v : slope_ * v);
            const S dg = ds * a[k] * (v > 0 ? S(1) : slope_);
            pxl[k] += dg;
            pxr[k] += dg;
            pe[k] += dg;
          }
        }
      }
      lo = hi;
    }
    dWl.noalias() += dxl * c.x.transpose();
    dWr.noalias() += dxr * c.x.transpose();
    nn::Mat<S> dx = Wl.transpose() * dxl;
    dx.noalias() += Wr.transpose() * dxr;
    return dx;
  }

  void zero_grad() {
    dWl.setZero();
    dWr.setZero();
    dE.setZero();
    da.setZero();
    dbias.setZero();
  }

  void collect(std::vector<nn::ParamView<S>>& out, const std::string& p) {
    out.push_back({p + ".Wl", Wl.data(), dWl.data(), Wl.size()});
    out.push_back({p + ".Wr", Wr.data(), dWr.data(), Wr.size()});
    out.push_back({p + ".E", E.data(), dE.data(), E.size()});
    out.push_back({p + ".a", a.data(), da.data(), a.size()});
    out.push_back({p + ".bias", bias.data(), dbias.data(), bias.size()});
  }

 private:
  int heads_ = 1;
  S slope_ = S(0.2);
};

/// Three attention layers (ELU after the first two), mean-pool readout
/// over all nodes, linear head, softmax.
template <typename S>
class GraphClassifier {
 public:
  static constexpr int kLayers = 3;

  struct Cache {
    std::array<typename GatLayer<S>::Cache, kLayers> layer;
    std::array<nn::Mat<S>, kLayers> pre;
    nn::Mat<S> readout;
  };

  explicit GraphClassifier(GatConfig cfg = {}) : cfg_(cfg) {
    cfg.validate();
    int in = cfg.in_dim;
    for (auto& l : layers_) {
      l = GatLayer<S>(in, cfg.hidden, cfg.heads, cfg.edge_types, cfg.negative_slope);
      in = cfg.hidden;
    }
    head_ = nn::Dense<S>(cfg.hidden, cfg.num_classes);
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "gat-init"));
    for (auto& l : layers_) l.init(rng);
    head_.init(rng);
  }

  const GatConfig& config() const { return cfg_; }
  std::array<GatLayer<S>, kLayers>& layers() { return layers_; }
  nn::Dense<S>& head() { return head_; }

  nn::Vec<S> logits(const GraphInput& gi, Cache* cache = nullptr) const {
    if (gi.x.cols() != cfg_.in_dim)
      throw DimensionMismatch("node features have width " + std::to_string(gi.x.cols()) +
                              ", classifier expects " + std::to_string(cfg_.in_dim));
    if (gi.x.rows() == 0) throw DimensionMismatch("graph has no nodes");
    Cache local;
    Cache& c = cache ? *cache : local;
    nn::Mat<S> h = gi.x.transpose().template cast<S>();
    for (int l = 0; l < kLayers; ++l) {
      c.pre[static_cast<std::size_t>(l)] =
          layers_[static_cast<std::size_t>(l)].forward(h, gi, c.layer[static_cast<std::size_t>(l)]);
      const auto& z = c.pre[static_cast<std::size_t>(l)];
      h = l + 1 < kLayers ? nn::Mat<S>(z.unaryExpr([](S v) { return v > 0 ? v : std::expm1(v); }))
                          : z;
    }
    c.readout = h.rowwise().mean();
    return head_.forward(c.readout);
  }

  nn::Vec<S> classify(const GraphInput& gi) const { return softmax(logits(gi)); }

  static nn::Vec<S> softmax(const nn::Vec<S>& z) {
    nn::Vec<S> p = (z.array() - z.maxCoeff()).exp().matrix();
    return p / p.sum();
  }

  /// Cross-entropy of one graph; accumulates gradients when `backward`.
  /// `argmax`, when given, receives the predicted class.
  double loss(const GraphInput& gi, int label, bool backward = true, int* argmax = nullptr) {
    if (label < 0 || label >= cfg_.num_classes) throw ConfigError("label out of range");
    Cache c;
    const nn::Vec<S> z = logits(gi, &c);
    const nn::Vec<S> p = softmax(z);
    const S lse = z.maxCoeff() + std::log((z.array() - z.maxCoeff()).exp().sum());
    const double out = static_cast<double>(lse - z[label]);
    if (argmax) {
      Eigen::Index k;
      z.maxCoeff(&k);
      *argmax = static_cast<int>(k);
    }
    if (!backward) return out;
    nn::Mat<S> dz = p;
    dz(label, 0) -= S(1);
    const nn::Mat<S> dr = head_.backward(c.readout, dz);
    const auto n = static_cast<S>(gi.x.rows());
    nn::Mat<S> dh = dr.replicate(1, gi.x.rows()) / n;
    for (int l = kLayers - 1; l >= 0; --l) {
      const auto& z_l = c.pre[static_cast<std::size_t>(l)];
      if (l + 1 < kLayers)
        dh = dh.cwiseProduct(nn::Mat<S>(z_l.unaryExpr([](S v) { return v > 0 ? S(1) : std::exp(v); })));
      dh = layers_[static_cast<std::size_t>(l)].backward(c.layer[static_cast<std::size_t>(l)], gi, dh);
    }
    return out;
  }

  std::vector<nn::ParamView<S>> params() {
    std::vector<nn::ParamView<S>> out;
    for (int l = 0; l < kLayers; ++l)
      layers_[static_cast<std::size_t>(l)].collect(out, "gat" + std::to_string(l));
    head_.collect(out, "head");
    return out;
  }

  void zero_grad() {
    for (auto& l : layers_) l.zero_grad();
    head_.zero_grad();
  }

 private:
  GatConfig cfg_;
  std::array<GatLayer<S>, kLayers> layers_;
  nn::Dense<S> head_;
};

}  // namespace catsg
