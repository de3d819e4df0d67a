// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "catsg/errors.hpp"
#include "catsg/ontology.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

struct ClassCounts {
  std::string name;
  std::size_t tp = 0, fp = 0, fn = 0;

  std::size_t support() const { return tp + fn; }
  /// Undefined when the class never occurs in either prediction or truth.
  std::optional<double> f1() const {
    const std::size_t den = 2 * tp + fp + fn;
    if (den == 0) return std::nullopt;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(den);
  }
};

struct EvalReport {
  std::vector<ClassCounts> classes;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> accuracy;
  std::size_t units = 0;

  std::optional<double> f1(const std::string& name) const {
    for (const auto& c : classes)
      if (c.name == name) return c.f1();
    throw UnknownClass("no class `" + name + "` in report");
  }

  std::vector<std::string> excluded() const {
    std::vector<std::string> out;
    for (const auto& c : classes)
      if (!c.f1()) out.push_back(c.name);
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json per_class, support;
    for (const auto& c : classes) {
      const auto f = c.f1();
      per_class[c.name] = f ? nlohmann::ordered_json(*f) : nlohmann::ordered_json(nullptr);
      support[c.name] = c.support();
    }
    j["per_class_f1"] = per_class;
    j["support"] = support;
    j["micro_f1"] = micro_f1;
    j["macro_f1"] = macro_f1;
    if (accuracy) j["accuracy"] = *accuracy;
    j["units"] = units;
    j["excluded_from_macro"] = excluded();
    return j;
  }

  std::string to_table() const {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-32s %8s %8s\n", "class", "F1", "support");
    out += buf;
    for (const auto& c : classes) {
      const auto f = c.f1();
      if (f)
        std::snprintf(buf, sizeof(buf), "%-32s %8.2f %8zu\n", c.name.c_str(), 100.0 * *f,
                      c.support());
      else
        std::snprintf(buf, sizeof(buf), "%-32s %8s %8zu\n", c.name.c_str(), "n/a", c.support());
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-32s %8.2f\n%-32s %8.2f\n", "micro F1", 100.0 * micro_f1,
                  "macro F1", 100.0 * macro_f1);
    out += buf;
    if (accuracy) {
      std::snprintf(buf, sizeof(buf), "%-32s %8.2f\n", "accuracy", 100.0 * *accuracy);
      out += buf;
    }
    return out;
  }
};

/// Accumulates per-class set-membership counts over evaluation units.
/// Labels are bit indices into the class list given at construction.
class ConfusionCounter {
 public:
  explicit ConfusionCounter(std::vector<std::string> names) {
    for (auto& n : names) counts_.push_back({std::move(n)});
  }

  void add(std::uint32_t pred, std::uint32_t gt) {
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      const bool p = (pred >> c) & 1U;
      const bool g = (gt >> c) & 1U;
      counts_[c].tp += p && g;
      counts_[c].fp += p && !g;
      counts_[c].fn += g && !p;
    }
    ++units_;
  }

  void merge(const ConfusionCounter& other) {
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      counts_[c].tp += other.counts_[c].tp;
      counts_[c].fp += other.counts_[c].fp;
      counts_[c].fn += other.counts_[c].fn;
    }
    units_ += other.units_;
  }

  EvalReport report() const {
    EvalReport r;
    r.classes = counts_;
    r.units = units_;
    std::size_t tp = 0, fp = 0, fn = 0;
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& c : counts_) {
      tp += c.tp;
      fp += c.fp;
      fn += c.fn;
      if (auto f = c.f1()) {
        sum += *f;
        ++defined;
      }
    }
    const std::size_t den = 2 * tp + fp + fn;
    r.micro_f1 = den ? 2.0 * static_cast<double>(tp) / static_cast<double>(den) : 0.0;
    r.macro_f1 = defined ? sum / static_cast<double>(defined) : 0.0;
    return r;
  }

 private:
  std::vector<ClassCounts> counts_;
  std::size_t units_ = 0;
};

/// Which candidate pairs are scored and how their label sets are formed.
struct RelationEvalPolicy {
  enum class Universe {
    /// close_to scored once per unordered entity pair; semantic predicates
    /// scored per ordered pair with a tool subject. Each unit with an empty
    /// label set carries the `none` pseudo-label.
    kSeparateUnits,
    /// One unit per ordered pair; label set = semantic ∪ close_to.
    kOrderedPairs,
  };
  Universe universe = Universe::kSeparateUnits;
};

/// Report column order: close_to, the semantic predicates, then `none`.
inline std::vector<std::string> relation_report_names(const Ontology& onto) {
  std::vector<std::string> names;
  names.push_back(onto.predicates()[static_cast<std::size_t>(onto.close_to_id())].name);
  for (int k = 0; k < kNumSemanticPredicates; ++k)
    names.push_back(onto.predicates()[static_cast<std::size_t>(k)].name);
  names.push_back("none");
  return names;
}

namespace detail {

// Bit layout used by evaluate_relations: bit 0 close_to, 1..7 semantic, 8 none.
inline constexpr std::uint32_t kCloseBit = 1U << 0;
inline constexpr std::uint32_t kNoneBit = 1U << 8;

struct FrameRelationIndex {
  // keyed by (subject class, object class)
  std::map<std::pair<int, int>, std::uint32_t> semantic;
  std::set<std::pair<int, int>> close;  // unordered, stored (min, max)

  FrameRelationIndex(const FrameSceneGraph& f, const Ontology& onto) {
    for (const auto& r : f.relations) {
      const Entity* s = f.find(r.sub);
      const Entity* o = f.find(r.obj);
      if (!s || !o) throw SchemaError("relation references missing entity");
      if (r.pred == onto.close_to_id()) {
        close.emplace(std::min(s->cls, o->cls), std::max(s->cls, o->cls));
      } else if (onto.is_semantic(r.pred)) {
        semantic[{s->cls, o->cls}] |= 1U << (r.pred + 1);
      }
    }
  }

  std::uint32_t sem(int s, int o) const {
    auto it = semantic.find({s, o});
    return it == semantic.end() ? 0U : it->second;
  }
  bool is_close(int a, int b) const { return close.count({std::min(a, b), std::max(a, b)}) > 0; }
};

inline std::uint32_t or_none(std::uint32_t bits) { return bits ? bits : kNoneBit; }

}  // namespace detail

inline void accumulate_relations(ConfusionCounter& counter, const FrameSceneGraph& pred,
                                 const FrameSceneGraph& gt, const Ontology& onto,
                                 const RelationEvalPolicy& policy) {
  if (pred.video_id != gt.video_id || pred.frame_idx != gt.frame_idx)
    throw AlignmentError("prediction " + pred.video_id + "#" + std::to_string(pred.frame_idx) +
                         " aligned with ground truth " + gt.video_id + "#" +
                         std::to_string(gt.frame_idx));
  std::set<int> present;
  for (const auto& e : gt.entities) present.insert(e.cls);
  for (const auto& e : pred.entities) present.insert(e.cls);
  const std::vector<int> cls(present.begin(), present.end());
  const detail::FrameRelationIndex gi(gt, onto), pi(pred, onto);

  using U = RelationEvalPolicy::Universe;
  if (policy.universe == U::kSeparateUnits) {
    for (std::size_t a = 0; a < cls.size(); ++a)
      for (std::size_t b = a + 1; b < cls.size(); ++b)
        counter.add(pi.is_close(cls[a], cls[b]) ? detail::kCloseBit : detail::kNoneBit,
                    gi.is_close(cls[a], cls[b]) ? detail::kCloseBit : detail::kNoneBit);
    for (int s : cls) {
      if (!onto.is_tool(s)) continue;
      for (int o : cls) {
        if (o == s) continue;
        counter.add(detail::or_none(pi.sem(s, o)), detail::or_none(gi.sem(s, o)));
      }
    }
  } else {
    for (int s : cls)
      for (int o : cls) {
        if (o == s) continue;
        std::uint32_t pb = pi.is_close(s, o) ? detail::kCloseBit : 0U;
        std::uint32_t gb = gi.is_close(s, o) ? detail::kCloseBit : 0U;
        if (onto.is_tool(s)) {
          pb |= pi.sem(s, o);
          gb |= gi.sem(s, o);
        }
        counter.add(detail::or_none(pb), detail::or_none(gb));
      }
  }
}

/// Relation F1 table with the `none` pseudo-class. Entities are matched by
/// class, which the one-instance-per-class schema makes unambiguous.
inline EvalReport evaluate_relations(const std::vector<FrameSceneGraph>& pred,
                                     const std::vector<FrameSceneGraph>& gt,
                                     const Ontology& onto = Ontology::default_instance(),
                                     const RelationEvalPolicy& policy = {}) {
  if (pred.size() != gt.size())
    throw AlignmentError("prediction and ground truth frame counts differ");
  ConfusionCounter counter(relation_report_names(onto));
  for (std::size_t i = 0; i < pred.size(); ++i)
    accumulate_relations(counter, pred[i], gt[i], onto, policy);
  return counter.report();
}

inline EvalReport evaluate_classification(const std::vector<int>& preds,
                                          const std::vector<int>& gts, int num_classes,
                                          std::vector<std::string> names = {}) {
  if (preds.size() != gts.size())
    throw LengthMismatch("evaluate_classification: " + std::to_string(preds.size()) +
                         " predictions vs " + std::to_string(gts.size()) + " labels");
  if (num_classes <= 0 || num_classes > 32)
    throw ConfigError("evaluate_classification supports 1..32 classes");
  if (names.empty())
    for (int k = 0; k < num_classes; ++k) names.push_back(std::to_string(k));
  if (static_cast<int>(names.size()) != num_classes)
    throw ConfigError("class name count does not match num_classes");
  ConfusionCounter counter(std::move(names));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || gts[i] < 0 || gts[i] >= num_classes)
      throw ConfigError("label out of range in evaluate_classification");
    counter.add(1U << preds[i], 1U << gts[i]);
    correct += preds[i] == gts[i];
  }
  EvalReport r = counter.report();
  r.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
  return r;
}

}  // namespace catsg
