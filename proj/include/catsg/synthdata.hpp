// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "catsg/errors.hpp"
#include "catsg/geometry.hpp"
#include "catsg/hash.hpp"
#include "catsg/mask.hpp"
#include "catsg/ontology.hpp"
#include "catsg/queries.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

// ---------------------------------------------------------------------------
// Simulator configuration

/// Ornstein-Uhlenbeck drift around an anchor given relative to the eye
/// centre, with an optional sinusoidal stroke added to the anchor.
struct MotionSpec {
  double ax = 0.5;
  double ay = 0.5;
  double pull = 0.15;
  double step = 0.006;
  double stroke_dx = 0.0;
  double stroke_dy = 0.0;
  double stroke_period_s = 3.0;
};

struct ToolSpec {
  std::string cls;
  double angle_deg = 30.0;
  double length = 0.22;
  double width = 0.05;
  MotionSpec motion;
};

enum class RelationTiming { kEntry, kExit, kCycle };

struct PredicateChoice {
  std::string predicate;
  double weight = 1.0;
};

/// One relation program. Entry/exit relations hold for `window_s` at the
/// start/end of the phase; cycles alternate on/off segments inside a
/// `window_s` margin and draw a predicate per on-segment.
struct RelationSpec {
  std::string subject;
  std::string object;
  std::vector<PredicateChoice> predicates;
  RelationTiming timing = RelationTiming::kCycle;
  double window_s = 1.5;
  double on_min_s = 1.0, on_max_s = 2.0;
  double off_min_s = 0.5, off_max_s = 1.0;
};

struct PhaseTemplate {
  std::string phase;
  double weight_min = 3.0, weight_max = 6.0;
  double presence = 1.0;
  std::vector<ToolSpec> tools;
  std::vector<RelationSpec> relations;
};

/// Replaces the tools and relations of the nucleus-breaking phase.
struct TechniqueTemplate {
  std::string technique;
  std::vector<ToolSpec> tools;
  std::vector<RelationSpec> relations;
};

NLOHMANN_JSON_SERIALIZE_ENUM(RelationTiming, {{RelationTiming::kEntry, "entry"},
                                              {RelationTiming::kExit, "exit"},
                                              {RelationTiming::kCycle, "cycle"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MotionSpec, ax, ay, pull, step, stroke_dx,
                                                stroke_dy, stroke_period_s)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ToolSpec, cls, angle_deg, length, width, motion)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PredicateChoice, predicate, weight)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RelationSpec, subject, object, predicates, timing,
                                                window_s, on_min_s, on_max_s, off_min_s,
                                                off_max_s)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PhaseTemplate, phase, weight_min, weight_max,
                                                presence, tools, relations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TechniqueTemplate, technique, tools, relations)

namespace sim_defaults {

inline ToolSpec tool(std::string cls, double ax, double ay, double angle, double length = 0.22,
                     double width = 0.05) {
  ToolSpec t;
  t.cls = std::move(cls);
  t.angle_deg = angle;
  t.length = length;
  t.width = width;
  t.motion.ax = ax;
  t.motion.ay = ay;
  return t;
}

inline RelationSpec cycle(std::string sub, std::string pred, std::string obj, double on_min,
                          double on_max, double off_min, double off_max) {
  RelationSpec r;
  r.subject = std::move(sub);
  r.object = std::move(obj);
  r.predicates = {{std::move(pred), 1.0}};
  r.on_min_s = on_min;
  r.on_max_s = on_max;
  r.off_min_s = off_min;
  r.off_max_s = off_max;
  return r;
}

inline RelationSpec entry(std::string sub, std::string obj = "Cornea", double seconds = 2.0) {
  RelationSpec r;
  r.subject = std::move(sub);
  r.object = std::move(obj);
  r.predicates = {{"Inserting", 1.0}};
  r.timing = RelationTiming::kEntry;
  r.window_s = seconds;
  return r;
}

inline RelationSpec exit(std::string sub, std::string obj = "Cornea", double seconds = 1.6) {
  RelationSpec r = entry(std::move(sub), std::move(obj), seconds);
  r.predicates = {{"Retracting", 1.0}};
  r.timing = RelationTiming::kExit;
  return r;
}

inline PhaseTemplate phase(std::string name, double wmin, double wmax, double presence,
                           std::vector<ToolSpec> tools, std::vector<RelationSpec> rels) {
  return {std::move(name), wmin, wmax, presence, std::move(tools), std::move(rels)};
}

// Tools entering the eye are inserted through the corneal incision and
// retracted at the end of their phase.
inline std::vector<RelationSpec> intraocular(const std::string& t, RelationSpec work) {
  return {entry(t), exit(t), std::move(work)};
}

inline PhaseTemplate implant_handling(std::string name, double wmin, double wmax) {
  return phase(std::move(name), wmin, wmax, 1.0,
               {tool("Hand", 0.80, 0.80, 45, 0.24, 0.10),
                tool("Lens Injector", 0.68, 0.70, 45, 0.22, 0.05)},
               {cycle("Hand", "Holding", "Lens Injector", 3.0, 5.0, 0.3, 0.6)});
}

inline PhaseTemplate hydration(std::string name, double wmin, double wmax) {
  const std::string hydro = "Hydrodissection Cannula";
  return phase(std::move(name), wmin, wmax, 1.0, {tool(hydro, 0.57, 0.46, 45)},
               intraocular(hydro, cycle(hydro, "Activation", "Pupil", 1.5, 3.0, 0.5, 1.0)));
}

inline PhaseTemplate aspiration(std::string name, double wmin, double wmax) {
  const std::string ia = "Irrigation/Aspiration Handpiece";
  return phase(std::move(name), wmin, wmax, 1.0, {tool(ia, 0.56, 0.50, 25)},
               intraocular(ia, cycle(ia, "Activation", "Pupil", 2.0, 4.0, 0.5, 1.0)));
}

}  // namespace sim_defaults

/// Ordered phase grammar. Three pairs of phases (Implant Ejection /
/// Preparing Implant, Hydrodissection / Wound Hydration and
/// Irrigation/Aspiration / OVD Aspiration) share identical templates, so a
/// single frame cannot tell them apart.
inline std::vector<PhaseTemplate> default_grammar() {
  using namespace sim_defaults;
  const std::string visco = "Viscoelastic Cannula", cysto = "Capsulorhexis Cystotome",
                    capsf = "Capsulorhexis Forceps",
                    phaco = "Phacoemulsification Handpiece", micro = "Micromanipulator",
                    vitr = "Vitrectomy Handpiece", ryc = "Rycroft Cannula",
                    inj = "Lens Injector", knife = "Primary Knife";
  std::vector<PhaseTemplate> g;
  g.push_back(phase("Idle", 2, 5, 1.0, {}, {}));
  g.push_back(phase("Toric Marking", 3, 6, 0.3, {tool("Marker", 0.50, 0.22, 90, 0.20, 0.05)},
                    {cycle("Marker", "Activation", "Cornea", 1.0, 2.0, 0.5, 1.0)}));
  g.push_back(implant_handling("Implant Ejection", 3, 6));
  g.push_back(phase("Incision", 4, 8, 1.0,
                    {tool("Bonn Forceps", 0.28, 0.46, 160), tool(knife, 0.64, 0.40, 30)},
                    {entry(knife), exit(knife),
                     cycle("Bonn Forceps", "Holding", "Cornea", 3.0, 5.0, 0.3, 0.6),
                     cycle(knife, "Cutting", "Cornea", 0.6, 1.2, 1.0, 2.0)}));
  g.push_back(phase("Viscodilatation", 3, 6, 1.0, {tool(visco, 0.56, 0.44, 40)},
                    intraocular(visco, cycle(visco, "Activation", "Pupil", 1.5, 3.0, 0.5, 1.0))));
  {
    auto caps = phase("Capsulorhexis", 6, 12, 1.0,
                      {tool(cysto, 0.58, 0.46, 35), tool(capsf, 0.42, 0.56, 200)},
                      {entry(cysto), entry(capsf), exit(cysto), exit(capsf),
                       cycle(cysto, "Pulling", "Pupil", 0.8, 1.6, 1.0, 2.0),
                       cycle(capsf, "Pulling", "Pupil", 0.4, 0.8, 3.0, 4.0)});
    g.push_back(std::move(caps));
  }
  g.push_back(hydration("Hydrodissection", 3, 6));
  g.push_back(phase("Nucleus Breaking", 10, 20, 1.0, {}, {}));
  g.push_back(phase("Phacoemulsification", 8, 16, 1.0,
                    {tool(phaco, 0.56, 0.50, 20), tool(micro, 0.42, 0.52, 160)},
                    {entry(phaco), entry(micro), exit(phaco), exit(micro),
                     cycle(phaco, "Activation", "Pupil", 2.0, 4.0, 0.3, 1.0),
                     cycle(micro, "Pushing", "Pupil", 0.5, 1.0, 3.0, 5.0)}));
  g.push_back(phase("Vitrectomy", 3, 6, 0.2, {tool(vitr, 0.55, 0.48, 30)},
                    intraocular(vitr, cycle(vitr, "Cutting", "Pupil", 0.8, 1.5, 0.8, 1.5))));
  g.push_back(aspiration("Irrigation/Aspiration", 6, 12));
  g.push_back(implant_handling("Preparing Implant", 3, 6));
  g.push_back(phase("Manual Aspiration", 3, 5, 0.3, {tool(ryc, 0.57, 0.47, 40)},
                    intraocular(ryc, cycle(ryc, "Activation", "Pupil", 1.0, 2.0, 0.5, 1.0))));
  g.push_back(phase("Implantation", 4, 8, 1.0, {tool(inj, 0.60, 0.45, 35)},
                    intraocular(inj, cycle(inj, "Activation", "Pupil", 1.0, 2.0, 0.5, 1.5))));
  g.push_back(phase("Positioning", 3, 6, 1.0, {tool(micro, 0.45, 0.50, 150)},
                    intraocular(micro, cycle(micro, "Pushing", "Pupil", 0.6, 1.2, 1.0, 2.0))));
  g.push_back(aspiration("OVD Aspiration", 4, 8));
  g.push_back(phase("Suturing", 4, 8, 0.3,
                    {tool("Needle Holder", 0.62, 0.30, 60), tool("Suture Needle", 0.56, 0.34, 0,
                                                                  0.08, 0.04)},
                    {cycle("Needle Holder", "Holding", "Suture Needle", 2.0, 4.0, 0.5, 1.0)}));
  g.push_back(phase("Sealing Control", 3, 6, 1.0, {tool("Cotton", 0.64, 0.36, 45, 0.12, 0.10)},
                    {cycle("Cotton", "Pushing", "Cornea", 0.5, 1.0, 1.0, 2.0)}));
  g.push_back(hydration("Wound Hydration", 3, 6));
  return g;
}

/// Divide and Conquer sculpts with long vertical handpiece strokes and
/// mostly pushes/rotates with the micromanipulator; Stop and Chop keeps the
/// handpiece central and chops horizontally, mostly pulling.
inline std::vector<TechniqueTemplate> default_techniques() {
  using namespace sim_defaults;
  const std::string phaco = "Phacoemulsification Handpiece", micro = "Micromanipulator";
  TechniqueTemplate dc;
  dc.technique = "Divide and Conquer";
  {
    auto p = tool(phaco, 0.52, 0.50, 70);
    p.motion.stroke_dy = 0.14;
    p.motion.stroke_period_s = 3.0;
    p.motion.pull = 0.3;
    auto m = tool(micro, 0.38, 0.62, 200);
    dc.tools = {p, m};
    auto work = cycle(micro, "Pushing", "Pupil", 1.0, 2.0, 1.0, 2.0);
    work.predicates = {{"Pushing", 0.7}, {"Pulling", 0.3}};
    dc.relations = {entry(phaco), entry(micro), exit(phaco), exit(micro),
                    cycle(phaco, "Activation", "Pupil", 2.0, 3.5, 0.5, 1.5), work};
  }
  TechniqueTemplate sc;
  sc.technique = "Stop and Chop";
  {
    auto p = tool(phaco, 0.52, 0.48, 20);
    auto m = tool(micro, 0.32, 0.45, 170);
    m.motion.stroke_dx = 0.12;
    m.motion.stroke_period_s = 2.0;
    m.motion.pull = 0.3;
    sc.tools = {p, m};
    auto work = cycle(micro, "Pulling", "Pupil", 1.0, 2.0, 1.0, 2.0);
    work.predicates = {{"Pulling", 0.7}, {"Pushing", 0.3}};
    sc.relations = {entry(phaco), entry(micro), exit(phaco), exit(micro),
                    cycle(phaco, "Activation", "Pupil", 1.0, 2.0, 1.0, 2.0), work};
  }
  return {sc, dc};
}

/// Relative relation frequencies the default grammar aims to reproduce.
inline std::vector<std::pair<std::string, double>> default_predicate_targets() {
  return {{"Holding", 13380},  {"Activation", 44552}, {"Pushing", 3874},
          {"Pulling", 11895},  {"Cutting", 1925},     {"Inserting", 34016},
          {"Retracting", 23886}, {"close_to", 1677724}};
}

struct SimConfig {
  std::uint64_t seed = 42;
  int n_videos = 10;
  double min_duration_s = 60.0;
  double max_duration_s = 240.0;
  double fps = 5.0;
  int frame_width = 64;
  int frame_height = 64;
  int dim = 256;
  double noise = 0.3;
  int chunk_size = 8;
  int close_to_gap = 0;
  std::string nucleus_phase = "Nucleus Breaking";
  std::vector<PhaseTemplate> grammar = default_grammar();
  std::vector<TechniqueTemplate> techniques = default_techniques();
  std::vector<std::pair<std::string, double>> predicate_targets = default_predicate_targets();

  /// Smallest embedding width holding the grounding and relation blocks
  /// plus a 5-dimensional class code.
  static constexpr int kMinDim = 24;

  void validate(const Ontology& onto = Ontology::default_instance()) const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimConfig, seed, n_videos, min_duration_s,
                                                max_duration_s, fps, frame_width, frame_height,
                                                dim, noise, chunk_size, close_to_gap,
                                                nucleus_phase, grammar, techniques,
                                                predicate_targets)

inline void SimConfig::validate(const Ontology& onto) const {
  auto fail = [](const std::string& m) { throw ConfigError("SimConfig: " + m); };
  if (!(fps > 0.0)) fail("fps must be > 0");
  if (n_videos <= 0) fail("n_videos must be > 0");
  if (!(min_duration_s > 0.0) || max_duration_s < min_duration_s)
    fail("duration range must satisfy 0 < min <= max");
  if (frame_width < 8 || frame_height < 8) fail("frame must be at least 8x8");
  if (dim < kMinDim) fail("dim must be >= " + std::to_string(kMinDim));
  if (noise < 0.0) fail("noise must be >= 0");
  if (chunk_size < 1) fail("chunk_size must be >= 1");
  if (close_to_gap < 0) fail("close_to_gap must be >= 0");
  std::vector<int> seen(onto.phases().size(), 0);
  int last = -1;
  try {
    for (const auto& p : grammar) {
      const int id = onto.phase_id(p.phase);
      if (id <= last) fail("grammar phases must follow ontology order without repeats");
      last = id;
      seen[static_cast<std::size_t>(id)] = 1;
      if (p.weight_min <= 0.0 || p.weight_max < p.weight_min)
        fail("phase " + p.phase + " has an invalid weight range");
      if (p.presence <= 0.0 || p.presence > 1.0) fail("phase presence must be in (0, 1]");
      auto check_rels = [&](const std::vector<ToolSpec>& tools,
                            const std::vector<RelationSpec>& rels) {
        for (const auto& t : tools) onto.class_id(t.cls);
        for (const auto& r : rels) {
          if (!onto.is_tool(r.subject)) fail("relation subject " + r.subject + " is not a tool");
          onto.class_id(r.object);
          if (r.predicates.empty()) fail("relation without predicates");
          for (const auto& c : r.predicates)
            if (!onto.is_semantic(onto.predicate_id(c.predicate)))
              fail("relation programs may only emit semantic predicates");
          if (r.on_min_s <= 0.0 || r.on_max_s < r.on_min_s || r.off_min_s <= 0.0 ||
              r.off_max_s < r.off_min_s)
            fail("relation on/off ranges must be positive and ordered");
        }
      };
      check_rels(p.tools, p.relations);
    }
    for (const auto& t : techniques) {
      onto.technique_id(t.technique);
      for (const auto& tool : t.tools) onto.class_id(tool.cls);
      for (const auto& r : t.relations) {
        if (!onto.is_tool(r.subject)) fail("relation subject " + r.subject + " is not a tool");
        onto.class_id(r.object);
        for (const auto& c : r.predicates) onto.predicate_id(c.predicate);
      }
    }
    onto.phase_id(nucleus_phase);
  } catch (const UnknownClass& e) {
    fail(e.what());
  }
  if (std::count(seen.begin(), seen.end(), 1) != static_cast<long>(onto.phases().size()))
    fail("grammar must cover all phases");
  if (techniques.size() != onto.techniques().size()) fail("one template per technique required");
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

struct Vec2 {
  double x = 0.5, y = 0.5;
};

inline double clamp01(double v, double lo = 0.04, double hi = 0.96) {
  return std::clamp(v, lo, hi);
}

// Fills pixels whose centre lies inside a rotated ellipse. Semi-axes and
// centre are in normalized coordinates.
inline void fill_ellipse(std::vector<int>& labels, int w, int h, int label, double cx, double cy,
                         double semi_major, double semi_minor, double angle_rad) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  const double reach = std::max(semi_major, semi_minor);
  const int x_lo = std::max(0, static_cast<int>(std::floor((cx - reach) * w)));
  const int x_hi = std::min(w - 1, static_cast<int>(std::ceil((cx + reach) * w)));
  const int y_lo = std::max(0, static_cast<int>(std::floor((cy - reach) * h)));
  const int y_hi = std::min(h - 1, static_cast<int>(std::ceil((cy + reach) * h)));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dx = (x + 0.5) / w - cx;
      const double dy = (y + 0.5) / h - cy;
      const double u = (dx * c + dy * s) / semi_major;
      const double v = (-dx * s + dy * c) / semi_minor;
      if (u * u + v * v <= 1.0) labels[static_cast<std::size_t>(y) * w + x] = label;
    }
  }
}

using RelTriple = std::tuple<int, int, int>;  // subject class, object class, predicate

// The semantic relations of a frame are kept in "product form": the related
// pairs are exactly subjects x objects, and per predicate likewise. Under
// this form pair existence and per-predicate labels are linear threshold
// functions of the per-entity role indicators carried by synthetic queries.
inline bool product_form(const std::vector<RelTriple>& rels) {
  std::set<int> subs, objs;
  std::set<std::pair<int, int>> pairs;
  std::map<int, std::pair<std::set<int>, std::set<int>>> per_pred;
  std::set<RelTriple> all(rels.begin(), rels.end());
  for (const auto& [s, o, k] : rels) {
    subs.insert(s);
    objs.insert(o);
    pairs.emplace(s, o);
    per_pred[k].first.insert(s);
    per_pred[k].second.insert(o);
  }
  for (int s : subs)
    for (int o : objs)
      if (s != o && !pairs.count({s, o})) return false;
  for (const auto& [k, so] : per_pred)
    for (int s : so.first)
      for (int o : so.second)
        if (s != o && !all.count({s, o, k})) return false;
  return true;
}

struct Schedule {
  int subject = 0, object = 0;
  std::vector<int> predicate;  // per frame of the segment, -1 when inactive
};

inline Schedule schedule_relation(const RelationSpec& spec, int length, double fps,
                                  const Ontology& onto, std::mt19937_64& rng) {
  Schedule s;
  s.subject = onto.class_id(spec.subject);
  s.object = onto.class_id(spec.object);
  s.predicate.assign(static_cast<std::size_t>(length), -1);
  std::vector<double> weights;
  for (const auto& c : spec.predicates) weights.push_back(c.weight);
  std::discrete_distribution<int> choose(weights.begin(), weights.end());
  auto pick = [&] {
    return onto.predicate_id(spec.predicates[static_cast<std::size_t>(choose(rng))].predicate);
  };
  const int window = std::max(1, static_cast<int>(std::lround(spec.window_s * fps)));
  auto fill = [&](int a, int b, int k) {
    for (int t = std::max(a, 0); t < std::min(b, length); ++t) s.predicate[static_cast<std::size_t>(t)] = k;
  };
  switch (spec.timing) {
    case RelationTiming::kEntry:
      fill(0, window, pick());
      break;
    case RelationTiming::kExit:
      fill(length - window, length, pick());
      break;
    case RelationTiming::kCycle: {
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      auto dur = [&](double lo, double hi) {
        return std::max(1, static_cast<int>(std::lround((lo + (hi - lo) * u01(rng)) * fps)));
      };
      int t = window + static_cast<int>(std::lround(u01(rng) * spec.off_max_s * fps));
      const int stop = length - window;
      while (t < stop) {
        const int on = dur(spec.on_min_s, spec.on_max_s);
        fill(t, std::min(t + on, stop), pick());
        t += on + dur(spec.off_min_s, spec.off_max_s);
      }
      break;
    }
  }
  return s;
}

struct ToolState {
  int cls = 0;
  const ToolSpec* spec = nullptr;
  Vec2 pos;
};

}  // namespace detail

/// Generates one video. Each video draws from its own seed derived from
/// the root seed and the video index.
inline VideoRecord generate_video(const SimConfig& cfg, int index,
                                  const Ontology& onto = Ontology::default_instance()) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x766964656fULL, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  VideoRecord v;
  char id[32];
  std::snprintf(id, sizeof(id), "video_%03d", index + 1);
  v.video_id = id;
  v.fps = cfg.fps;
  v.technique = u01(rng) < 0.5 ? 0 : 1;
  const std::string& technique_name = onto.techniques()[static_cast<std::size_t>(v.technique)];
  const TechniqueTemplate* technique = nullptr;
  for (const auto& t : cfg.techniques)
    if (t.technique == technique_name) technique = &t;
  if (!technique) throw ConfigError("no template for technique " + technique_name);

  // Phase sequence and frame allocation.
  std::vector<const PhaseTemplate*> phases;
  std::vector<double> weights;
  for (const auto& p : cfg.grammar) {
    const bool keep = p.presence >= 1.0 || u01(rng) < p.presence;
    if (!keep) continue;
    phases.push_back(&p);
    weights.push_back(p.weight_min + (p.weight_max - p.weight_min) * u01(rng));
  }
  const double duration =
      cfg.min_duration_s + (cfg.max_duration_s - cfg.min_duration_s) * u01(rng);
  const int n_frames = static_cast<int>(std::lround(duration * cfg.fps));
  if (n_frames < static_cast<int>(phases.size()))
    throw ConfigError("video too short for its phase sequence");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> bounds(phases.size() + 1, 0);
  double acc = 0.0;
  for (std::size_t k = 0; k < phases.size(); ++k) {
    acc += weights[k];
    bounds[k + 1] = static_cast<int>(std::lround(n_frames * acc / total));
  }
  bounds.back() = n_frames;
  for (std::size_t k = 1; k < bounds.size(); ++k) bounds[k] = std::max(bounds[k], bounds[k - 1] + 1);
  for (std::size_t k = bounds.size() - 1; k-- > 0;)
    bounds[k] = std::min(bounds[k], bounds[k + 1] - 1);

  const int w = cfg.frame_width, h = cfg.frame_height;
  const int pupil = onto.class_id("Pupil"), iris = onto.class_id("Iris"),
            cornea = onto.class_id("Cornea"), skin = onto.class_id("Skin"),
            retractors = onto.class_id("Eye Retractors");
  const int nucleus = onto.phase_id(cfg.nucleus_phase);
  const double pupil_r = 0.12 + 0.03 * u01(rng);
  detail::Vec2 eye;

  for (std::size_t k = 0; k < phases.size(); ++k) {
    const PhaseTemplate& ph = *phases[k];
    const int phase_id = onto.phase_id(ph.phase);
    const bool is_nucleus = phase_id == nucleus;
    const auto& tool_specs = is_nucleus ? technique->tools : ph.tools;
    const auto& rel_specs = is_nucleus ? technique->relations : ph.relations;
    const int begin = bounds[k], end = bounds[k + 1], len = end - begin;

    std::vector<detail::ToolState> tools;
    for (const auto& ts : tool_specs) {
      detail::ToolState st;
      st.cls = onto.class_id(ts.cls);
      st.spec = &ts;
      st.pos = {eye.x + ts.motion.ax - 0.5 + 0.02 * n01(rng),
                eye.y + ts.motion.ay - 0.5 + 0.02 * n01(rng)};
      tools.push_back(st);
    }
    std::vector<detail::Schedule> schedules;
    for (const auto& rs : rel_specs)
      schedules.push_back(detail::schedule_relation(rs, len, cfg.fps, onto, rng));

    for (int t = 0; t < len; ++t) {
      const int frame_idx = begin + t;
      eye.x = detail::clamp01(eye.x + 0.05 * (0.5 - eye.x) + 0.004 * n01(rng), 0.4, 0.6);
      eye.y = detail::clamp01(eye.y + 0.05 * (0.5 - eye.y) + 0.004 * n01(rng), 0.4, 0.6);
      const double time_in_phase = t / cfg.fps;
      for (auto& st : tools) {
        const auto& m = st.spec->motion;
        const double phase_angle = 2.0 * M_PI * time_in_phase / std::max(m.stroke_period_s, 1e-6);
        const double tx = eye.x + m.ax - 0.5 + m.stroke_dx * std::sin(phase_angle);
        const double ty = eye.y + m.ay - 0.5 + m.stroke_dy * std::sin(phase_angle);
        st.pos.x = detail::clamp01(st.pos.x + m.pull * (tx - st.pos.x) + m.step * n01(rng));
        st.pos.y = detail::clamp01(st.pos.y + m.pull * (ty - st.pos.y) + m.step * n01(rng));
      }

      std::vector<int> labels(static_cast<std::size_t>(w) * h, skin);
      detail::fill_ellipse(labels, w, h, cornea, eye.x, eye.y, 0.36, 0.36, 0.0);
      detail::fill_ellipse(labels, w, h, iris, eye.x, eye.y, 0.24, 0.24, 0.0);
      detail::fill_ellipse(labels, w, h, pupil, eye.x, eye.y, pupil_r, pupil_r, 0.0);
      detail::fill_ellipse(labels, w, h, retractors, eye.x, 0.06, 0.14, 0.035, 0.0);
      detail::fill_ellipse(labels, w, h, retractors, eye.x, 0.94, 0.14, 0.035, 0.0);
      for (const auto& st : tools)
        detail::fill_ellipse(labels, w, h, st.cls, st.pos.x, st.pos.y, st.spec->length / 2,
                             st.spec->width / 2, st.spec->angle_deg * M_PI / 180.0);

      FrameSceneGraph f;
      f.video_id = v.video_id;
      f.frame_idx = frame_idx;
      f.time_s = frame_idx / cfg.fps;
      f.phase = phase_id;
      f.technique = v.technique;
      std::vector<int> order = {pupil, iris, cornea, skin, retractors};
      for (const auto& st : tools) order.push_back(st.cls);
      std::sort(order.begin(), order.end());
      order.erase(std::unique(order.begin(), order.end()), order.end());
      std::vector<std::uint8_t> bits(labels.size());
      for (int cls : order) {
        for (std::size_t i = 0; i < labels.size(); ++i) bits[i] = labels[i] == cls;
        Mask m = Mask::encode(w, h, bits);
        if (m.foreground() == 0) continue;
        Entity e;
        e.id = cls;
        e.cls = cls;
        e.grounding = grounding_from_mask(m);
        e.mask = std::move(m);
        f.entities.push_back(std::move(e));
      }

      std::vector<detail::RelTriple> accepted;
      for (const auto& s : schedules) {
        const int k = s.predicate[static_cast<std::size_t>(t)];
        if (k < 0 || !f.find_class(s.subject) || !f.find_class(s.object)) continue;
        accepted.emplace_back(s.subject, s.object, k);
        if (!detail::product_form(accepted)) accepted.pop_back();
      }
      std::sort(accepted.begin(), accepted.end());
      accepted.erase(std::unique(accepted.begin(), accepted.end()), accepted.end());
      for (const auto& [s, o, k] : accepted) f.relations.push_back({s, o, k});
      for (const auto& r : infer_close_to(f, cfg.close_to_gap, onto)) f.relations.push_back(r);
      v.frames.push_back(std::move(f));
    }
  }
  return v;
}

inline std::vector<VideoRecord> generate(const SimConfig& cfg,
                                         const Ontology& onto = Ontology::default_instance()) {
  cfg.validate(onto);
  std::vector<VideoRecord> videos;
  videos.reserve(static_cast<std::size_t>(cfg.n_videos));
  for (int i = 0; i < cfg.n_videos; ++i) videos.push_back(generate_video(cfg, i, onto));
  return videos;
}

inline DatasetMeta dataset_meta(const SimConfig& cfg) {
  return {cfg.fps, cfg.frame_width, cfg.frame_height};
}

// ---------------------------------------------------------------------------
// Synthetic query embeddings

/// Layout of a synthetic query of width D:
///   [class block | cx cy area | role block (16) | zero filler]
/// The class block is one-hot when D >= 48, otherwise a fixed random code.
/// The role block holds 7 subject indicators, 7 object indicators, then
/// any-subject and any-object. Gaussian noise of std `noise` is added to
/// every coordinate.
class SyntheticQueryProvider : public QueryProvider {
 public:
  static constexpr int kRoleDims = 2 * kNumSemanticPredicates + 2;

  explicit SyntheticQueryProvider(SimConfig cfg,
                                  const Ontology& onto = Ontology::default_instance())
      : cfg_(std::move(cfg)), onto_(&onto) {
    if (cfg_.dim < SimConfig::kMinDim)
      throw ConfigError("synthetic queries need dim >= " + std::to_string(SimConfig::kMinDim));
    class_dims_ = std::min(onto.num_classes(), cfg_.dim - 3 - kRoleDims);
    if (class_dims_ < onto.num_classes()) {
      std::mt19937_64 rng(derive_seed(0xC1A55C0DEULL, "class-codes"));
      std::normal_distribution<double> n01;
      codes_.resize(static_cast<std::size_t>(onto.num_classes()));
      for (auto& c : codes_) {
        c = QueryVector(class_dims_);
        for (int i = 0; i < class_dims_; ++i) c[i] = n01(rng);
        c.normalize();
      }
    }
  }

  int dim() const override { return cfg_.dim; }
  int class_dims() const { return class_dims_; }
  int grounding_offset() const { return class_dims_; }
  int role_offset() const { return class_dims_ + 3; }

  QueryMap frame_queries(const VideoRecord& video, int position) const override {
    const auto& f = video.frames.at(static_cast<std::size_t>(position));
    QueryMap out;
    const std::uint64_t vid = fnv1a64(video.video_id);
    for (const auto& e : f.entities) {
      QueryVector q = QueryVector::Zero(cfg_.dim);
      if (codes_.empty())
        q[e.cls] = 1.0;
      else
        q.head(class_dims_) = codes_[static_cast<std::size_t>(e.cls)];
      q[class_dims_ + 0] = e.grounding.cx;
      q[class_dims_ + 1] = e.grounding.cy;
      q[class_dims_ + 2] = e.grounding.area;
      const int role = role_offset();
      for (const auto& r : f.relations) {
        if (!onto_->is_semantic(r.pred)) continue;
        if (r.sub == e.id) {
          q[role + r.pred] = 1.0;
          q[role + 2 * kNumSemanticPredicates] = 1.0;
        }
        if (r.obj == e.id) {
          q[role + kNumSemanticPredicates + r.pred] = 1.0;
          q[role + 2 * kNumSemanticPredicates + 1] = 1.0;
        }
      }
      if (cfg_.noise > 0.0) {
        std::mt19937_64 rng(derive_seed(cfg_.seed, vid, static_cast<std::uint64_t>(f.frame_idx),
                                        static_cast<std::uint64_t>(e.cls)));
        std::normal_distribution<double> n(0.0, cfg_.noise);
        for (int i = 0; i < cfg_.dim; ++i) q[i] += n(rng);
      }
      out.emplace(e.cls, std::move(q));
    }
    return out;
  }

 private:
  SimConfig cfg_;
  const Ontology* onto_;
  int class_dims_ = 0;
  std::vector<QueryVector> codes_;
};

inline std::vector<QueryMap> synthetic_queries(const VideoRecord& video, ChunkRange chunk,
                                               const SimConfig& cfg,
                                               const Ontology& onto = Ontology::default_instance()) {
  if (chunk.length != cfg.chunk_size)
    throw ChunkOutOfRange("chunk length " + std::to_string(chunk.length) +
                          " differs from configured chunk size " + std::to_string(cfg.chunk_size));
  return SyntheticQueryProvider(cfg, onto).chunk_queries(video, chunk);
}

}  // namespace catsg
