// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "catsg/errors.hpp"
#include "catsg/hash.hpp"

namespace catsg {

enum class ClassKind { kTool, kAnatomy };
enum class PredicateCategory { kSemantic, kGeometric };

struct ObjectClass {
  int id = 0;
  std::string name;
  ClassKind kind = ClassKind::kTool;
};

struct Predicate {
  int id = 0;
  std::string name;
  PredicateCategory category = PredicateCategory::kSemantic;
};

inline constexpr int kNumClasses = 29;
inline constexpr int kNumSemanticPredicates = 7;
inline constexpr int kNumPhases = 19;
inline constexpr int kNumTechniques = 2;

inline constexpr std::array<std::string_view, kNumClasses> kCanonicalClassNames = {
    "Pupil", "Surgical Tape", "Hand", "Eye Retractors", "Iris", "Skin", "Cornea",
    "Hydrodissection Cannula", "Viscoelastic Cannula", "Capsulorhexis Cystotome",
    "Rycroft Cannula", "Bonn Forceps", "Primary Knife",
    "Phacoemulsification Handpiece", "Lens Injector",
    "Irrigation/Aspiration Handpiece", "Secondary Knife", "Micromanipulator",
    "Capsulorhexis Forceps", "Suture Needle", "Needle Holder", "Charleux Cannula",
    "Vitrectomy Handpiece", "Mendez Ring", "Marker", "Troutman Forceps", "Cotton",
    "Iris Hooks", "Vannas Scissors"};

inline constexpr std::array<std::string_view, kNumSemanticPredicates>
    kCanonicalSemanticNames = {"Holding",  "Activation", "Pushing",   "Pulling",
                               "Cutting",  "Inserting",  "Retracting"};
inline constexpr std::string_view kCloseToName = "close_to";
inline constexpr std::array<std::string_view, kNumTechniques> kCanonicalTechniques = {
    "Stop and Chop", "Divide and Conquer"};

/// Shipped default ontology. `data/ontology.default` carries the same text.
inline constexpr std::string_view kDefaultOntologyText = R"(# Object classes, predicates and label sets for cataract scene graphs.
# Class ids follow listing order. Every class is either `tool` (may be the
# subject of a semantic relation) or `anatomy`.

[classes]
Pupil = anatomy
Surgical Tape = tool
Hand = tool
Eye Retractors = tool
Iris = anatomy
Skin = anatomy
Cornea = anatomy
Hydrodissection Cannula = tool
Viscoelastic Cannula = tool
Capsulorhexis Cystotome = tool
Rycroft Cannula = tool
Bonn Forceps = tool
Primary Knife = tool
Phacoemulsification Handpiece = tool
Lens Injector = tool
Irrigation/Aspiration Handpiece = tool
Secondary Knife = tool
Micromanipulator = tool
Capsulorhexis Forceps = tool
Suture Needle = tool
Needle Holder = tool
Charleux Cannula = tool
Vitrectomy Handpiece = tool
Mendez Ring = tool
Marker = tool
Troutman Forceps = tool
Cotton = tool
Iris Hooks = tool
Vannas Scissors = tool

[semantic]
Holding
Activation
Pushing
Pulling
Cutting
Inserting
Retracting

[geometric]
close_to

[phases]
Idle
Toric Marking
Implant Ejection
Incision
Viscodilatation
Capsulorhexis
Hydrodissection
Nucleus Breaking
Phacoemulsification
Vitrectomy
Irrigation/Aspiration
Preparing Implant
Manual Aspiration
Implantation
Positioning
OVD Aspiration
Suturing
Sealing Control
Wound Hydration

[techniques]
Stop and Chop
Divide and Conquer
)";

/// Immutable label universe. Predicate ids: semantic predicates take
/// 0..6 in listing order, `close_to` is 7.
class Ontology {
 public:
  static Ontology parse(std::string_view text);
  static Ontology load(const std::string& path);
  static const Ontology& default_instance();

  const std::vector<ObjectClass>& classes() const { return classes_; }
  const std::vector<Predicate>& predicates() const { return predicates_; }
  const std::vector<std::string>& phases() const { return phases_; }
  const std::vector<std::string>& techniques() const { return techniques_; }

  int num_classes() const { return static_cast<int>(classes_.size()); }
  int num_predicates() const { return static_cast<int>(predicates_.size()); }
  int close_to_id() const { return kNumSemanticPredicates; }

  const ObjectClass& object_class(int id) const {
    if (id < 0 || id >= num_classes())
      throw UnknownClass("class id out of range: " + std::to_string(id));
    return classes_[static_cast<std::size_t>(id)];
  }
  int class_id(std::string_view name) const {
    auto it = class_index_.find(std::string(name));
    if (it == class_index_.end()) throw UnknownClass("unknown class: " + std::string(name));
    return it->second;
  }
  int predicate_id(std::string_view name) const;
  int phase_id(std::string_view name) const;
  int technique_id(std::string_view name) const;

  bool is_tool(int class_id) const { return object_class(class_id).kind == ClassKind::kTool; }
  bool is_anatomy(int class_id) const {
    return object_class(class_id).kind == ClassKind::kAnatomy;
  }
  bool is_tool(std::string_view name) const { return is_tool(class_id(name)); }
  bool is_anatomy(std::string_view name) const { return is_anatomy(class_id(name)); }
  bool is_semantic(int predicate_id) const {
    return predicate_id >= 0 && predicate_id < kNumSemanticPredicates;
  }

  /// Stable 64-bit hash of the canonical content; stored in checkpoints.
  std::uint64_t fingerprint() const { return fingerprint_; }
  std::string fingerprint_hex() const { return hex64(fingerprint_); }

 private:
  std::vector<ObjectClass> classes_;
  std::vector<Predicate> predicates_;
  std::vector<std::string> phases_;
  std::vector<std::string> techniques_;
  std::unordered_map<std::string, int> class_index_;
  std::uint64_t fingerprint_ = 0;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

template <typename Range>
int index_of(const Range& names, std::string_view name, const char* what) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw UnknownClass(std::string("unknown ") + what + ": " + std::string(name));
}

}  // namespace detail

inline Ontology Ontology::parse(std::string_view text) {
  Ontology o;
  std::string section;
  std::vector<std::string> semantic;
  std::vector<std::string> geometric;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw SchemaError("ontology line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "classes" && section != "semantic" && section != "geometric" &&
          section != "phases" && section != "techniques")
        fail("unknown section [" + section + "]");
      continue;
    }
    if (section.empty()) fail("entry outside of a section");
    if (section == "classes") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected `<name> = tool|anatomy`");
      ObjectClass c;
      c.name = detail::trim(std::string_view(line).substr(0, eq));
      const std::string kind = detail::trim(std::string_view(line).substr(eq + 1));
      if (kind == "tool") {
        c.kind = ClassKind::kTool;
      } else if (kind == "anatomy") {
        c.kind = ClassKind::kAnatomy;
      } else {
        fail("class kind must be tool or anatomy, got `" + kind + "`");
      }
      if (std::find(kCanonicalClassNames.begin(), kCanonicalClassNames.end(), c.name) ==
          kCanonicalClassNames.end())
        fail("unknown class name `" + c.name + "`");
      if (o.class_index_.count(c.name)) fail("duplicate class `" + c.name + "`");
      c.id = static_cast<int>(o.classes_.size());
      o.class_index_.emplace(c.name, c.id);
      o.classes_.push_back(std::move(c));
    } else if (section == "semantic") {
      semantic.push_back(line);
    } else if (section == "geometric") {
      geometric.push_back(line);
    } else if (section == "phases") {
      o.phases_.push_back(line);
    } else {
      o.techniques_.push_back(line);
    }
  }

  if (o.classes_.size() != kNumClasses)
    throw SchemaError("ontology must list " + std::to_string(kNumClasses) +
                      " classes, got " + std::to_string(o.classes_.size()));
  if (semantic.size() != kNumSemanticPredicates)
    throw SchemaError("ontology must list 7 semantic predicates, got " +
                      std::to_string(semantic.size()));
  for (const auto& name : semantic) {
    if (std::find(kCanonicalSemanticNames.begin(), kCanonicalSemanticNames.end(), name) ==
        kCanonicalSemanticNames.end())
      throw SchemaError("unknown semantic predicate `" + name + "`");
    if (std::count(semantic.begin(), semantic.end(), name) != 1)
      throw SchemaError("duplicate predicate `" + name + "`");
  }
  if (geometric.size() != 1 || geometric[0] != kCloseToName)
    throw SchemaError("ontology must list exactly one geometric predicate `close_to`");
  if (o.phases_.size() != kNumPhases)
    throw SchemaError("ontology must list 19 phases, got " + std::to_string(o.phases_.size()));
  for (const auto& p : o.phases_)
    if (std::count(o.phases_.begin(), o.phases_.end(), p) != 1)
      throw SchemaError("duplicate phase `" + p + "`");
  if (o.techniques_.size() != kNumTechniques)
    throw SchemaError("ontology must list 2 techniques");
  for (const auto& t : o.techniques_)
    if (std::find(kCanonicalTechniques.begin(), kCanonicalTechniques.end(), t) ==
            kCanonicalTechniques.end() ||
        std::count(o.techniques_.begin(), o.techniques_.end(), t) != 1)
      throw SchemaError("techniques must be `Stop and Chop` and `Divide and Conquer`");

  for (std::size_t i = 0; i < semantic.size(); ++i)
    o.predicates_.push_back({static_cast<int>(i), semantic[i], PredicateCategory::kSemantic});
  o.predicates_.push_back({kNumSemanticPredicates, std::string(kCloseToName),
                           PredicateCategory::kGeometric});

  std::string canon;
  for (const auto& c : o.classes_)
    canon += "c:" + c.name + (c.kind == ClassKind::kTool ? "=tool\n" : "=anatomy\n");
  for (const auto& p : o.predicates_) canon += "p:" + p.name + "\n";
  for (const auto& p : o.phases_) canon += "ph:" + p + "\n";
  for (const auto& t : o.techniques_) canon += "t:" + t + "\n";
  o.fingerprint_ = fnv1a64(canon);
  return o;
}

inline Ontology Ontology::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ontology file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

inline const Ontology& Ontology::default_instance() {
  static const Ontology instance = parse(kDefaultOntologyText);
  return instance;
}

inline int Ontology::predicate_id(std::string_view name) const {
  for (const auto& p : predicates_)
    if (p.name == name) return p.id;
  throw UnknownClass("unknown predicate: " + std::string(name));
}

inline int Ontology::phase_id(std::string_view name) const {
  return detail::index_of(phases_, name, "phase");
}

inline int Ontology::technique_id(std::string_view name) const {
  return detail::index_of(techniques_, name, "technique");
}

inline Ontology load_ontology(const std::string& path) { return Ontology::load(path); }

}  // namespace catsg
