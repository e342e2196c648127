#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geonet/corr.hpp"
#include "geonet/engine.hpp"
#include "geonet/error.hpp"
#include "geonet/features.hpp"
#include "geonet/generator.hpp"
#include "geonet/spaces.hpp"

namespace geonet {

inline constexpr int kSpecSchema = 1;

/// A parsed generator specification file.
struct NetworkSpec {
  std::string name;
  Generator generator;
  std::vector<Activator> activation;
  LossKind loss = LossKind::SoftmaxL2;
  TieMode tie = TieMode::Restricted;
  std::string dataset = "mnist";  // mnist | cifar
  int angular = 0;                // > 0: inputs carry n angular channels plus the raw value
  nlohmann::json document;        // as read (after any CLI overrides)

  Network build() const { return Network::build(generator, activation, {loss, tie}); }
};

/// FNV-1a 64 over the canonical (sorted-key, compact) dump.
inline std::uint64_t spec_hash(const nlohmann::json& doc) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

/// Maps JSON pointers to the 1-based line where each value starts. Assumes valid JSON.
class JsonLines {
 public:
  explicit JsonLines(std::string_view text) : t_(text) {
    skip();
    if (i_ < t_.size()) value("");
  }

  /// Line of the pointer, or of its closest recorded ancestor.
  int line(std::string ptr) const {
    for (;;) {
      if (auto it = lines_.find(ptr); it != lines_.end()) return it->second;
      if (ptr.empty()) return 1;
      ptr.resize(ptr.rfind('/'));
    }
  }

 private:
  void skip() {
    while (i_ < t_.size() && std::isspace(static_cast<unsigned char>(t_[i_]))) {
      if (t_[i_] == '\n') ++line_;
      ++i_;
    }
  }
  std::string string() {
    std::string s;
    ++i_;
    while (i_ < t_.size() && t_[i_] != '"') {
      if (t_[i_] == '\\') ++i_;
      if (i_ < t_.size()) s += t_[i_++];
    }
    ++i_;
    return s;
  }
  void value(const std::string& ptr) {
    lines_[ptr] = line_;
    const char c = t_[i_];
    if (c == '{') {
      ++i_;
      skip();
      while (i_ < t_.size() && t_[i_] != '}') {
        const auto key = string();
        skip();
        ++i_;  // ':'
        skip();
        value(ptr + "/" + key);
        skip();
        if (t_[i_] == ',') ++i_;
        skip();
      }
      ++i_;
    } else if (c == '[') {
      ++i_;
      skip();
      for (std::size_t k = 0; i_ < t_.size() && t_[i_] != ']'; ++k) {
        value(ptr + "/" + std::to_string(k));
        skip();
        if (t_[i_] == ',') ++i_;
        skip();
      }
      ++i_;
    } else if (c == '"') {
      string();
    } else {
      while (i_ < t_.size() && !std::isspace(static_cast<unsigned char>(t_[i_])) && t_[i_] != ',' && t_[i_] != ']' &&
             t_[i_] != '}')
        ++i_;
    }
  }

  std::string_view t_;
  std::size_t i_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class SpecReader {
 public:
  SpecReader(const nlohmann::json& doc, std::string origin, std::optional<JsonLines> lines)
      : doc_(doc), origin_(std::move(origin)), lines_(std::move(lines)) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    std::string where = origin_;
    if (lines_) where += ":" + std::to_string(lines_->line(ptr));
    throw ValidationError(where + ": " + (ptr.empty() ? std::string("/") : ptr) + ": " + msg);
  }

  const nlohmann::json& at(const nlohmann::json& obj, const std::string& ptr, const char* key) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(ptr, std::string("missing field '") + key + "'");
    return *it;
  }

  long integer(const nlohmann::json& v, const std::string& ptr) const {
    if (!v.is_number_integer()) fail(ptr, "expected an integer");
    return v.get<long>();
  }
  long integer(const nlohmann::json& obj, const std::string& ptr, const char* key) const {
    return integer(at(obj, ptr, key), ptr + "/" + key);
  }
  long integer_or(const nlohmann::json& obj, const std::string& ptr, const char* key, long dflt) const {
    return obj.contains(key) ? integer(obj, ptr, key) : dflt;
  }
  long positive(const nlohmann::json& obj, const std::string& ptr, const char* key) const {
    const long v = integer(obj, ptr, key);
    if (v < 1) fail(ptr + "/" + key, "must be >= 1, got " + std::to_string(v));
    return v;
  }
  std::string text(const nlohmann::json& obj, const std::string& ptr, const char* key) const {
    const auto& v = at(obj, ptr, key);
    if (!v.is_string()) fail(ptr + "/" + key, "expected a string");
    return v.get<std::string>();
  }
  bool flag_or(const nlohmann::json& obj, const std::string& ptr, const char* key, bool dflt) const {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_boolean()) fail(ptr + "/" + key, "expected true or false");
    return obj[key].get<bool>();
  }

  Space layer(const nlohmann::json& d, const std::string& ptr) const {
    const auto kind = text(d, ptr, "kind");
    if (kind == "grid") return Space::grid(positive(d, ptr, "width"), positive(d, ptr, "height"));
    if (kind == "set") return Space::set(static_cast<std::size_t>(positive(d, ptr, "size")));
    if (kind == "circle") {
      const long n = positive(d, ptr, "n");
      if (n < 2) fail(ptr + "/n", "circle needs n >= 2");
      return Space::circle(static_cast<int>(n), flag_or(d, ptr, "pointed", false));
    }
    if (kind == "interval") {
      const long lo = integer(d, ptr, "lo"), hi = integer(d, ptr, "hi");
      if (hi < lo) fail(ptr, "interval needs lo <= hi");
      return Space::interval(lo, hi);
    }
    fail(ptr + "/kind", "unknown layer kind '" + kind + "' (grid, set, circle, interval)");
  }

  Correspondence arrow(const nlohmann::json& d, const std::string& ptr, const Space& src, const Space& dst) const {
    const auto kind = text(d, ptr, "kind");
    try {
      if (kind == "complete") return complete(src, dst);
      if (kind == "identity") {
        if (src.size() != dst.size()) fail(ptr, "identity needs layers of equal size");
        return identity(src);
      }
      if (kind == "metric") {
        if (src.size() != dst.size() || src.kind() != dst.kind()) fail(ptr, "metric arrow needs identical layers");
        const auto& r = at(d, ptr, "radius");
        double radius = 0.0;
        if (r.is_string() && r.get<std::string>() == "adjacent") {
          if (src.kind() != SpaceKind::Circle) fail(ptr + "/radius", "'adjacent' applies to circles only");
          radius = adjacent_root_distance(src.roots());
        } else if (r.is_number()) {
          radius = r.get<double>();
        } else {
          fail(ptr + "/radius", "expected a number or \"adjacent\"");
        }
        return metric_corr(src, radius);
      }
      if (kind == "pooling") {
        const long m = integer_or(d, ptr, "m", 0), n = integer(d, ptr, "n"), stride = positive(d, ptr, "stride");
        if (src.kind() == SpaceKind::Grid && dst.kind() == SpaceKind::Grid) return grid_pooling(m, n, stride, src, dst);
        if (src.kind() == SpaceKind::Interval && dst.kind() == SpaceKind::Interval)
          return pooling_corr(m, n, stride, src, dst);
        fail(ptr, "pooling connects grid to grid or interval to interval");
      }
      if (kind == "angular_pooling") {
        if (src.kind() != SpaceKind::Circle || dst.kind() != SpaceKind::Circle) fail(ptr, "angular pooling needs circles");
        const long m = positive(d, ptr, "m");
        if (src.roots() != m * dst.roots() || src.pointed() != dst.pointed())
          fail(ptr, "angular pooling needs source roots = m * target roots and matching pointedness");
        return angular_pooling(static_cast<int>(m), dst.roots(), dst.pointed());
      }
      if (kind == "graph") {
        if (src.size() != dst.size() || src.kind() != dst.kind()) fail(ptr, "graph arrow needs identical layers");
        const auto& e = at(d, ptr, "edges");
        if (!e.is_array()) fail(ptr + "/edges", "expected a list of [a, b] pairs");
        std::vector<ElementPair> edges;
        for (std::size_t k = 0; k < e.size(); ++k) {
          const auto p = ptr + "/edges/" + std::to_string(k);
          if (!e[k].is_array() || e[k].size() != 2) fail(p, "expected [a, b]");
          const long a = integer(e[k][0], p + "/0"), b = integer(e[k][1], p + "/1");
          if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= src.size() || static_cast<std::size_t>(b) >= src.size())
            fail(p, "vertex out of range");
          edges.push_back({static_cast<ElementId>(a), static_cast<ElementId>(b)});
        }
        return graph_corr(src, edges);
      }
    } catch (const ValidationError& e) {
      if (std::string_view(e.what()).starts_with(origin_)) throw;
      fail(ptr, e.what());
    }
    fail(ptr + "/kind", "unknown arrow kind '" + kind + "' (complete, identity, metric, pooling, angular_pooling, graph)");
  }

  Generator factor(const nlohmann::json& f, const std::string& ptr) const {
    if (!f.is_object()) fail(ptr, "expected an object");
    const std::string name = f.contains("name") && f["name"].is_string() ? f["name"].get<std::string>() : "";
    if (f.contains("complete")) {
      const auto& t = f["complete"];
      if (!t.is_array() || t.size() < 2) fail(ptr + "/complete", "expected a list of at least two channel counts");
      std::vector<long> type;
      for (std::size_t k = 0; k < t.size(); ++k) {
        const long v = integer(t[k], ptr + "/complete/" + std::to_string(k));
        if (v < 1) fail(ptr + "/complete/" + std::to_string(k), "channel counts must be >= 1");
        type.push_back(v);
      }
      return make_complete_generator(type, name);
    }
    if (f.contains("angular")) {
      const auto& a = f["angular"];
      const auto p = ptr + "/angular";
      AngularFactorParams ap;
      const auto kind = text(a, p, "kind");
      if (kind == "constant") ap.kind = AngularKind::Constant;
      else if (kind == "complete") ap.kind = AngularKind::Complete;
      else if (kind == "metric") ap.kind = AngularKind::Metric;
      else if (kind == "pooled") ap.kind = AngularKind::Pooled;
      else fail(p + "/kind", "unknown angular kind '" + kind + "' (constant, complete, metric, pooled)");
      ap.n = static_cast<int>(positive(a, p, "n"));
      ap.depth = static_cast<int>(positive(a, p, "depth"));
      ap.pointed = flag_or(a, p, "pointed", true);
      try {
        return angular_factor(ap);
      } catch (const ValidationError& e) {
        fail(p, e.what());
      }
    }
    const auto& ls = at(f, ptr, "layers");
    const auto& as = at(f, ptr, "arrows");
    if (!ls.is_array() || ls.size() < 2) fail(ptr + "/layers", "expected a list of at least two layers");
    if (!as.is_array() || as.size() + 1 != ls.size())
      fail(ptr + "/arrows", "expected one arrow per consecutive pair of layers (" + std::to_string(ls.size() - 1) + ")");
    std::vector<Space> layers;
    for (std::size_t k = 0; k < ls.size(); ++k) layers.push_back(layer(ls[k], ptr + "/layers/" + std::to_string(k)));
    std::vector<Correspondence> arrows;
    for (std::size_t k = 0; k < as.size(); ++k)
      arrows.push_back(arrow(as[k], ptr + "/arrows/" + std::to_string(k), layers[k], layers[k + 1]));
    try {
      return Generator(std::move(layers), std::move(arrows), name);
    } catch (const ValidationError& e) {
      fail(ptr, e.what());
    }
  }

  Activator activator(const nlohmann::json& a, const std::string& ptr) const {
    Activator act{};
    const auto s = text(a, ptr, "semigroup"), d = text(a, ptr, "domain"), c = text(a, ptr, "cutoff");
    if (s == "sum") act.semigroup = Semigroup::Sum;
    else if (s == "max") act.semigroup = Semigroup::Max;
    else fail(ptr + "/semigroup", "expected sum or max");
    if (d == "reals") act.domain = CoefficientDomain::AllReals;
    else if (d == "one") act.domain = CoefficientDomain::One;
    else fail(ptr + "/domain", "expected reals or one");
    if (c == "identity") act.cutoff = Cutoff::Identity;
    else if (c == "relu") act.cutoff = Cutoff::ReLU;
    else if (c == "exp") act.cutoff = Cutoff::Exp;
    else fail(ptr + "/cutoff", "expected identity, relu or exp");
    return act;
  }

  NetworkSpec read() const {
    NetworkSpec s;
    s.document = doc_;
    if (!doc_.is_object()) fail("", "expected a JSON object");
    const long schema = integer(doc_, "", "schema");
    if (schema != kSpecSchema)
      fail("/schema", "unsupported schema " + std::to_string(schema) + " (this build reads " + std::to_string(kSpecSchema) + ")");
    if (doc_.contains("name")) s.name = text(doc_, "", "name");
    const auto& fs = at(doc_, "", "factors");
    if (!fs.is_array() || fs.empty()) fail("/factors", "expected a nonempty list of factors");
    std::optional<Generator> g;
    for (std::size_t k = 0; k < fs.size(); ++k) {
      const auto p = "/factors/" + std::to_string(k);
      auto f = factor(fs[k], p);
      if (g && f.depth() != g->depth())
        fail(p, "factor depth " + std::to_string(f.depth()) + " differs from " + std::to_string(g->depth()));
      g = g ? product_generator(*g, f) : std::move(f);
    }
    s.generator = std::move(*g);

    const auto& acts = at(doc_, "", "activation");
    if (!acts.is_array() || static_cast<int>(acts.size()) != s.generator.depth())
      fail("/activation", "expected one activator per layer (" + std::to_string(s.generator.depth()) + ")");
    for (std::size_t k = 0; k < acts.size(); ++k) s.activation.push_back(activator(acts[k], "/activation/" + std::to_string(k)));

    const auto loss = doc_.contains("loss") ? text(doc_, "", "loss") : "softmax_l2";
    if (loss == "softmax_l2") s.loss = LossKind::SoftmaxL2;
    else if (loss == "cross_entropy") s.loss = LossKind::CrossEntropy;
    else if (loss == "l2") s.loss = LossKind::L2;
    else fail("/loss", "expected softmax_l2, cross_entropy or l2");

    const auto tie = doc_.contains("tie") ? text(doc_, "", "tie") : "restricted";
    if (tie == "restricted") s.tie = TieMode::Restricted;
    else if (tie == "inherited") s.tie = TieMode::Inherited;
    else if (tie == "none") s.tie = TieMode::None;
    else fail("/tie", "expected restricted, inherited or none");

    if (doc_.contains("input")) {
      const auto& in = doc_["input"];
      if (in.contains("dataset")) s.dataset = text(in, "/input", "dataset");
      if (s.dataset != "mnist" && s.dataset != "cifar") fail("/input/dataset", "expected mnist or cifar");
      s.angular = static_cast<int>(integer_or(in, "/input", "angular", 0));
      if (s.angular < 0 || s.angular == 1) fail("/input/angular", "expected 0 or n >= 2");
    }
    return s;
  }

 private:
  const nlohmann::json& doc_;
  std::string origin_;
  std::optional<JsonLines> lines_;
};

}  // namespace detail

/// Parses and validates a spec document. Errors carry origin:line and the JSON pointer.
inline NetworkSpec parse_spec(const nlohmann::json& doc, const std::string& origin = "spec",
                              std::string_view text = {}) {
  std::optional<detail::JsonLines> lines;
  if (!text.empty()) lines.emplace(text);
  return detail::SpecReader(doc, origin, std::move(lines)).read();
}

inline nlohmann::json parse_spec_text(std::string_view text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ValidationError(origin + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
  }
}

inline NetworkSpec parse_spec(std::string_view text, const std::string& origin = "spec") {
  return parse_spec(parse_spec_text(text, origin), origin, text);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NetworkSpec load_spec(const std::string& path) {
  const auto text = read_text_file(path);
  return parse_spec(std::string_view(text), path);
}

/// Appends the constant (mu_n)_+ factor and marks the input as angular-augmented.
inline nlohmann::json with_angular(nlohmann::json doc, int n) {
  if (n < 2) throw ValidationError("--angular needs n >= 2");
  const auto depth = parse_spec(doc).generator.depth();
  doc["factors"].push_back({{"name", "angular"},
                            {"angular", {{"kind", "constant"}, {"n", n}, {"depth", depth}, {"pointed", true}}}});
  doc["input"]["angular"] = n;
  return doc;
}

}  // namespace geonet
