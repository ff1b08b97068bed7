#include "aeforge/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "aeforge/error.hpp"
#include "aeforge/util.hpp"

namespace aeforge {

double round_sig6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return std::strtod(buf, nullptr);
}

Json canonicalize(const Json& value) {
  switch (value.type()) {
    case Json::value_t::number_float: {
      const double v = value.get<double>();
      if (!std::isfinite(v)) return nullptr;
      return round_sig6(v);
    }
    case Json::value_t::object: {
      Json out = Json::object();
      for (auto it = value.begin(); it != value.end(); ++it) out[it.key()] = canonicalize(it.value());
      return out;
    }
    case Json::value_t::array: {
      Json out = Json::array();
      for (const auto& v : value) out.push_back(canonicalize(v));
      return out;
    }
    default:
      return value;
  }
}

namespace {

void check_schema(const Json& report) {
  if (!report.is_object() || !report.contains("schema") || !report["schema"].is_string()) {
    throw ValidationError("report has no schema field");
  }
  const auto schema = report["schema"].get<std::string>();
  if (schema != kReportSchema) {
    throw ValidationError("report schema '" + schema + "' does not match supported '" + kReportSchema + "'");
  }
}

}  // namespace

std::string serialize_report(const Json& report) {
  check_schema(report);
  return canonicalize(report).dump(2) + "\n";
}

Json parse_report(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what(), e.byte);
  }
  check_schema(j);
  return j;
}

void save_report(const Json& report, const std::filesystem::path& path) {
  write_text_file(path, serialize_report(report));
}

Json load_report(const std::filesystem::path& path) { return parse_report(read_text_file(path)); }

Json make_report(const std::string& kind) { return Json{{"schema", kReportSchema}, {"kind", kind}}; }

double Tolerances::for_key(const std::string& key) const {
  const auto it = by_key.find(key);
  return it == by_key.end() ? default_abs : it->second;
}

namespace {

void diff_walk(const Json& a, const Json& b, const std::string& path, const std::string& key, const Tolerances& tol,
               std::vector<ReportDiff>& out) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    if (!(std::fabs(x - y) <= tol.for_key(key))) out.push_back({path, "value", x, y});
    return;
  }
  if (a.type() != b.type()) {
    ReportDiff d{path, "type", std::nullopt, std::nullopt};
    if (a.is_number()) d.a = a.get<double>();
    if (b.is_number()) d.b = b.get<double>();
    out.push_back(d);
    return;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      const std::string child = path + "/" + it.key();
      if (!b.contains(it.key())) {
        out.push_back({child, "missing-in-b", std::nullopt, std::nullopt});
      } else {
        diff_walk(it.value(), b[it.key()], child, it.key(), tol, out);
      }
    }
    for (auto it = b.begin(); it != b.end(); ++it) {
      if (!a.contains(it.key())) out.push_back({path + "/" + it.key(), "missing-in-a", std::nullopt, std::nullopt});
    }
    return;
  }
  if (a.is_array()) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) diff_walk(a[i], b[i], path + "/" + std::to_string(i), key, tol, out);
    if (a.size() != b.size()) {
      out.push_back({path, "length", static_cast<double>(a.size()), static_cast<double>(b.size())});
    }
    return;
  }
  if (a != b) out.push_back({path, "value", std::nullopt, std::nullopt});
}

}  // namespace

std::vector<ReportDiff> compare_reports(const Json& a, const Json& b, const Tolerances& tolerances) {
  check_schema(a);
  check_schema(b);
  std::vector<ReportDiff> out;
  diff_walk(canonicalize(a), canonicalize(b), "", "", tolerances, out);
  return out;
}

// ---------------------------------------------------------------- conversions

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json to_json(const Metrics& m) {
  return {{"precision", opt_json(m.precision)},
          {"recall", opt_json(m.recall)},
          {"f1", opt_json(m.f1)},
          {"tpr", opt_json(m.tpr)},
          {"fpr", opt_json(m.fpr)}};
}

Json to_json(const ConfusionCounts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

Json to_json(const RocResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.curve.points) {
    pts.push_back({p.fpr, p.tpr, std::isfinite(p.threshold) ? Json(p.threshold) : Json(nullptr)});
  }
  return {{"auc", r.auc}, {"points", pts}, {"point_format", {"fpr", "tpr", "threshold"}}};
}

Json to_json(const Calibration& c) {
  return {{"threshold", c.threshold},       {"achieved_fpr", c.achieved_fpr}, {"achieved_recall", c.achieved_recall},
          {"fpr_target", c.fpr_target},     {"candidates", c.candidates},     {"target_met", c.target_met}};
}

Json to_json(const Verdict& v) {
  Json crops = Json::array();
  for (const auto& c : v.crops) crops.push_back({{"x", c.corner.x}, {"y", c.corner.y}, {"prob", c.prob}});
  return {{"decision", v.decision}, {"aggregate", v.aggregate}, {"crops", crops}, {"seed", v.seed},
          {"upscaled", v.upscaled}};
}

namespace {

Json class_json(const ClassReport& r) {
  return {{"precision", opt_json(r.precision)},
          {"recall", opt_json(r.recall)},
          {"f1", opt_json(r.f1)},
          {"support", r.support}};
}

std::string csv_num(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

}  // namespace

Json to_json(const SplitEvaluation& e) {
  return {{"original", class_json(e.original)},
          {"reconstructed", class_json(e.reconstructed)},
          {"counts", to_json(e.counts)},
          {"accuracy", e.accuracy}};
}

Json to_json(const SourceDecisions& d) {
  Json errors = Json::array();
  for (const auto& e : d.errors) errors.push_back({{"path", e.path}, {"message", e.message}});
  return {{"source", d.source},
          {"label", label_name(d.label)},
          {"metric", d.label == Label::original ? "fpr" : "tpr"},
          {"evaluated", d.evaluated},
          {"skipped", d.skipped},
          {"skip_reason", d.skip_reason},
          {"errors", errors},
          {"tries", d.tries},
          {"positives_1_try", d.positives_single},
          {"positives_n_tries", d.positives_multi},
          {"rate_1_try", opt_json(d.rate_single())},
          {"rate_n_tries", opt_json(d.rate_multi())}};
}

Json to_json(const RobustnessGrid& g) {
  Json cells = Json::array();
  for (const auto& c : g.cells) {
    cells.push_back({{"source", c.source},
                     {"transform", c.transform},
                     {"label", label_name(c.label)},
                     {"metric", c.label == Label::original ? "fpr" : "tpr"},
                     {"rate", opt_json(c.rate)},
                     {"evaluated", c.evaluated},
                     {"skipped", c.skipped},
                     {"errors", c.errors},
                     {"skip_reason", c.skip_reason}});
  }
  return {{"tries", g.tries},
          {"threshold", g.threshold},
          {"sources", g.sources},
          {"transforms", g.transforms},
          {"cells", cells}};
}

Json to_json(const ArtifactRow& row) {
  auto stats = [](const std::optional<ColorStats>& s) -> Json {
    if (!s) return nullptr;
    return {{"unique_colors", s->unique_colors}, {"bw_fraction", s->bw_fraction}};
  };
  return {{"name", row.name},
          {"kind", row.kind},
          {"default", stats(row.base)},
          {"jpeg85", stats(row.jpeg85)},
          {"resize50", stats(row.resize50)}};
}

std::string split_evaluation_csv(const SplitEvaluation& e) {
  std::string out = "class,precision,recall,f1,support\n";
  auto row = [&](const char* name, const ClassReport& r) {
    out += std::string(name) + "," + csv_num(r.precision) + "," + csv_num(r.recall) + "," + csv_num(r.f1) + "," +
           std::to_string(r.support) + "\n";
  };
  row("Original", e.original);
  row("Reconstructed", e.reconstructed);
  return out;
}

std::string decisions_csv(std::span<const SourceDecisions> sources) {
  std::string out = "source,label,metric,evaluated,rate_1_try,rate_n_tries\n";
  for (const auto& d : sources) {
    out += d.source + "," + label_name(d.label) + "," + (d.label == Label::original ? "fpr" : "tpr") + "," +
           std::to_string(d.evaluated) + "," + csv_num(d.rate_single()) + "," + csv_num(d.rate_multi()) + "\n";
  }
  return out;
}

std::string robustness_csv(const RobustnessGrid& g) {
  std::string out = "source";
  for (const auto& t : g.transforms) out += "," + t;
  out += "\n";
  for (const auto& s : g.sources) {
    out += s;
    for (const auto& t : g.transforms) {
      const auto* c = g.find(s, t);
      out += ",";
      out += (c && c->rate) ? csv_num(c->rate) : "-";
    }
    out += "\n";
  }
  return out;
}

std::string artifacts_csv(std::span<const ArtifactRow> rows) {
  std::string out =
      "row,unique_colors,bw_fraction,jpeg85_unique_colors,jpeg85_bw_fraction,resize50_unique_colors,"
      "resize50_bw_fraction\n";
  char buf[64];
  auto stats = [&](const std::optional<ColorStats>& s) {
    if (!s) return std::string(",");
    std::snprintf(buf, sizeof buf, "%zu,%.5f", s->unique_colors, s->bw_fraction);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out += r.name + "," + stats(r.base) + "," + stats(r.jpeg85) + "," + stats(r.resize50) + "\n";
  }
  return out;
}

}  // namespace aeforge
