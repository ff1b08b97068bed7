#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aeforge/eval.hpp"
#include "aeforge/inference.hpp"
#include "aeforge/training.hpp"

namespace aeforge {

using Json = nlohmann::json;

inline constexpr const char* kReportSchema = "aeforge-report/1";

// Rounds every float to 6 significant digits; non-finite floats become null.
Json canonicalize(const Json& value);
double round_sig6(double value);

// Canonical text: keys sorted, floats at 6 significant digits, 2-space
// indent, trailing newline. Throws ValidationError without a matching
// "schema" field.
std::string serialize_report(const Json& report);
Json parse_report(const std::string& text);
void save_report(const Json& report, const std::filesystem::path& path);
Json load_report(const std::filesystem::path& path);

// New report skeleton {"schema": ..., "kind": kind}.
Json make_report(const std::string& kind);

struct ReportDiff {
  std::string path;  // JSON pointer
  std::string what;  // "value", "missing-in-a", "missing-in-b", "type"
  std::optional<double> a;
  std::optional<double> b;
};

struct Tolerances {
  double default_abs = 0;
  std::map<std::string, double> by_key;  // last path component -> abs tolerance

  double for_key(const std::string& key) const;
};

// Numeric leaves compared with |a - b| <= tolerance; everything else must
// match exactly.
std::vector<ReportDiff> compare_reports(const Json& a, const Json& b, const Tolerances& tolerances = {});

Json opt_json(const std::optional<double>& v);

Json to_json(const Metrics& m);
Json to_json(const ConfusionCounts& c);
Json to_json(const RocResult& r);
Json to_json(const Calibration& c);
Json to_json(const Verdict& v);
Json to_json(const SplitEvaluation& e);
Json to_json(const SourceDecisions& d);
Json to_json(const RobustnessGrid& g);
Json to_json(const ArtifactRow& row);

// CSV mirrors.
std::string split_evaluation_csv(const SplitEvaluation& e);
std::string decisions_csv(std::span<const SourceDecisions> sources);
std::string robustness_csv(const RobustnessGrid& g);
std::string artifacts_csv(std::span<const ArtifactRow> rows);

}  // namespace aeforge
