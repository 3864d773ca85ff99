#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bistoch/bistochastic.hpp"
#include "bistoch/census.hpp"
#include "bistoch/error.hpp"
#include "bistoch/export.hpp"
#include "bistoch/flow_matrix.hpp"
#include "bistoch/graph.hpp"
#include "bistoch/hierarchy.hpp"
#include "bistoch/io.hpp"
#include "bistoch/spectral.hpp"

namespace bistoch::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int {
  kSuccess = 0,
  kInvalidInput = 2,
  kConvergenceFailure = 3,
  kInternalError = 4,
};

enum class Method { Sinkhorn, SquaredNorm };

inline std::string method_key(Method m) { return m == Method::Sinkhorn ? "sk" : "sqnorm"; }

struct PipelineConfig {
  // Exactly one of flows / matrix supplies the raw table.
  std::optional<fs::path> flows;
  std::optional<fs::path> labels;
  std::optional<fs::path> matrix;
  fs::path out_dir;

  std::vector<Method> methods{Method::Sinkhorn, Method::SquaredNorm};
  SquaredNormVariant variant = SquaredNormVariant::Dykstra;
  double sk_tol = kSinkhornDefaultTol;
  double sqnorm_tol = kSquaredNormDefaultTol;
  std::size_t max_iter = kDefaultMaxIter;

  double unit_tolerance = kDefaultUnitTolerance;
  double nonzero_threshold = kDefaultNonzeroThreshold;
  std::size_t spectrum_k = 9;
  std::size_t cosmopolitan_top = 10;
  bool strict = false;
  unsigned threads = 1;
  // Matrix artifacts: "bstm" (binary) or "csv" (dense CSV).
  std::string matrix_format = "bstm";
};

struct ValidationIssue {
  std::string source;
  std::size_t line = 0;  // 0 when not line-specific
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& i : issues) {
      os << i.source;
      if (i.line) os << ":" << i.line;
      os << ": " << i.message << '\n';
    }
    return os.str();
  }
};

namespace detail {

inline void check_flow_csv(const fs::path& path, const std::set<std::string>* known,
                           ValidationReport& rep) {
  const std::string src = path.string();
  std::ifstream in(path);
  if (!in) {
    rep.issues.push_back({src, 0, "cannot open file"});
    return;
  }
  std::string line;
  std::size_t line_no = 0;
  if (!io::detail::next_line(in, line, line_no)) {
    rep.issues.push_back({src, 0, "empty file (missing header)"});
    return;
  }
  try {
    auto header = io::detail::split_csv_line(line, line_no);
    for (auto& h : header) h = std::string(io::detail::trim(h));
    if (header != std::vector<std::string>{"origin", "dest", "flow"})
      rep.issues.push_back({src, 1, "expected header 'origin,dest,flow'"});
  } catch (const std::exception& e) {
    rep.issues.push_back({src, 1, e.what()});
  }
  std::size_t records = 0;
  while (io::detail::next_line(in, line, line_no)) {
    if (io::detail::trim(line).empty()) continue;
    try {
      const auto f = io::detail::split_csv_line(line, line_no);
      if (f.size() != 3) {
        rep.issues.push_back({src, line_no, "expected 3 fields, got " + std::to_string(f.size())});
        continue;
      }
      ++records;
      for (int k = 0; k < 2; ++k) {
        const std::string code(io::detail::trim(f[k]));
        if (code.empty())
          rep.issues.push_back({src, line_no, "empty region code"});
        else if (known && !known->count(code))
          rep.issues.push_back({src, line_no, "code '" + code + "' not in label file"});
      }
      const double v = io::detail::parse_double(f[2], line_no);
      if (!std::isfinite(v))
        rep.issues.push_back({src, line_no, "non-finite flow"});
      else if (v < 0.0)
        rep.issues.push_back({src, line_no, "negative flow"});
    } catch (const std::exception& e) {
      rep.issues.push_back({src, line_no, e.what()});
    }
  }
  if (records == 0) rep.issues.push_back({src, 0, "no flow records"});
}

}  // namespace detail

// Checks inputs without touching any output. Problems are collected, never
// thrown.
inline ValidationReport validate_inputs(const PipelineConfig& cfg) {
  ValidationReport rep;
  if (cfg.flows.has_value() == cfg.matrix.has_value())
    rep.issues.push_back({"config", 0, "exactly one of a flow CSV or a matrix file is required"});

  std::optional<std::set<std::string>> known;
  if (cfg.labels) {
    const std::string src = cfg.labels->string();
    std::ifstream in(*cfg.labels);
    if (!in) {
      rep.issues.push_back({src, 0, "cannot open file"});
    } else {
      known.emplace();
      std::string line;
      std::size_t line_no = 0;
      while (io::detail::next_line(in, line, line_no)) {
        const std::string code(io::detail::trim(line));
        if (code.empty()) continue;
        if (!known->insert(code).second)
          rep.issues.push_back({src, line_no, "duplicate label '" + code + "'"});
      }
      if (known->empty()) rep.issues.push_back({src, 0, "no labels"});
    }
  }
  if (cfg.flows) detail::check_flow_csv(*cfg.flows, known ? &*known : nullptr, rep);
  if (cfg.matrix) {
    try {
      (void)io::read_matrix(*cfg.matrix);
    } catch (const std::exception& e) {
      rep.issues.push_back({cfg.matrix->string(), 0, e.what()});
    }
  }

  if (!(cfg.sk_tol > 0.0) || !(cfg.sqnorm_tol > 0.0))
    rep.issues.push_back({"config", 0, "tolerances must be positive"});
  if (!(cfg.unit_tolerance > 0.0) || cfg.nonzero_threshold < 0.0)
    rep.issues.push_back({"config", 0, "unit tolerance must be positive, nonzero threshold >= 0"});
  if (cfg.max_iter == 0) rep.issues.push_back({"config", 0, "max-iter must be positive"});
  if (cfg.methods.empty()) rep.issues.push_back({"config", 0, "no balancing method selected"});
  if (cfg.matrix_format != "bstm" && cfg.matrix_format != "csv")
    rep.issues.push_back({"config", 0, "matrix format must be 'bstm' or 'csv'"});
  if (cfg.out_dir.empty())
    rep.issues.push_back({"config", 0, "output directory is required"});
  else if (fs::exists(cfg.out_dir) && !fs::is_directory(cfg.out_dir))
    rep.issues.push_back({cfg.out_dir.string(), 0, "output path exists and is not a directory"});
  return rep;
}

struct PipelineResult {
  int exit_code = kSuccess;
  std::string failed_stage;
  std::string diagnostic;
  json summary;
};

namespace detail {

struct StageFailure : std::runtime_error {
  StageFailure(std::string stage_name, int code, const std::string& what)
      : std::runtime_error(what), stage(std::move(stage_name)), exit_code(code) {}
  std::string stage;
  int exit_code;
};

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = io::detail::open_out(path, std::ios::out | std::ios::binary);
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json partition_summary(const ComponentCensus& c) {
  return {{"component_count", c.partition.component_count()},
          {"largest_component", c.partition.largest_component_size()},
          {"size_histogram", exporting::histogram_json(c.size_histogram)}};
}

}  // namespace detail

// Headline statistics of one balanced matrix. Pure function of the matrix,
// so it can be recomputed from the on-disk artifact.
inline json balanced_summary(const FlowMatrix& b, const PipelineConfig& cfg) {
  const auto stats = matrix_stats(b, cfg.nonzero_threshold, cfg.unit_tolerance);
  const auto unit = unit_entry_digraph(b, cfg.unit_tolerance);
  const auto strong = component_census(strong_components(unit), unit, b, cfg.unit_tolerance);
  const auto weak = component_census(weak_components(unit), unit, b, cfg.unit_tolerance);
  json interstate = json::object();
  for (const auto& [size, count] : strong.size_histogram)
    if (size >= 2) interstate[std::to_string(size)] = strong.interstate_count(size);
  json isolated = json::object();
  for (auto cls : {IsolatedClass::UnitInRowAndColumn, IsolatedClass::UnitInRowXorColumn,
                   IsolatedClass::NoUnit})
    isolated[std::string(to_string(cls))] = strong.isolated_count(cls);
  return {{"stats", exporting::to_json(stats)},
          {"deviation", bistochastic_deviation(b)},
          {"unit_digraph_arcs", unit.arcs().size()},
          {"strong", detail::partition_summary(strong)},
          {"interstate_by_size", std::move(interstate)},
          {"isolated_classification_counts", std::move(isolated)},
          {"weak", detail::partition_summary(weak)}};
}

// ingest -> balance -> unit-digraph censuses, hierarchy, spectrum -> summary.
// On failure the outputs written so far are kept and a FAILED marker names
// the stage.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult result;
  const auto report = validate_inputs(cfg);
  if (!report.ok()) {
    result.exit_code = kInvalidInput;
    result.failed_stage = "validate";
    result.diagnostic = report.to_string();
    if (!cfg.out_dir.empty() && (!fs::exists(cfg.out_dir) || fs::is_directory(cfg.out_dir))) {
      std::error_code ec;
      fs::create_directories(cfg.out_dir, ec);
      if (!ec) detail::write_text(cfg.out_dir / "FAILED", "stage: validate\n" + result.diagnostic);
    }
    return result;
  }

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  const std::string ext = "." + cfg.matrix_format;
  std::string stage = "ingest";
  try {
    json summary;
    auto raw = [&] {
      try {
        if (cfg.matrix) return io::read_matrix(*cfg.matrix);
        auto records = io::read_flow_csv(*cfg.flows);
        std::optional<std::vector<RegionId>> labels;
        if (cfg.labels) labels = io::read_labels(*cfg.labels);
        return load_flows(records, std::move(labels));
      } catch (const invalid_input& e) {
        throw detail::StageFailure(stage, kInvalidInput, e.what());
      }
    }();
    io::write_matrix(raw, out / ("raw" + ext));
    summary["n"] = raw.size();
    summary["raw"] = {{"stats", exporting::to_json(
                                    matrix_stats(raw, cfg.nonzero_threshold, cfg.unit_tolerance))},
                      {"hollow", raw.hollow()}};

    std::map<std::string, FlowMatrix> balanced;
    json methods = json::object();
    for (Method m : cfg.methods) {
      const std::string key = method_key(m);
      const fs::path dir = out / key;
      stage = "balance:" + key;
      fs::create_directories(dir);

      BalanceResult res = [&] {
        try {
          if (m == Method::Sinkhorn)
            return sinkhorn_knopp(raw, {cfg.sk_tol, cfg.max_iter, cfg.threads});
          SquaredNormOptions o;
          o.tol = cfg.sqnorm_tol;
          o.max_iter = cfg.max_iter;
          o.variant = cfg.variant;
          o.threads = cfg.threads;
          return squared_norm_bistochastize(raw, o);
        } catch (const invalid_input& e) {
          throw detail::StageFailure(stage, kInvalidInput, e.what());
        }
      }();
      io::write_matrix(res.matrix, dir / ("balanced" + ext));
      detail::write_json(dir / "convergence.json", exporting::to_json(res.report));
      if (cfg.strict && !res.report.converged)
        throw detail::StageFailure(stage, kConvergenceFailure,
                                   "did not converge within " + std::to_string(cfg.max_iter) +
                                       " iterations");

      stage = "census:" + key;
      const FlowMatrix& b = res.matrix;
      const auto unit = unit_entry_digraph(b, cfg.unit_tolerance);
      {
        std::ofstream arcs = io::detail::open_out(dir / "unit_digraph.csv");
        exporting::write_arcs_csv(unit, arcs);
      }
      detail::write_json(dir / "census_strong.json",
                         exporting::to_json(component_census(strong_components(unit), unit, b,
                                                             cfg.unit_tolerance)));
      detail::write_json(dir / "census_weak.json",
                         exporting::to_json(component_census(weak_components(unit), unit, b,
                                                             cfg.unit_tolerance)));

      stage = "cluster:" + key;
      const auto dendrogram = strong_component_hierarchy(b);
      detail::write_json(dir / "dendrogram.json", exporting::to_json(dendrogram));
      {
        std::ofstream nwk = io::detail::open_out(dir / "dendrogram.nwk");
        exporting::write_newick(dendrogram, nwk);
      }

      stage = "spectrum:" + key;
      SpectrumReport spectrum;
      try {
        spectrum = leading_eigenvalues(b, std::min(cfg.spectrum_k, b.size()));
      } catch (const spectral_error& e) {
        detail::write_json(dir / "spectrum.json", exporting::to_json(e.partial()));
        throw detail::StageFailure(stage, kConvergenceFailure, e.what());
      }
      detail::write_json(dir / "spectrum.json", exporting::to_json(spectrum));

      json entry = balanced_summary(b, cfg);
      entry["convergence"] = exporting::to_json(res.report);
      entry["correlation_with_raw"] = [&]() -> json {
        try {
          return correlation(raw, b);
        } catch (const undefined_correlation&) {
          return nullptr;
        }
      }();
      entry["dendrogram_levels"] = dendrogram.merges.size();
      entry["cosmopolitan_top"] =
          exporting::to_json(cosmopolitan_ranking(dendrogram), cfg.cosmopolitan_top);
      entry["spectrum"] = exporting::to_json(spectrum);
      methods[key] = std::move(entry);
      balanced.emplace(key, std::move(res.matrix));
    }

    stage = "report";
    summary["methods"] = std::move(methods);
    if (balanced.size() == 2) {
      try {
        summary["correlation_sk_vs_sqnorm"] = correlation(balanced.at("sk"), balanced.at("sqnorm"));
      } catch (const undefined_correlation&) {
        summary["correlation_sk_vs_sqnorm"] = nullptr;
      }
    }
    detail::write_json(out / "summary.json", summary);
    result.summary = std::move(summary);
  } catch (const detail::StageFailure& e) {
    result.exit_code = e.exit_code;
    result.failed_stage = e.stage;
    result.diagnostic = e.what();
  } catch (const invalid_input& e) {
    result.exit_code = kInvalidInput;
    result.failed_stage = stage;
    result.diagnostic = e.what();
  } catch (const std::exception& e) {
    result.exit_code = kInternalError;
    result.failed_stage = stage;
    result.diagnostic = e.what();
  }
  if (result.exit_code != kSuccess)
    detail::write_text(out / "FAILED",
                       "stage: " + result.failed_stage + "\n" + result.diagnostic + "\n");
  return result;
}

}  // namespace bistoch::pipeline
