// bistoch: bi-stochastic balancing and component analysis of flow matrices.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bistoch/bistoch.hpp"

namespace fs = std::filesystem;
using bistoch::pipeline::ExitCode;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;  // accepted for test harnesses; nothing here is random
  std::string format = "json";
};

void write_report(const fs::path& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  auto out = bistoch::io::detail::open_out(path, std::ios::out | std::ios::binary);
  out << body;
}

void write_json_or_stdout(const fs::path& path, const json& j) { write_report(path, j.dump(2) + "\n"); }

bool is_newick(const fs::path& p) { return p.extension() == ".nwk" || p.extension() == ".newick"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-stochastic balancing and strong-component analysis of flow matrices"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads for balancing passes")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed (test harnesses only; the pipeline is deterministic)");
  app.add_option("--format", g.format, "Report encoding")->check(CLI::IsMember({"json", "csv"}));

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a matrix from a flow CSV");
  fs::path ingest_flows, ingest_labels, ingest_out;
  ingest->add_option("--flows", ingest_flows, "Flow CSV (origin,dest,flow)")->required();
  ingest->add_option("--labels", ingest_labels, "Label file, one code per line");
  ingest->add_option("--out", ingest_out, "Output matrix (.bstm binary, else dense CSV)")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "Check inputs without writing anything");
  fs::path val_flows, val_labels, val_matrix;
  validate->add_option("--flows", val_flows, "Flow CSV");
  validate->add_option("--labels", val_labels, "Label file");
  validate->add_option("--matrix", val_matrix, "Matrix file");

  // balance
  auto* balance = app.add_subcommand("balance", "Bi-stochastize a matrix");
  fs::path bal_in, bal_out, bal_report;
  std::string bal_method = "sk", bal_variant = "dykstra";
  std::optional<double> bal_tol;
  std::size_t bal_max_iter = bistoch::kDefaultMaxIter;
  bool bal_strict = false;
  balance->add_option("--matrix", bal_in, "Input matrix")->required();
  balance->add_option("--out", bal_out, "Balanced matrix output")->required();
  balance->add_option("--method", bal_method, "sk | sqnorm")->check(CLI::IsMember({"sk", "sqnorm"}));
  balance->add_option("--variant", bal_variant, "dykstra | plain (sqnorm only)")
      ->check(CLI::IsMember({"dykstra", "plain"}));
  balance->add_option("--tol", bal_tol,
                      "Stopping tolerance (sk: max sum deviation, default 1e-12; "
                      "sqnorm: last step delta, default 1e-30)");
  balance->add_option("--max-iter", bal_max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  balance->add_option("--report", bal_report, "ConvergenceReport JSON output");
  balance->add_flag("--strict", bal_strict, "Exit 3 when the tolerance is not reached");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Strong-component hierarchy or unit-entry digraph");
  fs::path cl_matrix, cl_dendro, cl_census;
  std::string cl_mode = "hierarchy";
  double cl_unit_tol = bistoch::kDefaultUnitTolerance;
  std::optional<double> cl_cut;
  cluster->add_option("--matrix", cl_matrix, "Balanced matrix")->required();
  cluster->add_option("--mode", cl_mode, "hierarchy | unit-digraph")
      ->check(CLI::IsMember({"hierarchy", "unit-digraph"}));
  cluster->add_option("--unit-tol", cl_unit_tol, "Unit-entry tolerance");
  cluster->add_option("--cut", cl_cut, "Cut the hierarchy at this threshold");
  cluster->add_option("--out-dendrogram", cl_dendro, "Dendrogram output (.nwk for Newick, else JSON)");
  cluster->add_option("--out-census", cl_census, "Census output");

  // census
  auto* census = app.add_subcommand("census", "Strong or weak component census");
  fs::path ce_matrix, ce_out;
  std::string ce_kind = "strong";
  double ce_unit_tol = bistoch::kDefaultUnitTolerance;
  std::optional<double> ce_threshold;
  census->add_option("--matrix", ce_matrix, "Balanced matrix")->required();
  census->add_option("--kind", ce_kind, "strong | weak")->check(CLI::IsMember({"strong", "weak"}));
  census->add_option("--unit-tol", ce_unit_tol, "Unit-entry tolerance");
  census->add_option("--threshold", ce_threshold,
                     "Use the threshold digraph at t instead of the unit-entry digraph");
  census->add_option("--out", ce_out, "Census output (default stdout)");

  // spectrum
  auto* spectrum = app.add_subcommand("spectrum", "Leading eigenvalues");
  fs::path sp_matrix, sp_out;
  std::size_t sp_k = 9;
  spectrum->add_option("--matrix", sp_matrix, "Matrix")->required();
  spectrum->add_option("-k", sp_k, "Number of eigenvalues")->check(CLI::PositiveNumber);
  spectrum->add_option("--out", sp_out, "Output (default stdout)");

  // report
  auto* report = app.add_subcommand("report", "Matrix statistics and correlations");
  fs::path rp_matrix, rp_out;
  std::vector<fs::path> rp_compare;
  double rp_nonzero = bistoch::kDefaultNonzeroThreshold, rp_unit = bistoch::kDefaultUnitTolerance;
  report->add_option("--matrix", rp_matrix, "Matrix")->required();
  report->add_option("--compare", rp_compare, "Matrices to correlate against (same labels)");
  report->add_option("--nonzero-threshold", rp_nonzero, "Diagonal census cut");
  report->add_option("--unit-tol", rp_unit, "Unit-entry tolerance");
  report->add_option("--out", rp_out, "Output (default stdout)");

  // power
  auto* power = app.add_subcommand("power", "Matrix power A^k");
  fs::path pw_matrix, pw_out;
  unsigned pw_k = 2;
  power->add_option("--matrix", pw_matrix, "Matrix")->required();
  power->add_option("-k", pw_k, "Exponent (>= 1)")->required();
  power->add_option("--out", pw_out, "Output matrix")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Ingest, balance, cluster, census, spectrum, summary");
  bistoch::pipeline::PipelineConfig cfg;
  fs::path pl_flows, pl_labels, pl_matrix;
  std::string pl_method = "both", pl_variant = "dykstra";
  pipe->add_option("--flows", pl_flows, "Flow CSV");
  pipe->add_option("--labels", pl_labels, "Label file");
  pipe->add_option("--matrix", pl_matrix, "Pre-built raw matrix instead of a flow CSV");
  pipe->add_option("--out-dir", cfg.out_dir, "Artifact directory")->required();
  pipe->add_option("--method", pl_method, "sk | sqnorm | both")
      ->check(CLI::IsMember({"sk", "sqnorm", "both"}));
  pipe->add_option("--variant", pl_variant, "dykstra | plain")->check(CLI::IsMember({"dykstra", "plain"}));
  pipe->add_option("--sk-tol", cfg.sk_tol, "Sinkhorn-Knopp tolerance");
  pipe->add_option("--sqnorm-tol", cfg.sqnorm_tol, "Squared-norm tolerance");
  pipe->add_option("--max-iter", cfg.max_iter, "Iteration cap");
  pipe->add_option("--unit-tol", cfg.unit_tolerance, "Unit-entry tolerance");
  pipe->add_option("--nonzero-threshold", cfg.nonzero_threshold, "Nonzero cut");
  pipe->add_option("-k", cfg.spectrum_k, "Eigenvalues to report");
  pipe->add_option("--matrix-format", cfg.matrix_format, "bstm | csv")
      ->check(CLI::IsMember({"bstm", "csv"}));
  pipe->add_flag("--strict", cfg.strict, "Exit 3 when balancing does not converge");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ExitCode::kSuccess : ExitCode::kInvalidInput;
  }

  const bool csv = g.format == "csv";
  try {
    if (*ingest) {
      auto records = bistoch::io::read_flow_csv(ingest_flows);
      std::optional<std::vector<bistoch::RegionId>> labels;
      if (!ingest_labels.empty()) labels = bistoch::io::read_labels(ingest_labels);
      bistoch::io::write_matrix(bistoch::load_flows(records, std::move(labels)), ingest_out);
    } else if (*validate) {
      bistoch::pipeline::PipelineConfig vc;
      if (!val_flows.empty()) vc.flows = val_flows;
      if (!val_labels.empty()) vc.labels = val_labels;
      if (!val_matrix.empty()) vc.matrix = val_matrix;
      vc.out_dir = ".";
      const auto rep = bistoch::pipeline::validate_inputs(vc);
      if (!rep.ok()) {
        std::cerr << rep.to_string();
        return ExitCode::kInvalidInput;
      }
      std::cout << "ok\n";
    } else if (*balance) {
      const auto a = bistoch::io::read_matrix(bal_in);
      bistoch::BalanceResult res = [&] {
        if (bal_method == "sk")
          return bistoch::sinkhorn_knopp(
              a, {bal_tol.value_or(bistoch::kSinkhornDefaultTol), bal_max_iter, g.threads});
        bistoch::SquaredNormOptions o;
        o.tol = bal_tol.value_or(bistoch::kSquaredNormDefaultTol);
        o.max_iter = bal_max_iter;
        o.variant = bal_variant == "plain" ? bistoch::SquaredNormVariant::PlainAlternation
                                           : bistoch::SquaredNormVariant::Dykstra;
        o.threads = g.threads;
        return bistoch::squared_norm_bistochastize(a, o);
      }();
      bistoch::io::write_matrix(res.matrix, bal_out);
      const auto rj = bistoch::exporting::to_json(res.report);
      if (!bal_report.empty()) write_json_or_stdout(bal_report, rj);
      if (bal_strict && !res.report.converged) {
        std::cerr << "balance: not converged after " << res.report.iterations << " iterations\n";
        return ExitCode::kConvergenceFailure;
      }
    } else if (*cluster) {
      const auto b = bistoch::io::read_matrix(cl_matrix);
      if (cl_mode == "hierarchy") {
        const auto d = bistoch::strong_component_hierarchy(b);
        if (!cl_dendro.empty()) {
          if (is_newick(cl_dendro)) {
            std::ostringstream os;
            bistoch::exporting::write_newick(d, os);
            write_report(cl_dendro, os.str());
          } else {
            write_json_or_stdout(cl_dendro, bistoch::exporting::to_json(d));
          }
        }
        if (!cl_census.empty()) {
          if (!cl_cut) throw bistoch::invalid_input("--out-census in hierarchy mode needs --cut");
          const auto p = bistoch::cut_dendrogram(d, *cl_cut);
          const auto gr = bistoch::threshold_digraph(b, *cl_cut);
          const auto c = bistoch::component_census(p, gr, b, cl_unit_tol);
          std::ostringstream os;
          if (csv)
            bistoch::exporting::write_census_csv(c, os);
          else
            os << bistoch::exporting::to_json(c).dump(2) << '\n';
          write_report(cl_census, os.str());
        }
      } else {
        const auto unit = bistoch::unit_entry_digraph(b, cl_unit_tol);
        if (!cl_dendro.empty()) {
          std::ostringstream os;
          bistoch::exporting::write_arcs_csv(unit, os);
          write_report(cl_dendro, os.str());
        }
        const auto c =
            bistoch::component_census(bistoch::strong_components(unit), unit, b, cl_unit_tol);
        std::ostringstream os;
        if (csv)
          bistoch::exporting::write_census_csv(c, os);
        else
          os << bistoch::exporting::to_json(c).dump(2) << '\n';
        write_report(cl_census, os.str());
      }
    } else if (*census) {
      const auto b = bistoch::io::read_matrix(ce_matrix);
      const auto gr = ce_threshold ? bistoch::threshold_digraph(b, *ce_threshold)
                                   : bistoch::unit_entry_digraph(b, ce_unit_tol);
      const auto p = ce_kind == "strong" ? bistoch::strong_components(gr) : bistoch::weak_components(gr);
      const auto c = bistoch::component_census(p, gr, b, ce_unit_tol);
      std::ostringstream os;
      if (csv)
        bistoch::exporting::write_census_csv(c, os);
      else
        os << bistoch::exporting::to_json(c).dump(2) << '\n';
      write_report(ce_out, os.str());
    } else if (*spectrum) {
      const auto b = bistoch::io::read_matrix(sp_matrix);
      const auto s = bistoch::leading_eigenvalues(b, sp_k);
      std::ostringstream os;
      if (csv)
        bistoch::exporting::write_spectrum_csv(s, os);
      else
        os << bistoch::exporting::to_json(s).dump(2) << '\n';
      write_report(sp_out, os.str());
    } else if (*report) {
      const auto m = bistoch::io::read_matrix(rp_matrix);
      json j = bistoch::exporting::to_json(bistoch::matrix_stats(m, rp_nonzero, rp_unit));
      j["hollow"] = m.hollow();
      j["deviation"] = bistoch::bistochastic_deviation(m);
      json corr = json::object();
      for (const auto& other : rp_compare)
        corr[other.string()] = bistoch::correlation(m, bistoch::io::read_matrix(other));
      j["correlations"] = std::move(corr);
      if (csv) {
        std::ostringstream os;
        os << "key,value\n";
        for (const auto& [key, v] : j.items())
          if (v.is_primitive()) os << key << ',' << v.dump() << '\n';
        for (const auto& [key, v] : j["correlations"].items())
          os << bistoch::io::detail::quote("correlation:" + key) << ',' << v.dump() << '\n';
        write_report(rp_out, os.str());
      } else {
        write_json_or_stdout(rp_out, j);
      }
    } else if (*power) {
      const auto m = bistoch::io::read_matrix(pw_matrix);
      bistoch::io::write_matrix(bistoch::matrix_power(m, pw_k), pw_out);
    } else if (*pipe) {
      if (!pl_flows.empty()) cfg.flows = pl_flows;
      if (!pl_labels.empty()) cfg.labels = pl_labels;
      if (!pl_matrix.empty()) cfg.matrix = pl_matrix;
      using bistoch::pipeline::Method;
      if (pl_method == "sk") cfg.methods = {Method::Sinkhorn};
      else if (pl_method == "sqnorm") cfg.methods = {Method::SquaredNorm};
      cfg.variant = pl_variant == "plain" ? bistoch::SquaredNormVariant::PlainAlternation
                                          : bistoch::SquaredNormVariant::Dykstra;
      cfg.threads = g.threads;
      const auto res = bistoch::pipeline::run_pipeline(cfg);
      if (res.exit_code != ExitCode::kSuccess) {
        std::cerr << "pipeline failed at stage '" << res.failed_stage << "': " << res.diagnostic
                  << '\n';
        return res.exit_code;
      }
      std::cout << res.summary.dump(2) << '\n';
    }
  } catch (const bistoch::invalid_input& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return ExitCode::kInvalidInput;
  } catch (const bistoch::spectral_error& e) {
    std::cerr << "convergence failure: " << e.what() << '\n';
    return ExitCode::kConvergenceFailure;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return ExitCode::kInternalError;
  }
  return ExitCode::kSuccess;
}
