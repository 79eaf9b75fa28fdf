#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "designbench.hpp"
#include "designbench/analysis.hpp"
#include "designbench/config.hpp"
#include "designbench/verify.hpp"

namespace db = designbench;
using json = nlohmann::ordered_json;

namespace {

enum exit_code : int { ok = 0, usage = 2, data = 3, numerical = 4, verify_failed = 5 };

class io_error : public db::error {
 public:
  using db::error::error;
};

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename Enum>
json optional_name(const std::optional<Enum>& v) {
  return v ? json(std::string(db::to_string(*v))) : json(nullptr);
}

std::vector<std::string> split_names(const std::string& s) { return db::detail::split_list(s); }

json analysis_json(const db::AnalysisReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"estimator", db::to_string(r.estimator)},
                    {"se_method", optional_name(r.se_method)},
                    {"estimate", r.estimate},
                    {"se", optional_number(r.se)},
                    {"t_stat", optional_number(r.t_stat)},
                    {"ci_lower", optional_number(r.ci_lower)},
                    {"ci_upper", optional_number(r.ci_upper)},
                    {"clamped", r.clamped}});
  }
  return {{"n", rep.n},
          {"n1", rep.n1},
          {"n0", rep.n0},
          {"covariates", rep.covariates},
          {"stratum", rep.stratum ? json(*rep.stratum) : json(nullptr)},
          {"strata", rep.strata},
          {"level", rep.level},
          {"rows", rows}};
}

json simulation_json(const db::SimResult& res) {
  const db::SimConfig& c = res.config;
  json estimators = json::array(), se_methods = json::array(), pops = json::array(), rows = json::array();
  for (auto e : c.estimators) estimators.push_back(db::to_string(e));
  for (auto m : c.se_methods) se_methods.push_back(db::to_string(m));
  for (const auto& p : res.populations) {
    pops.push_back({{"p", p.p}, {"tau", p.tau}, {"sigma_L2", p.sigma_L2}, {"sigma_W2", p.sigma_W2}});
  }
  for (const auto& r : res.rows) {
    rows.push_back({{"design", r.design},
                    {"df", r.df},
                    {"error_kind", db::to_string(r.error_kind)},
                    {"p", r.p},
                    {"estimator", db::to_string(r.estimator)},
                    {"se_method", optional_name(r.se_method)},
                    {"bias", r.bias},
                    {"relative_bias", optional_number(r.relative_bias)},
                    {"sd", r.sd},
                    {"sd_ratio_vs_cf", optional_number(r.sd_ratio_vs_cf)},
                    {"coverage", optional_number(r.coverage)},
                    {"mean_se", optional_number(r.mean_se)},
                    {"failures", r.failures},
                    {"reps", r.reps}});
  }
  return {{"config",
           {{"n", c.n},
            {"pi1", c.pi1},
            {"p_grid", c.p_grid},
            {"df", c.df},
            {"error_kind", db::to_string(c.error_kind)},
            {"reps", c.reps},
            {"seed", c.master_seed},
            {"estimators", estimators},
            {"se_methods", se_methods},
            {"ci_level", c.ci_level}}},
          {"populations", pops},
          {"rows", rows}};
}

unsigned resolve_threads(const std::optional<unsigned>& flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("DESIGNBENCH_THREADS")) {
    const auto v = db::parse_number(env);
    if (!v || *v < 1 || *v != static_cast<double>(static_cast<unsigned>(*v))) {
      throw db::config_error("DESIGNBENCH_THREADS must be a positive integer");
    }
    return static_cast<unsigned>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  out.close();
  if (!out) throw io_error("cannot write '" + path.string() + "'");
}

struct AnalyzeArgs {
  std::string input;
  std::string outcome;
  std::string treatment;
  std::string covariates;
  std::string stratum;
  std::string estimators;
  std::string se;
  double level = 0.95;
  std::string format = "table";
};

int run_analyze(const AnalyzeArgs& a) {
  db::AnalysisRequest req;
  req.outcome = a.outcome;
  req.treatment = a.treatment;
  if (a.covariates == "all") {
    req.all_covariates = true;
  } else {
    req.covariates = split_names(a.covariates);
  }
  if (!a.stratum.empty()) {
    req.stratum = a.stratum;
    req.estimators = {db::EstimatorId::cf};
    req.se_methods = {db::VarianceMethod::hc3, db::VarianceMethod::dbhc3};
  }
  try {
    if (!a.estimators.empty()) {
      req.estimators.clear();
      for (const auto& e : split_names(a.estimators)) req.estimators.push_back(db::parse_estimator(e));
    }
    if (!a.se.empty()) {
      req.se_methods.clear();
      if (a.se != "none") {
        for (const auto& m : split_names(a.se)) req.se_methods.push_back(db::parse_variance_method(m));
      }
    }
  } catch (const db::parse_error& e) {
    throw db::config_error(e.what());
  }
  req.level = a.level;
  const db::DataTable table = db::read_csv_file(a.input);
  const db::AnalysisReport rep = db::analyze(table, req);
  if (a.format == "csv") {
    db::write_analysis_csv(std::cout, rep);
  } else if (a.format == "json") {
    std::cout << analysis_json(rep).dump(2) << '\n';
  } else {
    db::write_analysis_table(std::cout, rep);
  }
  return ok;
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<unsigned> threads;
  std::vector<std::string> overrides;
};

int run_simulate(const SimulateArgs& a) {
  db::CampaignConfig cfg = db::read_campaign_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw db::config_error("--set expects KEY=VALUE, got '" + kv + "'");
    db::apply_config_value(cfg, db::detail::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  if (!a.out.empty()) cfg.out_dir = a.out;
  db::validate_campaign(cfg);
  const unsigned threads = resolve_threads(a.threads);

  const db::SimResult res = db::run_monte_carlo(cfg.sim, threads);

  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw io_error("cannot create '" + cfg.out_dir + "': " + ec.message());
  const std::filesystem::path base = std::filesystem::path(cfg.out_dir) / ("simresult_" + cfg.sim.design_name());
  std::ostringstream csv;
  db::write_csv(csv, res);
  write_file(base.string() + ".csv", csv.str());
  write_file(base.string() + ".json", simulation_json(res).dump(2) + "\n");

  db::write_summary(std::cout, res);
  std::cout << "wrote " << base.string() << ".csv and .json\n";
  return ok;
}

int run_verify_suite(const std::string& suite) {
  const auto checks = db::run_verify(db::parse_verify_suite(suite));
  bool all_passed = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.suite << "  " << c.name << "  " << c.detail << '\n';
    all_passed = all_passed && c.passed;
  }
  std::cout << (all_passed ? "all checks passed" : "verification failed") << '\n';
  return all_passed ? ok : verify_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-based average treatment effect estimators, variance estimators and simulations"};
  app.require_subcommand(1);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Estimate treatment effects from a CSV file");
  analyze->add_option("--input", an.input, "CSV file with a header row")->required();
  analyze->add_option("--outcome", an.outcome, "Outcome column")->required();
  analyze->add_option("--treatment", an.treatment, "Binary 0/1 treatment column")->required();
  analyze->add_option("--covariates", an.covariates, "Comma-separated covariate columns, or 'all'");
  analyze->add_option("--stratum", an.stratum, "Stratum label column");
  analyze->add_option("--estimators", an.estimators, "Subset of dif,adj,bc,cf,unbiased");
  analyze->add_option("--se", an.se, "Subset of hc0,hc2,hc3,dbhc3, or 'none'");
  analyze->add_option("--level", an.level, "Confidence level")->capture_default_str();
  analyze->add_option("--format", an.format, "Output format")
      ->check(CLI::IsMember({"table", "csv", "json"}))
      ->capture_default_str();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo campaign from a key=value config file");
  simulate->add_option("--config", sim.config, "Config file")->required();
  simulate->add_option("--out", sim.out, "Output directory (overrides out_dir)");
  simulate->add_option("--threads", sim.threads, "Worker threads (default: DESIGNBENCH_THREADS or all cores)");
  simulate->add_option("--set", sim.overrides, "Override a config key, KEY=VALUE (repeatable)");

  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "Run the exact verification oracles");
  verify->add_option("suite", suite, "moments, unbiasedness, loo, projections or all")
      ->check(CLI::IsMember({"moments", "unbiasedness", "loo", "projections", "all"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    if (*analyze) return run_analyze(an);
    if (*simulate) return run_simulate(sim);
    return run_verify_suite(suite);
  } catch (const db::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return usage;
  } catch (const db::parse_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return data;
  } catch (const db::error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return numerical;
  }
}
