#include "pstrat/cli.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pstrat/dataset.hpp"
#include "pstrat/diagnostics.hpp"
#include "pstrat/error.hpp"
#include "pstrat/inference.hpp"
#include "pstrat/pscore.hpp"
#include "pstrat/simulation.hpp"

namespace pstrat {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitInternal = 4;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// FNV-1a, 64 bit.
std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json_file(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

struct Manifest {
  std::string subcommand;
  std::vector<std::string> arguments;
  nlohmann::json inputs = nlohmann::json::array();
  std::optional<std::string> config_hash;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  std::string started_at = utc_now();

  void add_input(const fs::path& path) {
    inputs.push_back({{"path", path.string()}, {"hash", content_hash(read_file(path))}});
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["arguments"] = arguments;
    j["inputs"] = inputs;
    j["config_hash"] = config_hash ? nlohmann::json(*config_hash) : nlohmann::json(nullptr);
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["tool_version"] = kToolVersion;
    j["outputs"] = outputs;
    j["started_at"] = started_at;
    j["finished_at"] = utc_now();
    return j;
  }
};

class OutputDir {
 public:
  OutputDir(const std::string& flag, Manifest& manifest) : manifest_(manifest) {
    if (!flag.empty()) {
      dir_ = flag;
    } else if (const char* env = std::getenv("PSTRAT_OUT_DIR"); env && *env) {
      dir_ = env;
    } else {
      dir_ = ".";
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ValidationError("cannot create output directory '" + dir_.string() + "'");
  }

  const fs::path& path() const { return dir_; }

  template <class Fn>
  void write(const std::string& name, Fn&& fill) {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    fill(out);
    if (!out) throw ValidationError("failed writing '" + path.string() + "'");
    manifest_.outputs.push_back(name);
  }

  void write_json(const std::string& name, const nlohmann::json& j) {
    write(name, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  }

  void finish() {
    const auto path = dir_ / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << manifest_.to_json().dump(2) << '\n';
  }

 private:
  fs::path dir_;
  Manifest& manifest_;
};

struct EstimateArgs {
  std::string data, design, score = "marginal", assumption, estimator = "weighting";
  std::string ci = "analytic", out;
  double level = 0.95;
  int n_boot = 1000;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct BalanceArgs {
  std::string data, design, score = "marginal", out;
  int bins = 5;
};

struct SimulateArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  int reps = 1;
};

struct StudyArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  int jobs = 1;
};

int cmd_estimate(const EstimateArgs& a, Manifest& manifest, std::ostream& out) {
  const auto design = parse_design(a.design);
  PipelineSpec spec;
  spec.score = parse_score_method(a.score);
  spec.assumption = parse_assumption(a.assumption);
  spec.estimator = parse_estimator_kind(a.estimator);
  spec.check(design);
  CIConfig ci;
  ci.method = parse_ci_method(a.ci);
  ci.level = a.level;
  ci.n_boot = a.n_boot;
  ci.seed = a.seed;
  ci.jobs = a.jobs;
  ci.check();

  manifest.add_input(a.data);
  manifest.seed = a.seed;
  const auto data = load_dataset(a.data, design);
  OutputDir dir(a.out, manifest);

  BootstrapCensus census;
  const auto result = estimate_with_ci(data, spec, ci, &census);
  if (result.scores) {
    dir.write("scores.csv", [&](std::ostream& o) { write_scores_csv(o, *result.scores); });
    auto meta = scores_metadata(*result.scores);
    meta["manifest"] = "manifest.json";
    dir.write_json("scores.json", meta);
  }
  auto j = to_json(result.estimates);
  j["manifest"] = "manifest.json";
  if (ci.method == CIMethod::BootstrapPercentile) j["bootstrap"] = to_json(census);
  dir.write_json("estimates.json", j);
  dir.write("estimates.csv", [&](std::ostream& o) { write_estimate_csv(o, result.estimates, true); });
  const auto table = render_table(result.estimates);
  dir.write("estimates.txt", [&](std::ostream& o) { o << table; });
  dir.finish();
  out << table;
  return kExitOk;
}

int cmd_balance(const BalanceArgs& a, Manifest& manifest, std::ostream& out) {
  const auto design = parse_design(a.design);
  const auto method = parse_score_method(a.score);
  if (a.bins < 2) throw ValidationError("--bins must be at least 2");
  manifest.add_input(a.data);
  const auto data = load_dataset(a.data, design);
  if (data.num_covariates() == 0) throw ValidationError("the dataset has no covariates to balance");
  OutputDir dir(a.out, manifest);

  const auto scores = estimate_scores(data, method);
  const auto report = design == Design::OneSided ? balance_within_bins_onesided(data, scores, a.bins)
                                                 : balance_report_twosided(data, scores);
  dir.write("balance.csv", [&](std::ostream& o) { write_balance_csv(o, report); });
  dir.write("balance_plot.csv", [&](std::ostream& o) { write_balance_plot_data(o, report); });
  dir.finish();

  double worst = 0.0;
  int undefined = 0;
  for (const auto& r : report.rows) {
    if (r.bin != kPooledBin) continue;
    if (!r.defined) {
      ++undefined;
    } else {
      worst = std::max(worst, std::abs(r.delta));
    }
  }
  out << "max |normalized difference|: " << format_double(worst) << '\n';
  if (undefined > 0) out << undefined << " row(s) undefined (zero-variance covariate)\n";
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  for (const auto& w : scores.warnings) out << "warning: scores: " << w << '\n';
  return kExitOk;
}

SimConfig sim_config_from(const nlohmann::json& j) {
  if (j.is_object() && j.contains("base")) {
    for (const auto& [key, v] : j.items()) {
      if (key != "base" && key != "description") {
        throw ValidationError("unknown simulate config key '" + key + "'");
      }
    }
    return parse_sim_config(j.at("base"));
  }
  return parse_sim_config(j);
}

int cmd_simulate(const SimulateArgs& a, Manifest& manifest, std::ostream& out) {
  if (a.reps < 1) throw ValidationError("--reps must be at least 1");
  SimConfig config;
  if (!a.config.empty()) {
    manifest.add_input(a.config);
    manifest.config_hash = content_hash(read_file(a.config));
    config = sim_config_from(read_json_file(a.config));
  }
  manifest.seed = a.seed;
  OutputDir dir(a.out, manifest);
  const auto truth = true_estimands(config);

  for (int r = 0; r < a.reps; ++r) {
    // Same stream as replicate r of the first cell of an mc-study.
    const auto seed = derive_seed(a.seed, {0, static_cast<std::uint64_t>(r)});
    const auto draw = simulate(config, seed);
    char suffix[32] = "";
    if (a.reps > 1) std::snprintf(suffix, sizeof suffix, "_%04d", r);
    dir.write(std::string("dataset") + suffix + ".csv",
              [&](std::ostream& o) { write_dataset(o, draw.data); });
    dir.write(std::string("truth") + suffix + ".csv", [&](std::ostream& o) {
      o << "unit_index,high,tau,pi\n";
      for (std::size_t i = 0; i < draw.high.size(); ++i) {
        o << i << ',' << draw.high[i] << ',' << format_double(draw.tau[i]) << ','
          << format_double(draw.pi[i]) << '\n';
      }
    });
  }
  dir.write_json("truth.json", {{"itt_h", truth.itt_h},
                                {"itt_l", truth.itt_l},
                                {"p_high", truth.p_high},
                                {"config", to_json(config)},
                                {"manifest", "manifest.json"}});
  dir.finish();
  out << "wrote " << a.reps << " dataset(s) to " << dir.path().string() << '\n';
  return kExitOk;
}

int cmd_mc_study(const StudyArgs& a, Manifest& manifest, std::ostream& out) {
  manifest.add_input(a.config);
  manifest.config_hash = content_hash(read_file(a.config));
  auto config = parse_study_config(read_json_file(a.config));
  if (a.seed) config.seed = *a.seed;
  if (a.reps) config.reps = *a.reps;
  config.jobs = a.jobs;
  config.check();
  manifest.seed = config.seed;
  OutputDir dir(a.out, manifest);

  const auto result = run_study(config);
  std::ostringstream csv;
  write_study_csv(csv, result);
  dir.write("study.csv", [&](std::ostream& o) { o << csv.str(); });
  dir.finish();
  out << csv.str();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Principal stratification estimators for noncompliance designs", "pstrat"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  const std::vector<std::string> designs{"one-sided", "two-sided"};
  const std::vector<std::string> scores{"cell", "marginal", "joint"};
  const std::vector<std::string> assumptions{"strong-pi", "weak-pi", "weak-pi-er-nt", "both-er",
                                             "er-nt"};

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "fit principal scores and estimate stratum effects");
  est->add_option("--data", ea.data, "input CSV (z,d,y,x1,...)")->required()->check(CLI::ExistingFile);
  est->add_option("--design", ea.design)->required()->check(CLI::IsMember(designs));
  est->add_option("--score", ea.score, "score method")->check(CLI::IsMember(scores))->capture_default_str();
  est->add_option("--assumption", ea.assumption)->required()->check(CLI::IsMember(assumptions));
  est->add_option("--estimator", ea.estimator, "one-sided estimator")
      ->check(CLI::IsMember({"weighting", "subgroup", "plugin"}))
      ->capture_default_str();
  est->add_option("--ci", ea.ci)->check(CLI::IsMember({"analytic", "bootstrap"}))->capture_default_str();
  est->add_option("--level", ea.level)->capture_default_str();
  est->add_option("--n-boot", ea.n_boot)->capture_default_str();
  est->add_option("--seed", ea.seed)->capture_default_str();
  est->add_option("--jobs", ea.jobs)->check(CLI::PositiveNumber)->capture_default_str();
  est->add_option("--out", ea.out, "output directory (default $PSTRAT_OUT_DIR or .)");

  BalanceArgs ba;
  auto* bal = app.add_subcommand("balance", "covariate balance of the fitted principal scores");
  bal->add_option("--data", ba.data)->required()->check(CLI::ExistingFile);
  bal->add_option("--design", ba.design)->required()->check(CLI::IsMember(designs));
  bal->add_option("--score", ba.score)->check(CLI::IsMember(scores))->capture_default_str();
  bal->add_option("--bins", ba.bins, "one-sided score bins")->capture_default_str();
  bal->add_option("--out", ba.out);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "draw data sets from the one-sided simulation model");
  sim->add_option("--config", sa.config, "JSON simulation parameters")->check(CLI::ExistingFile);
  sim->add_option("--seed", sa.seed)->capture_default_str();
  sim->add_option("--reps", sa.reps)->capture_default_str();
  sim->add_option("--out", sa.out);

  StudyArgs sta;
  auto* mc = app.add_subcommand("mc-study", "Monte Carlo bias/coverage study");
  mc->add_option("--config", sta.config, "JSON study config")->required()->check(CLI::ExistingFile);
  mc->add_option("--seed", sta.seed, "overrides the config seed");
  mc->add_option("--reps", sta.reps, "overrides the config reps");
  mc->add_option("--jobs", sta.jobs)->check(CLI::PositiveNumber)->capture_default_str();
  mc->add_option("--out", sta.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  Manifest manifest;
  for (int i = 1; i < argc; ++i) manifest.arguments.emplace_back(argv[i]);
  try {
    if (est->parsed()) {
      manifest.subcommand = "estimate";
      return cmd_estimate(ea, manifest, out);
    }
    if (bal->parsed()) {
      manifest.subcommand = "balance";
      return cmd_balance(ba, manifest, out);
    }
    if (sim->parsed()) {
      manifest.subcommand = "simulate";
      return cmd_simulate(sa, manifest, out);
    }
    manifest.subcommand = "mc-study";
    return cmd_mc_study(sta, manifest, out);
  } catch (const ValidationError& e) {
    err << "error [input]: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    err << "error [input]: " << e.what() << '\n';
    return kExitInput;
  } catch (const EstimationError& e) {
    err << "error [estimation]: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const InvariantViolation& e) {
    err << "error [internal]: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    err << "error [internal]: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace pstrat
