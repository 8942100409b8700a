// Batch front end: synth / tune / eval / rank subcommands wiring data
// ingestion, optional XQDA projection, the configured matcher, and CMC
// evaluation. Configuration comes from a JSON document; individual flags
// override single keys. Exit codes: 0 success, 1 usage or configuration
// error, 2 numerical failure, 3 I/O failure.

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <omp.h>

#include "xcrc/dataset.hpp"
#include "xcrc/errors.hpp"
#include "xcrc/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::optional<fs::path> manifest;
  std::optional<xcrc::SynthConfig> synth;
  xcrc::MethodConfig method;
  std::vector<double> lambda_grid;
  int trials = 10;
  std::uint64_t base_seed = 0;
  std::optional<std::uint64_t> tuning_seed;  // default: base_seed - 1
  xcrc::SplitSpec split;
  fs::path output_dir = ".";

  std::uint64_t effective_tuning_seed() const {
    return tuning_seed ? *tuning_seed : base_seed - 1;
  }
};

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

xcrc::KernelSpec kernel_from_json(const json& j) {
  xcrc::KernelSpec spec;
  spec.kind = xcrc::kernel_kind_from_string(j.value("kind", std::string("rbf")));
  if (j.contains("bandwidth") && !j.at("bandwidth").is_null()) {
    if (j.at("bandwidth").is_string()) {
      if (j.at("bandwidth").get<std::string>() != "auto") {
        throw xcrc::ConfigError("kernel bandwidth must be a number or \"auto\"");
      }
    } else {
      spec.bandwidth = j.at("bandwidth").get<double>();
      if (*spec.bandwidth <= 0.0) {
        throw xcrc::ConfigError("kernel bandwidth must be positive");
      }
    }
  }
  return spec;
}

xcrc::SynthConfig synth_from_json(const json& j) {
  xcrc::SynthConfig s;
  s.n_identities = j.value("n_identities", s.n_identities);
  s.m_dim = j.value("m_dim", s.m_dim);
  if (j.contains("transition")) {
    s.transition = xcrc::transition_from_string(j.at("transition"));
  }
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.n_distractors = j.value("n_distractors", s.n_distractors);
  s.seed = j.value("seed", s.seed);
  return s;
}

RunConfig config_from_json(const json& j, const fs::path& config_dir) {
  RunConfig c;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    if (d.contains("manifest")) {
      fs::path p = d.at("manifest").get<std::string>();
      c.manifest = p.is_absolute() ? p : config_dir / p;
    }
    if (d.contains("synth")) c.synth = synth_from_json(d.at("synth"));
  }
  if (j.contains("method")) {
    c.method.method = xcrc::method_from_string(j.at("method"));
  }
  if (j.contains("kernel")) c.method.kernel = kernel_from_json(j.at("kernel"));
  c.method.lambda = j.value("lambda", c.method.lambda);
  if (j.contains("lambda_grid")) {
    c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  }
  if (j.contains("xqda") && !j.at("xqda").is_null()) {
    xcrc::XqdaOptions x;
    x.reg = j.at("xqda").value("reg", x.reg);
    if (j.at("xqda").contains("dim") && !j.at("xqda").at("dim").is_null()) {
      x.dim = j.at("xqda").at("dim").get<Eigen::Index>();
    }
    c.method.xqda = x;
  }
  c.method.l1_max_iters = j.value("l1_max_iters", c.method.l1_max_iters);
  c.method.l1_tolerance = j.value("l1_tolerance", c.method.l1_tolerance);
  c.method.condition_limit =
      j.value("condition_limit", c.method.condition_limit);
  c.method.metric_reg = j.value("metric_reg", c.method.metric_reg);
  c.method.naive_ranking = j.value("naive", c.method.naive_ranking);
  c.trials = j.value("trials", c.trials);
  c.base_seed = j.value("base_seed", c.base_seed);
  if (j.contains("tuning_seed") && !j.at("tuning_seed").is_null()) {
    c.tuning_seed = j.at("tuning_seed").get<std::uint64_t>();
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    if (s.contains("train_count")) c.split.train_count = s.at("train_count");
    if (s.contains("train_fraction")) {
      c.split.train_fraction = s.at("train_fraction");
    }
    c.split.single_shot = s.value("single_shot", c.split.single_shot);
  }
  if (j.contains("output_dir")) {
    fs::path p = j.at("output_dir").get<std::string>();
    c.output_dir = p.is_absolute() ? p : config_dir / p;
  }
  return c;
}

json method_to_json(const xcrc::MethodConfig& m) {
  json j{{"method", xcrc::to_string(m.method)},
         {"lambda", m.lambda},
         {"kernel",
          {{"kind", xcrc::to_string(m.kernel.kind)},
           {"bandwidth", m.kernel.bandwidth ? json(*m.kernel.bandwidth)
                                            : json("auto")}}},
         {"condition_limit", m.condition_limit},
         {"naive", m.naive_ranking}};
  if (m.xqda) {
    j["xqda"] = {{"reg", m.xqda->reg}};
    if (m.xqda->dim) j["xqda"]["dim"] = *m.xqda->dim;
  }
  if (m.method == xcrc::Method::src_direct) {
    j["l1_max_iters"] = m.l1_max_iters;
    j["l1_tolerance"] = m.l1_tolerance;
  }
  if (m.method == xcrc::Method::mahalanobis ||
      m.method == xcrc::Method::kissme) {
    j["metric_reg"] = m.metric_reg;
  }
  return j;
}

xcrc::CrossViewDataset load_configured_dataset(const RunConfig& config) {
  if (config.manifest && config.synth) {
    throw xcrc::ConfigError("choose one dataset source: manifest or synth");
  }
  if (config.manifest) return xcrc::load_dataset(*config.manifest);
  if (config.synth) return xcrc::synth_generate(*config.synth);
  throw xcrc::ConfigError("no dataset configured (dataset.manifest or "
                          "dataset.synth)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw xcrc::IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw xcrc::IoError("write failed for '" + path.string() + "'");
}

void ensure_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw xcrc::IoError("cannot create output directory '" + dir.string() +
                        "': " + ec.message());
  }
}

int cmd_synth(const RunConfig& config) {
  if (!config.synth) {
    throw xcrc::ConfigError("synth: no dataset.synth configuration");
  }
  ensure_output_dir(config.output_dir);
  const xcrc::CrossViewDataset data = xcrc::synth_generate(*config.synth);
  xcrc::save_csv(data.view_a, config.output_dir / "view_a.csv");
  xcrc::save_csv(data.view_b, config.output_dir / "view_b.csv");
  xcrc::DatasetManifest manifest;
  manifest.camera_a = "a";
  manifest.camera_b = "b";
  manifest.files = {"view_a.csv", "view_b.csv"};
  manifest.normalization = xcrc::NormScheme::none;
  manifest.single_shot = true;
  manifest.distractor_ids = data.distractor_ids;
  xcrc::save_manifest(manifest, config.output_dir / "manifest.json");
  std::cout << "wrote " << (config.output_dir / "manifest.json").string()
            << " (" << data.view_a.n() << " paired ids, "
            << data.distractor_ids.size() << " distractors)\n";
  return 0;
}

int cmd_tune(const RunConfig& config) {
  if (config.lambda_grid.empty()) {
    throw xcrc::ConfigError("tune: lambda_grid is empty");
  }
  ensure_output_dir(config.output_dir);
  const xcrc::CrossViewDataset data = load_configured_dataset(config);
  const xcrc::TuneResult result =
      xcrc::lambda_tune(data, config.split, config.method, config.lambda_grid,
                        config.effective_tuning_seed());
  json j{{"grid", result.grid},
         {"rank1_scores", result.rank1},
         {"chosen_lambda", result.best_lambda},
         {"tuning_seed", result.tuning_seed},
         {"method", method_to_json(config.method)}};
  write_text(config.output_dir / "tune.json", j.dump(2) + "\n");
  std::cout << "chosen_lambda " << format_double(result.best_lambda) << "\n";
  return 0;
}

int cmd_eval(const RunConfig& config) {
  ensure_output_dir(config.output_dir);
  const xcrc::CrossViewDataset data = load_configured_dataset(config);
  const auto started = std::chrono::steady_clock::now();
  const xcrc::TrialsResult result = xcrc::run_trials(
      data, config.split, config.method, config.trials, config.base_seed);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();

  // cmc.csv and trials.json are deterministic; timings go to the manifest.
  std::string csv = "rank,mean_rate,std_rate\n";
  for (Eigen::Index k = 0; k < result.mean.rates.size(); ++k) {
    csv += std::to_string(k + 1) + "," + format_double(result.mean.rates[k]) +
           "," + format_double(result.std_rates[k]) + "\n";
  }
  write_text(config.output_dir / "cmc.csv", csv);

  json trials = json::array();
  for (const auto& trial : result.per_trial) {
    std::vector<double> rates(trial.curve.rates.data(),
                              trial.curve.rates.data() +
                                  trial.curve.rates.size());
    trials.push_back({{"seed", trial.seed}, {"rates", rates}});
  }
  write_text(config.output_dir / "trials.json",
             json{{"trials", trials}}.dump(2) + "\n");

  std::vector<std::uint64_t> seeds;
  std::vector<double> trial_seconds;
  for (const auto& trial : result.per_trial) {
    seeds.push_back(trial.seed);
    trial_seconds.push_back(trial.seconds);
  }
  json manifest{{"method", method_to_json(config.method)},
                {"trials", config.trials},
                {"base_seed", config.base_seed},
                {"seeds", seeds},
                {"split",
                 {{"single_shot", config.split.single_shot},
                  {"train_count", config.split.train_count
                                      ? json(*config.split.train_count)
                                      : json()},
                  {"train_fraction", config.split.train_fraction
                                         ? json(*config.split.train_fraction)
                                         : json()}}},
                {"timings",
                 {{"total_seconds", elapsed},
                  {"trial_seconds", trial_seconds}}}};
  write_text(config.output_dir / "run_manifest.json", manifest.dump(2) + "\n");

  std::cout << "rank-1 mean " << format_double(result.mean.rank(1)) << " over "
            << config.trials << " trial(s)\n";
  return 0;
}

int cmd_rank(const RunConfig& config, const std::string& probe_id,
             std::optional<Eigen::Index> probe_index) {
  const xcrc::CrossViewDataset data = load_configured_dataset(config);
  xcrc::SplitSpec spec = config.split;
  spec.seed = config.base_seed;  // trial-0 partition
  const xcrc::SplitResult parts = xcrc::split(data, spec);
  const xcrc::SplitEvaluation ev =
      xcrc::evaluate_split(parts.train, parts.test, config.method);

  Eigen::Index j = -1;
  if (probe_index) {
    j = *probe_index;
    if (j < 0 || j >= static_cast<Eigen::Index>(ev.probe_ids.size())) {
      throw xcrc::ConfigError("rank: probe index out of range");
    }
  } else {
    for (std::size_t i = 0; i < ev.probe_ids.size(); ++i) {
      if (ev.probe_ids[i] == probe_id) {
        j = static_cast<Eigen::Index>(i);
        break;
      }
    }
    if (j < 0) {
      throw xcrc::ConfigError("rank: unknown probe id '" + probe_id + "'");
    }
  }
  const auto& order = ev.ranking[static_cast<std::size_t>(j)];
  char line[64];
  for (const Eigen::Index i : order) {
    std::snprintf(line, sizeof line, "%.3f",
                  ev.scores(j, i));
    std::cout << ev.gallery_ids[static_cast<std::size_t>(i)] << " " << line
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view collaborative representation matcher"};
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--threads", threads,
                 "worker threads (overrides XCRC_THREADS; 0 = all cores)");

  std::string method_name, kernel_name, transition_name = "identity";
  double lambda = 0.0, bandwidth = 0.0, noise_sigma = 0.0, train_fraction = 0.0;
  double xqda_reg = -1.0;
  std::string grid_text;
  std::uint64_t base_seed = 0, tuning_seed = 0, synth_seed = 0;
  int trials = 0, train_count = 0, xqda_dim = 0;
  int synth_ids = 0, synth_dim = 0, synth_distractors = -1;
  bool naive = false, use_xqda = false;
  std::string output_dir, manifest_path, probe_id;
  long long probe_index = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->fallthrough();  // let --config / --threads appear after the verb
    cmd->add_option("--method", method_name, "matcher pipeline");
    cmd->add_option("--lambda", lambda, "regularization weight");
    cmd->add_option("--kernel", kernel_name, "linear|rbf|expchi2");
    cmd->add_option("--bandwidth", bandwidth, "kernel bandwidth (sigma)");
    cmd->add_option("--trials", trials, "number of trials");
    cmd->add_option("--base-seed", base_seed, "first trial seed");
    cmd->add_option("--tuning-seed", tuning_seed, "tuning partition seed");
    cmd->add_option("--train-count", train_count, "training identities");
    cmd->add_option("--train-fraction", train_fraction,
                    "training identity fraction");
    cmd->add_option("--manifest", manifest_path, "dataset manifest path");
    cmd->add_option("--output-dir", output_dir, "where result files go");
    cmd->add_flag("--naive", naive, "use the per-pair ranking loop");
    cmd->add_flag("--xqda", use_xqda, "project with XQDA before matching");
    cmd->add_option("--xqda-reg", xqda_reg, "XQDA covariance regularization");
    cmd->add_option("--xqda-dim", xqda_dim, "fixed XQDA output dimension");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->fallthrough();
  synth->add_option("--ids", synth_ids, "paired identities");
  synth->add_option("--dim", synth_dim, "feature dimension");
  synth->add_option("--transition", transition_name,
                    "identity|linear|tanh_nonlinear");
  synth->add_option("--noise", noise_sigma, "view-b noise sigma");
  synth->add_option("--distractors", synth_distractors,
                    "gallery-only identities");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--output-dir", output_dir, "where dataset files go");

  CLI::App* tune = app.add_subcommand("tune", "pick lambda on one partition");
  add_common(tune);
  tune->add_option("--grid", grid_text, "comma-separated lambda candidates");

  CLI::App* eval = app.add_subcommand("eval", "run trials and emit CMC files");
  add_common(eval);

  CLI::App* rank = app.add_subcommand("rank", "print one probe's gallery order");
  add_common(rank);
  rank->add_option("--probe", probe_id, "probe identity");
  rank->add_option("--probe-index", probe_index, "probe row index");

  try {
    app.parse(argc, argv);

    int n_threads = 0;
    if (const char* env = std::getenv("XCRC_THREADS")) {
      n_threads = std::atoi(env);
    }
    if (threads > 0) n_threads = threads;
    if (n_threads > 0) {
      omp_set_num_threads(n_threads);
      Eigen::setNbThreads(n_threads);
    }

    json config_json = json::object();
    fs::path config_dir = fs::current_path();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        throw xcrc::IoError("cannot open config '" + config_path + "'");
      }
      try {
        in >> config_json;
      } catch (const json::exception& e) {
        throw xcrc::ConfigError("config parse error: " + std::string(e.what()));
      }
      config_dir = fs::absolute(config_path).parent_path();
    }
    RunConfig config = config_from_json(config_json, config_dir);

    // Flag overrides.
    if (!method_name.empty()) {
      config.method.method = xcrc::method_from_string(method_name);
    }
    if (!kernel_name.empty()) {
      config.method.kernel.kind = xcrc::kernel_kind_from_string(kernel_name);
      config.method.kernel.bandwidth.reset();
    }
    if (bandwidth > 0.0) config.method.kernel.bandwidth = bandwidth;
    if (lambda > 0.0) config.method.lambda = lambda;
    if (trials > 0) config.trials = trials;
    if (eval->count("--base-seed") || tune->count("--base-seed") ||
        rank->count("--base-seed")) {
      config.base_seed = base_seed;
    }
    if (tune->count("--tuning-seed")) config.tuning_seed = tuning_seed;
    if (train_count > 0) config.split.train_count = train_count;
    if (train_fraction > 0.0) config.split.train_fraction = train_fraction;
    if (!manifest_path.empty()) config.manifest = manifest_path;
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (naive) config.method.naive_ranking = true;
    if (use_xqda && !config.method.xqda) config.method.xqda = xcrc::XqdaOptions{};
    if (xqda_reg >= 0.0) {
      if (!config.method.xqda) config.method.xqda = xcrc::XqdaOptions{};
      config.method.xqda->reg = xqda_reg;
    }
    if (xqda_dim > 0) {
      if (!config.method.xqda) config.method.xqda = xcrc::XqdaOptions{};
      config.method.xqda->dim = xqda_dim;
    }
    if (!grid_text.empty()) {
      config.lambda_grid.clear();
      std::size_t start = 0;
      while (start <= grid_text.size()) {
        const std::size_t comma = grid_text.find(',', start);
        const std::string token =
            grid_text.substr(start, comma == std::string::npos
                                        ? std::string::npos
                                        : comma - start);
        if (!token.empty()) config.lambda_grid.push_back(std::stod(token));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    if (synth->parsed()) {
      xcrc::SynthConfig s = config.synth.value_or(xcrc::SynthConfig{});
      if (synth_ids > 0) s.n_identities = synth_ids;
      if (synth_dim > 0) s.m_dim = synth_dim;
      if (synth->count("--transition")) {
        s.transition = xcrc::transition_from_string(transition_name);
      }
      if (synth->count("--noise")) s.noise_sigma = noise_sigma;
      if (synth_distractors >= 0) s.n_distractors = synth_distractors;
      if (synth->count("--seed")) s.seed = synth_seed;
      config.synth = s;
    }

    if (synth->parsed()) return cmd_synth(config);
    if (tune->parsed()) return cmd_tune(config);
    if (eval->parsed()) return cmd_eval(config);
    if (rank->parsed()) {
      std::optional<Eigen::Index> idx;
      if (probe_index >= 0) idx = static_cast<Eigen::Index>(probe_index);
      if (probe_id.empty() && !idx) {
        throw xcrc::ConfigError("rank: give --probe or --probe-index");
      }
      return cmd_rank(config, probe_id, idx);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const xcrc::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const xcrc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const xcrc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const xcrc::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const xcrc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
