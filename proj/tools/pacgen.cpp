// pacgen command-line entry point.
//
// Exit status: 0 success, 1 property-check failure, 2 usage/config error,
// 3 numeric divergence.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "pacgen/pacgen.hpp"

namespace fs = std::filesystem;
using namespace pacgen;

namespace {

constexpr int kExitPropertyFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  return in;
}

trainer::TrainConfig load_config(const std::string& path) {
  trainer::TrainConfig cfg = path.empty() ? config::parse_config_text("") : config::parse_config(path);
  if (const char* env = std::getenv("PACGEN_SEED")) {
    cfg.seed = config::parsing::to_unsigned("PACGEN_SEED", env);
  }
  return cfg;
}

std::vector<double> parse_sigma_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = config::parsing::trim(item);
    if (item.empty()) continue;
    out.push_back(config::parsing::to_double("sigma0-list", item));
  }
  if (out.empty()) throw ConfigError("--sigma0-list is empty");
  return out;
}

void print_result(const trainer::ExperimentResult& r) {
  std::cout << std::setprecision(6) << "sigma0=" << r.sigma0 << " train_risk=" << r.train_risk
            << " test_risk=" << r.test_risk << " kl=" << r.kl << " certificate=" << r.certificate.total << '\n';
}

void write_run_outputs(const fs::path& dir, const trainer::ExperimentResult& r, const trainer::TrainConfig& cfg) {
  {
    auto out = open_out(dir / "certificate.csv");
    trainer::write_sweep_csv(out, {r});
  }
  {
    auto out = open_out(dir / "risks.csv");
    trainer::write_risks_csv(out, r);
  }
  {
    auto out = open_out(dir / "samples.csv");
    synthdata::write_csv(out, trainer::generator_samples(r.posterior, cfg, 2000,
                                                         rng::derive(cfg.seed, rng::Tag::kUser, 7)));
  }
}

int cmd_gen_data(const std::string& spec_name, std::size_t n, std::uint64_t seed, const std::string& out_path) {
  const auto spec = synthdata::spec_by_name(spec_name);
  const auto data = synthdata::sample(spec, n, seed);
  auto out = open_out(out_path);
  synthdata::write_csv(out, data);
  std::cout << "wrote " << n << " points to " << out_path << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = load_config(config_path);
  const fs::path dir(out_dir);
  const auto data = trainer::make_splits(cfg);
  const auto prior_run = trainer::train_prior(data.prior, cfg);
  const auto prior = trainer::prior_from(prior_run.generator, cfg);
  const auto post = trainer::train_posterior(data.all, prior, prior_run.critic, cfg);
  {
    auto out = open_out(dir / "prior.csv");
    probdist::write_csv(out, prior);
  }
  {
    auto out = open_out(dir / "posterior.csv");
    probdist::write_csv(out, post.posterior);
  }
  {
    auto out = open_out(dir / "generator_arch.txt");
    out << lipnet::format_architecture(cfg.gen_arch);
  }
  {
    auto out = open_out(dir / "trace_prior.csv");
    trainer::write_trace_csv(out, prior_run.trace);
  }
  {
    auto out = open_out(dir / "trace_posterior.csv");
    trainer::write_trace_csv(out, post.trace);
  }
  auto r = trainer::certify(post.posterior, prior, data.eval, data.test, cfg,
                            cfg.cert_critic_data == trainer::CertCriticData::kPrior ? &data.prior : nullptr);
  write_run_outputs(dir, r, cfg);
  print_result(r);
  return 0;
}

int cmd_certify(const std::string& config_path, const std::string& posterior_in, const std::string& prior_in,
                const std::string& out_path) {
  const auto cfg = load_config(config_path);
  const fs::path post_path(posterior_in);
  const fs::path prior_path = prior_in.empty() ? post_path.parent_path() / "prior.csv" : fs::path(prior_in);
  auto post_file = open_in(post_path);
  auto prior_file = open_in(prior_path);
  const auto posterior = probdist::read_csv(post_file);
  const auto prior = probdist::read_csv(prior_file);
  if (posterior.size() != cfg.gen_arch.num_params() || prior.size() != cfg.gen_arch.num_params()) {
    throw ConfigError("posterior/prior size does not match gen_widths in the config");
  }
  const auto data = trainer::make_splits(cfg);
  const auto r = trainer::certify(posterior, prior, data.eval, data.test, cfg,
                                  cfg.cert_critic_data == trainer::CertCriticData::kPrior ? &data.prior : nullptr);
  auto out = open_out(out_path);
  trainer::write_sweep_csv(out, {r});
  print_result(r);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& sigma_list, const std::string& out_path, int jobs,
              const std::string& samples_dir) {
  const auto cfg = load_config(config_path);
  const auto values = parse_sigma_list(sigma_list);
  const auto results = trainer::sweep_sigma0(values, cfg, jobs);
  auto out = open_out(out_path);
  trainer::write_sweep_csv(out, results);
  int failures = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok()) {
      ++failures;
      std::cerr << "sigma0=" << r.sigma0 << " failed: " << r.error << '\n';
      continue;
    }
    print_result(r);
    if (!samples_dir.empty()) {
      auto s = open_out(fs::path(samples_dir) / ("samples_" + std::to_string(i) + ".csv"));
      synthdata::write_csv(s, trainer::generator_samples(r.posterior, cfg, 2000,
                                                         rng::derive(cfg.seed, rng::Tag::kUser, 7)));
    }
  }
  return failures == 0 ? 0 : kExitDivergence;
}

int cmd_check(const std::string& suite, std::uint64_t seed) {
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = checks::suite_names();
  } else {
    suites = {suite};
  }
  bool all_pass = true;
  for (const auto& s : suites) {
    for (const auto& row : checks::run_suite(s, seed)) {
      std::cout << (row.pass ? "PASS" : "FAIL") << "  " << s << "  " << row.name;
      if (!row.detail.empty()) std::cout << "  (" << row.detail << ")";
      std::cout << '\n';
      all_pass = all_pass && row.pass;
    }
  }
  return all_pass ? 0 : kExitPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-posterior WGAN training and PAC-Bayesian risk certificates"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Sample a synthetic dataset to CSV");
  std::string spec_name;
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--spec", spec_name, "ring8, grid25 or a mixture spec file")->required();
  gen->add_option("--n", gen_n, "Number of points")->required();
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "Output CSV")->required();

  auto* train = app.add_subcommand("train", "Train prior and posterior, then certify");
  std::string train_config;
  std::string train_dir;
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--out-dir", train_dir, "Output directory")->required();

  auto* cert = app.add_subcommand("certify", "Certify a stored posterior");
  std::string cert_config;
  std::string cert_post;
  std::string cert_prior;
  std::string cert_out;
  cert->add_option("--config", cert_config, "key=value config file");
  cert->add_option("--posterior-in", cert_post, "Posterior CSV written by train")->required();
  cert->add_option("--prior-in", cert_prior, "Prior CSV (default: prior.csv next to the posterior)");
  cert->add_option("--out", cert_out, "Certificate CSV")->required();

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per sigma0 value");
  std::string sweep_config;
  std::string sweep_list = "1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1";
  std::string sweep_out;
  std::string sweep_samples;
  int jobs = 1;
  sweep->add_option("--config", sweep_config, "key=value config file");
  sweep->add_option("--sigma0-list", sweep_list, "Comma-separated sigma0 values")->capture_default_str();
  sweep->add_option("--out", sweep_out, "Summary CSV")->required();
  sweep->add_option("--jobs", jobs, "Concurrent sweep points")->check(CLI::PositiveNumber);
  sweep->add_option("--samples-dir", sweep_samples, "Write generator samples per sigma0 here");

  auto* check = app.add_subcommand("check", "Run a property-check suite");
  std::string suite;
  std::uint64_t check_seed = 0;
  std::vector<std::string> choices = checks::suite_names();
  choices.push_back("all");
  check->add_option("--suite", suite, "Suite name")->required()->check(CLI::IsMember(choices));
  check->add_option("--seed", check_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(spec_name, gen_n, gen_seed, gen_out);
    if (*train) return cmd_train(train_config, train_dir);
    if (*cert) return cmd_certify(cert_config, cert_post, cert_prior, cert_out);
    if (*sweep) return cmd_sweep(sweep_config, sweep_list, sweep_out, jobs, sweep_samples);
    if (*check) return cmd_check(suite, check_seed);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
