#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nlpt/cli.hpp"
#include "nlpt/error.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> p, nu1;
  std::string tau;
  std::optional<std::size_t> pairs, N;
  std::string preset;
  std::string tracts;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "YAML run configuration")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output file (default: standard output)");
  sub->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--threads", o.threads, "worker threads (0: all cores)");
  sub->add_option("--p", o.p, "exponent p > 1");
}

nlpt::cli::RunConfig build_config(nlpt::cli::Task task, const Overrides& o) {
  using namespace nlpt::cli;
  RunConfig c = o.config.empty() ? default_config(task) : load_config(o.config);
  if (c.task != task)
    throw nlpt::Error(nlpt::ErrorCode::ConfigInvalid, std::string("task: the config names '") + to_string(c.task) +
                                                          "' but the subcommand is '" + to_string(task) + "'");
  if (!o.out.empty()) c.out = o.out;
  if (o.format == "json") c.format = OutputFormat::Json;
  if (o.format == "csv") c.format = OutputFormat::Csv;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.p) c.p = *o.p;
  if (o.nu1) c.nu1 = *o.nu1;
  if (!o.tau.empty()) {
    // Reuse the config parser for the start:stop:step syntax.
    const RunConfig t = parse_config("task: growth\nsolver: {tau: \"" + o.tau + "\"}\n");
    c.tau_start = t.tau_start;
    c.tau_stop = t.tau_stop;
    c.tau_step = t.tau_step;
  }
  if (o.pairs) c.pairs = *o.pairs;
  if (!o.preset.empty()) c.preset = o.preset;
  if (!o.tracts.empty()) c.tracts = load_tracts(o.tracts);
  if (o.N) c.N = *o.N;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace nlpt::cli;
  CLI::App app{"Nonlinear potential theory on model domains"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Overrides o;
  auto* classify = app.add_subcommand("classify", "p-parabolic or p-hyperbolic type of a model domain");
  auto* capacity = app.add_subcommand("capacity", "variational p-capacity of the radial condenser");
  auto* verify = app.add_subcommand("verify-exhaustion", "check a catalogued special exhaustion on a grid");
  auto* growth = app.add_subcommand("growth", "energy growth curve of a form along an exhaustion");
  auto* wtcheck = app.add_subcommand("wtcheck", "structure inequalities on random form pairs");
  auto* ahlfors = app.add_subcommand("ahlfors", "tract counting bound on a strip");
  for (auto* sub : {classify, capacity, verify, growth, wtcheck, ahlfors}) add_common(sub, o);
  growth->add_option("--nu1", o.nu1, "coercivity constant");
  growth->add_option("--tau", o.tau, "level window start:stop:step");
  ahlfors->add_option("--nu1", o.nu1, "coercivity constant");
  ahlfors->add_option("--tau", o.tau, "base level and window start:stop:step");
  wtcheck->add_option("--pairs", o.pairs, "number of random pairs");
  wtcheck->add_option("--preset", o.preset, "plap or aniso")->check(CLI::IsMember({"plap", "aniso"}));
  ahlfors->add_option("--tracts", o.tracts, "YAML tract list")->check(CLI::ExistingFile);
  ahlfors->add_option("--N", o.N, "number of parts of the N-mean");

  CLI11_PARSE(app, argc, argv);

  const Task task = parse_task(app.get_subcommands().front()->get_name());
  try {
    const RunConfig config = build_config(task, o);
    const Report report = run(config);
    const std::string text = render(report, config.format);
    if (config.out.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(config.out, std::ios::binary);
      if (!out) throw nlpt::Error(nlpt::ErrorCode::ConfigInvalid, "--out: cannot write '" + config.out + "'");
      out << text;
    }
  } catch (const nlpt::Error& e) {
    std::fprintf(stderr, "nlpt %s: %s\n", to_string(task), e.what());
    return e.code() == nlpt::ErrorCode::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nlpt %s: %s\n", to_string(task), e.what());
    return 1;
  }
  return 0;
}
