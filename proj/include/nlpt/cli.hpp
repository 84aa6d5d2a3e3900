#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nlpt/domains.hpp"
#include "nlpt/energy.hpp"

namespace nlpt::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Task { Classify, Capacity, VerifyExhaustion, Growth, WtCheck, Ahlfors };
enum class OutputFormat { Json, Csv };

const char* to_string(Task task) noexcept;
// Throws ConfigInvalid.
Task parse_task(std::string_view name);

// Test form placed on the grid. "separated": A sinh(lambda x) sin(lambda (y - offset))
// over the first two axes; "polar": A r^lambda sin(lambda (angle - offset));
// "exhaustion": A h; "linear": A x; "constant": A.
struct FormConfig {
  std::string kind = "separated";
  double lambda = 1.0;
  double amplitude = 1.0;
  double offset = 0.0;
};

// Slab lo < y < hi of the cross-section carrying sinh(lambda x) sin(pi (y - lo)/(hi - lo)),
// lambda = pi/(hi - lo) unless given.
struct TractConfig {
  double lo = 0.0;
  double hi = 0.0;
  double lambda = 0.0;
};

struct RunConfig {
  Task task = Task::Classify;
  ModelDomain domain = ModelDomain::euclidean(2);
  bool domain_given = false;

  double p = 2.0;
  double nu1 = 1.0;
  double nu2 = 1.0;
  std::vector<std::size_t> resolution;  // empty: task default
  double cut = 0.0;  // outer radial value of the grid; 0: task default
  double tolerance = 1e-8;
  std::size_t max_iterations = 100000;
  double tau_start = 0.5, tau_stop = 3.0, tau_step = 0.125;
  std::string boundary = "dirichlet";
  std::vector<std::pair<double, double>> bands;  // annulus bound levels for growth

  FormConfig form;

  std::string preset = "plap";
  std::vector<double> weights{1.0, 2.0};
  std::size_t pairs = 100;

  std::size_t N = 1;
  std::vector<TractConfig> tracts;
  std::string tracts_file;
  std::size_t partition_shifts = 3;

  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out;  // empty: standard output
  OutputFormat format = OutputFormat::Json;
  std::string grid_out;  // optional node table of the computed field

  std::vector<double> taus() const;
};

// YAML text with sections domain, solver, form, wtcheck, ahlfors, output.
// Numbers may be written as pi, e, inf or products such as 2*pi. Relative file
// names resolve against base_dir. Throws ConfigInvalid.
RunConfig parse_config(std::string_view text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
// Tract list file: a YAML sequence of {lo, hi, lambda} maps, or a map with a tracts key.
std::vector<TractConfig> load_tracts(const std::string& path);
// Default configuration of each task: the reference model problem it was built around.
RunConfig default_config(Task task);
// Throws ConfigInvalid naming the field.
void validate(const RunConfig& config);

nlohmann::ordered_json config_to_json(const RunConfig& config);

struct Report {
  nlohmann::ordered_json json;
  std::optional<EnergyCurve> curve;
};

// Dispatches to the module operation of the task. Verdicts are data: a failed
// check still returns a report. Module errors propagate.
Report run(const RunConfig& config);

// CSV with header tau,I,dI,eps,eps_tag,monotone_q and %.17g numbers. Throws
// NoCurvePayload.
std::string emit_curve(const Report& report);
std::string emit_curve(const EnergyCurve& curve);
// Inverse of emit_curve. Throws ConfigInvalid on malformed text.
EnergyCurve parse_curve(std::string_view csv);

// Report text in the configured format.
std::string render(const Report& report, OutputFormat format);

}  // namespace nlpt::cli
