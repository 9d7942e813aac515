// robustcast: command-line front end.
//
//   robustcast validate    --config run.json
//   robustcast evaluate    --config run.json [--out DIR] [--workers N] [--eval-seed S]
//   robustcast compare     --config run.json [--out DIR] [--workers N] [--eval-seed S]
//   robustcast sensitivity --config run.json --mode eval-seed|channel-rule|selector
//
// Exit codes: 0 ok, 2 config/data error, 3 model/protocol error,
// 4 degradation undefined (outputs are still written).

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "robustcast/config.hpp"
#include "robustcast/error.hpp"
#include "robustcast/pipeline.hpp"

namespace rc = robustcast;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::optional<std::uint64_t> eval_seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool outputs) {
  cmd->add_option("--config", o.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--quiet", o.quiet, "suppress progress output");
  if (!outputs) return;
  cmd->add_option("--out", o.out, "output directory (default: config 'output')");
  cmd->add_option("--workers", o.workers, "evaluation threads (default: config 'eval.workers')")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--eval-seed", o.eval_seed, "override the evaluation seed");
}

rc::RunConfig load(const CommonOptions& o) {
  rc::RunConfig c = rc::load_run_config(o.config);
  if (o.workers > 0) c.workers = o.workers;
  if (o.eval_seed) c.eval_seed = *o.eval_seed;
  if (!o.out.empty()) c.output = o.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor-fault robustness evaluation for multivariate forecasters"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string mode = "eval-seed";

  auto* validate = app.add_subcommand("validate", "load the dataset and report schema and window counts");
  add_common(validate, opts, false);
  auto* evaluate = app.add_subcommand("evaluate", "evaluate each configured model on the test split");
  add_common(evaluate, opts, true);
  auto* compare = app.add_subcommand("compare", "paired method-vs-baseline deltas");
  add_common(compare, opts, true);
  auto* sensitivity = app.add_subcommand("sensitivity", "evaluation seed, channel rule or selector sensitivity");
  add_common(sensitivity, opts, true);
  sensitivity->add_option("--mode", mode, "eval-seed, channel-rule or selector")
      ->check(CLI::IsMember({"eval-seed", "channel-rule", "selector"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::ostream* log = opts.quiet ? nullptr : &std::cerr;
  try {
    const rc::RunConfig c = load(opts);
    if (*validate) {
      rc::run_validate(c, &std::cout);
    } else if (*evaluate) {
      rc::run_evaluate(c, c.output, log);
    } else if (*compare) {
      rc::run_compare(c, c.output, log);
    } else if (*sensitivity) {
      rc::run_sensitivity(c, rc::parse_sensitivity_mode(mode), c.output, log);
    }
  } catch (const rc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rc::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
