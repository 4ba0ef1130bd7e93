// morphnli command line: generate | filter | infer | eval | export-finetune | serve

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "morphnli/pipeline.hpp"
#include "morphnli/review_service.hpp"

namespace {

using namespace morphnli;

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;
constexpr int kPartialFailure = 3;

struct Common {
  std::string config;
  std::string workdir;
};

RunConfig load(const Common& c) {
  auto cfg = load_run_config(c.config);
  if (!c.workdir.empty()) {
    cfg.workdir = fs::absolute(c.workdir);
    cfg.cache_path = cfg.workdir / "cache.jsonl";
    cfg.export_dir = cfg.workdir / "finetune";
  }
  return cfg;
}

void print_warnings(const Pipeline& p) {
  for (auto& w : p.warnings()) std::cerr << "warning: " << w << '\n';
}

int finish_run(const Pipeline& p, const RunSummary& s) {
  print_warnings(p);
  std::cout << json(s).dump(2) << '\n';
  std::cerr << s.failed << " of " << s.total << " records failed, " << s.provider_calls << " provider calls\n";
  if (s.failure_rate() > p.config().failure_threshold) {
    std::cerr << "failure rate " << s.failure_rate() << " exceeds run.failure_threshold " << p.config().failure_threshold
              << '\n';
    return kPartialFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MorphNLI pipeline"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    auto* opt = sub->add_option("--config", common.config, "run config (TOML)");
    if (config_required) opt->required();
    sub->add_option("--workdir", common.workdir, "override paths.workdir (cache and export follow it)");
  };

  auto* generate = app.add_subcommand("generate", "teacher morphs, labels and filters over paths.input");
  add_common(generate);
  auto* filter = app.add_subcommand("filter", "re-run the filters from label.jsonl");
  add_common(filter);
  auto* infer = app.add_subcommand("infer", "student morphs, labels and evaluation over paths.input");
  add_common(infer);
  auto* eval = app.add_subcommand("eval", "recompute eval_report.json from label.jsonl");
  add_common(eval);
  auto* exp = app.add_subcommand("export-finetune", "write chat fine-tune JSONL from filter.jsonl");
  add_common(exp);
  std::string export_out;
  exp->add_option("--out", export_out, "output directory (default <workdir>/finetune)");

  auto* serve = app.add_subcommand("serve", "review API and static UI");
  add_common(serve, false);
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string items;
  std::string scores;
  std::string static_dir;
  std::string explanations;
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--items", items, "label-stage artifact (default <workdir>/label.jsonl)");
  serve->add_option("--scores", scores, "score log (default next to the items file)");
  serve->add_option("--static", static_dir, "directory served at /")->check(CLI::ExistingDirectory);
  serve->add_option("--explanations", explanations, "JSONL of {id, source, text}")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (serve->parsed()) {
      fs::path items_path = items;
      if (items_path.empty()) {
        if (common.config.empty()) throw ConfigError("serve needs --items or --config");
        items_path = load(common).workdir / "label.jsonl";
      }
      fs::path scores_path = scores.empty() ? items_path.parent_path() / "scores.jsonl" : fs::path(scores);
      auto svc = ReviewService::from_artifact(items_path, scores_path, explanations);
      httplib::Server srv;
      mount_review_api(srv, svc, static_dir);
      std::cerr << "serving " << svc.size() << " items on http://" << host << ":" << port << '\n';
      if (!srv.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
      return kOk;
    }

    auto cfg = load(common);
    Pipeline p(cfg, make_services(cfg));
    if (generate->parsed()) return finish_run(p, p.generate());
    if (infer->parsed()) return finish_run(p, p.infer());
    if (filter->parsed()) {
      auto rep = p.refilter();
      std::cout << json(rep).dump(2) << '\n';
      return kOk;
    }
    if (eval->parsed()) {
      auto rep = p.reevaluate();
      print_warnings(p);
      std::cout << (rep ? json(*rep) : json(nullptr)).dump(2) << '\n';
      return kOk;
    }
    if (exp->parsed()) {
      if (!export_out.empty()) {
        cfg.export_dir = fs::absolute(export_out);
        Pipeline q(cfg, make_services(cfg));
        std::cout << json(q.export_kept()).dump(2) << '\n';
      } else {
        std::cout << json(p.export_kept()).dump(2) << '\n';
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
