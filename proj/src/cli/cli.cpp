#include "fsar/cli/cli.hpp"

#include "fsar/archive/synth.hpp"
#include "fsar/engine/runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fsar::cli {

namespace fs = std::filesystem;
using engine::RunConfig;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// String-valued flags, parsed after CLI11 so enum errors become config errors.
struct RunFlags {
  std::string archive, out, checkpoint;
  std::string metric = "mpmm", branch = "both", alpha_mode = "learnable", init = "random", prompts = "auto";
  std::string split = "test";
  double alpha = -1;
  bool no_stsa = false, no_vca = false, no_tca = false, no_lpc = false, no_gpc = false;
  CLI::Option* alpha_opt = nullptr;
};

void add_run_flags(CLI::App* app, RunConfig& c, RunFlags& f, bool with_eval) {
  app->add_option("--archive", f.archive, "Token archive directory")->required();
  app->add_option("--out", f.out, "Output directory")->required();
  app->add_option("--ways", c.ways, "N classes per episode")->capture_default_str();
  app->add_option("--shots", c.shots, "K support videos per class")->capture_default_str();
  app->add_option("--queries-per-class", c.queries_per_class, "Queries per class; -1 means K")->capture_default_str();
  app->add_option("--metric", f.metric, "mpmm | bimhm | hausdorff | avg | dec-avg")->capture_default_str();
  app->add_option("--branch", f.branch, "visual | textual | both")->capture_default_str();
  app->add_option("--dprime", c.dprime, "Projected width D' [reference default: 256]")->capture_default_str();
  app->add_option("--heads", c.heads, "Attention heads per block")->capture_default_str();
  app->add_option("--alpha-mode", f.alpha_mode, "fixed | learnable | adaptive")->capture_default_str();
  f.alpha_opt = app->add_option("--alpha", f.alpha,
                                "Mixing weight in [0,1] (default: 0.1 for unknown-prompt archives, 0.9 otherwise) "
                                "[reference default: 0.1 unknown, 0.9 known]");
  app->add_flag("--no-stsa", f.no_stsa, "Disable spatial/temporal self-attention (default: enabled)");
  app->add_flag("--no-vca", f.no_vca, "Disable visual-lead cross-attention (default: enabled)");
  app->add_flag("--no-tca", f.no_tca, "Disable textual-lead cross-attention (default: enabled)");
  app->add_flag("--no-lpc", f.no_lpc, "Disable local prototype refinement (default: enabled)");
  app->add_flag("--no-gpc", f.no_gpc, "Disable global prototype refinement (default: enabled)");
  app->add_option("--seed", c.seed, "Run seed")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads; 0 means all cores")->capture_default_str();
  app->add_option("--init", f.init, "random | identity (identity needs --dprime equal to the archive width)")
      ->capture_default_str();
  app->add_option("--lr", c.lr, "Adam base learning rate")->capture_default_str();
  app->add_option("--val-every", c.val_every, "Training episodes between validations")->capture_default_str();
  app->add_option("--val-episodes", c.val_episodes, "Episodes per validation")->capture_default_str();
  app->add_option("--prompts", f.prompts, "auto | unknown | known: which archive records to use")->capture_default_str();
  if (with_eval) {
    app->add_option("--checkpoint", f.checkpoint, "Head checkpoint to evaluate (default: freshly initialised head)");
    app->add_option("--split", f.split, "Evaluation split")->capture_default_str();
  }
}

void finish_config(RunConfig& c, const RunFlags& f) {
  try {
    c.metric = model::parse_metric(f.metric);
    c.branch = model::parse_branch(f.branch);
    c.alpha_mode = model::parse_alpha_mode(f.alpha_mode);
    c.init = engine::parse_init(f.init);
    c.prompts = engine::parse_prompt_filter(f.prompts);
    c.eval_split = archive::parse_split(f.split);
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  if (f.alpha_opt && f.alpha_opt->count() > 0) c.alpha = f.alpha;
  c.mfm = {!f.no_stsa, !f.no_vca, !f.no_tca};
  c.ctpcm = {!f.no_lpc, !f.no_gpc};
  const auto problems = c.problems();
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

json run_echo(const std::string& command, const RunConfig& c, const RunFlags& f) {
  json j = engine::to_json(c);
  j["command"] = command;
  j["archive"] = f.archive;
  if (!f.checkpoint.empty()) j["checkpoint"] = f.checkpoint;
  return j;
}

engine::Head head_for(const RunConfig& c, const RunFlags& f, const engine::Dataset& ds) {
  if (f.checkpoint.empty()) return engine::initial_head(c, ds.dim(), ds.known_prompts);
  engine::Head h = engine::load_checkpoint(f.checkpoint);
  if (h.mfm.in_dim() != ds.dim()) throw ConfigError("checkpoint input width does not match the archive width");
  return h;
}

void emit_report(const fs::path& dir, const engine::RunReport& r) {
  write_json(dir / "report.json", engine::to_json(r));
  const std::string table = engine::render_table(r);
  write_text(dir / "report.txt", table);
  std::cout << table;
}

std::string pct(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * x;
  return s.str();
}

std::string sweep_table(const json& rows) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "u" << std::setw(12) << "alpha_mode" << std::setw(12) << "acc (%)"
     << "ci95 (%)\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(6) << r.at("u").get<int>() << std::setw(12) << r.at("alpha_mode").get<std::string>()
       << std::setw(12) << pct(r.at("accuracy").get<double>()) << pct(r.at("ci95").get<double>()) << '\n';
  }
  return os.str();
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Few-shot action recognition head over multimodal decoder token archives", "fsar"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // gen-synth
  archive::SynthConfig synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic token archive");
  gen->add_option("--out", synth_out, "Archive directory to create")->required();
  gen->add_option("--classes", synth.classes, "Classes per split (train, val and test are disjoint)")->capture_default_str();
  gen->add_option("--per-class", synth.per_class, "Videos per class")->capture_default_str();
  gen->add_option("--frames", synth.frames, "Frames T")->capture_default_str();
  gen->add_option("--spatial-len", synth.spatial_len, "Visual tokens per frame")->capture_default_str();
  gen->add_option("--text-len", synth.text_len, "Textual tokens per video")->capture_default_str();
  gen->add_option("--dim", synth.dim, "Token width D")->capture_default_str();
  gen->add_option("--beta", synth.beta, "Textual informativeness in [0,1]")->capture_default_str();
  gen->add_option("--gamma", synth.gamma, "Visual informativeness in [0,1]")->capture_default_str();
  gen->add_option("--sigma", synth.sigma, "Isotropic noise level")->capture_default_str();
  gen->add_option("--signal-rank", synth.signal_rank, "Rank of the shared class-signal subspace")->capture_default_str();
  gen->add_option("--nuisance-rank", synth.nuisance_rank, "Rank of the per-video nuisance subspace")->capture_default_str();
  gen->add_option("--template", synth.template_scale, "Scale of the per-branch shared template")->capture_default_str();
  gen->add_option("--nuisance", synth.nuisance_scale, "Scale of per-video nuisance")->capture_default_str();
  gen->add_option("--clutter", synth.clutter, "Extra per-video nuisance on the less informative branch")->capture_default_str();
  gen->add_option("--drift", synth.drift, "Temporal drift of visual class signal")->capture_default_str();
  gen->add_flag("--known-prompts", synth.known_prompts, "Emit known-support and known-query records (default: off)");
  gen->add_option("--known-extra", synth.known_extra, "Extra textual tokens on known-query records")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

  // validate
  std::string val_archive, val_out;
  auto* val = app.add_subcommand("validate", "Check every archive invariant");
  val->add_option("--archive", val_archive, "Archive directory")->required();
  val->add_option("--out", val_out, "Output directory")->required();

  // train
  RunConfig train_cfg;
  RunFlags train_flags;
  auto* tr = app.add_subcommand("train", "Episodic training with best-on-validation selection");
  add_run_flags(tr, train_cfg, train_flags, false);
  tr->add_option("--episodes", train_cfg.train_episodes, "Training episodes")->capture_default_str();
  tr->add_option("--u", train_cfg.u, "Top-u of the matching metric [reference default: 50 for spatial 5-way 5-shot, 10 otherwise]")
      ->capture_default_str();

  // eval
  RunConfig eval_cfg;
  RunFlags eval_flags;
  auto* ev = app.add_subcommand("eval", "Evaluate a head over seeded episodes");
  add_run_flags(ev, eval_cfg, eval_flags, true);
  ev->add_option("--episodes", eval_cfg.eval_episodes, "Evaluation episodes [reference: 10000]")->capture_default_str();
  ev->add_option("--u", eval_cfg.u, "Top-u of the matching metric [reference default: 50 for spatial 5-way 5-shot, 10 otherwise]")
      ->capture_default_str();

  // sweep
  RunConfig sweep_cfg;
  RunFlags sweep_flags;
  std::vector<int> sweep_u{10};
  std::vector<std::string> sweep_modes;
  bool retrain = false;
  auto* sw = app.add_subcommand("sweep", "Evaluate a grid of u values and alpha modes");
  add_run_flags(sw, sweep_cfg, sweep_flags, true);
  sw->remove_option(sw->get_option("--alpha-mode"));
  sw->add_option("--episodes", sweep_cfg.eval_episodes, "Evaluation episodes per row [reference: 10000]")->capture_default_str();
  sw->add_option("--train-episodes", sweep_cfg.train_episodes,
                 "Training episodes for the shared head when no --checkpoint is given")
      ->capture_default_str();
  sw->add_option("--u", sweep_u, "Comma-separated u values [reference default: 50 for spatial 5-way 5-shot, 10 otherwise]")
      ->delimiter(',')
      ->capture_default_str();
  sw->add_option("--alpha-mode", sweep_modes, "Comma-separated alpha modes (default: learnable)")->delimiter(',');
  sw->add_flag("--retrain", retrain, "Train a fresh head per row instead of sharing one (default: off)");

  // report
  std::string report_in, report_out;
  auto* rp = app.add_subcommand("report", "Render a saved report or sweep as a table");
  rp->add_option("--input", report_in, "report.json or sweep.json")->required();
  rp->add_option("--out", report_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      write_json(fs::path(synth_out) / "config.json",
                 json{{"command", "gen-synth"}, {"classes", synth.classes}, {"per_class", synth.per_class},
                      {"frames", synth.frames}, {"spatial_len", synth.spatial_len}, {"text_len", synth.text_len},
                      {"dim", synth.dim}, {"beta", synth.beta}, {"gamma", synth.gamma}, {"sigma", synth.sigma},
                      {"signal_rank", synth.signal_rank}, {"nuisance_rank", synth.nuisance_rank},
                      {"template", synth.template_scale}, {"nuisance", synth.nuisance_scale}, {"clutter", synth.clutter}, {"drift", synth.drift},
                      {"known_prompts", synth.known_prompts}, {"known_extra", synth.known_extra},
                      {"seed", synth.seed}});
      try {
        const auto m = archive::synth_generate(synth, synth_out);
        std::cout << "wrote " << m.videos.size() << " records to " << synth_out << "\n";
      } catch (const DomainError& ex) {
        throw ConfigError(ex.what());
      }
      return kExitOk;
    }

    if (*val) {
      write_json(fs::path(val_out) / "config.json", json{{"command", "validate"}, {"archive", val_archive}});
      const auto problems = archive::validate(val_archive);
      std::string text;
      for (const auto& p : problems) text += p + "\n";
      write_text(fs::path(val_out) / "violations.txt", text);
      if (problems.empty()) {
        std::cout << "archive is well-formed\n";
        return kExitOk;
      }
      std::cerr << text;
      return kExitConfig;
    }

    if (*tr) {
      finish_config(train_cfg, train_flags);
      const fs::path out = train_flags.out;
      write_json(out / "config.json", run_echo("train", train_cfg, train_flags));
      const auto ds = engine::load_dataset(train_flags.archive, train_cfg.prompts);
      const auto res = engine::train(train_cfg, ds);
      engine::save_checkpoint(out / "checkpoint.fsck", res.head);
      engine::save_checkpoint(out / "last.fsck", res.last);
      emit_report(out, res.report);
      return kExitOk;
    }

    if (*ev) {
      finish_config(eval_cfg, eval_flags);
      const fs::path out = eval_flags.out;
      write_json(out / "config.json", run_echo("eval", eval_cfg, eval_flags));
      const auto ds = engine::load_dataset(eval_flags.archive, eval_cfg.prompts);
      emit_report(out, engine::evaluate(eval_cfg, ds, head_for(eval_cfg, eval_flags, ds)));
      return kExitOk;
    }

    if (*sw) {
      sweep_flags.alpha_mode = sweep_modes.empty() ? "learnable" : sweep_modes.front();
      finish_config(sweep_cfg, sweep_flags);
      std::vector<model::AlphaMode> modes;
      for (const auto& m : sweep_modes.empty() ? std::vector<std::string>{"learnable"} : sweep_modes) {
        try {
          modes.push_back(model::parse_alpha_mode(m));
        } catch (const std::exception& ex) {
          throw ConfigError(ex.what());
        }
      }
      for (int u : sweep_u)
        if (u < 1) throw ConfigError("--u values must be >= 1");
      const fs::path out = sweep_flags.out;
      json echo = run_echo("sweep", sweep_cfg, sweep_flags);
      echo["u_values"] = sweep_u;
      echo["alpha_modes"] = sweep_modes.empty() ? std::vector<std::string>{"learnable"} : sweep_modes;
      echo["retrain"] = retrain;
      write_json(out / "config.json", echo);

      const auto ds = engine::load_dataset(sweep_flags.archive, sweep_cfg.prompts);
      auto trained = [&](const RunConfig& c) {
        if (!sweep_flags.checkpoint.empty()) return head_for(c, sweep_flags, ds);
        return engine::train(c, ds).head;
      };
      const engine::Head shared = retrain ? engine::Head{} : trained(sweep_cfg);
      json rows = json::array();
      std::string csv = "u,alpha_mode,accuracy,ci95\n";
      for (int u : sweep_u) {
        for (auto mode : modes) {
          RunConfig c = sweep_cfg;
          c.u = u;
          c.alpha_mode = mode;
          const engine::Head head = retrain && sweep_flags.checkpoint.empty() ? trained(c) : shared;
          const auto r = engine::evaluate(c, ds, head);
          rows.push_back({{"u", u}, {"alpha_mode", model::to_string(mode)}, {"accuracy", r.accuracy}, {"ci95", r.ci95}});
          std::ostringstream line;
          line << std::setprecision(17) << u << "," << model::to_string(mode) << "," << r.accuracy << "," << r.ci95 << "\n";
          csv += line.str();
        }
      }
      const json sweep{{"config", echo}, {"rows", rows}};
      write_json(out / "sweep.json", sweep);
      write_text(out / "sweep.csv", csv);
      const std::string table = sweep_table(rows);
      write_text(out / "sweep.txt", table);
      std::cout << table;
      return kExitOk;
    }

    if (*rp) {
      const fs::path out = report_out;
      write_json(out / "config.json", json{{"command", "report"}, {"input", report_in}});
      std::ifstream in(report_in);
      if (!in) throw IoError("cannot open " + report_in);
      json j;
      try {
        in >> j;
      } catch (const json::exception& ex) {
        throw FormatError(report_in + ": " + ex.what());
      }
      std::string table;
      try {
        table = j.contains("rows") ? sweep_table(j.at("rows")) : engine::render_table(engine::report_from_json(j));
      } catch (const json::exception& ex) {
        throw FormatError(report_in + ": " + ex.what());
      }
      write_text(out / (j.contains("rows") ? "sweep.txt" : "report.txt"), table);
      std::cout << table;
      return kExitOk;
    }
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"fsar"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace fsar::cli
