#include "fsar/engine/config.hpp"

namespace fsar::engine {

using nlohmann::json;

std::string to_string(InitKind k) { return k == InitKind::random ? "random" : "identity"; }

InitKind parse_init(const std::string& s) {
  if (s == "random") return InitKind::random;
  if (s == "identity") return InitKind::identity;
  throw DomainError("unknown init '" + s + "' (expected random or identity)");
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  if (metric == Metric::avg && branch != Branch::both) {
    out.push_back("--metric avg pools the fused tokens and needs --branch both (got --branch " + model::to_string(branch) + ")");
  }
  if (ways < 1) out.push_back("--ways must be >= 1");
  if (shots < 1) out.push_back("--shots must be >= 1");
  if (queries_per_class == 0 || queries_per_class < -1) out.push_back("--queries-per-class must be >= 1");
  if (u < 1) out.push_back("--u must be >= 1");
  if (dprime < 1) out.push_back("--dprime must be >= 1");
  if (heads < 1 || dprime % heads != 0) out.push_back("--heads must divide --dprime");
  if (alpha && (*alpha < 0 || *alpha > 1)) out.push_back("--alpha must lie in [0, 1]");
  if (train_episodes < 0 || eval_episodes < 0 || val_episodes < 0) out.push_back("episode counts must be >= 0");
  if (val_every < 1) out.push_back("--val-every must be >= 1");
  if (!(lr > 0)) out.push_back("--lr must be positive");
  if (threads < 0) out.push_back("--threads must be >= 0");
  return out;
}

model::MfmFlags RunConfig::effective_mfm() const {
  model::MfmFlags f = mfm;
  if (branch == Branch::visual) f.v_ca = false;
  if (branch == Branch::textual) f.t_ca = false;
  return f;
}

json to_json(const RunConfig& c) {
  return json{{"metric", model::to_string(c.metric)},
              {"branch", model::to_string(c.branch)},
              {"st_sa", c.mfm.st_sa},
              {"v_ca", c.mfm.v_ca},
              {"t_ca", c.mfm.t_ca},
              {"lpc", c.ctpcm.lpc},
              {"gpc", c.ctpcm.gpc},
              {"alpha_mode", model::to_string(c.alpha_mode)},
              {"alpha", c.alpha ? json(*c.alpha) : json(nullptr)},
              {"u", c.u},
              {"dprime", c.dprime},
              {"heads", c.heads},
              {"init", to_string(c.init)},
              {"ways", c.ways},
              {"shots", c.shots},
              {"queries_per_class", c.queries_per_class},
              {"train_episodes", c.train_episodes},
              {"eval_episodes", c.eval_episodes},
              {"val_every", c.val_every},
              {"val_episodes", c.val_episodes},
              {"lr", c.lr},
              {"seed", c.seed},
              {"prompts", to_string(c.prompts)},
              {"eval_split", archive::to_string(c.eval_split)}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.metric = model::parse_metric(j.value("metric", model::to_string(c.metric)));
  c.branch = model::parse_branch(j.value("branch", model::to_string(c.branch)));
  c.mfm.st_sa = j.value("st_sa", c.mfm.st_sa);
  c.mfm.v_ca = j.value("v_ca", c.mfm.v_ca);
  c.mfm.t_ca = j.value("t_ca", c.mfm.t_ca);
  c.ctpcm.lpc = j.value("lpc", c.ctpcm.lpc);
  c.ctpcm.gpc = j.value("gpc", c.ctpcm.gpc);
  c.alpha_mode = model::parse_alpha_mode(j.value("alpha_mode", model::to_string(c.alpha_mode)));
  if (j.contains("alpha") && !j.at("alpha").is_null()) c.alpha = j.at("alpha").get<double>();
  c.u = j.value("u", c.u);
  c.dprime = j.value("dprime", c.dprime);
  c.heads = j.value("heads", c.heads);
  c.init = parse_init(j.value("init", to_string(c.init)));
  c.ways = j.value("ways", c.ways);
  c.shots = j.value("shots", c.shots);
  c.queries_per_class = j.value("queries_per_class", c.queries_per_class);
  c.train_episodes = j.value("train_episodes", c.train_episodes);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.val_every = j.value("val_every", c.val_every);
  c.val_episodes = j.value("val_episodes", c.val_episodes);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.prompts = parse_prompt_filter(j.value("prompts", to_string(c.prompts)));
  c.eval_split = archive::parse_split(j.value("eval_split", archive::to_string(c.eval_split)));
  return c;
}

}  // namespace fsar::engine
