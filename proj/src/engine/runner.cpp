#include "fsar/engine/runner.hpp"

#include "fsar/archive/tensor_file.hpp"
#include "fsar/core/adam.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

namespace fsar::engine {

using nlohmann::json;

std::uint64_t train_stream(std::uint64_t seed) { return mix_seed(seed ^ 0x747261696eULL); }
std::uint64_t val_stream(std::uint64_t seed) { return mix_seed(seed ^ 0x76616cULL); }

std::pair<double, double> mean_ci95(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(xs.size()))};
}

namespace {

int worker_count(const RunConfig& cfg, int jobs) {
  int n = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(n, jobs));
}

std::vector<std::string> note_lines(const EpisodeNotes& n) {
  std::vector<std::string> out;
  if (n.cross_skipped) out.emplace_back("visual-lead cross-attention skipped: a video has no textual tokens");
  if (n.textual_missing) out.emplace_back("adaptive alpha fell back to 0.1: textual branch missing");
  if (n.u_clamped) out.emplace_back("u exceeds a distance vector length; that side sums all entries");
  return out;
}

}  // namespace

RunReport evaluate(const RunConfig& cfg, const Dataset& ds, const Head& head, Split split, int episodes,
                   std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  RunReport rep;
  rep.split = archive::to_string(split);
  rep.config = to_json(cfg);
  rep.param_count = model::count_params(head);
  rep.episodes.resize(static_cast<std::size_t>(std::max(episodes, 0)));
  std::vector<EpisodeNotes> notes(rep.episodes.size());
  std::vector<std::exception_ptr> errors(rep.episodes.size());

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < rep.episodes.size(); i = next++) {
      try {
        const std::uint64_t s = episode_seed(seed, i);
        const auto ep = sample_episode(ds, split, cfg.ways, cfg.shots, cfg.queries_per_class, s);
        const auto out = forward_episode(head, ds, ep, cfg);
        rep.episodes[i] = {i, s, episode_accuracy(out, ep), out.alpha, out.gate_visual, out.gate_textual};
        notes[i] = out.notes;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_workers = worker_count(cfg, episodes);
  std::vector<std::thread> pool;
  for (int t = 1; t < n_workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> acc;
  EpisodeNotes all;
  for (std::size_t i = 0; i < rep.episodes.size(); ++i) {
    acc.push_back(rep.episodes[i].accuracy);
    all.cross_skipped = all.cross_skipped || notes[i].cross_skipped;
    all.textual_missing = all.textual_missing || notes[i].textual_missing;
    all.u_clamped = all.u_clamped || notes[i].u_clamped;
  }
  std::tie(rep.accuracy, rep.ci95) = mean_ci95(acc);
  rep.notes = note_lines(all);
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

RunReport evaluate(const RunConfig& cfg, const Dataset& ds, const Head& head) {
  return evaluate(cfg, ds, head, cfg.eval_split, cfg.eval_episodes, cfg.seed);
}

TrainResult train(const RunConfig& cfg, const Dataset& ds) {
  return train(cfg, ds, initial_head(cfg, ds.dim(), ds.known_prompts));
}

TrainResult train(const RunConfig& cfg, const Dataset& ds, const Head& init) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult res{init, init, {}};
  RunReport& rep = res.report;
  rep.split = archive::to_string(Split::val);
  rep.config = to_json(cfg);
  rep.param_count = model::count_params(init);

  AdamState<Real> opt;
  opt.schedule = MultiStepSchedule::halves(cfg.lr, cfg.train_episodes);
  const bool learn_alpha = cfg.alpha_mode == AlphaMode::learnable;
  const std::uint64_t tseed = train_stream(cfg.seed);
  const std::uint64_t vseed = val_stream(cfg.seed);

  Head& head = res.last;
  double best = -1;
  double loss_sum = 0;
  int loss_count = 0;
  EpisodeNotes seen;
  auto validate_now = [&](int done) {
    const RunReport v = evaluate(cfg, ds, head, Split::val, cfg.val_episodes, vseed);
    rep.validation.push_back({done, v.accuracy, loss_count ? loss_sum / loss_count : 0.0});
    loss_sum = 0;
    loss_count = 0;
    if (v.accuracy > best) {
      best = v.accuracy;
      res.head = head;
      rep.best_episode = done;
    }
  };

  for (int i = 0; i < cfg.train_episodes; ++i) {
    const std::uint64_t s = episode_seed(tseed, static_cast<std::uint64_t>(i));
    const auto ep = sample_episode(ds, Split::train, cfg.ways, cfg.shots, cfg.queries_per_class, s);
    ad::Tape<Real> tape;
    const HeadVars vars = bind(tape, head, true);
    const auto out = forward_episode(tape, vars, ds, ep, cfg);
    int clamped = 0;
    const auto loss = episode_loss(out, ep, &clamped);
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) {
      throw DomainError("training loss is not finite at episode " + std::to_string(i) + " (episode seed " +
                        std::to_string(s) + ")");
    }
    rep.clamped_queries += clamped;
    seen.cross_skipped = seen.cross_skipped || out.notes.cross_skipped;
    seen.textual_missing = seen.textual_missing || out.notes.textual_missing;
    seen.u_clamped = seen.u_clamped || out.notes.u_clamped;
    loss_sum += lv;
    ++loss_count;
    tape.backward(loss);

    std::vector<Mat<Real>*> params;
    std::vector<Mat<Real>> grads;
    auto push = [&](Mat<Real>& p, const ad::Var<Real>& v) {
      params.push_back(&p);
      grads.push_back(tape.grad(v));
    };
    push(head.mfm.down_w, vars.mfm.down_w);
    push(head.mfm.down_b, vars.mfm.down_b);
    auto push_attention = [&](AttentionParams<Real>& p, const AttentionVars<Real>& v) {
      push(p.wq, v.wq);
      push(p.bq, v.bq);
      push(p.wk, v.wk);
      push(p.bk, v.bk);
      push(p.wv, v.wv);
      push(p.bv, v.bv);
      push(p.wo, v.wo);
      push(p.bo, v.bo);
    };
    push_attention(head.mfm.spatial, vars.mfm.spatial);
    push_attention(head.mfm.temporal, vars.mfm.temporal);
    push_attention(head.mfm.visual_cross, vars.mfm.visual_cross);
    push_attention(head.mfm.textual_cross, vars.mfm.textual_cross);
    if (learn_alpha) push(head.alpha, vars.alpha);
    adam_step(opt, params, grads);
    if (learn_alpha) head.clamp_alpha();

    if ((i + 1) % cfg.val_every == 0 && i + 1 < cfg.train_episodes) validate_now(i + 1);
  }
  if (cfg.train_episodes > 0) validate_now(cfg.train_episodes);

  rep.accuracy = std::max(best, 0.0);
  rep.notes = note_lines(seen);
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

json to_json(const RunReport& r, bool with_wall_clock) {
  json eps = json::array();
  for (const auto& e : r.episodes) {
    eps.push_back({{"index", e.index},
                   {"seed", e.seed},
                   {"accuracy", e.accuracy},
                   {"alpha", e.alpha},
                   {"gate_visual", e.gate_visual},
                   {"gate_textual", e.gate_textual}});
  }
  json val = json::array();
  for (const auto& v : r.validation)
    val.push_back({{"episode", v.episode}, {"accuracy", v.accuracy}, {"mean_loss", v.mean_loss}});
  json j{{"split", r.split},
         {"accuracy", r.accuracy},
         {"ci95", r.ci95},
         {"episode_count", r.episodes.size()},
         {"config", r.config},
         {"notes", r.notes},
         {"clamped_queries", r.clamped_queries},
         {"param_count", r.param_count},
         {"validation", val},
         {"best_episode", r.best_episode},
         {"episodes", eps}};
  if (with_wall_clock) j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

RunReport report_from_json(const json& j) {
  RunReport r;
  r.split = j.value("split", std::string{});
  r.accuracy = j.at("accuracy").get<double>();
  r.ci95 = j.value("ci95", 0.0);
  r.config = j.value("config", json::object());
  r.notes = j.value("notes", std::vector<std::string>{});
  r.clamped_queries = j.value("clamped_queries", 0);
  r.param_count = j.value("param_count", std::size_t{0});
  r.best_episode = j.value("best_episode", -1);
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  for (const auto& e : j.value("episodes", json::array())) {
    r.episodes.push_back({e.at("index").get<std::uint64_t>(), e.at("seed").get<std::uint64_t>(),
                          e.at("accuracy").get<double>(), e.value("alpha", 0.0), e.value("gate_visual", 0.0),
                          e.value("gate_textual", 0.0)});
  }
  for (const auto& v : j.value("validation", json::array()))
    r.validation.push_back({v.at("episode").get<int>(), v.at("accuracy").get<double>(), v.value("mean_loss", 0.0)});
  return r;
}

std::string render_table(const RunReport& r) {
  std::ostringstream os;
  os << std::fixed;
  auto row = [&](const std::string& k, const std::string& v) { os << std::left << std::setw(18) << k << v << '\n'; };
  auto pct = [](double x) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * x;
    return s.str();
  };
  const json& c = r.config;
  auto cfg = [&](const char* key) { return c.contains(key) ? c.at(key).dump() : std::string("-"); };
  row("split", r.split);
  row("metric", cfg("metric"));
  row("branch", cfg("branch"));
  row("ways x shots", cfg("ways") + " x " + cfg("shots"));
  row("episodes", std::to_string(r.episodes.size()));
  row("accuracy (%)", pct(r.accuracy) + " +/- " + pct(r.ci95));
  row("parameters", std::to_string(r.param_count));
  if (!r.episodes.empty()) {
    std::map<double, int> alphas;
    for (const auto& e : r.episodes) ++alphas[e.alpha];
    std::string a;
    for (const auto& [v, n] : alphas) {
      std::ostringstream s;
      s << std::setprecision(4) << v << ":" << n;
      a += (a.empty() ? "" : "  ") + s.str();
    }
    row("alpha (value:n)", a);
  }
  if (!r.validation.empty()) {
    os << "\n" << std::left << std::setw(10) << "episode" << std::setw(14) << "val acc (%)" << "mean loss\n";
    for (const auto& v : r.validation) {
      os << std::left << std::setw(10) << v.episode << std::setw(14) << pct(v.accuracy) << std::setprecision(4)
         << v.mean_loss << '\n';
    }
    row("best episode", std::to_string(r.best_episode));
  }
  for (const auto& n : r.notes) os << "note: " << n << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'F', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& origin) {
  if (pos + 4 > in.size()) throw FormatError(origin + ": truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Head& head) {
  std::vector<std::pair<std::string, Mat<Real>>> tensors;
  tensors.emplace_back("meta.heads", Mat<Real>::Constant(1, 1, head.mfm.spatial.heads));
  head.for_each([&](const std::string& name, const Mat<Real>& m) { tensors.emplace_back(name, m); });
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const auto bytes = archive::encode_tensor(archive::Tensor::from_matrix(m.cast<float>()));
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  archive::write_bytes(path, out);
}

Head load_checkpoint(const std::filesystem::path& path) {
  const std::string origin = path.string();
  const auto in = archive::read_bytes(path);
  if (in.size() < 4 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) throw FormatError(origin + ": not a checkpoint");
  std::size_t pos = 4;
  const auto version = get_u32(in, pos, origin);
  if (version != kCheckpointVersion) throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = get_u32(in, pos, origin);
  std::map<std::string, Mat<Real>> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get_u32(in, pos, origin);
    if (pos + len > in.size()) throw FormatError(origin + ": truncated checkpoint");
    std::string name(in.begin() + static_cast<std::ptrdiff_t>(pos), in.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    const std::vector<std::uint8_t> rest(in.begin() + static_cast<std::ptrdiff_t>(pos), in.end());
    const auto h = archive::decode_header(rest, origin + ":" + name);
    std::uint64_t numel = 1;
    for (auto d : h.shape) numel *= d;
    const std::size_t size = h.header_bytes + 4 * numel;
    if (size > rest.size()) throw FormatError(origin + ": truncated tensor " + name);
    const std::vector<std::uint8_t> bytes(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(size));
    tensors[name] = archive::decode_tensor(bytes, origin + ":" + name).to_matrix().cast<Real>();
    pos += size;
  }
  if (pos != in.size()) throw FormatError(origin + ": trailing bytes after checkpoint");

  auto take = [&](const std::string& name) -> Mat<Real> {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(origin + ": missing tensor " + name);
    return it->second;
  };
  Head h;
  const int heads = static_cast<int>(std::lround(take("meta.heads")(0, 0)));
  h.mfm.down_w = take("down.w");
  const auto d = h.mfm.down_w.cols();
  for (auto* a : {&h.mfm.spatial, &h.mfm.temporal, &h.mfm.visual_cross, &h.mfm.textual_cross}) {
    a->heads = heads;
    if (heads < 1 || d % heads != 0) throw FormatError(origin + ": head count does not divide the width");
  }
  h.for_each([&](const std::string& name, Mat<Real>& m) {
    m = take(name);
  });
  bool consistent = h.mfm.down_b.rows() == 1 && h.mfm.down_b.cols() == d && h.alpha.rows() == 1 && h.alpha.cols() == 1;
  for (auto* a : {&h.mfm.spatial, &h.mfm.temporal, &h.mfm.visual_cross, &h.mfm.textual_cross}) {
    a->for_each("", [&](const std::string& name, const Mat<Real>& m) {
      const bool bias = name[1] == 'b';
      consistent = consistent && m.cols() == d && m.rows() == (bias ? 1 : d);
    });
  }
  if (!consistent) throw FormatError(origin + ": tensor shapes are inconsistent");
  return h;
}

}  // namespace fsar::engine
