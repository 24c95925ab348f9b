#include "fsar/engine/pipeline.hpp"

namespace fsar::engine {

using ad::Var;
using model::BranchTokens;

HeadVars bind(ad::Tape<Real>& tape, const Head& head, bool trainable) {
  return {model::bind(tape, head.mfm, trainable), trainable ? tape.parameter(head.alpha) : tape.constant(head.alpha)};
}

Head initial_head(const RunConfig& cfg, int in_dim, bool known_prompts) {
  std::mt19937_64 rng(mix_seed(cfg.seed ^ 0x68656164ULL));
  Head h;
  if (cfg.init == InitKind::identity) {
    if (cfg.dprime != in_dim) {
      throw DomainError("identity init needs --dprime equal to the archive width " + std::to_string(in_dim));
    }
    h.mfm = model::MfmParams<Real>::identity_downsample(in_dim, cfg.heads, rng);
  } else {
    h.mfm = model::MfmParams<Real>::random(in_dim, cfg.dprime, cfg.heads, rng);
  }
  h.alpha(0, 0) = cfg.alpha_for(known_prompts);
  return h;
}

namespace {

struct Features {
  Var<Real> visual;   // T x D' (or 0 rows when the branch is dropped)
  Var<Real> textual;  // L_t x D' (or 0 rows)
  Var<Real> pooled;   // 1 x D' mean of the fused projected tokens (avg metric)
};

Features video_features(ad::Tape<Real>& tape, const HeadVars& w, const archive::DecoupledTokens<Real>& t,
                        const RunConfig& cfg, const model::MfmFlags& flags, EpisodeNotes& notes) {
  const Eigen::Index dp = w.mfm.down_w.cols();
  const Var<Real> empty = tape.constant(Mat<Real>(0, dp));
  Features f{empty, empty, empty};
  const Var<Real> vis = model::downsample(tape.constant(t.visual), w.mfm);
  const Var<Real> txt = t.textual.rows() > 0 ? model::downsample(tape.constant(t.textual), w.mfm) : empty;

  if (cfg.metric == Metric::avg) {
    f.pooled = ad::mean_rows(txt.rows() > 0 ? ad::vcat(std::vector<Var<Real>>{vis, txt}) : vis);
    return f;
  }
  if (cfg.branch == Branch::textual) {
    f.textual = txt;
    return f;
  }
  const Var<Real> keys = cfg.branch == Branch::visual ? empty : txt;
  const auto v = model::enhance_visual(vis, t.frames, t.spatial_len, keys, w.mfm, flags);
  notes.cross_skipped = notes.cross_skipped || v.cross_skipped;
  f.visual = v.features;
  if (cfg.branch == Branch::both) f.textual = model::enhance_textual(txt, v.spatiotemporal, w.mfm, flags);
  return f;
}

Var<Real> pad_to(const Var<Real>& m, Eigen::Index rows) { return m.rows() < rows ? ad::pad_rows(m, rows) : m; }

}  // namespace

EpisodeOutput forward_episode(ad::Tape<Real>& tape, const HeadVars& vars, const Dataset& ds, const EpisodeSpec& ep,
                              const RunConfig& cfg) {
  const auto flags = cfg.effective_mfm();
  EpisodeOutput out;
  const auto n_way = static_cast<std::size_t>(ep.ways);
  const auto n_query = ep.queries.size();

  std::vector<std::vector<Features>> support(n_way);
  std::vector<Features> queries;
  queries.reserve(n_query);
  Eigen::Index text_len = 0;
  for (std::size_t n = 0; n < n_way; ++n) {
    for (std::size_t vid : ep.support[n]) {
      support[n].push_back(video_features(tape, vars, ds.videos.at(vid).as_support, cfg, flags, out.notes));
      text_len = std::max(text_len, support[n].back().textual.rows());
    }
  }
  for (std::size_t vid : ep.queries) {
    queries.push_back(video_features(tape, vars, ds.videos.at(vid).as_query, cfg, flags, out.notes));
    text_len = std::max(text_len, queries.back().textual.rows());
  }

  std::vector<Var<Real>> scores;
  scores.reserve(n_query * n_way);
  if (cfg.metric == Metric::avg) {
    std::vector<Var<Real>> protos;
    for (std::size_t n = 0; n < n_way; ++n) {
      std::vector<Var<Real>> shots;
      for (const auto& s : support[n]) shots.push_back(s.pooled);
      protos.push_back(model::init_prototype(shots));
    }
    for (const auto& q : queries)
      for (const auto& p : protos) scores.push_back(model::mean_cosine(p, q.pooled));
    out.alpha = vars.alpha.value()(0, 0);
  } else {
    for (auto& shots : support)
      for (auto& s : shots) s.textual = pad_to(s.textual, text_len);
    for (auto& q : queries) q.textual = pad_to(q.textual, text_len);

    std::vector<BranchTokens<Real>> protos(n_way);
    for (std::size_t n = 0; n < n_way; ++n) {
      std::vector<Var<Real>> sv, st;
      for (const auto& s : support[n]) {
        sv.push_back(s.visual);
        st.push_back(s.textual);
      }
      protos[n] = {model::init_prototype(sv), model::init_prototype(st)};
    }
    std::vector<Var<Real>> qv, qt;
    for (const auto& q : queries) {
      qv.push_back(q.visual);
      qt.push_back(q.textual);
    }

    Var<Real> alpha = vars.alpha;
    if (cfg.alpha_mode == AlphaMode::fixed) {
      alpha = tape.constant(Mat<Real>::Constant(1, 1, cfg.alpha_for(ds.known_prompts)));
    } else if (cfg.alpha_mode == AlphaMode::adaptive) {
      std::vector<Mat<Real>> pv, pt, fv, ft;
      for (const auto& p : protos) {
        pv.push_back(p.visual.value());
        pt.push_back(p.textual.value());
      }
      for (const auto& q : queries) {
        fv.push_back(q.visual.value());
        ft.push_back(q.textual.value());
      }
      model::GateResult g;
      if (cfg.branch == Branch::textual) {
        g.textual_missing = true;
      } else {
        g = model::adaptive_alpha(pv, pt, fv, ft);
      }
      out.notes.textual_missing = out.notes.textual_missing || g.textual_missing;
      out.gate_visual = g.visual_distance;
      out.gate_textual = g.textual_distance;
      alpha = tape.constant(Mat<Real>::Constant(1, 1, g.alpha));
    }
    out.alpha = alpha.value()(0, 0);

    for (auto& p : protos) {
      if (p.visual.rows() > 0) p.visual = model::refine(p.visual, qv, alpha, cfg.ctpcm);
      if (p.textual.rows() > 0) p.textual = model::refine(p.textual, qt, alpha, cfg.ctpcm);
    }

    for (const auto& q : queries) {
      const BranchTokens<Real> qb{q.visual, q.textual};
      for (const auto& p : protos) {
        switch (cfg.metric) {
          case Metric::mpmm: {
            const auto pd = model::token_min_distances(p, qb);
            if (pd.support.rows() < cfg.u || pd.query.rows() < cfg.u) out.notes.u_clamped = true;
            scores.push_back(ad::scale(model::mpmm_distance(pd, cfg.u), Real(-1)));
            break;
          }
          case Metric::bimhm: scores.push_back(ad::scale(model::bimhm_distance(p, qb), Real(-1))); break;
          case Metric::hausdorff: scores.push_back(ad::scale(model::hausdorff_distance(p, qb), Real(-1))); break;
          case Metric::dec_avg: scores.push_back(model::decoupled_cosine_score(p, qb)); break;
          case Metric::avg: break;
        }
      }
    }
  }

  out.logits = ad::assemble(scores, static_cast<Eigen::Index>(n_query), static_cast<Eigen::Index>(n_way));
  out.distances = -out.logits.value();
  out.probabilities = fsar::softmax_rows(out.logits.value());
  return out;
}

EpisodeOutput forward_episode(const Head& head, const Dataset& ds, const EpisodeSpec& ep, const RunConfig& cfg) {
  ad::Tape<Real> tape(false);
  auto out = forward_episode(tape, bind(tape, head, false), ds, ep, cfg);
  out.logits = {};
  return out;
}

ad::Var<Real> episode_loss(const EpisodeOutput& out, const EpisodeSpec& ep, int* clamped) {
  return ad::softmax_nll(out.logits, ep.query_labels, Real(1e-12), clamped);
}

double episode_accuracy(const EpisodeOutput& out, const EpisodeSpec& ep) {
  if (ep.query_labels.empty()) return 0;
  int hits = 0;
  for (Eigen::Index r = 0; r < out.probabilities.rows(); ++r) {
    Eigen::Index best = 0;
    out.probabilities.row(r).maxCoeff(&best);
    hits += best == ep.query_labels[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(hits) / static_cast<double>(ep.query_labels.size());
}

}  // namespace fsar::engine
