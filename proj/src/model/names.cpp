#include "fsar/model/ctpcm.hpp"
#include "fsar/model/mpmm.hpp"

namespace fsar::model {

std::string to_string(AlphaMode m) {
  switch (m) {
    case AlphaMode::fixed: return "fixed";
    case AlphaMode::learnable: return "learnable";
    case AlphaMode::adaptive: return "adaptive";
  }
  return "?";
}

AlphaMode parse_alpha_mode(const std::string& s) {
  if (s == "fixed") return AlphaMode::fixed;
  if (s == "learnable") return AlphaMode::learnable;
  if (s == "adaptive") return AlphaMode::adaptive;
  throw DomainError("unknown alpha mode '" + s + "' (expected fixed, learnable or adaptive)");
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::mpmm: return "mpmm";
    case Metric::bimhm: return "bimhm";
    case Metric::hausdorff: return "hausdorff";
    case Metric::avg: return "avg";
    case Metric::dec_avg: return "dec-avg";
  }
  return "?";
}

Metric parse_metric(const std::string& s) {
  if (s == "mpmm") return Metric::mpmm;
  if (s == "bimhm") return Metric::bimhm;
  if (s == "hausdorff") return Metric::hausdorff;
  if (s == "avg") return Metric::avg;
  if (s == "dec-avg") return Metric::dec_avg;
  throw DomainError("unknown metric '" + s + "' (expected mpmm, bimhm, hausdorff, avg or dec-avg)");
}

std::string to_string(Branch b) {
  switch (b) {
    case Branch::visual: return "visual";
    case Branch::textual: return "textual";
    case Branch::both: return "both";
  }
  return "?";
}

Branch parse_branch(const std::string& s) {
  if (s == "visual") return Branch::visual;
  if (s == "textual") return Branch::textual;
  if (s == "both") return Branch::both;
  throw DomainError("unknown branch '" + s + "' (expected visual, textual or both)");
}

}  // namespace fsar::model
