#include "heatctl/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace heatctl {
namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

}  // namespace

Grid::Grid(int nx_, Real T_, int nt_, Real lo, Real hi)
    : nx(nx_), T(T_), nt(nt_), omega_lo(lo), omega_hi(hi) {
  std::vector<std::string> bad;
  if (nx < 3) bad.push_back("nx must be at least 3");
  if (nt < 2) bad.push_back("nt must be at least 2");
  if (!(T > 0) || !std::isfinite(T)) bad.push_back("T must be positive and finite");
  if (!(omega_lo >= 0 && omega_lo < omega_hi && omega_hi <= 1))
    bad.push_back("omega must satisfy 0 <= omega_lo < omega_hi <= 1");
  if (bad.empty()) {
    mask = Vector::Zero(nx);
    int hits = 0;
    for (int i = 0; i < nx; ++i) {
      const Real x = node(i);
      if (x > omega_lo && x < omega_hi) {
        mask(i) = 1;
        ++hits;
      }
    }
    if (hits == 0) bad.push_back("omega contains no interior grid node");
  }
  if (!bad.empty()) throw ValidationError("invalid grid: " + join(bad));
}

SpaceTimeField reflect_time(const SpaceTimeField& f) {
  if (f.empty()) return f;
  SpaceTimeField out;
  out.values = f.values.rowwise().reverse();
  out.omega_supported = f.omega_supported;
  return out;
}

SpaceTimeField window_slice(const SpaceTimeField& f, int k0, int nt_w) {
  if (f.empty()) return f;
  SpaceTimeField out;
  out.values = f.values.middleCols(k0, nt_w + 1);
  out.omega_supported = f.omega_supported;
  return out;
}

SpaceTimeField restrict_to_omega(SpaceTimeField f, const Grid& g) {
  if (!f.empty()) f.values = g.mask.asDiagonal() * f.values;
  f.omega_supported = true;
  return f;
}

Real field_sup(const SpaceTimeField& f) {
  if (f.empty()) return 0;
  return f.values.cwiseAbs().maxCoeff();
}

}  // namespace heatctl
