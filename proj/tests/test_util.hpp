// Shared fixtures for unit tests: deterministic toy structures and sequences.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/structure.hpp"
#include "core/vocab.hpp"

namespace testutil {

// Helix-like backbone with per-residue torsion wobble so every residue gets a
// distinct geometric signature. Chain "H" of length heavy, chain "Z" of
// length antigen offset far enough away to stay a separate blob.
inline prefopt::geom::BackboneStructure make_structure(
    const std::string& id, size_t heavy, size_t antigen, uint64_t seed) {
  using namespace prefopt::geom;
  prefopt::Rng rng(seed);
  const double deg = M_PI / 180.0;
  auto torsions = [&](size_t n) {
    std::vector<ResidueTorsions> t(n);
    for (auto& x : t) {
      x.phi = (-57.0 + 25.0 * rng.uniform(-1, 1)) * deg;
      x.psi = (-47.0 + 25.0 * rng.uniform(-1, 1)) * deg;
      x.omega = (180.0 + 5.0 * rng.uniform(-1, 1)) * deg;
    }
    return t;
  };
  auto sequence = [&](size_t n) {
    std::string s;
    for (size_t i = 0; i < n; ++i)
      s.push_back("ACDEFGHIKLMNPQRSTVWY"[rng.uniform_int(20)]);
    return s;
  };

  BackboneStructure s;
  s.id = id;
  for (auto& r : build_chain("H", sequence(heavy), torsions(heavy)))
    s.residues.push_back(r);
  if (antigen > 0) {
    for (auto& r :
         build_chain("Z", sequence(antigen), torsions(antigen), {30.0, 8.0, 5.0}))
      s.residues.push_back(r);
  }
  s.canonicalize();
  return s;
}

struct RigidTransform {
  std::array<std::array<double, 3>, 3> rot;
  prefopt::geom::Vec3 shift;

  prefopt::geom::Vec3 apply(const prefopt::geom::Vec3& v) const {
    return {rot[0][0] * v.x + rot[0][1] * v.y + rot[0][2] * v.z + shift.x,
            rot[1][0] * v.x + rot[1][1] * v.y + rot[1][2] * v.z + shift.y,
            rot[2][0] * v.x + rot[2][1] * v.y + rot[2][2] * v.z + shift.z};
  }
};

// Uniform-ish random rotation from a normalized quaternion plus a shift.
inline RigidTransform random_rigid(prefopt::Rng& rng) {
  double q[4];
  double norm = 0;
  for (double& x : q) {
    x = rng.gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : q) x /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  RigidTransform t;
  t.rot = {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
            {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
            {2 * (x * z - w * y), 2 * (y * z + w * x),
             1 - 2 * (x * x + y * y)}}};
  t.shift = {rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
  return t;
}

inline prefopt::geom::BackboneStructure transformed(
    const prefopt::geom::BackboneStructure& s, const RigidTransform& t) {
  prefopt::geom::BackboneStructure out = s;
  for (auto& r : out.residues) {
    r.n = t.apply(r.n);
    r.ca = t.apply(r.ca);
    r.c = t.apply(r.c);
  }
  return out;
}

inline std::string random_sequence(size_t n, prefopt::Rng& rng) {
  std::string s;
  for (size_t i = 0; i < n; ++i)
    s.push_back("ACDEFGHIKLMNPQRSTVWY"[rng.uniform_int(20)]);
  return s;
}

}  // namespace testutil
